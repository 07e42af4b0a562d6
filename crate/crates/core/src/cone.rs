//! Polyhedral cone primitives over `Z = {z : Az ≤ b}`.
//!
//! Row indices are 0-based and refer to the rows kept by [`Polyhedron::new`].
//! The normal cone at `z` is `N_Z(z) = {Aᵀλ : λ ≥ 0, λ_i = 0 off I(z)}`.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::linalg::{dot, least_squares_columns, norm, norm_inf, nullspace, rank, Rows};
use crate::lp::{LinearProgram, LpOutcome, Relation, SimplexOptions, VarKind};

/// Default absolute tolerance for activity and membership tests.
pub const DEFAULT_EPS: f64 = 1e-9;

/// Largest active set accepted by combinatorial enumerations.
pub const MAX_ENUMERATED_ACTIVE: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolyhedronJson", into = "PolyhedronJson")]
pub struct Polyhedron {
    a: Rows,
    b: Vec<f64>,
    dim: usize,
    /// Index of each kept row in the caller's original matrix.
    source_rows: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct PolyhedronJson {
    #[serde(rename = "A")]
    a: Rows,
    b: Vec<f64>,
}

impl TryFrom<PolyhedronJson> for Polyhedron {
    type Error = Error;
    fn try_from(raw: PolyhedronJson) -> Result<Self> {
        Polyhedron::new(raw.a, raw.b)
    }
}

impl From<Polyhedron> for PolyhedronJson {
    fn from(p: Polyhedron) -> Self {
        PolyhedronJson { a: p.a, b: p.b }
    }
}

impl Polyhedron {
    /// Builds `{z : Az ≤ b}`. All-zero rows with `b_i ≥ 0` never bind and are
    /// dropped with a warning; an all-zero row with `b_i < 0` makes the set
    /// empty and is rejected.
    pub fn new(a: Rows, b: Vec<f64>) -> Result<Self> {
        if a.is_empty() {
            return Err(Error::Invalid("polyhedron needs at least one row".into()));
        }
        if a.len() != b.len() {
            return Err(Error::Dimension(format!(
                "A has {} rows but b has length {}",
                a.len(),
                b.len()
            )));
        }
        let dim = a[0].len();
        if dim == 0 {
            return Err(Error::Invalid(
                "polyhedron needs at least one column".into(),
            ));
        }
        let mut rows = Vec::with_capacity(a.len());
        let mut rhs = Vec::with_capacity(b.len());
        let mut source_rows = Vec::with_capacity(a.len());
        for (i, (row, bi)) in a.into_iter().zip(b).enumerate() {
            if row.len() != dim {
                return Err(Error::Dimension(format!(
                    "row {i} of A has length {}, expected {dim}",
                    row.len()
                )));
            }
            if row
                .iter()
                .chain(std::iter::once(&bi))
                .any(|v| !v.is_finite())
            {
                return Err(Error::Invalid(format!("row {i} has a non-finite entry")));
            }
            if row.iter().all(|v| *v == 0.0) {
                if bi < 0.0 {
                    return Err(Error::Invalid(format!(
                        "row {i} reads 0 ≤ {bi}, so the set is empty"
                    )));
                }
                log::warn!("dropping all-zero row {i} of A (b_i = {bi} never binds)");
                continue;
            }
            rows.push(row);
            rhs.push(bi);
            source_rows.push(i);
        }
        Ok(Self {
            a: rows,
            b: rhs,
            dim,
            source_rows,
        })
    }

    /// `R^d_+` written as `−z ≤ 0`.
    pub fn orthant(d: usize) -> Self {
        let a = (0..d)
            .map(|i| (0..d).map(|j| if i == j { -1.0 } else { 0.0 }).collect())
            .collect();
        Self::new(a, vec![0.0; d]).expect("orthant is well formed")
    }

    /// `{z ≥ 0, 1ᵀz ≤ 1}`: rows `0..d` are `−e_i`, row `d` is `1ᵀ`.
    pub fn simplex(d: usize) -> Self {
        let mut a: Rows = (0..d)
            .map(|i| (0..d).map(|j| if i == j { -1.0 } else { 0.0 }).collect())
            .collect();
        a.push(vec![1.0; d]);
        let mut b = vec![0.0; d];
        b.push(1.0);
        Self::new(a, b).expect("simplex is well formed")
    }

    /// `{lo ≤ z ≤ hi}`: rows `0..d` are upper bounds, rows `d..2d` lower bounds.
    pub fn boxed(lo: &[f64], hi: &[f64]) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::Dimension("box bounds differ in length".into()));
        }
        if lo.iter().zip(hi).any(|(l, h)| l > h) {
            return Err(Error::Invalid("box has lo > hi".into()));
        }
        let d = lo.len();
        let mut a = Rows::new();
        let mut b = Vec::new();
        for i in 0..d {
            a.push((0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect());
            b.push(hi[i]);
        }
        for i in 0..d {
            a.push((0..d).map(|j| if i == j { -1.0 } else { 0.0 }).collect());
            b.push(-lo[i]);
        }
        Self::new(a, b)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_rows(&self) -> usize {
        self.a.len()
    }

    pub fn a(&self) -> &Rows {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.a[i]
    }

    pub fn source_rows(&self) -> &[usize] {
        &self.source_rows
    }

    /// `Az − b`.
    pub fn slack(&self, z: &[f64]) -> Vec<f64> {
        self.a
            .iter()
            .zip(&self.b)
            .map(|(r, bi)| dot(r, z) - bi)
            .collect()
    }

    /// Errors with the most violated row when `Az ≤ b + eps` fails.
    pub fn check_feasible(&self, z: &[f64], eps: f64) -> Result<()> {
        check_len("z", z, self.dim)?;
        let slack = self.slack(z);
        let worst = slack
            .iter()
            .enumerate()
            .fold((0usize, f64::NEG_INFINITY), |acc, (i, s)| {
                if *s > acc.1 {
                    (i, *s)
                } else {
                    acc
                }
            });
        if worst.1 > eps {
            return Err(Error::Infeasible {
                row: worst.0,
                violation: worst.1,
            });
        }
        Ok(())
    }

    pub fn is_feasible(&self, z: &[f64], eps: f64) -> bool {
        self.check_feasible(z, eps).is_ok()
    }

    /// Some point of the polyhedron, if it is nonempty.
    pub fn feasible_point(&self) -> Result<Option<Vec<f64>>> {
        let mut lp = LinearProgram::with_vars(self.dim, VarKind::Free);
        for (r, bi) in self.a.iter().zip(&self.b) {
            lp.constrain(r.clone(), Relation::Le, *bi);
        }
        lp.feasible_point()
    }

    fn rows_of(&self, idx: &[usize]) -> Rows {
        idx.iter().map(|&i| self.a[i].clone()).collect()
    }
}

/// `{d : E d = 0, G d ≤ 0}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ConeHJson")]
pub struct ConeRepH {
    #[serde(rename = "E")]
    pub e: Rows,
    #[serde(rename = "G")]
    pub g: Rows,
    pub dim: usize,
}

#[derive(Deserialize)]
struct ConeHJson {
    #[serde(rename = "E", default)]
    e: Rows,
    #[serde(rename = "G", default)]
    g: Rows,
    dim: Option<usize>,
}

impl TryFrom<ConeHJson> for ConeRepH {
    type Error = Error;
    fn try_from(raw: ConeHJson) -> Result<Self> {
        let dim = infer_dim(raw.dim, raw.e.iter().chain(&raw.g))?;
        ConeRepH::new(dim, raw.e, raw.g)
    }
}

/// `{Rᵀμ + Lᵀν : μ ≥ 0, ν free}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ConeVJson")]
pub struct ConeRepV {
    #[serde(rename = "R")]
    pub r: Rows,
    #[serde(rename = "L")]
    pub l: Rows,
    pub dim: usize,
}

#[derive(Deserialize)]
struct ConeVJson {
    #[serde(rename = "R", default)]
    r: Rows,
    #[serde(rename = "L", default)]
    l: Rows,
    dim: Option<usize>,
}

impl TryFrom<ConeVJson> for ConeRepV {
    type Error = Error;
    fn try_from(raw: ConeVJson) -> Result<Self> {
        let dim = infer_dim(raw.dim, raw.r.iter().chain(&raw.l))?;
        ConeRepV::new(dim, raw.r, raw.l)
    }
}

fn infer_dim<'a>(
    dim: Option<usize>,
    mut rows: impl Iterator<Item = &'a Vec<f64>>,
) -> Result<usize> {
    match (dim, rows.next()) {
        (Some(d), _) => Ok(d),
        (None, Some(r)) => Ok(r.len()),
        (None, None) => Err(Error::Invalid(
            "cone without rows needs an explicit dim".into(),
        )),
    }
}

fn check_rows(what: &str, rows: &Rows, dim: usize) -> Result<()> {
    for (i, r) in rows.iter().enumerate() {
        if r.len() != dim {
            return Err(Error::Dimension(format!(
                "{what} row {i} has length {}, expected {dim}",
                r.len()
            )));
        }
    }
    Ok(())
}

impl ConeRepH {
    pub fn new(dim: usize, e: Rows, g: Rows) -> Result<Self> {
        check_rows("E", &e, dim)?;
        check_rows("G", &g, dim)?;
        Ok(Self { e, g, dim })
    }

    pub fn full_space(dim: usize) -> Self {
        Self {
            e: Vec::new(),
            g: Vec::new(),
            dim,
        }
    }

    /// Tolerance scaled by row norms so that scaling a row does not change
    /// the verdict.
    pub fn contains(&self, d: &[f64], eps: f64) -> bool {
        let scale = 1.0 + norm(d);
        self.e
            .iter()
            .all(|r| dot(r, d).abs() <= eps * scale * (1.0 + norm(r)))
            && self
                .g
                .iter()
                .all(|r| dot(r, d) <= eps * scale * (1.0 + norm(r)))
    }

    /// Extreme rays and a lineality basis. Rays are unit vectors orthogonal
    /// to the lineality space; each is the 1-dimensional solution set of a
    /// subsystem of at most `dim − 1` inequality rows made tight.
    pub fn generators(&self, eps: f64) -> Result<ConeRepV> {
        let mut all = self.e.clone();
        all.extend(self.g.iter().cloned());
        let lineality = nullspace(&all, self.dim, 1e-10);
        let mut rays: Rows = Vec::new();
        let max_size = self.dim.saturating_sub(1);
        let idx: Vec<usize> = (0..self.g.len()).collect();
        for s in combinations_up_to(&idx, max_size) {
            let mut sys = self.e.clone();
            sys.extend(s.iter().map(|&i| self.g[i].clone()));
            sys.extend(lineality.iter().cloned());
            let ns = nullspace(&sys, self.dim, 1e-10);
            if ns.len() != 1 {
                continue;
            }
            let r = &ns[0];
            let tol = eps.max(1e-9);
            let fits = |v: &[f64]| {
                self.g
                    .iter()
                    .all(|row| dot(row, v) <= tol * (1.0 + norm(row)))
            };
            let neg: Vec<f64> = r.iter().map(|x| -x).collect();
            let cand = if fits(r) {
                r.clone()
            } else if fits(&neg) {
                neg
            } else {
                continue;
            };
            if !rays
                .iter()
                .any(|q| norm_inf(&crate::linalg::sub(q, &cand)) <= 1e-8)
            {
                rays.push(cand);
            }
        }
        ConeRepV::new(self.dim, rays, lineality)
    }

    /// Rows of `G` that vanish on the face where the rows in `promoted` are
    /// tight, together with `promoted` itself (sorted).
    pub fn implicit_equalities(&self, promoted: &[usize], eps: f64) -> Result<Vec<usize>> {
        let mut closed: Vec<usize> = promoted.to_vec();
        for i in 0..self.g.len() {
            if promoted.contains(&i) {
                continue;
            }
            let mut lp = LinearProgram::with_vars(self.dim, VarKind::Free);
            for r in &self.e {
                lp.constrain(r.clone(), Relation::Eq, 0.0);
            }
            for (k, r) in self.g.iter().enumerate() {
                let rel = if promoted.contains(&k) {
                    Relation::Eq
                } else {
                    Relation::Le
                };
                lp.constrain(r.clone(), rel, 0.0);
            }
            for k in 0..self.dim {
                let mut unit = vec![0.0; self.dim];
                unit[k] = 1.0;
                lp.constrain(unit.clone(), Relation::Le, 1.0);
                lp.constrain(unit, Relation::Ge, -1.0);
            }
            lp.minimize(self.g[i].clone());
            match lp.solve(&SimplexOptions::default())? {
                LpOutcome::Optimal { value, .. } => {
                    if value >= -eps.max(1e-9) * (1.0 + norm(&self.g[i])) {
                        closed.push(i);
                    }
                }
                LpOutcome::Infeasible => {
                    return Err(Error::Numeric(
                        "face system of a cone reported infeasible".into(),
                    ))
                }
                LpOutcome::Unbounded => {
                    return Err(Error::Numeric("bounded face LP reported unbounded".into()))
                }
            }
        }
        closed.sort_unstable();
        closed.dedup();
        Ok(closed)
    }

    /// The face `F_J` with the `G` rows in `promoted` moved to `E`.
    pub fn face(&self, promoted: &[usize]) -> ConeRepH {
        let mut e = self.e.clone();
        let mut g = Vec::new();
        for (i, r) in self.g.iter().enumerate() {
            if promoted.contains(&i) {
                e.push(r.clone());
            } else {
                g.push(r.clone());
            }
        }
        ConeRepH {
            e,
            g,
            dim: self.dim,
        }
    }
}

impl ConeRepV {
    pub fn new(dim: usize, r: Rows, l: Rows) -> Result<Self> {
        check_rows("R", &r, dim)?;
        check_rows("L", &l, dim)?;
        Ok(Self { r, l, dim })
    }

    pub fn zero(dim: usize) -> Self {
        Self {
            r: Vec::new(),
            l: Vec::new(),
            dim,
        }
    }

    /// LP feasibility of `Rᵀμ + Lᵀν = w`, `μ ≥ 0`.
    pub fn contains(&self, w: &[f64], eps: f64) -> Result<bool> {
        check_len("w", w, self.dim)?;
        if self.r.is_empty() && self.l.is_empty() {
            return Ok(norm_inf(w) <= eps);
        }
        let mut kinds = vec![VarKind::NonNeg; self.r.len()];
        kinds.extend(std::iter::repeat_n(VarKind::Free, self.l.len()));
        let mut lp = LinearProgram::new(kinds);
        for k in 0..self.dim {
            let coeffs = self.r.iter().chain(&self.l).map(|g| g[k]).collect();
            lp.constrain(coeffs, Relation::Eq, w[k]);
        }
        let opts = SimplexOptions {
            feas_tol: eps.max(1e-12),
            ..SimplexOptions::default()
        };
        Ok(matches!(lp.solve(&opts)?, LpOutcome::Optimal { .. }))
    }

    /// `⟨w, r⟩ ≤ 0` on rays and `⟨w, l⟩ = 0` on lineality: membership of `w`
    /// in the polar of this cone.
    pub fn polar_contains(&self, w: &[f64], eps: f64) -> bool {
        let scale = 1.0 + norm(w);
        self.r
            .iter()
            .all(|r| dot(r, w) <= eps * scale * (1.0 + norm(r)))
            && self
                .l
                .iter()
                .all(|l| dot(l, w).abs() <= eps * scale * (1.0 + norm(l)))
    }
}

/// Active rows at `z` plus multipliers. `lambda` has one entry per row of
/// the polyhedron and vanishes off `active`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActiveDecomposition {
    pub active: Vec<usize>,
    pub lambda: Vec<f64>,
    pub i_plus: Vec<usize>,
    pub i_zero: Vec<usize>,
}

impl ActiveDecomposition {
    fn from_lambda(active: Vec<usize>, lambda: Vec<f64>, eps: f64) -> Self {
        let (i_plus, i_zero) = active.iter().partition(|&&i| lambda[i] > eps);
        Self {
            active,
            lambda,
            i_plus,
            i_zero,
        }
    }

    /// `max_i |λ_i (a_iᵀz − b_i)|`.
    pub fn complementarity_residual(&self, p: &Polyhedron, z: &[f64]) -> f64 {
        p.slack(z)
            .iter()
            .zip(&self.lambda)
            .map(|(s, l)| (s * l).abs())
            .fold(0.0, f64::max)
    }
}

pub fn active_set(p: &Polyhedron, z: &[f64], eps: f64) -> Result<Vec<usize>> {
    p.check_feasible(z, eps)?;
    Ok(p.slack(z)
        .iter()
        .enumerate()
        .filter(|(_, s)| s.abs() <= eps)
        .map(|(i, _)| i)
        .collect())
}

/// Rows whose slack lies within a factor of ten of `eps` on either side, where
/// the active/inactive classification is fragile.
pub fn near_threshold_rows(p: &Polyhedron, z: &[f64], eps: f64) -> Vec<usize> {
    p.slack(z)
        .iter()
        .enumerate()
        .filter(|(_, s)| {
            let a = s.abs();
            a > eps / 10.0 && a <= eps * 10.0
        })
        .map(|(i, _)| i)
        .collect()
}

pub fn tangent_cone(p: &Polyhedron, z: &[f64], eps: f64) -> Result<ConeRepH> {
    let active = active_set(p, z, eps)?;
    ConeRepH::new(p.dim(), Vec::new(), p.rows_of(&active))
}

/// Finds `λ ≥ 0` supported on `I(z)` with `Aᵀλ = n`, where `n` is the normal
/// vector itself. `None` when `n ∉ N_Z(z)`.
pub fn normal_cone_multiplier(
    p: &Polyhedron,
    z: &[f64],
    n: &[f64],
    eps: f64,
) -> Result<Option<ActiveDecomposition>> {
    check_len("normal vector", n, p.dim())?;
    let active = active_set(p, z, eps)?;
    if active.is_empty() {
        return Ok(if norm_inf(n) <= eps {
            Some(ActiveDecomposition::from_lambda(
                active,
                vec![0.0; p.num_rows()],
                eps,
            ))
        } else {
            None
        });
    }
    let mut lp = LinearProgram::with_vars(active.len(), VarKind::NonNeg);
    for k in 0..p.dim() {
        lp.constrain(
            active.iter().map(|&i| p.a[i][k]).collect(),
            Relation::Eq,
            n[k],
        );
    }
    let opts = SimplexOptions {
        feas_tol: eps.max(1e-12),
        ..SimplexOptions::default()
    };
    Ok(match lp.solve(&opts)? {
        LpOutcome::Optimal { x, .. } => {
            let mut lambda = vec![0.0; p.num_rows()];
            for (pos, &i) in active.iter().enumerate() {
                lambda[i] = x[pos].max(0.0);
            }
            Some(ActiveDecomposition::from_lambda(active, lambda, eps))
        }
        _ => None,
    })
}

/// Every support pattern `S ⊆ I(z)` for which some `λ ≥ 0` with `Aᵀλ = n` is
/// strictly positive exactly on `S`. Refuses when `|I(z)|` exceeds
/// [`MAX_ENUMERATED_ACTIVE`].
pub fn multiplier_patterns(
    p: &Polyhedron,
    z: &[f64],
    n: &[f64],
    eps: f64,
) -> Result<Vec<ActiveDecomposition>> {
    check_len("normal vector", n, p.dim())?;
    let active = active_set(p, z, eps)?;
    if active.len() > MAX_ENUMERATED_ACTIVE {
        return Err(Error::TooManyActive {
            active: active.len(),
            limit: MAX_ENUMERATED_ACTIVE,
        });
    }
    let opts = SimplexOptions {
        feas_tol: eps.max(1e-12),
        ..SimplexOptions::default()
    };
    let mut out = Vec::new();
    for s in crate::linalg::subsets(&active) {
        if s.is_empty() {
            if norm_inf(n) <= eps {
                out.push(ActiveDecomposition::from_lambda(
                    active.clone(),
                    vec![0.0; p.num_rows()],
                    eps,
                ));
            }
            continue;
        }
        // maximize t subject to Aᵀ_S λ = n, λ_i ≥ t, t ≤ 1.
        let k = s.len();
        let mut lp = LinearProgram::with_vars(k + 1, VarKind::NonNeg);
        for c in 0..p.dim() {
            let mut row: Vec<f64> = s.iter().map(|&i| p.a[i][c]).collect();
            row.push(0.0);
            lp.constrain(row, Relation::Eq, n[c]);
        }
        for pos in 0..k {
            let mut row = vec![0.0; k + 1];
            row[pos] = 1.0;
            row[k] = -1.0;
            lp.constrain(row, Relation::Ge, 0.0);
        }
        let mut cap = vec![0.0; k + 1];
        cap[k] = 1.0;
        lp.constrain(cap, Relation::Le, 1.0);
        let mut obj = vec![0.0; k + 1];
        obj[k] = -1.0;
        lp.minimize(obj);
        if let LpOutcome::Optimal { x, .. } = lp.solve(&opts)? {
            if x[k] > eps {
                let mut lambda = vec![0.0; p.num_rows()];
                for (pos, &i) in s.iter().enumerate() {
                    lambda[i] = x[pos];
                }
                out.push(ActiveDecomposition::from_lambda(
                    active.clone(),
                    lambda,
                    eps,
                ));
            }
        }
    }
    Ok(out)
}

/// Critical cone for a given decomposition: `a_iᵀd = 0` on `I_+`,
/// `a_iᵀd ≤ 0` on `I_0`.
pub fn critical_cone_for(p: &Polyhedron, dec: &ActiveDecomposition) -> ConeRepH {
    ConeRepH {
        e: p.rows_of(&dec.i_plus),
        g: p.rows_of(&dec.i_zero),
        dim: p.dim(),
    }
}

/// Critical cone `T_Z(z) ∩ n^⊥` using the solver's multiplier.
pub fn critical_cone(p: &Polyhedron, z: &[f64], n: &[f64], eps: f64) -> Result<ConeRepH> {
    let dec = normal_cone_multiplier(p, z, n, eps)?.ok_or(Error::NotInNormalCone)?;
    Ok(critical_cone_for(p, &dec))
}

/// Multiplier-free form `{a_iᵀd ≤ 0, i ∈ I(z); nᵀd = 0}`.
pub fn critical_cone_lambda_free(
    p: &Polyhedron,
    z: &[f64],
    n: &[f64],
    eps: f64,
) -> Result<ConeRepH> {
    if normal_cone_multiplier(p, z, n, eps)?.is_none() {
        return Err(Error::NotInNormalCone);
    }
    let t = tangent_cone(p, z, eps)?;
    let e = if norm_inf(n) > eps {
        vec![n.to_vec()]
    } else {
        Vec::new()
    };
    ConeRepH::new(p.dim(), e, t.g)
}

pub fn polar_cone(k: &ConeRepH) -> ConeRepV {
    ConeRepV {
        r: k.g.clone(),
        l: k.e.clone(),
        dim: k.dim,
    }
}

pub fn member_h(k: &ConeRepH, d: &[f64], eps: f64) -> Result<bool> {
    check_len("d", d, k.dim)?;
    Ok(k.contains(d, eps))
}

pub fn member_v(v: &ConeRepV, w: &[f64], eps: f64) -> Result<bool> {
    v.contains(w, eps)
}

/// A face `F_J` of a cone with the promoted `G` rows that define it.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Face {
    pub promoted: Vec<usize>,
    pub cone: ConeRepH,
    pub generators: ConeRepV,
}

impl Face {
    /// `other ⊆ self`, tested on the generators of `other`.
    pub fn contains_face(&self, other: &Face, eps: f64) -> bool {
        other
            .generators
            .r
            .iter()
            .all(|r| self.cone.contains(r, eps))
            && other.generators.l.iter().all(|l| {
                self.cone.contains(l, eps) && self.cone.contains(&crate::linalg::neg(l), eps)
            })
    }
}

/// Distinct faces `F_J` over subsets `J` of the `G` rows, deduplicated by
/// mutual containment. The first `J` in bitmask order is kept.
pub fn faces_of_cone(k: &ConeRepH, eps: f64) -> Result<Vec<Face>> {
    if k.g.len() > 2 * MAX_ENUMERATED_ACTIVE {
        return Err(Error::TooManyActive {
            active: k.g.len(),
            limit: 2 * MAX_ENUMERATED_ACTIVE,
        });
    }
    let gens = k.generators(eps)?;
    let tol = eps.max(1e-9);
    let idx: Vec<usize> = (0..k.g.len()).collect();
    let mut faces: Vec<Face> = Vec::new();
    for j in crate::linalg::subsets(&idx) {
        let rays: Rows = gens
            .r
            .iter()
            .filter(|r| {
                j.iter()
                    .all(|&i| dot(&k.g[i], r).abs() <= tol * (1.0 + norm(&k.g[i])))
            })
            .cloned()
            .collect();
        let face = Face {
            cone: k.face(&j),
            generators: ConeRepV {
                r: rays,
                l: gens.l.clone(),
                dim: k.dim,
            },
            promoted: j,
        };
        if !faces
            .iter()
            .any(|f| f.contains_face(&face, eps) && face.contains_face(f, eps))
        {
            faces.push(face);
        }
    }
    Ok(faces)
}

/// Rows of `I_0` forced to equality on the face of the critical cone where
/// the rows in `j` are tight (includes `j`).
pub fn closure_in_critical_cone(
    p: &Polyhedron,
    dec: &ActiveDecomposition,
    j: &[usize],
    eps: f64,
) -> Result<Vec<usize>> {
    let k = critical_cone_for(p, dec);
    let local: Vec<usize> = j
        .iter()
        .map(|i| dec.i_zero.iter().position(|x| x == i).expect("j ⊆ I_0"))
        .collect();
    Ok(k.implicit_equalities(&local, eps)?
        .into_iter()
        .map(|pos| dec.i_zero[pos])
        .collect())
}

/// `F_{J1} − F_{J2}` in halfspace form for the given decomposition:
/// `a_iᵀd = 0` on `I_+ ∪ J1` and `a_iᵀd ≤ 0` on `cl(J2) \ J1`, where `cl(J2)`
/// adds the rows of `I_0` that vanish on `F_{J2}`. Without the closure the
/// system can be strictly larger than the Minkowski difference when `J2` does
/// not list every row tight on its face.
pub fn face_difference_for(
    p: &Polyhedron,
    dec: &ActiveDecomposition,
    j1: &[usize],
    j2: &[usize],
    eps: f64,
) -> Result<ConeRepH> {
    if let Some(i) = j1.iter().find(|i| !j2.contains(i)) {
        return Err(Error::Invalid(format!(
            "J1 is not a subset of J2 (row {i})"
        )));
    }
    if let Some(i) = j2.iter().find(|i| !dec.i_zero.contains(i)) {
        return Err(Error::Invalid(format!(
            "J2 is not a subset of I_0 (row {i})"
        )));
    }
    let closed = closure_in_critical_cone(p, dec, j2, eps)?;
    let mut eq: Vec<usize> = dec.i_plus.clone();
    eq.extend_from_slice(j1);
    let ineq: Vec<usize> = closed.into_iter().filter(|i| !j1.contains(i)).collect();
    ConeRepH::new(p.dim(), p.rows_of(&eq), p.rows_of(&ineq))
}

pub fn face_difference(
    p: &Polyhedron,
    z: &[f64],
    n: &[f64],
    j1: &[usize],
    j2: &[usize],
    eps: f64,
) -> Result<ConeRepH> {
    let dec = normal_cone_multiplier(p, z, n, eps)?.ok_or(Error::NotInNormalCone)?;
    face_difference_for(p, &dec, j1, j2, eps)
}

/// `dist(w, N_Z(z))`, by least squares over linearly independent supports of
/// the active rows (Carathéodory), keeping nonnegative solutions.
pub fn distance_to_normal_cone(p: &Polyhedron, z: &[f64], w: &[f64], eps: f64) -> Result<f64> {
    check_len("w", w, p.dim())?;
    let active = active_set(p, z, eps)?;
    if active.len() > 2 * MAX_ENUMERATED_ACTIVE {
        return Err(Error::TooManyActive {
            active: active.len(),
            limit: 2 * MAX_ENUMERATED_ACTIVE,
        });
    }
    let mut best = norm(w);
    for s in crate::linalg::subsets(&active) {
        if s.is_empty() || s.len() > p.dim() {
            continue;
        }
        let cols = p.rows_of(&s);
        if rank(&cols, p.dim(), 1e-10) < s.len() {
            continue;
        }
        let (lam, resid) = least_squares_columns(&cols, w);
        if lam.iter().all(|l| *l >= -1e-12) && resid < best {
            best = resid;
        }
    }
    Ok(best)
}

/// Subsets of `items` with at most `k` elements, in order of increasing size.
pub(crate) fn combinations_up_to(items: &[usize], k: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    let mut frontier: Vec<(Vec<usize>, usize)> = vec![(Vec::new(), 0)];
    for _ in 0..k.min(items.len()) {
        let mut next = Vec::new();
        for (set, start) in &frontier {
            for pos in *start..items.len() {
                let mut s = set.clone();
                s.push(items[pos]);
                out.push(s.clone());
                next.push((s, pos + 1));
            }
        }
        frontier = next;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const EPS: f64 = DEFAULT_EPS;

    fn h(e: Rows, g: Rows, dim: usize) -> ConeRepH {
        ConeRepH::new(dim, e, g).unwrap()
    }

    #[test]
    fn active_sets_on_orthant() {
        let p = Polyhedron::orthant(2);
        assert_eq!(active_set(&p, &[0.0, 1.0], EPS).unwrap(), vec![0]);
        assert_eq!(active_set(&p, &[0.0, 0.0], EPS).unwrap(), vec![0, 1]);
        assert!(active_set(&p, &[1.0, 1.0], EPS).unwrap().is_empty());
    }

    #[test]
    fn infeasible_point_names_worst_row() {
        let p = Polyhedron::orthant(2);
        match active_set(&p, &[-0.1, -2.0], EPS) {
            Err(Error::Infeasible { row, .. }) => assert_eq!(row, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_rows_are_dropped_or_rejected() {
        let p = Polyhedron::new(vec![vec![0.0, 0.0], vec![1.0, 0.0]], vec![1.0, 2.0]).unwrap();
        assert_eq!(p.num_rows(), 1);
        assert_eq!(p.source_rows(), &[1]);
        assert!(Polyhedron::new(vec![vec![0.0, 0.0]], vec![-1.0]).is_err());
    }

    #[test]
    fn polyhedron_json_round_trip() {
        let p: Polyhedron =
            serde_json::from_str(r#"{"A": [[-1, 0], [0, -1]], "b": [0, 0]}"#).unwrap();
        assert_eq!(p, Polyhedron::orthant(2));
        let back: Polyhedron = serde_json::from_str(&serde_json::to_string(&p).unwrap()).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn tangent_cones() {
        let p = Polyhedron::orthant(2);
        let t = tangent_cone(&p, &[0.0, 1.0], EPS).unwrap();
        assert!(t.e.is_empty());
        assert_eq!(t.g, vec![vec![-1.0, 0.0]]);
        assert_eq!(tangent_cone(&p, &[0.0, 0.0], EPS).unwrap().g.len(), 2);
        assert!(tangent_cone(&p, &[1.0, 1.0], EPS).unwrap().g.is_empty());
    }

    #[test]
    fn multipliers_on_orthant() {
        let p = Polyhedron::orthant(2);
        let dec = normal_cone_multiplier(&p, &[0.0, 0.0], &[-1.0, -2.0], EPS)
            .unwrap()
            .unwrap();
        assert_eq!(dec.lambda, vec![1.0, 2.0]);
        assert_eq!(dec.i_plus, vec![0, 1]);
        assert!(normal_cone_multiplier(&p, &[1.0, 0.0], &[-1.0, 0.0], EPS)
            .unwrap()
            .is_none());
    }

    #[test]
    fn multiplier_on_simplex_vertex() {
        // At (1, 0) the tight rows are −e2 and 1ᵀ; (1, 0) = −e2·1 + 1ᵀ·1.
        let p = Polyhedron::simplex(2);
        let dec = normal_cone_multiplier(&p, &[1.0, 0.0], &[1.0, 0.0], EPS)
            .unwrap()
            .unwrap();
        assert!((dec.lambda[0]).abs() < 1e-12);
        assert!((dec.lambda[1] - 1.0).abs() < 1e-12);
        assert!((dec.lambda[2] - 1.0).abs() < 1e-12);
        assert!(dec.complementarity_residual(&p, &[1.0, 0.0]) < 1e-12);
    }

    #[test]
    fn critical_cones_on_orthant() {
        let p = Polyhedron::orthant(2);
        let k = critical_cone(&p, &[0.0, 0.0], &[-1.0, 0.0], EPS).unwrap();
        assert_eq!(k.e, vec![vec![-1.0, 0.0]]);
        assert_eq!(k.g, vec![vec![0.0, -1.0]]);
        let k0 = critical_cone(&p, &[0.0, 0.0], &[0.0, 0.0], EPS).unwrap();
        assert!(k0.e.is_empty() && k0.g.len() == 2);
        let k1 = critical_cone(&p, &[1.0, 1.0], &[0.0, 0.0], EPS).unwrap();
        assert!(k1.e.is_empty() && k1.g.is_empty());
        assert!(matches!(
            critical_cone(&p, &[1.0, 1.0], &[1.0, 0.0], EPS),
            Err(Error::NotInNormalCone)
        ));
    }

    #[test]
    fn polar_and_membership() {
        let k = h(vec![], vec![vec![-1.0, 0.0], vec![0.0, -1.0]], 2);
        let pol = polar_cone(&k);
        assert!(member_v(&pol, &[-3.0, -4.0], EPS).unwrap());
        assert!(!member_v(&pol, &[1.0, 0.0], EPS).unwrap());
        assert!(member_h(&k, &[1.0, 0.0], EPS).unwrap());
        let line = polar_cone(&h(vec![vec![1.0, 0.0]], vec![], 2));
        assert!(member_v(&line, &[-7.0, 0.0], EPS).unwrap());
        assert!(!member_v(&line, &[0.0, 1.0], EPS).unwrap());
        let full = polar_cone(&ConeRepH::full_space(2));
        assert!(member_v(&full, &[0.0, 0.0], EPS).unwrap());
        assert!(!member_v(&full, &[1e-3, 0.0], EPS).unwrap());
    }

    #[test]
    fn face_counts() {
        let k = h(vec![vec![1.0, 0.0]], vec![vec![0.0, -1.0]], 2);
        let f = faces_of_cone(&k, EPS).unwrap();
        assert_eq!(f.len(), 2);
        assert_eq!(f[0].promoted, Vec::<usize>::new());
        assert_eq!(f[1].promoted, vec![0]);
        assert_eq!(
            faces_of_cone(&h(vec![], vec![vec![-1.0]], 1), EPS)
                .unwrap()
                .len(),
            2
        );
        let quad = h(vec![], vec![vec![-1.0, 0.0], vec![0.0, -1.0]], 2);
        assert_eq!(faces_of_cone(&quad, EPS).unwrap().len(), 4);
    }

    #[test]
    fn redundant_rows_do_not_duplicate_faces() {
        // Three rows cutting out the same quadrant.
        let k = h(
            vec![],
            vec![vec![-1.0, 0.0], vec![0.0, -1.0], vec![-1.0, -1.0]],
            2,
        );
        assert_eq!(faces_of_cone(&k, EPS).unwrap().len(), 4);
    }

    #[test]
    fn generators_of_a_halfplane() {
        let k = h(vec![], vec![vec![0.0, -1.0]], 2);
        let g = k.generators(EPS).unwrap();
        assert_eq!(g.l.len(), 1);
        assert_eq!(g.r.len(), 1);
        assert!((g.r[0][1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn face_differences_on_orthant() {
        let p = Polyhedron::orthant(2);
        let z = [0.0, 0.0];
        let d = face_difference(&p, &z, &[0.0, 0.0], &[], &[1], EPS).unwrap();
        assert!(d.e.is_empty());
        assert_eq!(d.g, vec![vec![0.0, -1.0]]);
        let same = face_difference(&p, &z, &[0.0, 0.0], &[1], &[1], EPS).unwrap();
        assert_eq!(same.e, vec![vec![0.0, -1.0]]);
        assert!(same.g.is_empty());
        let none = face_difference(&p, &z, &[-1.0, 0.0], &[], &[], EPS).unwrap();
        assert_eq!(none.e, vec![vec![-1.0, 0.0]]);
        assert!(none.g.is_empty());
        assert!(face_difference(&p, &z, &[0.0, 0.0], &[0], &[1], EPS).is_err());
        assert!(face_difference(&p, &z, &[-1.0, 0.0], &[], &[0], EPS).is_err());
    }

    #[test]
    fn closure_adds_rows_tight_on_the_face() {
        // K = {d1 ≥ 0, d2 ≥ 0, d1 ≤ d2}; making d2 = 0 forces d1 = 0 and the
        // third row tight as well.
        let p = Polyhedron::new(
            vec![vec![-1.0, 0.0], vec![0.0, -1.0], vec![1.0, -1.0]],
            vec![0.0, 0.0, 0.0],
        )
        .unwrap();
        let dec = normal_cone_multiplier(&p, &[0.0, 0.0], &[0.0, 0.0], EPS)
            .unwrap()
            .unwrap();
        assert_eq!(
            closure_in_critical_cone(&p, &dec, &[1], EPS).unwrap(),
            vec![0, 1, 2]
        );
        assert_eq!(
            closure_in_critical_cone(&p, &dec, &[0], EPS).unwrap(),
            vec![0]
        );
        let d = face_difference_for(&p, &dec, &[], &[1], EPS).unwrap();
        assert_eq!(d.g.len(), 3);
    }

    #[test]
    fn distances_to_normal_cone() {
        let p = Polyhedron::orthant(2);
        let d = distance_to_normal_cone(&p, &[0.0, 1.0], &[-2.0, 3.0], EPS).unwrap();
        assert!((d - 3.0).abs() < 1e-12);
        let d = distance_to_normal_cone(&p, &[0.0, 0.0], &[1.0, -1.0], EPS).unwrap();
        assert!((d - 1.0).abs() < 1e-12);
    }

    #[test]
    fn combinations_are_complete() {
        let c = combinations_up_to(&[0, 1, 2], 2);
        assert_eq!(c.len(), 1 + 3 + 3);
    }
}
