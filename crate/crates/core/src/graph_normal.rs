//! Limiting normals to `gph N_Z` and coderivative membership for polyhedral Z.
//!
//! Every public predicate takes `g = ∇_z 𝔠` and asks whether
//! `ζ ∈ D*N_Z(z, −g)(η)`, i.e. `(ζ, −η) ∈ N_{gph N_Z}(z, −g)`. The only place
//! that turns `g` into the normal vector `−g` is [`GraphPoint::normal`].

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::cone::{
    critical_cone_lambda_free, faces_of_cone, multiplier_patterns, near_threshold_rows, ConeRepH,
    ConeRepV, Face, Polyhedron, MAX_ENUMERATED_ACTIVE,
};
use crate::error::{check_len, Error, Result};
use crate::linalg::{dot, neg, norm, Rows};

/// Strict inequalities `x < 0` are tested as `x ≤ −EPS_STRICT`.
pub const EPS_STRICT: f64 = 1e-12;
/// Support coordinates within this multiple of eps are flagged in diagnostics.
pub const NEAR_THRESHOLD_FACTOR: f64 = 1e3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphPoint {
    pub z: Vec<f64>,
    pub g: Vec<f64>,
}

impl GraphPoint {
    pub fn new(z: Vec<f64>, g: Vec<f64>) -> Result<Self> {
        check_len("g", &g, z.len())?;
        Ok(Self { z, g })
    }

    pub fn dim(&self) -> usize {
        self.z.len()
    }

    /// The normal vector `−g` that must lie in `N_Z(z)`.
    pub fn normal(&self) -> Vec<f64> {
        neg(&self.g)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalPair {
    pub zeta: Vec<f64>,
    pub eta: Vec<f64>,
}

impl NormalPair {
    pub fn new(zeta: Vec<f64>, eta: Vec<f64>) -> Result<Self> {
        check_len("eta", &eta, zeta.len())?;
        Ok(Self { zeta, eta })
    }

    pub fn scaled(&self, t: f64) -> Self {
        Self {
            zeta: self.zeta.iter().map(|v| v * t).collect(),
            eta: self.eta.iter().map(|v| v * t).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Oracle,
    Explicit,
}

/// Evidence for a verdict. Which fields are filled depends on the method.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub i_plus: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub i_zero: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inactive: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub j1: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub j2: Option<Vec<usize>>,
    /// Promoted rows of the outer face `F1` (oracle only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub outer_face: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inner_face: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)]
pub enum Membership {
    Member {
        method: Method,
        witness: Witness,
    },
    NotMember {
        method: Method,
        diagnostics: Vec<String>,
    },
    /// `(z, −g)` is not in the graph of `N_Z`, so every coderivative is empty.
    EmptyCoderivative {
        reason: String,
    },
}

impl Membership {
    pub fn is_member(&self) -> bool {
        matches!(self, Membership::Member { .. })
    }

    pub fn is_graph_point(&self) -> bool {
        !matches!(self, Membership::EmptyCoderivative { .. })
    }

    pub fn witness(&self) -> Option<&Witness> {
        match self {
            Membership::Member { witness, .. } => Some(witness),
            _ => None,
        }
    }
}

fn check_dims(p: &Polyhedron, gp: &GraphPoint, pair: &NormalPair) -> Result<()> {
    check_len("z", &gp.z, p.dim())?;
    check_len("g", &gp.g, p.dim())?;
    check_len("zeta", &pair.zeta, p.dim())?;
    check_len("eta", &pair.eta, p.dim())
}

/// Why `(z, −g)` fails to be a graph point, if it does.
fn graph_failure(p: &Polyhedron, gp: &GraphPoint, eps: f64) -> Result<Option<String>> {
    match crate::cone::normal_cone_multiplier(p, &gp.z, &gp.normal(), eps) {
        Ok(Some(_)) => Ok(None),
        Ok(None) => Ok(Some("−g is not in the normal cone at z".into())),
        Err(Error::Infeasible { row, violation }) => {
            Ok(Some(format!("z violates row {row} by {violation:.3e}")))
        }
        Err(e) => Err(e),
    }
}

/// One candidate system of the explicit characterization: `−η` must satisfy
/// `a_iᵀ(−η) = 0` on `eq` and `a_iᵀ(−η) ≤ 0` on `ineq`, and `ζ` must be a
/// combination with free coefficients on `eq` and nonnegative ones on `ineq`.
#[derive(Clone, Debug)]
struct DifferenceSystem {
    regime: usize,
    j1: Vec<usize>,
    j2: Vec<usize>,
    eq: Vec<usize>,
    ineq: Vec<usize>,
}

/// Precomputed explicit characterization at one graph point, reusable across
/// queries.
#[derive(Clone, Debug)]
pub struct GraphNormalCone {
    p: Polyhedron,
    gp: GraphPoint,
    eps: f64,
    regimes: Vec<crate::cone::ActiveDecomposition>,
    systems: Vec<DifferenceSystem>,
    failure: Option<String>,
    diagnostics: Vec<String>,
}

impl GraphNormalCone {
    pub fn new(p: &Polyhedron, gp: &GraphPoint, eps: f64) -> Result<Self> {
        check_len("z", &gp.z, p.dim())?;
        check_len("g", &gp.g, p.dim())?;
        let mut out = Self {
            p: p.clone(),
            gp: gp.clone(),
            eps,
            regimes: Vec::new(),
            systems: Vec::new(),
            failure: graph_failure(p, gp, eps)?,
            diagnostics: Vec::new(),
        };
        if out.failure.is_some() {
            return Ok(out);
        }
        let near = near_threshold_rows(p, &gp.z, eps);
        if !near.is_empty() {
            out.diagnostics.push(format!(
                "rows {near:?} have slack within a factor 10 of eps"
            ));
        }
        let n = gp.normal();
        out.regimes = multiplier_patterns(p, &gp.z, &n, eps)?;
        // Implicit equalities depend only on the critical cone as a set, which
        // is the same for every multiplier; compute them once on the
        // multiplier-free form. Its G rows are the active rows, in order.
        let k = critical_cone_lambda_free(p, &gp.z, &n, eps)?;
        let active = crate::cone::active_set(p, &gp.z, eps)?;
        let mut closures: HashMap<Vec<usize>, Vec<usize>> = HashMap::new();
        let mut seen: HashSet<(Vec<usize>, Vec<usize>)> = HashSet::new();
        for (r, dec) in out.regimes.iter().enumerate() {
            for j2 in crate::linalg::subsets(&dec.i_zero) {
                let closed = match closures.get(&j2) {
                    Some(c) => c.clone(),
                    None => {
                        let local: Vec<usize> = j2
                            .iter()
                            .map(|i| active.iter().position(|a| a == i).expect("I_0 ⊆ I"))
                            .collect();
                        let c: Vec<usize> = k
                            .implicit_equalities(&local, eps)?
                            .into_iter()
                            .map(|pos| active[pos])
                            .collect();
                        closures.insert(j2.clone(), c.clone());
                        c
                    }
                };
                let closed_in_zero: Vec<usize> = closed
                    .into_iter()
                    .filter(|i| dec.i_zero.contains(i))
                    .collect();
                if closed_in_zero != j2 {
                    continue;
                }
                for j1 in crate::linalg::subsets(&j2) {
                    let mut eq = dec.i_plus.clone();
                    eq.extend_from_slice(&j1);
                    eq.sort_unstable();
                    let ineq: Vec<usize> = j2.iter().copied().filter(|i| !j1.contains(i)).collect();
                    if !seen.insert((eq.clone(), ineq.clone())) {
                        continue;
                    }
                    out.systems.push(DifferenceSystem {
                        regime: r,
                        j1,
                        j2: j2.clone(),
                        eq,
                        ineq,
                    });
                }
            }
        }
        Ok(out)
    }

    pub fn is_graph_point(&self) -> bool {
        self.failure.is_none()
    }

    pub fn num_regimes(&self) -> usize {
        self.regimes.len()
    }

    /// The linear pieces as `(eq, ineq)` row-index pairs: on a piece, `η`
    /// satisfies `a_iᵀη = 0` on `eq` and `a_iᵀη ≥ 0` on `ineq`, and `ζ`
    /// combines `eq` rows freely and `ineq` rows nonnegatively.
    pub fn systems(&self) -> impl Iterator<Item = (&[usize], &[usize])> + '_ {
        self.systems
            .iter()
            .map(|s| (s.eq.as_slice(), s.ineq.as_slice()))
    }

    pub fn member(&self, pair: &NormalPair) -> Result<Membership> {
        check_dims(&self.p, &self.gp, pair)?;
        if let Some(reason) = &self.failure {
            return Ok(Membership::EmptyCoderivative {
                reason: reason.clone(),
            });
        }
        let eps = self.eps;
        let a = self.p.a();
        let eta_scale = 1.0 + norm(&pair.eta);
        for sys in &self.systems {
            let eta_ok = sys
                .eq
                .iter()
                .all(|&i| dot(&a[i], &pair.eta).abs() <= eps * eta_scale * (1.0 + norm(&a[i])))
                && sys
                    .ineq
                    .iter()
                    .all(|&i| dot(&a[i], &pair.eta) >= -eps * eta_scale * (1.0 + norm(&a[i])));
            if !eta_ok {
                continue;
            }
            let v = ConeRepV::new(
                self.p.dim(),
                sys.ineq.iter().map(|&i| a[i].clone()).collect(),
                sys.eq.iter().map(|&i| a[i].clone()).collect(),
            )?;
            if v.contains(&pair.zeta, eps)? {
                let dec = &self.regimes[sys.regime];
                return Ok(Membership::Member {
                    method: Method::Explicit,
                    witness: Witness {
                        lambda: Some(dec.lambda.clone()),
                        i_plus: dec.i_plus.clone(),
                        i_zero: dec.i_zero.clone(),
                        j1: Some(sys.j1.clone()),
                        j2: Some(sys.j2.clone()),
                        diagnostics: self.diagnostics.clone(),
                        ..Witness::default()
                    },
                });
            }
        }
        Ok(Membership::NotMember {
            method: Method::Explicit,
            diagnostics: self.diagnostics.clone(),
        })
    }
}

/// Explicit membership test over multiplier supports and index sets
/// `J1 ⊆ J2 ⊆ I_0`, with `J2` ranging over face-closed sets.
pub fn coderivative_member_polyhedron(
    p: &Polyhedron,
    gp: &GraphPoint,
    pair: &NormalPair,
    eps: f64,
) -> Result<Membership> {
    GraphNormalCone::new(p, gp, eps)?.member(pair)
}

struct FacePair {
    outer: usize,
    inner: usize,
    /// `F1 − F2` in generator form.
    difference: ConeRepV,
}

/// Brute-force oracle: enumerate faces `F2 ⊆ F1` of the critical cone and
/// test `ζ ∈ (F1 − F2)*`, `−η ∈ F1 − F2`. Works from generators of the
/// multiplier-free critical cone and shares no code with the explicit
/// characterization beyond cone primitives.
pub struct FacePairOracle {
    dim: usize,
    eps: f64,
    faces: Vec<Face>,
    pairs: Vec<FacePair>,
    failure: Option<String>,
}

impl FacePairOracle {
    pub fn new(p: &Polyhedron, gp: &GraphPoint, eps: f64) -> Result<Self> {
        check_len("z", &gp.z, p.dim())?;
        check_len("g", &gp.g, p.dim())?;
        let failure = graph_failure(p, gp, eps)?;
        let mut out = Self {
            dim: p.dim(),
            eps,
            faces: Vec::new(),
            pairs: Vec::new(),
            failure,
        };
        if out.failure.is_some() {
            return Ok(out);
        }
        let active = crate::cone::active_set(p, &gp.z, eps)?;
        if active.len() > MAX_ENUMERATED_ACTIVE {
            return Err(Error::TooManyActive {
                active: active.len(),
                limit: MAX_ENUMERATED_ACTIVE,
            });
        }
        let k: ConeRepH = critical_cone_lambda_free(p, &gp.z, &gp.normal(), eps)?;
        out.faces = faces_of_cone(&k, eps)?;
        for (o, f1) in out.faces.iter().enumerate() {
            for (i, f2) in out.faces.iter().enumerate() {
                if !f1.contains_face(f2, eps) {
                    continue;
                }
                let mut rays: Rows = f1.generators.r.clone();
                rays.extend(f2.generators.r.iter().map(|r| neg(r)));
                let mut lin = f1.generators.l.clone();
                lin.extend(f2.generators.l.iter().cloned());
                out.pairs.push(FacePair {
                    outer: o,
                    inner: i,
                    difference: ConeRepV::new(p.dim(), rays, lin)?,
                });
            }
        }
        Ok(out)
    }

    pub fn faces(&self) -> &[Face] {
        &self.faces
    }

    /// Pairs `(outer, inner)` of face indices with `inner ⊆ outer`.
    pub fn face_pairs(&self) -> Vec<(usize, usize)> {
        self.pairs.iter().map(|fp| (fp.outer, fp.inner)).collect()
    }

    /// Generators of `F1 − F2` for the given pair index.
    pub fn difference(&self, pair: usize) -> &ConeRepV {
        &self.pairs[pair].difference
    }

    pub fn member(&self, pair: &NormalPair) -> Result<Membership> {
        check_len("zeta", &pair.zeta, self.dim)?;
        check_len("eta", &pair.eta, self.dim)?;
        if let Some(reason) = &self.failure {
            return Ok(Membership::EmptyCoderivative {
                reason: reason.clone(),
            });
        }
        let minus_eta = neg(&pair.eta);
        for fp in &self.pairs {
            if fp.difference.polar_contains(&pair.zeta, self.eps)
                && fp.difference.contains(&minus_eta, self.eps)?
            {
                return Ok(Membership::Member {
                    method: Method::Oracle,
                    witness: Witness {
                        outer_face: Some(self.faces[fp.outer].promoted.clone()),
                        inner_face: Some(self.faces[fp.inner].promoted.clone()),
                        ..Witness::default()
                    },
                });
            }
        }
        Ok(Membership::NotMember {
            method: Method::Oracle,
            diagnostics: Vec::new(),
        })
    }
}

pub fn limiting_normal_member_oracle(
    p: &Polyhedron,
    gp: &GraphPoint,
    pair: &NormalPair,
    eps: f64,
) -> Result<Membership> {
    FacePairOracle::new(p, gp, eps)?.member(pair)
}

fn is_zero(x: f64, eps: f64) -> bool {
    x.abs() <= eps
}

fn strictly_negative(x: f64) -> bool {
    x <= -EPS_STRICT
}

fn ambiguity_note(i: usize, name: &str, x: f64, eps: f64, notes: &mut Vec<String>) {
    if x != 0.0 && x.abs() <= eps.max(EPS_STRICT) {
        notes.push(format!(
            "boundary-ambiguous: {name}[{i}] = {x:.3e} treated as zero"
        ));
    }
}

/// Fast path for `Z = R^d_+`.
pub fn coderivative_member_orthant(
    z: &[f64],
    g: &[f64],
    pair: &NormalPair,
    eps: f64,
) -> Result<Membership> {
    let d = z.len();
    check_len("g", g, d)?;
    check_len("zeta", &pair.zeta, d)?;
    check_len("eta", &pair.eta, d)?;
    let (mut l, mut i_plus, mut i_zero) = (Vec::new(), Vec::new(), Vec::new());
    for i in 0..d {
        if z[i] < -eps {
            return Ok(Membership::EmptyCoderivative {
                reason: format!("z[{i}] = {} is negative", z[i]),
            });
        }
        if z[i] > eps {
            if !is_zero(g[i], eps) {
                return Ok(Membership::EmptyCoderivative {
                    reason: format!("z[{i}] > 0 but g[{i}] = {} is not zero", g[i]),
                });
            }
            l.push(i);
        } else if g[i] > eps {
            i_plus.push(i);
        } else if g[i] >= -eps {
            i_zero.push(i);
        } else {
            return Ok(Membership::EmptyCoderivative {
                reason: format!("z[{i}] = 0 but g[{i}] = {} is negative", g[i]),
            });
        }
    }
    let (zeta, eta) = (&pair.zeta, &pair.eta);
    let mut notes = Vec::new();
    let ok = l.iter().all(|&i| is_zero(zeta[i], eps))
        && i_plus.iter().all(|&i| is_zero(eta[i], eps))
        && i_zero.iter().all(|&i| {
            ambiguity_note(i, "zeta", zeta[i], eps, &mut notes);
            ambiguity_note(i, "eta", eta[i], eps, &mut notes);
            (strictly_negative(zeta[i]) && strictly_negative(eta[i]))
                || is_zero(zeta[i], eps)
                || is_zero(eta[i], eps)
        });
    Ok(if ok {
        Membership::Member {
            method: Method::Explicit,
            witness: Witness {
                i_plus,
                i_zero,
                inactive: l,
                diagnostics: notes,
                ..Witness::default()
            },
        }
    } else {
        Membership::NotMember {
            method: Method::Explicit,
            diagnostics: notes,
        }
    })
}

/// Fast path for `Z = {z ≥ 0, 1ᵀz ≤ 1}`. Coordinates are labelled as in the
/// orthant case after shifting `g` by the multiplier `τ` of the sum row, and
/// `ζ` is compared against the sum-row coefficient `β`.
pub fn coderivative_member_simplex(
    z: &[f64],
    g: &[f64],
    pair: &NormalPair,
    eps: f64,
) -> Result<Membership> {
    simplex_member(z, g, pair, eps, None)
}

/// As [`coderivative_member_simplex`] but with `β` fixed by the caller.
pub fn coderivative_member_simplex_with_beta(
    z: &[f64],
    g: &[f64],
    pair: &NormalPair,
    beta: f64,
    eps: f64,
) -> Result<Membership> {
    simplex_member(z, g, pair, eps, Some(beta))
}

fn simplex_member(
    z: &[f64],
    g: &[f64],
    pair: &NormalPair,
    eps: f64,
    beta_hint: Option<f64>,
) -> Result<Membership> {
    let d = z.len();
    check_len("g", g, d)?;
    check_len("zeta", &pair.zeta, d)?;
    check_len("eta", &pair.eta, d)?;
    if let Some(i) = (0..d).find(|&i| z[i] < -eps) {
        return Ok(Membership::EmptyCoderivative {
            reason: format!("z[{i}] = {} is negative", z[i]),
        });
    }
    let s: f64 = z.iter().sum();
    if s > 1.0 + eps {
        return Ok(Membership::EmptyCoderivative {
            reason: format!("1ᵀz = {s} exceeds 1"),
        });
    }
    let on_face = (s - 1.0).abs() <= eps;
    let l: Vec<usize> = (0..d).filter(|&i| z[i] > eps).collect();
    let mut notes = Vec::new();
    // Support membership flips with eps for coordinates close to it.
    for (i, &v) in z.iter().enumerate() {
        if v.abs() > eps && v.abs() <= NEAR_THRESHOLD_FACTOR * eps {
            notes.push(format!(
                "near-threshold: z[{i}] = {v:.3e} (eps = {eps:.1e})"
            ));
        }
    }
    if on_face && l.is_empty() {
        notes.push("support is empty on the face 1ᵀz = 1; τ taken as 0".to_string());
    }

    // Multiplier of the sum row: −g_i = τ on L, and −g_i ≤ τ on zero coordinates.
    let tau = if on_face {
        match l.first() {
            Some(&i) => -g[i],
            None => 0.0,
        }
    } else {
        0.0
    };
    if tau < -eps {
        return Ok(Membership::EmptyCoderivative {
            reason: format!("sum-row multiplier τ = {tau} is negative"),
        });
    }
    if let Some(&i) = l.iter().find(|&&i| !is_zero(g[i] + tau, eps)) {
        return Ok(Membership::EmptyCoderivative {
            reason: format!("g is not constant on the support (index {i})"),
        });
    }
    let (mut i_plus, mut i_zero) = (Vec::new(), Vec::new());
    for i in (0..d).filter(|i| !l.contains(i)) {
        let shifted = g[i] + tau;
        if shifted > eps {
            i_plus.push(i);
        } else if shifted >= -eps {
            i_zero.push(i);
        } else {
            return Ok(Membership::EmptyCoderivative {
                reason: format!("g[{i}] = {} is below −τ", g[i]),
            });
        }
    }

    let (zeta, eta) = (&pair.zeta, &pair.eta);
    let sum_eta: f64 = eta.iter().sum();
    let candidates: Vec<f64> = if let Some(b) = beta_hint {
        vec![b]
    } else if !on_face {
        vec![0.0]
    } else if let Some(&i) = l.first() {
        vec![zeta[i]]
    } else {
        // Not reachable with a sensible eps (1ᵀz = 1 forces some z_i > 0), kept
        // as the case split over the sign of β.
        let max = zeta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut c = vec![0.0, max + 1.0];
        c.extend(zeta.iter().copied());
        c
    };

    for beta in candidates {
        let ok = is_zero(beta * (1.0 - s), eps)
            && is_zero(tau * sum_eta, eps * (1.0 + tau.abs()))
            && ((beta >= EPS_STRICT && sum_eta >= EPS_STRICT)
                || is_zero(beta, eps)
                || is_zero(sum_eta, eps))
            && l.iter().all(|&i| is_zero(zeta[i] - beta, eps))
            && i_plus.iter().all(|&i| is_zero(eta[i], eps))
            && i_zero.iter().all(|&i| {
                let shifted = zeta[i] - beta;
                ambiguity_note(i, "zeta - beta", shifted, eps, &mut notes);
                ambiguity_note(i, "eta", eta[i], eps, &mut notes);
                (strictly_negative(shifted) && strictly_negative(eta[i]))
                    || is_zero(shifted, eps)
                    || is_zero(eta[i], eps)
            });
        if ok {
            return Ok(Membership::Member {
                method: Method::Explicit,
                witness: Witness {
                    i_plus,
                    i_zero,
                    inactive: l,
                    beta: Some(beta),
                    tau: Some(tau),
                    diagnostics: notes,
                    ..Witness::default()
                },
            });
        }
    }
    Ok(Membership::NotMember {
        method: Method::Explicit,
        diagnostics: notes,
    })
}
