//! Mean–variance portfolio selection on the capped simplex with a linear
//! return predictor and the optimistic SPO loss.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cone::DEFAULT_EPS;
use crate::error::{check_len, Error, Result};
use crate::feasible::FeasibleSet;
use crate::graph_normal::{coderivative_member_simplex, NormalPair};
use crate::linalg::{
    axpy, dot, is_positive_definite, is_symmetric, mat_vec, project_capped_simplex, solve_square,
    sub, Rows,
};
use crate::qp::QuadraticProgram;
use crate::stationarity::{
    verify_certificate, Certificate, LowerModel, Problem, ResidualReport, Scenario,
    ScenarioCertificate, Subgradient, ThetaSet, ThetaValue, UpperModel, ValueSample, VerifyOptions,
};

/// Ridge added to the normal equations of the least-squares fit.
const RIDGE: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PortfolioSample {
    pub x: Vec<f64>,
    /// Realized returns.
    pub r: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PortfolioInstance {
    pub sigma: Rows,
    /// Risk aversion.
    pub lambda: f64,
    pub samples: Vec<PortfolioSample>,
}

impl PortfolioInstance {
    pub fn new(sigma: Rows, lambda: f64, samples: Vec<PortfolioSample>) -> Result<Self> {
        let out = Self {
            sigma,
            lambda,
            samples,
        };
        out.validate()?;
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        validate_sigma(&self.sigma, self.lambda)?;
        let dz = self.sigma.len();
        let first = self
            .samples
            .first()
            .ok_or_else(|| Error::Invalid("portfolio instance has no samples".into()))?;
        let dx = first.x.len();
        if dx == 0 {
            return Err(Error::Invalid("features must be nonempty".into()));
        }
        for (n, s) in self.samples.iter().enumerate() {
            check_len(&format!("sample {n} x"), &s.x, dx)?;
            check_len(&format!("sample {n} r"), &s.r, dz)?;
            if s.x.iter().chain(&s.r).any(|v| !v.is_finite()) {
                return Err(Error::Invalid(format!("sample {n} has a non-finite entry")));
            }
        }
        self.weights().map(|_| ())
    }

    pub fn dim_z(&self) -> usize {
        self.sigma.len()
    }

    pub fn dim_x(&self) -> usize {
        self.samples.first().map_or(0, |s| s.x.len())
    }

    /// Scenario weights: `1/N` when all are omitted, otherwise the given
    /// weights rescaled to sum to one.
    pub fn weights(&self) -> Result<Vec<f64>> {
        let given: Vec<f64> = self.samples.iter().filter_map(|s| s.weight).collect();
        if given.is_empty() {
            let n = self.samples.len() as f64;
            return Ok(vec![1.0 / n; self.samples.len()]);
        }
        if given.len() != self.samples.len() {
            return Err(Error::Invalid(
                "either every sample carries a weight or none does".into(),
            ));
        }
        if given.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::Invalid("sample weights must be nonnegative".into()));
        }
        let total: f64 = given.iter().sum();
        if total <= 0.0 {
            return Err(Error::Invalid("sample weights sum to zero".into()));
        }
        Ok(given.iter().map(|w| w / total).collect())
    }

    /// `C(z, r) = −rᵀz + (λ/2) zᵀΣz`.
    pub fn cost(&self, z: &[f64], r: &[f64]) -> f64 {
        -dot(r, z) + 0.5 * self.lambda * dot(z, &mat_vec(&self.sigma, z))
    }
}

fn validate_sigma(sigma: &Rows, lambda: f64) -> Result<()> {
    if sigma.is_empty() {
        return Err(Error::Invalid("covariance matrix is empty".into()));
    }
    if sigma.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Invalid(
            "covariance matrix has a non-finite entry".into(),
        ));
    }
    if !is_symmetric(sigma, 1e-12) {
        return Err(Error::Invalid("covariance matrix is not symmetric".into()));
    }
    if !is_positive_definite(sigma) {
        return Err(Error::Invalid(
            "covariance matrix is not positive definite".into(),
        ));
    }
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::Invalid(format!(
            "risk aversion {lambda} must be positive"
        )));
    }
    Ok(())
}

/// `θ ∈ R^{d_x×d_z}` with predictions `r̂ = θᵀx`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LinearPredictor {
    pub theta: Rows,
}

impl LinearPredictor {
    pub fn new(theta: Rows) -> Result<Self> {
        let dz = theta.first().map_or(0, Vec::len);
        if dz == 0 || theta.iter().any(|r| r.len() != dz) {
            return Err(Error::Dimension(
                "predictor matrix must be rectangular and nonempty".into(),
            ));
        }
        if theta.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("predictor has a non-finite entry".into()));
        }
        Ok(Self { theta })
    }

    pub fn zeros(dx: usize, dz: usize) -> Self {
        Self {
            theta: vec![vec![0.0; dz]; dx],
        }
    }

    /// Row-major reshaping of a flat parameter vector.
    pub fn from_flat(dx: usize, dz: usize, flat: &[f64]) -> Result<Self> {
        check_len("theta", flat, dx * dz)?;
        Self::new(flat.chunks(dz).map(<[f64]>::to_vec).collect())
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.theta.iter().flatten().copied().collect()
    }

    pub fn dim_x(&self) -> usize {
        self.theta.len()
    }

    pub fn dim_z(&self) -> usize {
        self.theta[0].len()
    }

    pub fn predict(&self, x: &[f64]) -> Vec<f64> {
        predict_flat(&self.flatten(), x, self.dim_z())
    }
}

fn predict_flat(theta: &[f64], x: &[f64], dz: usize) -> Vec<f64> {
    let mut r = vec![0.0; dz];
    for (i, xi) in x.iter().enumerate() {
        axpy(&mut r, *xi, &theta[i * dz..(i + 1) * dz]);
    }
    r
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimplexQpSolution {
    pub z: Vec<f64>,
    /// Multipliers of `−z_i ≤ 0`.
    pub bound_multipliers: Vec<f64>,
    /// Multiplier of `1ᵀz ≤ 1`.
    pub tau: f64,
    /// Coordinates with `z_i = 0` held active.
    pub active_bounds: Vec<usize>,
    pub budget_active: bool,
    /// Largest violation among stationarity, feasibility, dual sign and
    /// complementarity.
    pub kkt_residual: f64,
}

impl SimplexQpSolution {
    /// Multipliers in the row order of the simplex polyhedron.
    pub fn row_multipliers(&self) -> Vec<f64> {
        let mut out = self.bound_multipliers.clone();
        out.push(self.tau);
        out
    }
}

/// Minimizes `−rᵀz + (λ/2) zᵀΣz` over `{z ≥ 0, 1ᵀz ≤ 1}` by a primal
/// active-set method started at the projection of `Σ⁻¹r/λ`.
pub fn solve_simplex_qp(r: &[f64], sigma: &Rows, lam: f64) -> Result<SimplexQpSolution> {
    validate_sigma(sigma, lam)?;
    let d = sigma.len();
    check_len("r", r, d)?;
    let q: Rows = sigma
        .iter()
        .map(|row| row.iter().map(|v| lam * v).collect())
        .collect();
    let unconstrained =
        solve_square(&q, r).ok_or_else(|| Error::Numeric("covariance solve failed".into()))?;
    let mut start = project_capped_simplex(&unconstrained);
    // Guard against a projection that lands a hair outside the budget.
    let total: f64 = start.iter().sum();
    if total > 1.0 {
        start.iter_mut().for_each(|v| *v /= total);
    }
    let mut a: Rows = (0..d)
        .map(|i| (0..d).map(|j| if i == j { -1.0 } else { 0.0 }).collect())
        .collect();
    a.push(vec![1.0; d]);
    let mut b = vec![0.0; d];
    b.push(1.0);
    let qp = QuadraticProgram {
        q,
        c: r.iter().map(|v| -v).collect(),
        a_eq: Vec::new(),
        b_eq: Vec::new(),
        a,
        b,
    };
    let sol = qp.solve_from(&start)?;
    let bound_multipliers = sol.ineq_multipliers[..d].to_vec();
    let tau = sol.ineq_multipliers[d];
    let z = sol.x.clone();
    let mut kkt = qp.kkt_residual(&sol);
    let mut total = 0.0;
    for i in 0..d {
        kkt = kkt
            .max((-z[i]).max(0.0))
            .max((-bound_multipliers[i]).max(0.0))
            .max((bound_multipliers[i] * z[i]).abs());
        total += z[i];
    }
    kkt = kkt
        .max((total - 1.0).max(0.0))
        .max((-tau).max(0.0))
        .max((tau * (1.0 - total)).abs());
    let mut active_bounds: Vec<usize> =
        sol.working_set.iter().copied().filter(|&i| i < d).collect();
    active_bounds.sort_unstable();
    Ok(SimplexQpSolution {
        budget_active: sol.working_set.contains(&d),
        active_bounds,
        z,
        bound_multipliers,
        tau,
        kkt_residual: kkt,
    })
}

/// `C(z*(θᵀx), r) − C*(r)`; the lower level has a unique solution since Σ is
/// positive definite, so the optimistic minimum is a single evaluation.
pub fn spo_loss(
    theta: &LinearPredictor,
    x: &[f64],
    r: &[f64],
    inst: &PortfolioInstance,
) -> Result<f64> {
    check_len("x", x, theta.dim_x())?;
    check_len("r", r, inst.dim_z())?;
    let predicted = solve_simplex_qp(&theta.predict(x), &inst.sigma, inst.lambda)?;
    let best = solve_simplex_qp(r, &inst.sigma, inst.lambda)?;
    Ok((inst.cost(&predicted.z, r) - inst.cost(&best.z, r)).max(0.0))
}

/// Weighted mean SPO loss over the samples.
pub fn empirical_spo_objective(theta: &LinearPredictor, inst: &PortfolioInstance) -> Result<f64> {
    let w = inst.weights()?;
    let losses = inst
        .samples
        .par_iter()
        .map(|s| spo_loss(theta, &s.x, &s.r, inst))
        .collect::<Result<Vec<_>>>()?;
    Ok(losses.iter().zip(&w).map(|(l, w)| l * w).sum())
}

/// `θ` minimizing `Σ_n ‖θᵀx_n − r_n‖²` via ridged normal equations.
pub fn fit_least_squares(inst: &PortfolioInstance) -> Result<LinearPredictor> {
    let (dx, dz) = (inst.dim_x(), inst.dim_z());
    if inst.samples.len() < dx {
        return Err(Error::Invalid(format!(
            "least squares needs at least {dx} samples, got {}",
            inst.samples.len()
        )));
    }
    let mut gram = vec![vec![0.0; dx]; dx];
    let mut cross = vec![vec![0.0; dz]; dx];
    for s in &inst.samples {
        for i in 0..dx {
            axpy(&mut gram[i], s.x[i], &s.x);
            axpy(&mut cross[i], s.x[i], &s.r);
        }
    }
    for (i, row) in gram.iter_mut().enumerate() {
        row[i] += RIDGE;
    }
    let mut theta = vec![vec![0.0; dz]; dx];
    for j in 0..dz {
        let rhs: Vec<f64> = cross.iter().map(|row| row[j]).collect();
        let col = solve_square(&gram, &rhs)
            .ok_or_else(|| Error::Numeric("normal equations are singular".into()))?;
        for i in 0..dx {
            theta[i][j] = col[i];
        }
    }
    LinearPredictor::new(theta)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub predictor: LinearPredictor,
    pub objective: f64,
    /// Objective after each accepted move, starting with the initial value.
    pub trace: Vec<f64>,
}

/// Derivative-free coordinate search on the empirical SPO objective. Each
/// step perturbs one seeded-random entry by `±step_size`; a move is kept only
/// if it strictly lowers the objective, and the step halves after a full
/// round of rejections.
pub fn spo_local_search(
    inst: &PortfolioInstance,
    theta0: &LinearPredictor,
    steps: usize,
    step_size: f64,
    seed: u64,
) -> Result<SearchResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut flat = theta0.flatten();
    let (dx, dz) = (theta0.dim_x(), theta0.dim_z());
    let mut best = empirical_spo_objective(theta0, inst)?;
    let mut trace = vec![best];
    let mut step = step_size;
    let mut rejected = 0;
    for _ in 0..steps {
        let k = rng.gen_range(0..flat.len());
        let first = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let mut moved = false;
        for sign in [first, -first] {
            let mut cand = flat.clone();
            cand[k] += sign * step;
            let value = empirical_spo_objective(&LinearPredictor::from_flat(dx, dz, &cand)?, inst)?;
            if value < best {
                flat = cand;
                best = value;
                trace.push(value);
                moved = true;
                break;
            }
        }
        if moved {
            rejected = 0;
        } else {
            rejected += 1;
            if rejected >= flat.len() {
                step *= 0.5;
                rejected = 0;
            }
        }
    }
    Ok(SearchResult {
        predictor: LinearPredictor::from_flat(dx, dz, &flat)?,
        objective: best,
        trace,
    })
}

/// Lower level `−(θᵀx)ᵀz + (λ/2) zᵀΣz` over the capped simplex.
pub struct PortfolioLower {
    sigma: Rows,
    lambda: f64,
    dx: usize,
    set: FeasibleSet,
}

impl PortfolioLower {
    pub fn new(inst: &PortfolioInstance) -> Self {
        Self {
            sigma: inst.sigma.clone(),
            lambda: inst.lambda,
            dx: inst.dim_x(),
            set: FeasibleSet::Simplex(inst.dim_z()),
        }
    }
}

impl LowerModel for PortfolioLower {
    fn dim_z(&self) -> usize {
        self.sigma.len()
    }

    fn dim_theta(&self) -> usize {
        self.dx * self.sigma.len()
    }

    fn feasible_set(&self) -> &FeasibleSet {
        &self.set
    }

    fn cost(&self, z: &[f64], theta: &[f64], x: &[f64]) -> f64 {
        let r = predict_flat(theta, x, self.dim_z());
        -dot(&r, z) + 0.5 * self.lambda * dot(z, &mat_vec(&self.sigma, z))
    }

    fn grad_z(&self, z: &[f64], theta: &[f64], x: &[f64]) -> Vec<f64> {
        let r = predict_flat(theta, x, self.dim_z());
        let mut g = mat_vec(&self.sigma, z);
        g.iter_mut()
            .zip(&r)
            .for_each(|(v, ri)| *v = self.lambda * *v - ri);
        g
    }

    fn hess_zz(&self, _z: &[f64], _theta: &[f64], _x: &[f64]) -> Rows {
        self.sigma
            .iter()
            .map(|row| row.iter().map(|v| self.lambda * v).collect())
            .collect()
    }

    fn hess_ztheta_t(&self, _z: &[f64], _theta: &[f64], x: &[f64], eta: &[f64]) -> Vec<f64> {
        outer_neg(x, eta)
    }

    fn grad_theta(&self, z: &[f64], _theta: &[f64], x: &[f64]) -> Vec<f64> {
        outer_neg(x, z)
    }

    fn minimize(&self, theta: &[f64], x: &[f64]) -> Result<ValueSample> {
        let r = predict_flat(theta, x, self.dim_z());
        let sol = solve_simplex_qp(&r, &self.sigma, self.lambda)?;
        Ok(ValueSample {
            value: self.cost(&sol.z, theta, x),
            argmin_points: vec![sol.z],
            exact: true,
        })
    }
}

/// `−x vᵀ`, flattened row-major.
fn outer_neg(x: &[f64], v: &[f64]) -> Vec<f64> {
    x.iter()
        .flat_map(|xi| v.iter().map(move |vj| -xi * vj))
        .collect()
}

/// Upper level: the SPO loss `C(z, r) − C*(r)` with `y = r`.
pub struct PortfolioUpper {
    sigma: Rows,
    lambda: f64,
    theta_set: ThetaSet,
}

impl PortfolioUpper {
    pub fn new(inst: &PortfolioInstance) -> Self {
        Self {
            sigma: inst.sigma.clone(),
            lambda: inst.lambda,
            theta_set: ThetaSet::Free,
        }
    }

    fn cost(&self, z: &[f64], r: &[f64]) -> f64 {
        -dot(r, z) + 0.5 * self.lambda * dot(z, &mat_vec(&self.sigma, z))
    }
}

impl UpperModel for PortfolioUpper {
    fn loss(&self, z: &[f64], _x: &[f64], y: &[f64], _theta: &[f64]) -> f64 {
        let best = solve_simplex_qp(y, &self.sigma, self.lambda)
            .map(|s| self.cost(&s.z, y))
            .unwrap_or(f64::NAN);
        self.cost(z, y) - best
    }

    fn grad_z(&self, z: &[f64], _x: &[f64], y: &[f64], _theta: &[f64]) -> Subgradient {
        let mut g = mat_vec(&self.sigma, z);
        g.iter_mut()
            .zip(y)
            .for_each(|(v, r)| *v = self.lambda * *v - r);
        Subgradient::smooth(g)
    }

    fn grad_theta(&self, _z: &[f64], x: &[f64], y: &[f64], _theta: &[f64]) -> Vec<f64> {
        vec![0.0; x.len() * y.len()]
    }

    fn theta_set(&self) -> &ThetaSet {
        &self.theta_set
    }
}

pub fn portfolio_problem(inst: &PortfolioInstance) -> Result<Problem> {
    inst.validate()?;
    let w = inst.weights()?;
    let scenarios = inst
        .samples
        .iter()
        .zip(w)
        .map(|(s, weight)| Scenario {
            x: s.x.clone(),
            y: s.r.clone(),
            weight,
        })
        .collect();
    Problem::new(
        Box::new(PortfolioLower::new(inst)),
        Box::new(PortfolioUpper::new(inst)),
        scenarios,
    )
}

/// Checks the portfolio stationarity system at `θ`: the upper condition
/// `Σ_n p_n x_n η_nᵀ = 0`, the line `−r_n + λΣz_n + λΣη_n + ζ_n = 0`, the
/// simplex coderivative conditions and the lower optimality condition.
pub fn build_portfolio_system(
    theta: &LinearPredictor,
    scenarios: Vec<ScenarioCertificate>,
    inst: &PortfolioInstance,
    opts: &VerifyOptions,
) -> Result<ResidualReport> {
    if theta.dim_x() != inst.dim_x() || theta.dim_z() != inst.dim_z() {
        return Err(Error::Dimension(format!(
            "predictor is {}x{}, instance needs {}x{}",
            theta.dim_x(),
            theta.dim_z(),
            inst.dim_x(),
            inst.dim_z()
        )));
    }
    let problem = portfolio_problem(inst)?;
    let cert = Certificate::new(ThetaValue::Matrix(theta.theta.clone()), scenarios);
    verify_certificate(&problem, &cert, opts)
}

/// Certificate at `θ` with `z_n` optimal for `θᵀx_n`, `η_n = 0`,
/// `ζ_n = r_n − λΣz_n`, and `β_n` from the simplex predicate when it admits
/// the pair.
pub fn realizable_certificate(
    theta: &LinearPredictor,
    inst: &PortfolioInstance,
) -> Result<Certificate> {
    let scenarios = inst
        .samples
        .iter()
        .map(|s| {
            let r_hat = theta.predict(&s.x);
            let sol = solve_simplex_qp(&r_hat, &inst.sigma, inst.lambda)?;
            let mut g = mat_vec(&inst.sigma, &sol.z);
            g.iter_mut()
                .zip(&r_hat)
                .for_each(|(v, r)| *v = inst.lambda * *v - r);
            let mut zeta = mat_vec(&inst.sigma, &sol.z);
            zeta.iter_mut()
                .zip(&s.r)
                .for_each(|(v, r)| *v = r - inst.lambda * *v);
            let eta = vec![0.0; inst.dim_z()];
            let pair = NormalPair::new(zeta.clone(), eta.clone())?;
            let beta = coderivative_member_simplex(&sol.z, &g, &pair, DEFAULT_EPS)?
                .witness()
                .and_then(|w| w.beta);
            let mut sc = ScenarioCertificate::new(sol.z.clone(), eta);
            sc.zeta = Some(zeta);
            sc.lambda = Some(sol.row_multipliers());
            sc.beta = beta;
            Ok(sc)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Certificate::new(
        ThetaValue::Matrix(theta.theta.clone()),
        scenarios,
    ))
}

/// `η_nᵀζ_n − η_nᵀ(r_n − λΣ(z_n + η_n))`, which vanishes whenever the
/// stationarity line holds.
pub fn consistency_defect(
    inst: &PortfolioInstance,
    r: &[f64],
    sc: &ScenarioCertificate,
) -> Result<f64> {
    let zeta = sc
        .zeta
        .as_ref()
        .ok_or_else(|| Error::Invalid("certificate lacks zeta".into()))?;
    let mut zn = sc.z.clone();
    axpy(&mut zn, 1.0, &sc.eta);
    let mut rhs = mat_vec(&inst.sigma, &zn);
    rhs.iter_mut().for_each(|v| *v *= inst.lambda);
    Ok(dot(&sc.eta, zeta) - dot(&sc.eta, &sub(r, &rhs)))
}
