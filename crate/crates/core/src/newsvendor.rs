//! Contextual newsvendor with a Nadaraya–Watson Gaussian-kernel estimate of
//! the conditional demand distribution.

use std::f64::consts::{PI, SQRT_2};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{check_len, Error, Result};
use crate::feasible::FeasibleSet;
use crate::linalg::Rows;
use crate::stationarity::{
    verify_certificate, Certificate, LowerModel, Problem, ResidualReport, Scenario,
    ScenarioCertificate, Subgradient, ThetaSet, ThetaValue, UpperModel, ValueSample, VerifyOptions,
};

/// Default bandwidth bounds `Θ`.
pub const THETA_BOUNDS: [f64; 2] = [1e-3, 1e3];

/// Standard normal density.
pub fn std_normal_pdf(u: f64) -> f64 {
    (-0.5 * u * u).exp() / (2.0 * PI).sqrt()
}

/// Standard normal distribution function, accurate in both tails.
pub fn std_normal_cdf(u: f64) -> f64 {
    0.5 * erfc(-u / SQRT_2)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Center {
    pub x: Vec<f64>,
    pub y: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelModel {
    pub centers: Vec<Center>,
    /// Bandwidth.
    pub theta: f64,
}

impl KernelModel {
    pub fn new(centers: Vec<Center>, theta: f64) -> Result<Self> {
        validate_centers(&centers)?;
        validate_bandwidth(theta)?;
        Ok(Self { centers, theta })
    }

    pub fn dim_x(&self) -> usize {
        self.centers[0].x.len()
    }

    pub fn with_theta(&self, theta: f64) -> Result<Self> {
        validate_bandwidth(theta)?;
        Ok(Self {
            centers: self.centers.clone(),
            theta,
        })
    }
}

fn validate_bandwidth(theta: f64) -> Result<()> {
    if !(theta > 0.0) || !theta.is_finite() {
        return Err(Error::Invalid(format!(
            "bandwidth {theta} must be positive and finite"
        )));
    }
    Ok(())
}

fn validate_centers(centers: &[Center]) -> Result<()> {
    let first = centers
        .first()
        .ok_or_else(|| Error::Invalid("kernel model needs at least one center".into()))?;
    for (m, c) in centers.iter().enumerate() {
        check_len(&format!("center {m} x"), &c.x, first.x.len())?;
        if !c.y.is_finite() || c.x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!("center {m} has a non-finite entry")));
        }
    }
    Ok(())
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum()
}

/// Nadaraya–Watson weights `K_θ(x − x_m) / Σ_l K_θ(x − x_l)` with a Gaussian
/// kernel, computed in log space so that far queries degrade to the nearest
/// centers instead of `0/0`.
pub fn nw_weights(model: &KernelModel, x: &[f64]) -> Result<Vec<f64>> {
    check_len("x", x, model.dim_x())?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Invalid("query x is not finite".into()));
    }
    // The normalization constant is shared by every center and cancels.
    let t2 = 2.0 * model.theta * model.theta;
    let logs: Vec<f64> = model
        .centers
        .iter()
        .map(|c| -sq_dist(x, &c.x) / t2)
        .collect();
    let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// `ψ_m = ∂_θ log K_θ(x − x_m) = −d_x/θ + ‖x − x_m‖²/θ³`.
fn psi(model: &KernelModel, x: &[f64]) -> Vec<f64> {
    let t = model.theta;
    let d = model.dim_x() as f64;
    model
        .centers
        .iter()
        .map(|c| -d / t + sq_dist(x, &c.x) / (t * t * t))
        .collect()
}

/// `∂_θ w_m = w_m (ψ_m − Σ_l w_l ψ_l)`.
fn weight_derivatives(model: &KernelModel, x: &[f64], w: &[f64]) -> Vec<f64> {
    let p = psi(model, x);
    let mean: f64 = w.iter().zip(&p).map(|(a, b)| a * b).sum();
    w.iter().zip(&p).map(|(wm, pm)| wm * (pm - mean)).collect()
}

/// `F_θ(y; x) = Σ_m w_m Φ((y − y_m)/θ)`.
pub fn conditional_cdf(model: &KernelModel, y: f64, x: &[f64]) -> Result<f64> {
    let w = nw_weights(model, x)?;
    Ok(mixture(model, &w, std_normal_cdf, y).clamp(0.0, 1.0))
}

/// `p_θ(y | x) = Σ_m w_m φ((y − y_m)/θ)/θ`.
pub fn conditional_pdf(model: &KernelModel, y: f64, x: &[f64]) -> Result<f64> {
    let w = nw_weights(model, x)?;
    Ok(mixture(model, &w, std_normal_pdf, y) / model.theta)
}

fn mixture(model: &KernelModel, w: &[f64], f: impl Fn(f64) -> f64, y: f64) -> f64 {
    model
        .centers
        .iter()
        .zip(w)
        .map(|(c, wm)| wm * f((y - c.y) / model.theta))
        .sum()
}

/// `∂_θ F_θ(y; x)`: the weight derivative term plus the bandwidth term
/// `−Σ_m w_m u_m φ(u_m)/θ` with `u_m = (y − y_m)/θ`.
pub fn grad_theta_cdf(model: &KernelModel, y: f64, x: &[f64]) -> Result<f64> {
    let w = nw_weights(model, x)?;
    let dw = weight_derivatives(model, x, &w);
    let t = model.theta;
    Ok(model
        .centers
        .iter()
        .zip(w.iter().zip(&dw))
        .map(|(c, (wm, dwm))| {
            let u = (y - c.y) / t;
            dwm * std_normal_cdf(u) - wm * u * std_normal_pdf(u) / t
        })
        .sum())
}

/// The `b/(h+b)` quantile of `F_θ(·; x)` restricted to `z ≥ 0`.
pub fn solve_newsvendor(model: &KernelModel, x: &[f64], h: f64, b: f64) -> Result<f64> {
    check_costs(h, b)?;
    let w = nw_weights(model, x)?;
    let t = model.theta;
    let q = b / (h + b);
    let resid = |z: f64| (h + b) * mixture(model, &w, std_normal_cdf, z) - b;
    if resid(0.0) >= 0.0 {
        return Ok(0.0);
    }
    let ymin = model
        .centers
        .iter()
        .map(|c| c.y)
        .fold(f64::INFINITY, f64::min);
    let ymax = model
        .centers
        .iter()
        .map(|c| c.y)
        .fold(f64::NEG_INFINITY, f64::max);
    let width = (ymax - ymin) + 40.0 * t;
    let mut lo = (ymin - 20.0 * t).max(0.0);
    let mut hi = ymax + 20.0 * t;
    let mut expansions = 0;
    while resid(lo) > 0.0 {
        lo = (lo - width).max(0.0);
        expansions += 1;
        if expansions > 200 {
            return Err(Error::Numeric(
                "could not bracket the quantile from below".into(),
            ));
        }
    }
    while resid(hi) < 0.0 {
        hi += width;
        expansions += 1;
        if expansions > 200 {
            return Err(Error::Numeric(format!(
                "could not bracket the {q} quantile"
            )));
        }
    }
    while hi - lo > 1e-10 * (1.0 + hi.abs()) {
        let mid = 0.5 * (lo + hi);
        if resid(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut z = 0.5 * (lo + hi);
    let mut best = (resid(z).abs(), z);
    for _ in 0..5 {
        let slope = (h + b) * mixture(model, &w, std_normal_pdf, z) / t;
        if slope <= 0.0 {
            break;
        }
        let next = z - resid(z) / slope;
        if !(next >= lo - 1e-9 && next <= hi + 1e-9) {
            break;
        }
        z = next;
        let r = resid(z).abs();
        if r < best.0 {
            best = (r, z);
        }
        if r == 0.0 {
            break;
        }
    }
    Ok(best.1.max(0.0))
}

fn check_costs(h: f64, b: f64) -> Result<()> {
    if !(h > 0.0 && b > 0.0) || !h.is_finite() || !b.is_finite() {
        return Err(Error::Invalid(format!(
            "costs h = {h}, b = {b} must be positive"
        )));
    }
    Ok(())
}

/// `h(z − y)_+ + b(y − z)_+`.
pub fn newsvendor_cost(z: f64, y: f64, h: f64, b: f64) -> f64 {
    h * (z - y).max(0.0) + b * (y - z).max(0.0)
}

/// SPO loss under point demand: the full-information cost is zero at `z = y`.
pub fn spo_loss_newsvendor(model: &KernelModel, x: &[f64], y: f64, h: f64, b: f64) -> Result<f64> {
    let z = solve_newsvendor(model, x, h, b)?;
    Ok(newsvendor_cost(z, y, h, b))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemandSample {
    pub x: Vec<f64>,
    pub y: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
}

fn default_bounds() -> [f64; 2] {
    THETA_BOUNDS
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NewsvendorInstance {
    /// Unit holding cost.
    pub h: f64,
    /// Unit backorder cost.
    pub b: f64,
    pub centers: Vec<Center>,
    pub samples: Vec<DemandSample>,
    #[serde(default = "default_bounds")]
    pub theta_bounds: [f64; 2],
}

impl NewsvendorInstance {
    pub fn validate(&self) -> Result<()> {
        check_costs(self.h, self.b)?;
        validate_centers(&self.centers)?;
        let dx = self.centers[0].x.len();
        for (n, s) in self.samples.iter().enumerate() {
            check_len(&format!("sample {n} x"), &s.x, dx)?;
            if !s.y.is_finite() || s.x.iter().any(|v| !v.is_finite()) {
                return Err(Error::Invalid(format!("sample {n} has a non-finite entry")));
            }
        }
        let [lo, hi] = self.theta_bounds;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::Invalid(format!(
                "bandwidth bounds [{lo}, {hi}] must satisfy 0 < lo ≤ hi"
            )));
        }
        self.weights().map(|_| ())
    }

    pub fn model(&self, theta: f64) -> Result<KernelModel> {
        KernelModel::new(self.centers.clone(), theta)
    }

    /// `1/N` when no sample carries a weight, otherwise normalized weights.
    pub fn weights(&self) -> Result<Vec<f64>> {
        let n = self.samples.len();
        if n == 0 {
            return Err(Error::Invalid("newsvendor instance has no samples".into()));
        }
        let given: Vec<f64> = self.samples.iter().filter_map(|s| s.weight).collect();
        if given.is_empty() {
            return Ok(vec![1.0 / n as f64; n]);
        }
        if given.len() != n || given.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::Invalid(
                "sample weights must be given for all samples and be nonnegative".into(),
            ));
        }
        let total: f64 = given.iter().sum();
        if total <= 0.0 {
            return Err(Error::Invalid("sample weights sum to zero".into()));
        }
        Ok(given.iter().map(|w| w / total).collect())
    }
}

/// Lower level: expected newsvendor cost under the kernel mixture,
/// `Σ_m w_m θ[(h+b)(u_mΦ(u_m) + φ(u_m)) − b u_m]` with `u_m = (z − y_m)/θ`.
pub struct NewsvendorLower {
    centers: Vec<Center>,
    h: f64,
    b: f64,
    set: FeasibleSet,
}

impl NewsvendorLower {
    pub fn new(inst: &NewsvendorInstance) -> Self {
        Self {
            centers: inst.centers.clone(),
            h: inst.h,
            b: inst.b,
            set: FeasibleSet::Orthant(1),
        }
    }

    /// Bandwidths outside `(0, ∞)` are clamped to the smallest positive
    /// value so trait methods stay total; verification rejects them earlier.
    fn model(&self, theta: &[f64]) -> KernelModel {
        KernelModel {
            centers: self.centers.clone(),
            theta: theta[0].max(f64::MIN_POSITIVE),
        }
    }

    fn expected_cost_terms(&self, z: f64, t: f64, y: f64) -> (f64, f64) {
        let u = (z - y) / t;
        let hb = self.h + self.b;
        let value = t * (hb * (u * std_normal_cdf(u) + std_normal_pdf(u)) - self.b * u);
        // d/dθ of the term above; the u-dependence cancels to (h+b)φ(u).
        (value, hb * std_normal_pdf(u))
    }
}

impl LowerModel for NewsvendorLower {
    fn dim_z(&self) -> usize {
        1
    }

    fn dim_theta(&self) -> usize {
        1
    }

    fn feasible_set(&self) -> &FeasibleSet {
        &self.set
    }

    fn cost(&self, z: &[f64], theta: &[f64], x: &[f64]) -> f64 {
        let m = self.model(theta);
        let w = nw_weights(&m, x).unwrap_or_default();
        self.centers
            .iter()
            .zip(&w)
            .map(|(c, wm)| wm * self.expected_cost_terms(z[0], m.theta, c.y).0)
            .sum()
    }

    fn grad_z(&self, z: &[f64], theta: &[f64], x: &[f64]) -> Vec<f64> {
        let m = self.model(theta);
        let f = conditional_cdf(&m, z[0], x).unwrap_or(f64::NAN);
        vec![(self.h + self.b) * f - self.b]
    }

    fn hess_zz(&self, z: &[f64], theta: &[f64], x: &[f64]) -> Rows {
        let m = self.model(theta);
        let p = conditional_pdf(&m, z[0], x).unwrap_or(f64::NAN);
        vec![vec![(self.h + self.b) * p]]
    }

    fn hess_ztheta_t(&self, z: &[f64], theta: &[f64], x: &[f64], eta: &[f64]) -> Vec<f64> {
        let m = self.model(theta);
        let g = grad_theta_cdf(&m, z[0], x).unwrap_or(f64::NAN);
        vec![(self.h + self.b) * g * eta[0]]
    }

    fn grad_theta(&self, z: &[f64], theta: &[f64], x: &[f64]) -> Vec<f64> {
        let m = self.model(theta);
        let Ok(w) = nw_weights(&m, x) else {
            return vec![f64::NAN];
        };
        let dw = weight_derivatives(&m, x, &w);
        let total = self
            .centers
            .iter()
            .zip(w.iter().zip(&dw))
            .map(|(c, (wm, dwm))| {
                let (value, d_theta) = self.expected_cost_terms(z[0], m.theta, c.y);
                dwm * value + wm * d_theta
            })
            .sum();
        vec![total]
    }

    fn minimize(&self, theta: &[f64], x: &[f64]) -> Result<ValueSample> {
        let m = KernelModel::new(self.centers.clone(), theta[0])?;
        let z = solve_newsvendor(&m, x, self.h, self.b)?;
        Ok(ValueSample {
            value: self.cost(&[z], theta, x),
            argmin_points: vec![vec![z]],
            exact: true,
        })
    }
}

/// Upper level: realized newsvendor cost, with subgradient `[−b, h]` at the
/// kink `z = y`.
pub struct NewsvendorUpper {
    h: f64,
    b: f64,
    theta_set: ThetaSet,
}

impl NewsvendorUpper {
    pub fn new(inst: &NewsvendorInstance) -> Self {
        Self {
            h: inst.h,
            b: inst.b,
            theta_set: ThetaSet::Box {
                lo: vec![inst.theta_bounds[0]],
                hi: vec![inst.theta_bounds[1]],
            },
        }
    }
}

impl UpperModel for NewsvendorUpper {
    fn loss(&self, z: &[f64], _x: &[f64], y: &[f64], _theta: &[f64]) -> f64 {
        newsvendor_cost(z[0], y[0], self.h, self.b)
    }

    fn grad_z(&self, z: &[f64], _x: &[f64], y: &[f64], _theta: &[f64]) -> Subgradient {
        let (z, y) = (z[0], y[0]);
        if z > y {
            Subgradient::smooth(vec![self.h])
        } else if z < y {
            Subgradient::smooth(vec![-self.b])
        } else {
            Subgradient {
                lo: vec![-self.b],
                hi: vec![self.h],
            }
        }
    }

    fn grad_theta(&self, _z: &[f64], _x: &[f64], _y: &[f64], _theta: &[f64]) -> Vec<f64> {
        vec![0.0]
    }

    fn theta_set(&self) -> &ThetaSet {
        &self.theta_set
    }
}

pub fn newsvendor_problem(inst: &NewsvendorInstance) -> Result<Problem> {
    inst.validate()?;
    let scenarios = inst
        .samples
        .iter()
        .zip(inst.weights()?)
        .map(|(s, weight)| Scenario {
            x: s.x.clone(),
            y: vec![s.y],
            weight,
        })
        .collect();
    Problem::new(
        Box::new(NewsvendorLower::new(inst)),
        Box::new(NewsvendorUpper::new(inst)),
        scenarios,
    )
}

/// Checks the newsvendor stationarity system at bandwidth `θ`.
pub fn verify_newsvendor_system(
    theta: f64,
    scenarios: Vec<ScenarioCertificate>,
    inst: &NewsvendorInstance,
    opts: &VerifyOptions,
) -> Result<ResidualReport> {
    validate_bandwidth(theta)?;
    let problem = newsvendor_problem(inst)?;
    verify_certificate(
        &problem,
        &Certificate::new(ThetaValue::Scalar(theta), scenarios),
        opts,
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub theta: f64,
    pub objective: f64,
    /// Mean leave-one-out SPO loss per grid point.
    pub scores: Vec<f64>,
}

/// Bandwidth minimizing the mean leave-one-out SPO loss over the centers;
/// ties go to the earliest grid point. A single center is scored in-sample.
pub fn bandwidth_grid_search(inst: &NewsvendorInstance, grid: &[f64]) -> Result<GridSearchResult> {
    if grid.is_empty() {
        return Err(Error::Invalid("bandwidth grid is empty".into()));
    }
    check_costs(inst.h, inst.b)?;
    validate_centers(&inst.centers)?;
    for t in grid {
        validate_bandwidth(*t)?;
    }
    let scores = grid
        .par_iter()
        .map(|&t| loo_score(inst, t))
        .collect::<Result<Vec<_>>>()?;
    // Scores within roundoff of each other count as ties.
    let mut best = 0;
    for (k, s) in scores.iter().enumerate() {
        if *s < scores[best] - 1e-12 * scores[best].abs().max(1.0) {
            best = k;
        }
    }
    Ok(GridSearchResult {
        theta: grid[best],
        objective: scores[best],
        scores,
    })
}

fn loo_score(inst: &NewsvendorInstance, theta: f64) -> Result<f64> {
    let n = inst.centers.len();
    if n == 1 {
        let c = &inst.centers[0];
        return spo_loss_newsvendor(&inst.model(theta)?, &c.x, c.y, inst.h, inst.b);
    }
    let mut total = 0.0;
    for i in 0..n {
        let rest: Vec<Center> = inst
            .centers
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, c)| c.clone())
            .collect();
        let model = KernelModel::new(rest, theta)?;
        let c = &inst.centers[i];
        total += spo_loss_newsvendor(&model, &c.x, c.y, inst.h, inst.b)?;
    }
    Ok(total / n as f64)
}
