//! First-order stationarity systems for two-stage learning-and-optimization
//! problems with finitely many scenarios.
//!
//! A [`LowerModel`] supplies the decision cost `𝔠(z, θ, x)` and its
//! derivatives over a polyhedral feasible set; an [`UpperModel`] supplies the
//! downstream loss `L(z, x, y, θ)`. Parameters `θ` are flat vectors (matrices
//! are flattened row-major).

mod fd;
mod value;
mod verify;

pub use fd::{fd_check_lower, fd_check_upper, relative_error, FdReport};
pub use value::{
    caratheodory_reduce, directional_derivative_value, multistart_minimize, value_function,
    value_subdifferential, BilinearCost, MultistartOptions, ValueSample, ValueSubdifferential,
};
pub use verify::{
    lower_residual, m_stationarity_check, nnamcq_check, psi_set, recover_multiplier,
    upper_residual, verify_certificate, verify_certificate_penalized, MStationarity, VerifyOptions,
};

use serde::{Deserialize, Serialize};

use crate::cone::{distance_to_normal_cone, Polyhedron};
use crate::error::{check_len, Error, Result};
use crate::feasible::FeasibleSet;
use crate::graph_normal::Membership;
use crate::linalg::{norm, Rows};

pub const SCHEMA: &str = "mstat/1";

fn schema_version() -> String {
    SCHEMA.to_string()
}

/// One support point of the empirical distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub x: Vec<f64>,
    /// Realized outcome (returns vector, demand, ...).
    pub y: Vec<f64>,
    pub weight: f64,
}

/// Rescales weights to sum to one. Fails on negative or all-zero weights.
pub fn normalize_weights(scenarios: &mut [Scenario]) -> Result<()> {
    if let Some(s) = scenarios
        .iter()
        .find(|s| !(s.weight >= 0.0) || !s.weight.is_finite())
    {
        return Err(Error::Invalid(format!(
            "scenario weight {} is not a nonnegative number",
            s.weight
        )));
    }
    let total: f64 = scenarios.iter().map(|s| s.weight).sum();
    if total <= 0.0 {
        return Err(Error::Invalid("scenario weights sum to zero".into()));
    }
    for s in scenarios.iter_mut() {
        s.weight /= total;
    }
    Ok(())
}

pub trait LowerModel: Send + Sync {
    fn dim_z(&self) -> usize;
    fn dim_theta(&self) -> usize;
    fn feasible_set(&self) -> &FeasibleSet;
    fn cost(&self, z: &[f64], theta: &[f64], x: &[f64]) -> f64;
    fn grad_z(&self, z: &[f64], theta: &[f64], x: &[f64]) -> Vec<f64>;
    fn hess_zz(&self, z: &[f64], theta: &[f64], x: &[f64]) -> Rows;
    /// `(∇²_{zθ}𝔠)ᵀ η`, a vector in parameter space.
    fn hess_ztheta_t(&self, z: &[f64], theta: &[f64], x: &[f64], eta: &[f64]) -> Vec<f64>;
    fn grad_theta(&self, z: &[f64], theta: &[f64], x: &[f64]) -> Vec<f64>;

    /// Optimal value and a finite sample of minimizers. The default runs a
    /// deterministic multistart projected gradient.
    fn minimize(&self, theta: &[f64], x: &[f64]) -> Result<ValueSample> {
        multistart_minimize(self, theta, x, &MultistartOptions::default())
    }
}

/// A box `[lo, hi]` of (sub)gradients; smooth when `lo == hi`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Subgradient {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Subgradient {
    pub fn smooth(v: Vec<f64>) -> Self {
        Self {
            lo: v.clone(),
            hi: v,
        }
    }

    pub fn is_smooth(&self) -> bool {
        self.lo == self.hi
    }

    /// Closest element of the box to `w`.
    pub fn nearest(&self, w: &[f64]) -> Vec<f64> {
        w.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(v, (l, h))| v.clamp(*l, *h))
            .collect()
    }

    pub fn distance(&self, w: &[f64]) -> f64 {
        let n = self.nearest(w);
        norm(&crate::linalg::sub(w, &n))
    }
}

pub trait UpperModel: Send + Sync {
    fn loss(&self, z: &[f64], x: &[f64], y: &[f64], theta: &[f64]) -> f64;
    fn grad_z(&self, z: &[f64], x: &[f64], y: &[f64], theta: &[f64]) -> Subgradient;
    fn grad_theta(&self, z: &[f64], x: &[f64], y: &[f64], theta: &[f64]) -> Vec<f64>;
    fn theta_set(&self) -> &ThetaSet;
}

/// The parameter set `Θ`.
#[derive(Clone, Debug, PartialEq)]
pub enum ThetaSet {
    Free,
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Polyhedron(Polyhedron),
}

impl ThetaSet {
    /// `dist(w, N_Θ(θ))`.
    pub fn distance_to_normal_cone(&self, theta: &[f64], w: &[f64], eps: f64) -> Result<f64> {
        match self {
            ThetaSet::Free => Ok(norm(w)),
            ThetaSet::Box { lo, hi } => {
                check_len("theta", theta, lo.len())?;
                check_len("vector", w, lo.len())?;
                let mut sq = 0.0;
                for i in 0..w.len() {
                    if theta[i] < lo[i] - eps || theta[i] > hi[i] + eps {
                        return Err(Error::Infeasible {
                            row: i,
                            violation: (lo[i] - theta[i]).max(theta[i] - hi[i]),
                        });
                    }
                    let at_lo = (theta[i] - lo[i]).abs() <= eps;
                    let at_hi = (theta[i] - hi[i]).abs() <= eps;
                    let r = match (at_lo, at_hi) {
                        (true, true) => 0.0,
                        (true, false) => w[i].max(0.0),
                        (false, true) => (-w[i]).max(0.0),
                        (false, false) => w[i].abs(),
                    };
                    sq += r * r;
                }
                Ok(sq.sqrt())
            }
            ThetaSet::Polyhedron(p) => distance_to_normal_cone(p, theta, w, eps),
        }
    }
}

/// A two-stage problem over finitely many scenarios with weights summing to one.
pub struct Problem {
    pub lower: Box<dyn LowerModel>,
    pub upper: Box<dyn UpperModel>,
    pub scenarios: Vec<Scenario>,
}

impl Problem {
    pub fn new(
        lower: Box<dyn LowerModel>,
        upper: Box<dyn UpperModel>,
        scenarios: Vec<Scenario>,
    ) -> Result<Self> {
        if scenarios.is_empty() {
            return Err(Error::Invalid("problem has no scenarios".into()));
        }
        if scenarios.iter().any(|s| !(s.weight >= 0.0)) {
            return Err(Error::Invalid(
                "scenario weights must be nonnegative".into(),
            ));
        }
        let total: f64 = scenarios.iter().map(|s| s.weight).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Invalid(format!(
                "scenario weights sum to {total}, not 1"
            )));
        }
        Ok(Self {
            lower,
            upper,
            scenarios,
        })
    }
}

/// `θ` as written in certificate files: a scalar, a vector or a matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ThetaValue {
    Scalar(f64),
    Vector(Vec<f64>),
    Matrix(Rows),
}

impl ThetaValue {
    /// Row-major flattening.
    pub fn flatten(&self) -> Vec<f64> {
        match self {
            ThetaValue::Scalar(v) => vec![*v],
            ThetaValue::Vector(v) => v.clone(),
            ThetaValue::Matrix(m) => m.iter().flatten().copied().collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioCertificate {
    pub z: Vec<f64>,
    pub eta: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zeta: Option<Vec<f64>>,
    /// Multipliers of the rows of the lower feasible set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub j1: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub j2: Option<Vec<usize>>,
    /// Penalty weight of the value-function constraint (penalized mode only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub argmin_points: Option<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value_weights: Option<Vec<f64>>,
}

impl ScenarioCertificate {
    pub fn new(z: Vec<f64>, eta: Vec<f64>) -> Self {
        Self {
            z,
            eta,
            zeta: None,
            lambda: None,
            j1: None,
            j2: None,
            mu: None,
            beta: None,
            argmin_points: None,
            value_weights: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    #[serde(default = "schema_version")]
    pub schema: String,
    pub theta: ThetaValue,
    pub scenarios: Vec<ScenarioCertificate>,
}

impl Certificate {
    pub fn new(theta: ThetaValue, scenarios: Vec<ScenarioCertificate>) -> Self {
        Self {
            schema: schema_version(),
            theta,
            scenarios,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Convex,
    Penalized,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub index: usize,
    pub graph_point: bool,
    /// `dist(−∇_z𝔠, N_Z(z))`, or the largest constraint violation when `z`
    /// is infeasible.
    pub lower_residual: f64,
    /// Distance from `−ζ − H ᵀη − μ∇_z𝔠` to `∂_z L`.
    pub stationarity_residual: f64,
    pub membership: bool,
    pub zeta: Vec<f64>,
    pub complementarity_gap: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value_gap: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index_sets_consistent: Option<bool>,
    pub witness: Membership,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub schema: String,
    pub tol: f64,
    pub value_tol: f64,
    pub upper_residual: f64,
    pub scenarios: Vec<ScenarioReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub caveats: Vec<String>,
    pub pass: bool,
}

impl ResidualReport {
    pub fn failed_scenarios(&self) -> Vec<usize> {
        self.scenarios
            .iter()
            .filter(|s| !s.pass)
            .map(|s| s.index)
            .collect()
    }

    /// Human-readable summary with the same verdicts as the JSON form.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "verdict: {}\nupper residual: {:.3e}\n",
            if self.pass { "pass" } else { "fail" },
            self.upper_residual
        );
        for s in &self.scenarios {
            out.push_str(&format!(
                "scenario {}: {} (graph point {}, lower {:.3e}, stationarity {:.3e}, member {}, complementarity {:.3e}{})\n",
                s.index,
                if s.pass { "pass" } else { "fail" },
                s.graph_point,
                s.lower_residual,
                s.stationarity_residual,
                s.membership,
                s.complementarity_gap,
                s.value_gap.map(|v| format!(", value gap {v:.3e}")).unwrap_or_default()
            ));
        }
        for c in &self.caveats {
            out.push_str(&format!("caveat: {c}\n"));
        }
        out
    }
}
