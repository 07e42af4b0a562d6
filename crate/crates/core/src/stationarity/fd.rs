//! Central finite-difference self-checks of model derivatives.

use serde::{Deserialize, Serialize};

use super::{LowerModel, UpperModel};
use crate::linalg::Rows;

/// Denominator floor so that `0` against `0` does not divide by zero.
const REL_FLOOR: f64 = 1e-8;

/// `|a − b| / max(|a|, |b|, 1e-8)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_FLOOR)
}

/// Model self-checks compare entries below this magnitude absolutely, since
/// central differences of exact zeros carry roundoff of order `ε/h`.
const MODEL_FLOOR: f64 = 1e-6;

fn max_rel(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(MODEL_FLOOR))
        .fold(0.0, f64::max)
}

fn central<F: Fn(&[f64]) -> f64>(f: F, at: &[f64], h: f64) -> Vec<f64> {
    (0..at.len())
        .map(|i| {
            let mut p = at.to_vec();
            let mut m = at.to_vec();
            p[i] += h;
            m[i] -= h;
            (f(&p) - f(&m)) / (2.0 * h)
        })
        .collect()
}

/// Largest relative discrepancy between analytic and central-difference
/// derivatives, per derivative.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FdReport {
    pub grad_z: f64,
    pub grad_theta: f64,
    pub hess_zz: f64,
    pub hess_ztheta: f64,
}

impl FdReport {
    pub fn max(&self) -> f64 {
        self.grad_z
            .max(self.grad_theta)
            .max(self.hess_zz)
            .max(self.hess_ztheta)
    }
}

pub fn fd_check_lower(
    model: &dyn LowerModel,
    z: &[f64],
    theta: &[f64],
    x: &[f64],
    h: f64,
) -> FdReport {
    let dz = model.dim_z();
    let gz = model.grad_z(z, theta, x);
    let fd_gz = central(|v| model.cost(v, theta, x), z, h);
    let gt = model.grad_theta(z, theta, x);
    let fd_gt = central(|t| model.cost(z, t, x), theta, h);
    let hess: Rows = model.hess_zz(z, theta, x);
    let mut hess_err: f64 = 0.0;
    for j in 0..dz {
        let col = central(|v| model.grad_z(v, theta, x)[j], z, h);
        hess_err = hess_err.max(max_rel(&hess[j], &col));
    }
    // Probe (∇²_{zθ}𝔠)ᵀ e_j against d/dθ of the j-th gradient entry.
    let mut mixed_err: f64 = 0.0;
    for j in 0..dz {
        let mut e = vec![0.0; dz];
        e[j] = 1.0;
        let analytic = model.hess_ztheta_t(z, theta, x, &e);
        let fd = central(|t| model.grad_z(z, t, x)[j], theta, h);
        mixed_err = mixed_err.max(max_rel(&analytic, &fd));
    }
    FdReport {
        grad_z: max_rel(&gz, &fd_gz),
        grad_theta: max_rel(&gt, &fd_gt),
        hess_zz: hess_err,
        hess_ztheta: mixed_err,
    }
}

/// Checks the upper gradients at a point where the loss is differentiable.
pub fn fd_check_upper(
    model: &dyn UpperModel,
    z: &[f64],
    x: &[f64],
    y: &[f64],
    theta: &[f64],
    h: f64,
) -> FdReport {
    let g = model.grad_z(z, x, y, theta);
    let fd_gz = central(|v| model.loss(v, x, y, theta), z, h);
    let gt = model.grad_theta(z, x, y, theta);
    let fd_gt = central(|t| model.loss(z, x, y, t), theta, h);
    FdReport {
        grad_z: max_rel(&g.lo, &fd_gz).max(max_rel(&g.hi, &fd_gz)),
        grad_theta: max_rel(&gt, &fd_gt),
        ..FdReport::default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stationarity::BilinearCost;

    #[test]
    fn bilinear_derivatives_match() {
        let m = BilinearCost::new(2);
        let r = fd_check_lower(&m, &[0.3, -0.2], &[1.0, 2.0], &[], 1e-5);
        assert!(r.max() < 1e-8, "{r:?}");
    }

    #[test]
    fn relative_error_handles_zero() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(1.0, 1.1) - 0.1 / 1.1).abs() < 1e-15);
    }
}
