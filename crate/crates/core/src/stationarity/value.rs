//! The lower-level value function `𝔠*(θ, x) = min_{z ∈ Z} 𝔠(z, θ, x)` and
//! its Clarke subdifferential `co{∇_θ𝔠(z, θ, x) : z ∈ argmin}`.

use serde::{Deserialize, Serialize};

use super::LowerModel;
use crate::cone::Polyhedron;
use crate::error::{check_len, Error, Result};
use crate::feasible::FeasibleSet;
use crate::linalg::{axpy, dot, norm, norm_inf, nullspace, sub, Rows};
use crate::qp::QuadraticProgram;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueSample {
    pub value: f64,
    pub argmin_points: Rows,
    /// False when minimizers come from a sampling heuristic.
    pub exact: bool,
}

#[derive(Clone, Copy, Debug)]
pub struct MultistartOptions {
    pub starts: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Points within this (relative) value of the best are kept as minimizers.
    pub value_tol: f64,
}

impl Default for MultistartOptions {
    fn default() -> Self {
        Self {
            starts: 16,
            seed: 0,
            max_iter: 2000,
            value_tol: 1e-9,
        }
    }
}

/// Projected gradient with Armijo backtracking from deterministic starts.
pub fn multistart_minimize<M: LowerModel + ?Sized>(
    model: &M,
    theta: &[f64],
    x: &[f64],
    opts: &MultistartOptions,
) -> Result<ValueSample> {
    let set = model.feasible_set();
    let mut finals: Vec<(f64, Vec<f64>)> = Vec::new();
    for start in set.starts(opts.starts, opts.seed)? {
        let z = projected_gradient(model, set, theta, x, start, opts.max_iter)?;
        finals.push((model.cost(&z, theta, x), z));
    }
    let best = finals.iter().map(|(v, _)| *v).fold(f64::INFINITY, f64::min);
    if !best.is_finite() {
        return Err(Error::Numeric("lower-level objective is not finite".into()));
    }
    let mut argmin: Rows = Vec::new();
    for (v, z) in finals {
        if v <= best + opts.value_tol * (1.0 + best.abs())
            && !argmin.iter().any(|p| norm_inf(&sub(p, &z)) <= 1e-7)
        {
            argmin.push(z);
        }
    }
    Ok(ValueSample {
        value: best,
        argmin_points: argmin,
        exact: false,
    })
}

fn projected_gradient<M: LowerModel + ?Sized>(
    model: &M,
    set: &FeasibleSet,
    theta: &[f64],
    x: &[f64],
    mut z: Vec<f64>,
    max_iter: usize,
) -> Result<Vec<f64>> {
    let mut step = 1.0;
    let mut f = model.cost(&z, theta, x);
    for _ in 0..max_iter {
        let g = model.grad_z(&z, theta, x);
        let mut accepted = None;
        let mut t = step;
        for _ in 0..60 {
            let mut trial = z.clone();
            axpy(&mut trial, -t, &g);
            let trial = set.project(&trial)?;
            let d = sub(&trial, &z);
            let ft = model.cost(&trial, theta, x);
            if ft <= f + 1e-4 * dot(&g, &d) + 1e-15 * (1.0 + f.abs()) {
                accepted = Some((trial, ft, norm(&d)));
                break;
            }
            t *= 0.5;
        }
        match accepted {
            Some((trial, ft, moved)) => {
                z = trial;
                f = ft;
                step = (t * 2.0).min(1e3);
                if moved <= 1e-13 * (1.0 + norm(&z)) {
                    break;
                }
            }
            None => break,
        }
    }
    Ok(z)
}

/// Optimal value and minimizers, delegating to the model's solver.
pub fn value_function(model: &dyn LowerModel, theta: &[f64], x: &[f64]) -> Result<ValueSample> {
    model.minimize(theta, x)
}

/// Generators `∇_θ𝔠(z_i, θ, x)` of the value-function subdifferential.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueSubdifferential {
    pub generators: Rows,
}

impl ValueSubdifferential {
    pub fn is_singleton(&self) -> bool {
        self.generators
            .windows(2)
            .all(|w| norm_inf(&sub(&w[0], &w[1])) <= 1e-12)
    }

    /// `Σ w_i g_i` after reducing the support to at most `dim θ + 1` terms.
    pub fn combine(&self, weights: &[f64]) -> Result<Vec<f64>> {
        let (support, w) = caratheodory_reduce(&self.generators, weights)?;
        let dim = self.generators.first().map_or(0, |g| g.len());
        let mut out = vec![0.0; dim];
        for (i, wi) in support.iter().zip(&w) {
            axpy(&mut out, *wi, &self.generators[*i]);
        }
        Ok(out)
    }

    /// Element of the convex hull closest to `target`, with its weights.
    pub fn nearest(&self, target: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let k = self.generators.len();
        if k == 0 {
            return Err(Error::Invalid("no generators".into()));
        }
        check_len("target", target, self.generators[0].len())?;
        // min ½‖Gw − t‖² over the unit simplex, with a tiny ridge.
        let mut q = vec![vec![0.0; k]; k];
        for i in 0..k {
            for j in 0..k {
                q[i][j] = dot(&self.generators[i], &self.generators[j]);
            }
            q[i][i] += 1e-12;
        }
        let c: Vec<f64> = self.generators.iter().map(|g| -dot(g, target)).collect();
        let a = (0..k)
            .map(|i| (0..k).map(|j| if i == j { -1.0 } else { 0.0 }).collect())
            .collect();
        let qp = QuadraticProgram {
            q,
            c,
            a_eq: vec![vec![1.0; k]],
            b_eq: vec![1.0],
            a,
            b: vec![0.0; k],
        };
        let w0 = vec![1.0 / k as f64; k];
        let w = qp.solve_from(&w0)?.x;
        let point = self.combine(&w)?;
        Ok((w, point))
    }
}

pub fn value_subdifferential(
    model: &dyn LowerModel,
    theta: &[f64],
    x: &[f64],
    argmin_points: &[Vec<f64>],
) -> Result<ValueSubdifferential> {
    if argmin_points.is_empty() {
        return Err(Error::Invalid("empty argmin sample".into()));
    }
    let generators = argmin_points
        .iter()
        .map(|z| {
            check_len("argmin point", z, model.dim_z())?;
            Ok(model.grad_theta(z, theta, x))
        })
        .collect::<Result<Rows>>()?;
    Ok(ValueSubdifferential { generators })
}

/// Reduces a convex combination to at most `dim + 1` active terms without
/// changing the combined point. Returns the surviving indices and weights.
pub fn caratheodory_reduce(
    generators: &[Vec<f64>],
    weights: &[f64],
) -> Result<(Vec<usize>, Vec<f64>)> {
    if generators.len() != weights.len() {
        return Err(Error::Dimension(format!(
            "{} generators but {} weights",
            generators.len(),
            weights.len()
        )));
    }
    if weights.iter().any(|w| *w < -1e-12) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Invalid(
            "weights must be nonnegative and sum to one".into(),
        ));
    }
    let dim = generators.first().map_or(0, |g| g.len());
    let mut support: Vec<usize> = (0..weights.len()).filter(|&i| weights[i] > 1e-15).collect();
    let mut w: Vec<f64> = support.iter().map(|&i| weights[i]).collect();
    while support.len() > dim + 1 {
        // Affine dependence: Σ α_i g_i = 0 and Σ α_i = 0.
        let rows: Rows = (0..=dim)
            .map(|r| {
                support
                    .iter()
                    .map(|&i| if r < dim { generators[i][r] } else { 1.0 })
                    .collect()
            })
            .collect();
        let alpha = nullspace(&rows, support.len(), 1e-12)
            .into_iter()
            .next()
            .ok_or_else(|| Error::Numeric("no affine dependence found".into()))?;
        let alpha = if alpha.iter().any(|a| *a > 1e-14) {
            alpha
        } else {
            alpha.iter().map(|a| -a).collect()
        };
        let mut t = f64::INFINITY;
        for (k, a) in alpha.iter().enumerate() {
            if *a > 1e-14 {
                t = t.min(w[k] / a);
            }
        }
        for (k, a) in alpha.iter().enumerate() {
            w[k] -= t * a;
        }
        let keep: Vec<usize> = (0..support.len()).filter(|&k| w[k] > 1e-15).collect();
        support = keep.iter().map(|&k| support[k]).collect();
        w = keep.iter().map(|&k| w[k]).collect();
    }
    let total: f64 = w.iter().sum();
    Ok((support, w.iter().map(|v| v / total).collect()))
}

/// `min_{z ∈ argmin} ⟨∇_θ𝔠(z, θ, x), d⟩`.
pub fn directional_derivative_value(
    model: &dyn LowerModel,
    theta: &[f64],
    x: &[f64],
    d: &[f64],
) -> Result<f64> {
    check_len("direction", d, model.dim_theta())?;
    let sample = model.minimize(theta, x)?;
    if sample.argmin_points.is_empty() {
        return Err(Error::Invalid("empty argmin sample".into()));
    }
    Ok(sample
        .argmin_points
        .iter()
        .map(|z| dot(&model.grad_theta(z, theta, x), d))
        .fold(f64::INFINITY, f64::min))
}

/// `𝔠(z, θ) = ⟨θ, z⟩` over the box `[−1, 1]^d`. The simplest lower level
/// whose solution set is not a singleton.
#[derive(Clone, Debug)]
pub struct BilinearCost {
    set: FeasibleSet,
}

impl BilinearCost {
    pub fn new(d: usize) -> Self {
        let lo = vec![-1.0; d];
        let hi = vec![1.0; d];
        Self {
            set: FeasibleSet::Polyhedron(Polyhedron::boxed(&lo, &hi).expect("valid box")),
        }
    }
}

impl LowerModel for BilinearCost {
    fn dim_z(&self) -> usize {
        self.set.dim()
    }
    fn dim_theta(&self) -> usize {
        self.set.dim()
    }
    fn feasible_set(&self) -> &FeasibleSet {
        &self.set
    }
    fn cost(&self, z: &[f64], theta: &[f64], _x: &[f64]) -> f64 {
        dot(theta, z)
    }
    fn grad_z(&self, _z: &[f64], theta: &[f64], _x: &[f64]) -> Vec<f64> {
        theta.to_vec()
    }
    fn hess_zz(&self, z: &[f64], _theta: &[f64], _x: &[f64]) -> Rows {
        vec![vec![0.0; z.len()]; z.len()]
    }
    fn hess_ztheta_t(&self, _z: &[f64], _theta: &[f64], _x: &[f64], eta: &[f64]) -> Vec<f64> {
        eta.to_vec()
    }
    fn grad_theta(&self, z: &[f64], _theta: &[f64], _x: &[f64]) -> Vec<f64> {
        z.to_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bilinear_value_at_zero_has_both_endpoints() {
        let m = BilinearCost::new(1);
        let s = value_function(&m, &[0.0], &[]).unwrap();
        assert_eq!(s.value, 0.0);
        assert!(s.argmin_points.iter().any(|p| p[0] == -1.0));
        assert!(s.argmin_points.iter().any(|p| p[0] == 1.0));
        let sub = value_subdifferential(&m, &[0.0], &[], &s.argmin_points).unwrap();
        let lo = sub
            .generators
            .iter()
            .map(|g| g[0])
            .fold(f64::INFINITY, f64::min);
        let hi = sub
            .generators
            .iter()
            .map(|g| g[0])
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!((lo, hi), (-1.0, 1.0));
    }

    #[test]
    fn bilinear_value_at_two() {
        let m = BilinearCost::new(1);
        let s = value_function(&m, &[2.0], &[]).unwrap();
        assert_eq!(s.value, -2.0);
        assert_eq!(s.argmin_points, vec![vec![-1.0]]);
    }

    #[test]
    fn directional_derivatives() {
        let m = BilinearCost::new(1);
        assert_eq!(
            directional_derivative_value(&m, &[0.0], &[], &[1.0]).unwrap(),
            -1.0
        );
        assert_eq!(
            directional_derivative_value(&m, &[0.0], &[], &[-1.0]).unwrap(),
            -1.0
        );
        assert_eq!(
            directional_derivative_value(&m, &[0.0], &[], &[0.0]).unwrap(),
            0.0
        );
    }

    #[test]
    fn caratheodory_keeps_the_point() {
        let g = vec![
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 1.0],
            vec![0.5, 0.5],
        ];
        let w = vec![0.2; 5];
        let (s, r) = caratheodory_reduce(&g, &w).unwrap();
        assert!(s.len() <= 3);
        let mut p = vec![0.0, 0.0];
        for (i, wi) in s.iter().zip(&r) {
            axpy(&mut p, *wi, &g[*i]);
        }
        assert!((p[0] - 0.5).abs() < 1e-12 && (p[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn nearest_hull_point() {
        let sub = ValueSubdifferential {
            generators: vec![vec![-1.0], vec![1.0]],
        };
        let (_, p) = sub.nearest(&[0.3]).unwrap();
        assert!((p[0] - 0.3).abs() < 1e-9);
        let (_, p) = sub.nearest(&[4.0]).unwrap();
        assert!((p[0] - 1.0).abs() < 1e-9);
    }
}
