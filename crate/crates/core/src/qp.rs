//! Primal active-set method for small strictly convex quadratic programs
//!
//! ```text
//! minimize ½ xᵀQx + cᵀx   subject to   A_eq x = b_eq,   A x ≤ b
//! ```
//!
//! starting from a feasible point. Ties between blocking or dropped
//! constraints are broken by lowest index.

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, mat_vec, norm, norm_inf, rank, solve_square};

#[derive(Clone, Debug)]
pub struct QuadraticProgram {
    pub q: Vec<Vec<f64>>,
    pub c: Vec<f64>,
    pub a_eq: Vec<Vec<f64>>,
    pub b_eq: Vec<f64>,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct QpSolution {
    pub x: Vec<f64>,
    /// Multipliers of the inequality rows (zero off the working set).
    pub ineq_multipliers: Vec<f64>,
    pub eq_multipliers: Vec<f64>,
    pub working_set: Vec<usize>,
    pub iterations: usize,
}

impl QuadraticProgram {
    pub fn dim(&self) -> usize {
        self.c.len()
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        0.5 * dot(x, &mat_vec(&self.q, x)) + dot(&self.c, x)
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = mat_vec(&self.q, x);
        axpy(&mut g, 1.0, &self.c);
        g
    }

    /// `‖Qx + c + Aᵀλ + A_eqᵀν‖∞`.
    pub fn kkt_residual(&self, sol: &QpSolution) -> f64 {
        let mut r = self.gradient(&sol.x);
        for (row, l) in self.a.iter().zip(&sol.ineq_multipliers) {
            axpy(&mut r, *l, row);
        }
        for (row, l) in self.a_eq.iter().zip(&sol.eq_multipliers) {
            axpy(&mut r, *l, row);
        }
        norm_inf(&r)
    }

    /// Solve the equality-constrained subproblem on the working set, returning
    /// the step and the multipliers (equalities first, then working rows).
    fn eqp(&self, x: &[f64], working: &[usize]) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = self.dim();
        let rows: Vec<&Vec<f64>> = self
            .a_eq
            .iter()
            .chain(working.iter().map(|&i| &self.a[i]))
            .collect();
        let k = rows.len();
        let mut kkt = vec![vec![0.0; n + k]; n + k];
        for i in 0..n {
            kkt[i][..n].copy_from_slice(&self.q[i]);
        }
        for (r, row) in rows.iter().enumerate() {
            for j in 0..n {
                kkt[n + r][j] = row[j];
                kkt[j][n + r] = row[j];
            }
        }
        let g = self.gradient(x);
        let mut rhs: Vec<f64> = g.iter().map(|v| -v).collect();
        rhs.extend(std::iter::repeat_n(0.0, k));
        let sol = solve_square(&kkt, &rhs)
            .ok_or_else(|| Error::Numeric("singular KKT system in active-set QP".into()))?;
        Ok((sol[..n].to_vec(), sol[n..].to_vec()))
    }

    pub fn solve_from(&self, x0: &[f64]) -> Result<QpSolution> {
        let n = self.dim();
        let feas_tol = 1e-9;
        for (i, row) in self.a.iter().enumerate() {
            if dot(row, x0) - self.b[i] > feas_tol {
                return Err(Error::Infeasible {
                    row: i,
                    violation: dot(row, x0) - self.b[i],
                });
            }
        }
        for (i, row) in self.a_eq.iter().enumerate() {
            if (dot(row, x0) - self.b_eq[i]).abs() > feas_tol {
                return Err(Error::Invalid(format!(
                    "starting point violates equality row {i}"
                )));
            }
        }
        let mut x = x0.to_vec();
        // Initial working set: active rows, greedily kept linearly independent.
        let mut working: Vec<usize> = Vec::new();
        for i in 0..self.a.len() {
            if (dot(&self.a[i], &x) - self.b[i]).abs() <= feas_tol {
                let mut trial: Vec<Vec<f64>> = self.a_eq.clone();
                trial.extend(working.iter().map(|&w| self.a[w].clone()));
                trial.push(self.a[i].clone());
                if rank(&trial, n, 1e-10) == trial.len() {
                    working.push(i);
                }
            }
        }

        let max_iter = 50 * (self.a.len() + n + 1);
        for iter in 0..max_iter {
            let (p, mult) = self.eqp(&x, &working)?;
            let scale = 1.0 + norm(&x);
            if norm(&p) <= 1e-13 * scale {
                let n_eq = self.a_eq.len();
                let ineq = &mult[n_eq..];
                // Most negative multiplier; lowest index on ties.
                let mut drop: Option<(usize, f64)> = None;
                for (pos, &l) in ineq.iter().enumerate() {
                    if l < -1e-12 {
                        let better = match drop {
                            None => true,
                            Some((dp, dl)) => {
                                l < dl - 1e-15
                                    || ((l - dl).abs() <= 1e-15 && working[pos] < working[dp])
                            }
                        };
                        if better {
                            drop = Some((pos, l));
                        }
                    }
                }
                match drop {
                    None => {
                        let mut ineq_multipliers = vec![0.0; self.a.len()];
                        for (pos, &w) in working.iter().enumerate() {
                            ineq_multipliers[w] = ineq[pos].max(0.0);
                        }
                        let mut sorted = working.clone();
                        sorted.sort_unstable();
                        return Ok(QpSolution {
                            x,
                            ineq_multipliers,
                            eq_multipliers: mult[..n_eq].to_vec(),
                            working_set: sorted,
                            iterations: iter,
                        });
                    }
                    Some((pos, _)) => {
                        working.remove(pos);
                    }
                }
            } else {
                let mut alpha = 1.0;
                let mut blocking: Option<usize> = None;
                for i in 0..self.a.len() {
                    if working.contains(&i) {
                        continue;
                    }
                    let ap = dot(&self.a[i], &p);
                    if ap > 1e-14 {
                        let step = ((self.b[i] - dot(&self.a[i], &x)) / ap).max(0.0);
                        if step < alpha - 1e-15
                            || (blocking.is_some()
                                && (step - alpha).abs() <= 1e-15
                                && Some(i) < blocking)
                        {
                            alpha = step;
                            blocking = Some(i);
                        }
                    }
                }
                axpy(&mut x, alpha, &p);
                if let Some(i) = blocking {
                    working.push(i);
                }
            }
        }
        Err(Error::Numeric(
            "active-set QP iteration limit reached".into(),
        ))
    }
}
