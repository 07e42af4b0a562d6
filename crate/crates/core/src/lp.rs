//! Dense two-phase simplex for the tiny feasibility and optimization problems
//! that appear in cone membership and regime enumeration.
//!
//! Pivoting uses Bland's rule in both phases, so the method terminates on
//! degenerate problems and the returned point is a deterministic function of
//! the input.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VarKind {
    NonNeg,
    Free,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    Eq,
    Le,
    Ge,
}

#[derive(Clone, Debug)]
struct Constraint {
    coeffs: Vec<f64>,
    relation: Relation,
    rhs: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct SimplexOptions {
    pub pivot_tol: f64,
    pub feas_tol: f64,
    pub max_iter: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            pivot_tol: 1e-11,
            feas_tol: 1e-9,
            max_iter: 20_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, value: f64 },
    Infeasible,
    Unbounded,
}

impl LpOutcome {
    pub fn point(&self) -> Option<&[f64]> {
        match self {
            LpOutcome::Optimal { x, .. } => Some(x),
            _ => None,
        }
    }
}

/// A linear program over `n` variables, each either nonnegative or free.
#[derive(Clone, Debug)]
pub struct LinearProgram {
    kinds: Vec<VarKind>,
    constraints: Vec<Constraint>,
    objective: Option<Vec<f64>>,
}

impl LinearProgram {
    pub fn new(kinds: Vec<VarKind>) -> Self {
        Self {
            kinds,
            constraints: Vec::new(),
            objective: None,
        }
    }

    pub fn with_vars(n: usize, kind: VarKind) -> Self {
        Self::new(vec![kind; n])
    }

    pub fn num_vars(&self) -> usize {
        self.kinds.len()
    }

    pub fn constrain(&mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) {
        assert_eq!(coeffs.len(), self.kinds.len(), "constraint width");
        self.constraints.push(Constraint {
            coeffs,
            relation,
            rhs,
        });
    }

    pub fn minimize(&mut self, c: Vec<f64>) {
        assert_eq!(c.len(), self.kinds.len(), "objective width");
        self.objective = Some(c);
    }

    /// A feasible point, if any.
    pub fn feasible_point(&self) -> Result<Option<Vec<f64>>> {
        Ok(match self.solve(&SimplexOptions::default())? {
            LpOutcome::Optimal { x, .. } => Some(x),
            _ => None,
        })
    }

    pub fn is_feasible(&self) -> Result<bool> {
        let mut lp = self.clone();
        lp.objective = None;
        Ok(lp.feasible_point()?.is_some())
    }

    pub fn solve(&self, opts: &SimplexOptions) -> Result<LpOutcome> {
        // Column layout: one column per NonNeg variable, two per Free variable,
        // then one slack/surplus per inequality, then one artificial per row.
        let mut var_cols = Vec::with_capacity(self.kinds.len());
        let mut ncols = 0usize;
        for kind in &self.kinds {
            var_cols.push(ncols);
            ncols += match kind {
                VarKind::NonNeg => 1,
                VarKind::Free => 2,
            };
        }
        let n_struct = ncols;
        let n_ineq = self
            .constraints
            .iter()
            .filter(|c| c.relation != Relation::Eq)
            .count();
        let first_art = n_struct + n_ineq;
        let m = self.constraints.len();
        let total = first_art + m;

        let mut tab = Tableau::new(m, total);
        let mut slack = n_struct;
        for (i, con) in self.constraints.iter().enumerate() {
            let row = tab.row_mut(i);
            for (j, kind) in self.kinds.iter().enumerate() {
                let a = con.coeffs[j];
                row[var_cols[j]] = a;
                if *kind == VarKind::Free {
                    row[var_cols[j] + 1] = -a;
                }
            }
            match con.relation {
                Relation::Eq => {}
                Relation::Le => {
                    row[slack] = 1.0;
                    slack += 1;
                }
                Relation::Ge => {
                    row[slack] = -1.0;
                    slack += 1;
                }
            }
            row[total] = con.rhs;
            if con.rhs < 0.0 {
                for v in row.iter_mut() {
                    *v = -*v;
                }
            }
            row[first_art + i] = 1.0;
            tab.basis[i] = first_art + i;
        }

        // Phase 1: minimize the sum of artificials.
        let mut cost = vec![0.0; total];
        for c in cost.iter_mut().skip(first_art) {
            *c = 1.0;
        }
        tab.set_objective(&cost);
        let bmax = self
            .constraints
            .iter()
            .fold(0.0_f64, |acc, c| acc.max(c.rhs.abs()));
        match tab.run(total, opts)? {
            PhaseResult::Optimal => {}
            PhaseResult::Unbounded => {
                return Err(Error::Numeric("phase one reported unbounded".into()))
            }
        }
        if tab.objective_value() > opts.feas_tol * (1.0 + bmax) {
            return Ok(LpOutcome::Infeasible);
        }
        tab.drive_out_artificials(first_art, opts.pivot_tol);

        // Phase 2 over structural and slack columns only.
        let mut cost = vec![0.0; total];
        if let Some(obj) = &self.objective {
            for (j, kind) in self.kinds.iter().enumerate() {
                cost[var_cols[j]] = obj[j];
                if *kind == VarKind::Free {
                    cost[var_cols[j] + 1] = -obj[j];
                }
            }
        }
        tab.set_objective(&cost);
        if self.objective.is_some() {
            if let PhaseResult::Unbounded = tab.run(first_art, opts)? {
                return Ok(LpOutcome::Unbounded);
            }
        }

        let col_values = tab.column_values();
        let x: Vec<f64> = self
            .kinds
            .iter()
            .enumerate()
            .map(|(j, kind)| match kind {
                VarKind::NonNeg => col_values[var_cols[j]],
                VarKind::Free => col_values[var_cols[j]] - col_values[var_cols[j] + 1],
            })
            .collect();
        let value = self
            .objective
            .as_ref()
            .map(|c| crate::linalg::dot(c, &x))
            .unwrap_or(0.0);
        Ok(LpOutcome::Optimal { x, value })
    }
}

enum PhaseResult {
    Optimal,
    Unbounded,
}

/// Row-major tableau with `cols + 1` entries per row; the last entry is the
/// right-hand side. `obj` holds reduced costs and `-(objective value)`.
struct Tableau {
    cols: usize,
    rows: Vec<Vec<f64>>,
    obj: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    fn new(m: usize, cols: usize) -> Self {
        Self {
            cols,
            rows: vec![vec![0.0; cols + 1]; m],
            obj: vec![0.0; cols + 1],
            basis: vec![0; m],
        }
    }

    fn row_mut(&mut self, i: usize) -> &mut Vec<f64> {
        &mut self.rows[i]
    }

    fn set_objective(&mut self, cost: &[f64]) {
        self.obj = cost.to_vec();
        self.obj.push(0.0);
        for (i, &bv) in self.basis.iter().enumerate() {
            let cb = cost[bv];
            if cb != 0.0 {
                for (o, r) in self.obj.iter_mut().zip(&self.rows[i]) {
                    *o -= cb * r;
                }
            }
        }
    }

    fn objective_value(&self) -> f64 {
        -self.obj[self.cols]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.rows[r][c];
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                for (v, pr) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pr;
                }
                row[c] = 0.0;
            }
        }
        let f = self.obj[c];
        if f != 0.0 {
            for (v, pr) in self.obj.iter_mut().zip(&pivot_row) {
                *v -= f * pr;
            }
            self.obj[c] = 0.0;
        }
        self.basis[r] = c;
    }

    /// Bland's rule over columns `< allowed`.
    fn run(&mut self, allowed: usize, opts: &SimplexOptions) -> Result<PhaseResult> {
        for _ in 0..opts.max_iter {
            let entering = (0..allowed).find(|&j| self.obj[j] < -opts.pivot_tol.max(1e-10));
            let Some(c) = entering else {
                return Ok(PhaseResult::Optimal);
            };
            let mut best: Option<(usize, f64)> = None;
            for (i, row) in self.rows.iter().enumerate() {
                let a = row[c];
                if a > opts.pivot_tol {
                    let ratio = row[self.cols] / a;
                    best = match best {
                        None => Some((i, ratio)),
                        Some((bi, br)) => {
                            if ratio < br - 1e-14
                                || ((ratio - br).abs() <= 1e-14 && self.basis[i] < self.basis[bi])
                            {
                                Some((i, ratio))
                            } else {
                                Some((bi, br))
                            }
                        }
                    };
                }
            }
            match best {
                None => return Ok(PhaseResult::Unbounded),
                Some((r, _)) => self.pivot(r, c),
            }
        }
        Err(Error::Numeric("simplex iteration limit reached".into()))
    }

    fn drive_out_artificials(&mut self, first_art: usize, pivot_tol: f64) {
        let mut i = 0;
        while i < self.rows.len() {
            if self.basis[i] >= first_art {
                let col = (0..first_art).find(|&j| self.rows[i][j].abs() > pivot_tol);
                match col {
                    Some(j) => {
                        self.pivot(i, j);
                        i += 1;
                    }
                    None => {
                        // Redundant row.
                        self.rows.remove(i);
                        self.basis.remove(i);
                    }
                }
            } else {
                i += 1;
            }
        }
    }

    fn column_values(&self) -> Vec<f64> {
        let mut vals = vec![0.0; self.cols];
        for (i, &bv) in self.basis.iter().enumerate() {
            vals[bv] = self.rows[i][self.cols];
        }
        vals
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simple_feasibility() {
        // x + y = 1, x, y >= 0
        let mut lp = LinearProgram::with_vars(2, VarKind::NonNeg);
        lp.constrain(vec![1.0, 1.0], Relation::Eq, 1.0);
        let x = lp.feasible_point().unwrap().unwrap();
        assert!((x[0] + x[1] - 1.0).abs() < 1e-12);
        assert!(x.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn detects_infeasibility() {
        let mut lp = LinearProgram::with_vars(1, VarKind::NonNeg);
        lp.constrain(vec![1.0], Relation::Eq, -1.0);
        assert!(!lp.is_feasible().unwrap());
    }

    #[test]
    fn free_variables_take_negative_values() {
        let mut lp = LinearProgram::with_vars(1, VarKind::Free);
        lp.constrain(vec![2.0], Relation::Eq, -3.0);
        let x = lp.feasible_point().unwrap().unwrap();
        assert!((x[0] + 1.5).abs() < 1e-12);
    }

    #[test]
    fn minimizes_objective() {
        // min -x - y  s.t. x + 2y <= 4, 3x + y <= 6
        let mut lp = LinearProgram::with_vars(2, VarKind::NonNeg);
        lp.constrain(vec![1.0, 2.0], Relation::Le, 4.0);
        lp.constrain(vec![3.0, 1.0], Relation::Le, 6.0);
        lp.minimize(vec![-1.0, -1.0]);
        match lp.solve(&SimplexOptions::default()).unwrap() {
            LpOutcome::Optimal { x, value } => {
                assert!((x[0] - 1.6).abs() < 1e-10 && (x[1] - 1.2).abs() < 1e-10);
                assert!((value + 2.8).abs() < 1e-10);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn reports_unbounded() {
        let mut lp = LinearProgram::with_vars(1, VarKind::Free);
        lp.constrain(vec![1.0], Relation::Le, 1.0);
        lp.minimize(vec![1.0]);
        assert_eq!(
            lp.solve(&SimplexOptions::default()).unwrap(),
            LpOutcome::Unbounded
        );
    }

    #[test]
    fn redundant_equalities_are_tolerated() {
        let mut lp = LinearProgram::with_vars(2, VarKind::NonNeg);
        lp.constrain(vec![1.0, 1.0], Relation::Eq, 2.0);
        lp.constrain(vec![2.0, 2.0], Relation::Eq, 4.0);
        lp.constrain(vec![1.0, 0.0], Relation::Ge, 0.5);
        lp.minimize(vec![1.0, 0.0]);
        let x = lp.feasible_point().unwrap().unwrap();
        assert!((x[0] - 0.5).abs() < 1e-10 && (x[1] - 1.5).abs() < 1e-10);
    }

    #[test]
    fn degenerate_problem_terminates() {
        // Classic cycling example (Beale) is handled by Bland's rule.
        let mut lp = LinearProgram::with_vars(4, VarKind::NonNeg);
        lp.constrain(vec![0.25, -60.0, -0.04, 9.0], Relation::Le, 0.0);
        lp.constrain(vec![0.5, -90.0, -0.02, 3.0], Relation::Le, 0.0);
        lp.constrain(vec![0.0, 0.0, 1.0, 0.0], Relation::Le, 1.0);
        lp.minimize(vec![-0.75, 150.0, -0.02, 6.0]);
        match lp.solve(&SimplexOptions::default()).unwrap() {
            LpOutcome::Optimal { value, .. } => assert!((value + 0.05).abs() < 1e-9),
            other => panic!("unexpected {other:?}"),
        }
    }
}
