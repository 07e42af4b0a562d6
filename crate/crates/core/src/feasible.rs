//! Lower-level feasible sets with fast paths for the orthant and the simplex.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cone::{distance_to_normal_cone, Polyhedron};
use crate::error::{check_len, Error, Result};
use crate::graph_normal::{
    coderivative_member_orthant, coderivative_member_polyhedron, coderivative_member_simplex,
    GraphNormalCone, GraphPoint, Membership, NormalPair,
};
use crate::linalg::{identity, project_capped_simplex, sub};
use crate::qp::QuadraticProgram;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeasibleSet {
    /// `R^d_+`.
    Orthant(usize),
    /// `{z ≥ 0, 1ᵀz ≤ 1}` in `R^d`.
    Simplex(usize),
    Polyhedron(Polyhedron),
}

impl FeasibleSet {
    pub fn dim(&self) -> usize {
        match self {
            FeasibleSet::Orthant(d) | FeasibleSet::Simplex(d) => *d,
            FeasibleSet::Polyhedron(p) => p.dim(),
        }
    }

    pub fn polyhedron(&self) -> Polyhedron {
        match self {
            FeasibleSet::Orthant(d) => Polyhedron::orthant(*d),
            FeasibleSet::Simplex(d) => Polyhedron::simplex(*d),
            FeasibleSet::Polyhedron(p) => p.clone(),
        }
    }

    pub fn check_feasible(&self, z: &[f64], eps: f64) -> Result<()> {
        self.polyhedron().check_feasible(z, eps)
    }

    /// Coderivative membership, dispatching to the closed-form predicates for
    /// the orthant and the simplex.
    pub fn coderivative_member(
        &self,
        z: &[f64],
        g: &[f64],
        pair: &NormalPair,
        eps: f64,
    ) -> Result<Membership> {
        match self {
            FeasibleSet::Orthant(_) => coderivative_member_orthant(z, g, pair, eps),
            FeasibleSet::Simplex(_) => coderivative_member_simplex(z, g, pair, eps),
            FeasibleSet::Polyhedron(p) => coderivative_member_polyhedron(
                p,
                &GraphPoint::new(z.to_vec(), g.to_vec())?,
                pair,
                eps,
            ),
        }
    }

    /// Precomputed general characterization at `(z, −g)`.
    pub fn graph_normal_cone(&self, z: &[f64], g: &[f64], eps: f64) -> Result<GraphNormalCone> {
        GraphNormalCone::new(
            &self.polyhedron(),
            &GraphPoint::new(z.to_vec(), g.to_vec())?,
            eps,
        )
    }

    /// `dist(w, N_Z(z))`.
    pub fn distance_to_normal_cone(&self, z: &[f64], w: &[f64], eps: f64) -> Result<f64> {
        distance_to_normal_cone(&self.polyhedron(), z, w, eps)
    }

    /// Euclidean projection.
    pub fn project(&self, p: &[f64]) -> Result<Vec<f64>> {
        check_len("point", p, self.dim())?;
        match self {
            FeasibleSet::Orthant(_) => Ok(p.iter().map(|v| v.max(0.0)).collect()),
            FeasibleSet::Simplex(_) => Ok(project_capped_simplex(p)),
            FeasibleSet::Polyhedron(poly) => {
                let start = poly
                    .feasible_point()?
                    .ok_or_else(|| Error::Invalid("feasible set is empty".into()))?;
                let d = poly.dim();
                let qp = QuadraticProgram {
                    q: identity(d),
                    c: p.iter().map(|v| -v).collect(),
                    a_eq: Vec::new(),
                    b_eq: Vec::new(),
                    a: poly.a().clone(),
                    b: poly.b().to_vec(),
                };
                Ok(qp.solve_from(&start)?.x)
            }
        }
    }

    /// `count` deterministic feasible starting points: vertices or corners
    /// first, then projections of seeded random points.
    pub fn starts(&self, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        let d = self.dim();
        let mut out: Vec<Vec<f64>> = Vec::new();
        match self {
            FeasibleSet::Orthant(_) | FeasibleSet::Simplex(_) => {
                out.push(vec![0.0; d]);
                for i in 0..d {
                    let mut e = vec![0.0; d];
                    e[i] = 1.0;
                    out.push(e);
                }
            }
            FeasibleSet::Polyhedron(_) => {
                // Far-away sign patterns project onto corners of bounded sets.
                let patterns = 1usize << d.min(4);
                for mask in 0..patterns {
                    let far: Vec<f64> = (0..d)
                        .map(|k| {
                            if k < 4 && mask & (1 << k) != 0 {
                                1e3
                            } else {
                                -1e3
                            }
                        })
                        .collect();
                    out.push(self.project(&far)?);
                }
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        while out.len() < count {
            let raw: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
            out.push(self.project(&raw)?);
        }
        out.truncate(count.max(1));
        let mut unique: Vec<Vec<f64>> = Vec::new();
        for s in out {
            if !unique
                .iter()
                .any(|u| crate::linalg::norm_inf(&sub(u, &s)) <= 1e-12)
            {
                unique.push(s);
            }
        }
        Ok(unique)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projections() {
        assert_eq!(
            FeasibleSet::Orthant(2).project(&[-1.0, 2.0]).unwrap(),
            vec![0.0, 2.0]
        );
        let s = FeasibleSet::Simplex(2).project(&[3.0, 1.0]).unwrap();
        assert!((s[0] - 1.0).abs() < 1e-12 && s[1].abs() < 1e-12);
        let b = FeasibleSet::Polyhedron(Polyhedron::boxed(&[-1.0], &[1.0]).unwrap());
        assert!((b.project(&[5.0]).unwrap()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn box_starts_include_corners() {
        let b = FeasibleSet::Polyhedron(Polyhedron::boxed(&[-1.0], &[1.0]).unwrap());
        let s = b.starts(16, 0).unwrap();
        assert!(s.iter().any(|p| (p[0] + 1.0).abs() < 1e-12));
        assert!(s.iter().any(|p| (p[0] - 1.0).abs() < 1e-12));
        assert_eq!(s, b.starts(16, 0).unwrap());
    }

    #[test]
    fn dispatch_agrees_with_general_predicate() {
        let q = NormalPair::new(vec![-1.0, 0.0], vec![-1.0, 3.0]).unwrap();
        let fast = FeasibleSet::Orthant(2)
            .coderivative_member(&[0.0, 0.0], &[0.0, 0.0], &q, 1e-9)
            .unwrap();
        let general = FeasibleSet::Polyhedron(Polyhedron::orthant(2))
            .coderivative_member(&[0.0, 0.0], &[0.0, 0.0], &q, 1e-9)
            .unwrap();
        assert_eq!(fast.is_member(), general.is_member());
    }
}
