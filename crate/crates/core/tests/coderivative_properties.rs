use proptest::prelude::*;

use mstat::cone::{critical_cone_lambda_free, polar_cone, Polyhedron};
use mstat::graph_normal::{coderivative_member_polyhedron, GraphPoint, NormalPair};
use mstat::linalg::Rows;

const EPS: f64 = 1e-9;

/// Polyhedron with `z = 0` feasible and `(0, −g)` on the graph of `N_Z`.
fn graph_point(
    d: usize,
    a: Vec<Vec<i32>>,
    tight: Vec<bool>,
    lam: Vec<u8>,
) -> Option<(Polyhedron, GraphPoint)> {
    let a: Rows = a
        .into_iter()
        .map(|r| r.into_iter().take(d).map(f64::from).collect())
        .collect();
    if a.iter().any(|r| r.iter().all(|v| *v == 0.0)) {
        return None;
    }
    let b: Vec<f64> = tight.iter().map(|t| if *t { 0.0 } else { 2.0 }).collect();
    let mut g = vec![0.0; d];
    for (i, row) in a.iter().enumerate() {
        if tight[i] {
            for k in 0..d {
                g[k] -= f64::from(lam[i]) * row[k];
            }
        }
    }
    Some((
        Polyhedron::new(a, b).ok()?,
        GraphPoint::new(vec![0.0; d], g).ok()?,
    ))
}

fn instance_strategy() -> impl Strategy<Value = (usize, Vec<Vec<i32>>, Vec<bool>, Vec<u8>)> {
    (1usize..=3, 1usize..=5).prop_flat_map(|(d, m)| {
        (
            Just(d),
            prop::collection::vec(prop::collection::vec(-2i32..=2, 3), m),
            prop::collection::vec(any::<bool>(), m),
            prop::collection::vec(0u8..=2, m),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn membership_is_positively_homogeneous(
        (d, a, tight, lam) in instance_strategy(),
        queries in prop::collection::vec((prop::collection::vec(-1i32..=1, 3), prop::collection::vec(-1i32..=1, 3)), 8),
    ) {
        let Some((p, gp)) = graph_point(d, a, tight, lam) else { return Ok(()) };
        for (zeta, eta) in queries {
            let q = NormalPair::new(
                zeta.into_iter().take(d).map(f64::from).collect(),
                eta.into_iter().take(d).map(f64::from).collect(),
            ).unwrap();
            if coderivative_member_polyhedron(&p, &gp, &q, EPS).unwrap().is_member() {
                for t in [0.5, 2.0, 10.0] {
                    prop_assert!(coderivative_member_polyhedron(&p, &gp, &q.scaled(t), EPS).unwrap().is_member());
                }
            }
        }
    }

    #[test]
    fn zero_eta_accepts_the_polar_of_the_critical_cone(
        (d, a, tight, lam) in instance_strategy(),
        coeffs in prop::collection::vec(0u8..=3, 1..8),
    ) {
        let Some((p, gp)) = graph_point(d, a, tight, lam) else { return Ok(()) };
        let k = critical_cone_lambda_free(&p, &gp.z, &gp.normal(), EPS).unwrap();
        let polar = polar_cone(&k);
        let mut zetas: Vec<Vec<f64>> = polar.r.clone();
        let mut mix = vec![0.0; d];
        for (i, r) in polar.r.iter().enumerate() {
            for j in 0..d {
                mix[j] += f64::from(coeffs[i % coeffs.len()]) * r[j];
            }
        }
        for (i, l) in polar.l.iter().enumerate() {
            let c = f64::from(coeffs[i % coeffs.len()]) - 1.5;
            for j in 0..d {
                mix[j] += c * l[j];
            }
            zetas.push(l.iter().map(|v| -v).collect());
        }
        zetas.push(mix);
        for zeta in zetas {
            let q = NormalPair::new(zeta.clone(), vec![0.0; d]).unwrap();
            prop_assert!(
                coderivative_member_polyhedron(&p, &gp, &q, EPS).unwrap().is_member(),
                "zeta {zeta:?} rejected"
            );
        }
    }
}
