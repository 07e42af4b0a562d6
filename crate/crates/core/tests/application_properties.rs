use proptest::prelude::*;

use mstat::gen::{gen_newsvendor, gen_portfolio, GenOptions};
use mstat::io::{parse_json, ProblemFile};
use mstat::newsvendor::{
    conditional_cdf, conditional_pdf, nw_weights, solve_newsvendor, spo_loss_newsvendor, Center,
    KernelModel,
};
use mstat::portfolio::{
    consistency_defect, portfolio_problem, realizable_certificate, spo_loss, LinearPredictor,
    PortfolioInstance, PortfolioSample,
};
use mstat::stationarity::{
    m_stationarity_check, recover_multiplier, verify_certificate, Certificate, ResidualReport,
    ScenarioCertificate, VerifyOptions,
};

fn model(centers: &[(f64, f64)], theta: f64) -> KernelModel {
    KernelModel::new(
        centers
            .iter()
            .map(|&(x, y)| Center { x: vec![x], y })
            .collect(),
        theta,
    )
    .unwrap()
}

fn centers_strategy() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-2.0f64..2.0, 0.0f64..20.0), 1..=10)
}

/// Adaptive Simpson quadrature.
fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b))
    }
    fn recurse(f: &dyn Fn(f64) -> f64, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (l, r) = (simpson(f, a, m), simpson(f, m, b));
        if depth == 0 || (l + r - whole).abs() <= 15.0 * tol {
            return l + r + (l + r - whole) / 15.0;
        }
        recurse(f, a, m, l, tol / 2.0, depth - 1) + recurse(f, m, b, r, tol / 2.0, depth - 1)
    }
    // Coarse panels first so narrow kernels cannot hide between samples.
    let panels = 400;
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|k| {
            let (lo, hi) = (a + k as f64 * h, a + (k + 1) as f64 * h);
            recurse(f, lo, hi, simpson(f, lo, hi), tol / panels as f64, 40)
        })
        .sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kernel_weights_form_a_distribution(
        centers in centers_strategy(),
        theta in 0.01f64..5.0,
        queries in prop::collection::vec(-50.0f64..50.0, 16),
    ) {
        let m = model(&centers, theta);
        for x in queries {
            let w = nw_weights(&m, &[x]).unwrap();
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!(w.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn conditional_cdf_is_monotone(
        centers in centers_strategy(),
        theta in 0.1f64..3.0,
        x in -2.0f64..2.0,
    ) {
        let m = model(&centers, theta);
        let mut prev = 0.0;
        for k in 0..400 {
            let y = -10.0 + 0.1 * k as f64;
            let f = conditional_cdf(&m, y, &[x]).unwrap();
            prop_assert!(f >= prev);
            prev = f;
        }
    }

    #[test]
    fn conditional_pdf_integrates_to_one(
        centers in centers_strategy(),
        theta in 0.2f64..3.0,
        x in -2.0f64..2.0,
    ) {
        let m = model(&centers, theta);
        let lo = centers.iter().map(|c| c.1).fold(f64::INFINITY, f64::min) - 10.0 * theta;
        let hi = centers.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max) + 10.0 * theta;
        let total = integrate(&|y| conditional_pdf(&m, y, &[x]).unwrap(), lo, hi, 1e-10);
        prop_assert!((total - 1.0).abs() <= 1e-6, "{total}");
    }

    #[test]
    fn newsvendor_solution_and_loss(
        centers in centers_strategy(),
        theta in 0.1f64..3.0,
        x in -2.0f64..2.0,
        h in 0.1f64..5.0,
        b in 0.1f64..5.0,
        y in 0.0f64..25.0,
    ) {
        let m = model(&centers, theta);
        let z = solve_newsvendor(&m, &[x], h, b).unwrap();
        let resid = (h + b) * conditional_cdf(&m, z, &[x]).unwrap() - b;
        if z > 0.0 {
            prop_assert!(resid.abs() <= 1e-12, "{resid}");
        } else {
            prop_assert!(resid >= 0.0);
        }
        let loss = spo_loss_newsvendor(&m, &[x], y, h, b).unwrap();
        prop_assert!(loss >= 0.0);
        prop_assert_eq!(loss == 0.0, z == y);
        prop_assert_eq!(spo_loss_newsvendor(&m, &[x], z, h, b).unwrap(), 0.0);
    }

    #[test]
    fn spo_loss_is_nonnegative_and_vanishes_when_realized(
        theta in prop::collection::vec(-1.0f64..1.0, 6),
        x in prop::collection::vec(0.0f64..2.0, 2),
        r in prop::collection::vec(-1.0f64..1.0, 3),
        lambda in 0.5f64..5.0,
    ) {
        let pred = LinearPredictor::from_flat(2, 3, &theta).unwrap();
        let inst = PortfolioInstance::new(
            vec![vec![1.0, 0.2, 0.0], vec![0.2, 1.0, 0.1], vec![0.0, 0.1, 0.5]],
            lambda,
            vec![PortfolioSample { x: x.clone(), r: r.clone(), weight: None }],
        ).unwrap();
        prop_assert!(spo_loss(&pred, &x, &r, &inst).unwrap() >= -1e-15);
        prop_assert_eq!(spo_loss(&pred, &x, &pred.predict(&x), &inst).unwrap(), 0.0);
    }

    /// Premultiplying the stationarity line by η gives
    /// ηᵀζ = ηᵀ(r − λΣ(z + η)).
    #[test]
    fn multipliers_satisfy_the_consistency_identity(
        theta in prop::collection::vec(-0.3f64..0.8, 4),
        xs in prop::collection::vec(0.5f64..1.5, 4),
        rs in prop::collection::vec(-0.5f64..1.0, 4),
    ) {
        let samples: Vec<PortfolioSample> = (0..2)
            .map(|i| PortfolioSample { x: xs[2 * i..2 * i + 2].to_vec(), r: rs[2 * i..2 * i + 2].to_vec(), weight: None })
            .collect();
        let inst = PortfolioInstance::new(vec![vec![1.0, 0.3], vec![0.3, 2.0]], 3.0, samples).unwrap();
        let problem = portfolio_problem(&inst).unwrap();
        for (sc, s) in problem.scenarios.iter().zip(&inst.samples) {
            let z = problem.lower.minimize(&theta, &s.x).unwrap().argmin_points[0].clone();
            let Some(eta) = recover_multiplier(problem.lower.as_ref(), problem.upper.as_ref(), &theta, sc, &z, 0.0, 1e-9).unwrap() else {
                continue;
            };
            let m = m_stationarity_check(problem.lower.as_ref(), problem.upper.as_ref(), &theta, sc, &z, &eta, None, 1e-9).unwrap();
            prop_assert!(m.membership.is_member());
            let mut c = ScenarioCertificate::new(z, eta);
            c.zeta = Some(m.zeta);
            prop_assert!(consistency_defect(&inst, &s.r, &c).unwrap().abs() <= 1e-10);
        }
    }

    #[test]
    fn generated_problems_round_trip(
        n in 1usize..6,
        dx in 1usize..3,
        dz in 1usize..4,
        noise in 0.0f64..1.0,
        seed in any::<u64>(),
    ) {
        let p = gen_portfolio(&GenOptions { n, dx, dz, noise, seed }).unwrap();
        let back: ProblemFile = parse_json(&serde_json::to_string(&p).unwrap(), "p").unwrap();
        prop_assert_eq!(&back, &p);
        let nv = gen_newsvendor(&GenOptions { n, dx, dz: 1, noise, seed }).unwrap();
        let back: ProblemFile = parse_json(&serde_json::to_string_pretty(&nv).unwrap(), "nv").unwrap();
        prop_assert_eq!(back, nv);

        let ProblemFile::SpoPortfolio(f) = p else { unreachable!() };
        let truth = LinearPredictor::new(f.theta_true.clone().unwrap()).unwrap();
        let cert = realizable_certificate(&truth, &f.instance).unwrap();
        let back: Certificate = parse_json(&serde_json::to_string(&cert).unwrap(), "c").unwrap();
        prop_assert_eq!(&back, &cert);
        let report = verify_certificate(&portfolio_problem(&f.instance).unwrap(), &cert, &VerifyOptions::default()).unwrap();
        let back: ResidualReport = parse_json(&serde_json::to_string(&report).unwrap(), "r").unwrap();
        prop_assert_eq!(back, report);
    }
}
