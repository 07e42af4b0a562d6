//! Certificate verification for the convex and the penalized systems.

use rayon::prelude::*;

use super::{
    value_subdifferential, Certificate, LowerModel, Mode, Problem, ResidualReport, Scenario,
    ScenarioCertificate, ScenarioReport, UpperModel, SCHEMA,
};
use crate::cone::{face_difference_for, normal_cone_multiplier, polar_cone, ActiveDecomposition};
use crate::error::{check_len, Error, Result};
use crate::feasible::FeasibleSet;
use crate::graph_normal::{coderivative_member_simplex_with_beta, Membership, NormalPair};
use crate::linalg::{axpy, mat_t_vec, neg, Rows};
use crate::lp::{LinearProgram, LpOutcome, Relation, SimplexOptions, VarKind};

#[derive(Clone, Copy, Debug)]
pub struct VerifyOptions {
    /// Bound on every residual.
    pub tol: f64,
    /// Bound on value gaps.
    pub value_tol: f64,
    /// Geometric tolerance for activity and membership; kept fixed so that
    /// verdicts are monotone in `tol`.
    pub eps: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            value_tol: 1e-6,
            eps: crate::cone::DEFAULT_EPS,
        }
    }
}

/// `dist(−∇_z𝔠(z, θ, x), N_Z(z))`.
pub fn lower_residual(
    model: &dyn LowerModel,
    theta: &[f64],
    x: &[f64],
    z: &[f64],
    eps: f64,
) -> Result<f64> {
    check_len("z", z, model.dim_z())?;
    let set = model.feasible_set();
    set.check_feasible(z, eps)?;
    let g = model.grad_z(z, theta, x);
    set.distance_to_normal_cone(z, &neg(&g), eps)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MStationarity {
    pub membership: Membership,
    /// Distance from `−ζ − (μ∇_z𝔠 + ∇²_{zz}𝔠ᵀη)` to `∂_z L`.
    pub residual: f64,
    /// The `ζ` that was tested (supplied or reconstructed).
    pub zeta: Vec<f64>,
}

fn member_with_hint(
    set: &FeasibleSet,
    z: &[f64],
    g: &[f64],
    pair: &NormalPair,
    beta: Option<f64>,
    eps: f64,
) -> Result<Membership> {
    match (set, beta) {
        (FeasibleSet::Simplex(_), Some(b)) => {
            coderivative_member_simplex_with_beta(z, g, pair, b, eps)
        }
        _ => set.coderivative_member(z, g, pair, eps),
    }
}

#[allow(clippy::too_many_arguments)]
fn m_stationarity_inner(
    lower: &dyn LowerModel,
    upper: &dyn UpperModel,
    theta: &[f64],
    scenario: &Scenario,
    z: &[f64],
    eta: &[f64],
    zeta: Option<&[f64]>,
    mu: f64,
    beta: Option<f64>,
    eps: f64,
) -> Result<MStationarity> {
    let d = lower.dim_z();
    check_len("z", z, d)?;
    check_len("eta", eta, d)?;
    let set = lower.feasible_set();
    let g = lower.grad_z(z, theta, &scenario.x);
    let h = lower.hess_zz(z, theta, &scenario.x);
    let mut shift = mat_t_vec(&h, eta, d);
    axpy(&mut shift, mu, &g);
    let sub = upper.grad_z(z, &scenario.x, &scenario.y, theta);
    if let Some(zeta) = zeta {
        check_len("zeta", zeta, d)?;
        let mut target = neg(zeta);
        axpy(&mut target, -1.0, &shift);
        let pair = NormalPair::new(zeta.to_vec(), eta.to_vec())?;
        return Ok(MStationarity {
            membership: member_with_hint(set, z, &g, &pair, beta, eps)?,
            residual: sub.distance(&target),
            zeta: zeta.to_vec(),
        });
    }
    // ζ = −(u + shift) for some u ∈ ∂_z L: try the u nearest to −shift, then
    // the corners of the box.
    let mut candidates = vec![sub.nearest(&neg(&shift))];
    if !sub.is_smooth() {
        candidates.push(sub.lo.clone());
        candidates.push(sub.hi.clone());
    }
    let mut first: Option<MStationarity> = None;
    for u in candidates {
        let mut zeta = neg(&u);
        axpy(&mut zeta, -1.0, &shift);
        let pair = NormalPair::new(zeta.clone(), eta.to_vec())?;
        let membership = member_with_hint(set, z, &g, &pair, beta, eps)?;
        let found = MStationarity {
            residual: 0.0,
            zeta,
            membership,
        };
        if found.membership.is_member() {
            return Ok(found);
        }
        first.get_or_insert(found);
    }
    Ok(first.expect("at least one candidate"))
}

/// Tests `0 ∈ ∂_z L + ∇²_{zz}𝔠ᵀη + D*N_Z(z, −∇_z𝔠)(η)`. With `zeta` given
/// the residual measures the first relation and membership is tested on
/// `zeta`; otherwise `ζ` is reconstructed from `∂_z L` and only membership
/// is informative.
#[allow(clippy::too_many_arguments)]
pub fn m_stationarity_check(
    lower: &dyn LowerModel,
    upper: &dyn UpperModel,
    theta: &[f64],
    scenario: &Scenario,
    z: &[f64],
    eta: &[f64],
    zeta: Option<&[f64]>,
    eps: f64,
) -> Result<MStationarity> {
    m_stationarity_inner(lower, upper, theta, scenario, z, eta, zeta, 0.0, None, eps)
}

/// True iff `η = 0` is the only solution of
/// `0 ∈ ∇²_{zz}𝔠ᵀη + D*N_Z(z, −∇_z𝔠)(η)`. Each linear regime of the
/// coderivative is tested for a solution with `‖η‖∞ = 1`.
pub fn nnamcq_check(
    model: &dyn LowerModel,
    theta: &[f64],
    x: &[f64],
    z: &[f64],
    eps: f64,
) -> Result<bool> {
    let d = model.dim_z();
    check_len("z", z, d)?;
    let set = model.feasible_set();
    let g = model.grad_z(z, theta, x);
    let gnc = set.graph_normal_cone(z, &g, eps)?;
    if !gnc.is_graph_point() {
        return Err(Error::NotGraphPoint(
            "NNAMCQ needs a lower-level stationary point".into(),
        ));
    }
    let h = model.hess_zz(z, theta, x);
    let p = set.polyhedron();
    let a = p.a();
    for (eq, ineq) in gnc.systems() {
        for k in 0..d {
            for sign in [1.0, -1.0] {
                if regime_has_solution(&h, a, eq, ineq, None, Some((k, sign)))?.is_some() {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

/// LP over `(η, μ ≥ 0, ν, u)`:
/// `Hᵀη + A_ineqᵀμ + A_eqᵀν + u = rhs`, `a_iᵀη = 0` on `eq`, `a_iᵀη ≥ 0` on
/// `ineq`, with `u` in the box (absent means `u = 0`, `rhs = 0`). `normalize`
/// adds `sign·η_k = 1` and `|η_j| ≤ 1`; otherwise `‖η‖₁` is minimized.
/// Returns `η` when feasible.
fn regime_has_solution(
    h: &Rows,
    a: &Rows,
    eq: &[usize],
    ineq: &[usize],
    rhs_box: Option<(&[f64], &[f64], &[f64])>,
    normalize: Option<(usize, f64)>,
) -> Result<Option<Vec<f64>>> {
    let d = h.len();
    let (ni, ne) = (ineq.len(), eq.len());
    let nu = if rhs_box.is_some() { d } else { 0 };
    // Layout: η⁺ (d), η⁻ (d), μ (ni), ν (ne), u (nu).
    let mut kinds = vec![VarKind::NonNeg; 2 * d + ni];
    kinds.extend(std::iter::repeat_n(VarKind::Free, ne + nu));
    let n = kinds.len();
    let mut lp = LinearProgram::new(kinds);
    for j in 0..d {
        let mut row = vec![0.0; n];
        for k in 0..d {
            row[k] = h[k][j];
            row[d + k] = -h[k][j];
        }
        for (t, &i) in ineq.iter().enumerate() {
            row[2 * d + t] = a[i][j];
        }
        for (t, &i) in eq.iter().enumerate() {
            row[2 * d + ni + t] = a[i][j];
        }
        let rhs = match rhs_box {
            Some((rhs, _, _)) => {
                row[2 * d + ni + ne + j] = 1.0;
                rhs[j]
            }
            None => 0.0,
        };
        lp.constrain(row, Relation::Eq, rhs);
    }
    let eta_row = |i: usize| {
        let mut row = vec![0.0; n];
        for k in 0..d {
            row[k] = a[i][k];
            row[d + k] = -a[i][k];
        }
        row
    };
    for &i in eq {
        lp.constrain(eta_row(i), Relation::Eq, 0.0);
    }
    for &i in ineq {
        lp.constrain(eta_row(i), Relation::Ge, 0.0);
    }
    if let Some((_, lo, hi)) = rhs_box {
        for j in 0..d {
            let mut row = vec![0.0; n];
            row[2 * d + ni + ne + j] = 1.0;
            lp.constrain(row.clone(), Relation::Ge, lo[j]);
            lp.constrain(row, Relation::Le, hi[j]);
        }
    }
    match normalize {
        Some((k, sign)) => {
            let mut row = vec![0.0; n];
            row[k] = sign;
            row[d + k] = -sign;
            lp.constrain(row, Relation::Eq, 1.0);
            for j in 0..d {
                let mut row = vec![0.0; n];
                row[j] = 1.0;
                row[d + j] = -1.0;
                lp.constrain(row.clone(), Relation::Le, 1.0);
                lp.constrain(row, Relation::Ge, -1.0);
            }
        }
        None => {
            let mut c = vec![0.0; n];
            for v in c.iter_mut().take(2 * d) {
                *v = 1.0;
            }
            lp.minimize(c);
        }
    }
    Ok(match lp.solve(&SimplexOptions::default())? {
        LpOutcome::Optimal { x, .. } => Some((0..d).map(|k| x[k] - x[d + k]).collect()),
        _ => None,
    })
}

/// Smallest-`ℓ₁` multiplier `η` solving the stationarity line in some linear
/// regime of the coderivative, or `None` when no regime admits one.
pub fn recover_multiplier(
    lower: &dyn LowerModel,
    upper: &dyn UpperModel,
    theta: &[f64],
    scenario: &Scenario,
    z: &[f64],
    mu: f64,
    eps: f64,
) -> Result<Option<Vec<f64>>> {
    let d = lower.dim_z();
    check_len("z", z, d)?;
    let set = lower.feasible_set();
    let g = lower.grad_z(z, theta, &scenario.x);
    let gnc = set.graph_normal_cone(z, &g, eps)?;
    if !gnc.is_graph_point() {
        return Err(Error::NotGraphPoint(
            "no multiplier at a non-stationary point".into(),
        ));
    }
    let h = lower.hess_zz(z, theta, &scenario.x);
    let sub = upper.grad_z(z, &scenario.x, &scenario.y, theta);
    let rhs: Vec<f64> = g.iter().map(|v| -mu * v).collect();
    let p = set.polyhedron();
    let mut best: Option<Vec<f64>> = None;
    for (eq, ineq) in gnc.systems() {
        if let Some(eta) =
            regime_has_solution(&h, p.a(), eq, ineq, Some((&rhs, &sub.lo, &sub.hi)), None)?
        {
            let l1 = |v: &Vec<f64>| v.iter().map(|x| x.abs()).sum::<f64>();
            if best.as_ref().is_none_or(|b| l1(&eta) < l1(b) - 1e-12) {
                best = Some(eta);
            }
        }
    }
    Ok(best)
}

/// Generators `∇_θL(z) + ∇²_{zθ}𝔠(z)ᵀη` over solutions `z` and their
/// multipliers.
pub fn psi_set(
    lower: &dyn LowerModel,
    upper: &dyn UpperModel,
    theta: &[f64],
    scenario: &Scenario,
    solutions: &[(Vec<f64>, Vec<Vec<f64>>)],
) -> Result<Rows> {
    let mut out = Vec::new();
    for (z, etas) in solutions {
        check_len("z", z, lower.dim_z())?;
        let base = upper.grad_theta(z, &scenario.x, &scenario.y, theta);
        for eta in etas {
            check_len("eta", eta, lower.dim_z())?;
            let mut v = base.clone();
            axpy(
                &mut v,
                1.0,
                &lower.hess_ztheta_t(z, theta, &scenario.x, eta),
            );
            out.push(v);
        }
    }
    Ok(out)
}

fn upper_term(
    problem: &Problem,
    theta: &[f64],
    sc: &Scenario,
    cert: &ScenarioCertificate,
) -> Vec<f64> {
    let mut v = problem.upper.grad_theta(&cert.z, &sc.x, &sc.y, theta);
    axpy(
        &mut v,
        1.0,
        &problem
            .lower
            .hess_ztheta_t(&cert.z, theta, &sc.x, &cert.eta),
    );
    v
}

/// `dist(−s, N_Θ(θ))` with `s = Σ_n p_n [∇_θL(z_n) + ∇²_{zθ}𝔠(z_n)ᵀη_n]`.
pub fn upper_residual(problem: &Problem, cert: &Certificate, eps: f64) -> Result<f64> {
    let theta = checked_theta(problem, cert)?;
    let mut s = vec![0.0; theta.len()];
    for (sc, c) in problem.scenarios.iter().zip(&cert.scenarios) {
        check_len("z", &c.z, problem.lower.dim_z())?;
        check_len("eta", &c.eta, problem.lower.dim_z())?;
        axpy(&mut s, sc.weight, &upper_term(problem, &theta, sc, c));
    }
    problem
        .upper
        .theta_set()
        .distance_to_normal_cone(&theta, &neg(&s), eps)
}

fn checked_theta(problem: &Problem, cert: &Certificate) -> Result<Vec<f64>> {
    if cert.scenarios.is_empty() {
        return Err(Error::Invalid("certificate has no scenarios".into()));
    }
    if cert.scenarios.len() != problem.scenarios.len() {
        return Err(Error::Dimension(format!(
            "certificate has {} scenarios, problem has {}",
            cert.scenarios.len(),
            problem.scenarios.len()
        )));
    }
    let theta = cert.theta.flatten();
    check_len("theta", &theta, problem.lower.dim_theta())?;
    Ok(theta)
}

pub fn verify_certificate(
    problem: &Problem,
    cert: &Certificate,
    opts: &VerifyOptions,
) -> Result<ResidualReport> {
    verify(problem, cert, opts, Mode::Convex)
}

pub fn verify_certificate_penalized(
    problem: &Problem,
    cert: &Certificate,
    opts: &VerifyOptions,
) -> Result<ResidualReport> {
    verify(problem, cert, opts, Mode::Penalized)
}

struct ScenarioOutcome {
    report: ScenarioReport,
    upper: Vec<f64>,
    caveats: Vec<String>,
}

fn verify(
    problem: &Problem,
    cert: &Certificate,
    opts: &VerifyOptions,
    mode: Mode,
) -> Result<ResidualReport> {
    let theta = checked_theta(problem, cert)?;
    for (i, c) in cert.scenarios.iter().enumerate() {
        match (mode, c.mu) {
            (Mode::Convex, Some(_)) => {
                return Err(Error::Invalid(format!(
                    "scenario {i} carries a penalty weight; use penalized mode"
                )))
            }
            (Mode::Penalized, None) => {
                return Err(Error::Invalid(format!(
                    "scenario {i} lacks a penalty weight mu"
                )))
            }
            (Mode::Penalized, Some(mu)) if !(mu >= 0.0) => {
                return Err(Error::Invalid(format!(
                    "scenario {i} has negative penalty weight {mu}"
                )))
            }
            _ => {}
        }
    }
    let outcomes: Vec<ScenarioOutcome> = (0..cert.scenarios.len())
        .into_par_iter()
        .map(|i| check_scenario(problem, &theta, i, &cert.scenarios[i], opts))
        .collect::<Result<Vec<_>>>()?;

    let mut s = vec![0.0; theta.len()];
    let mut caveats = Vec::new();
    let mut scenarios = Vec::with_capacity(outcomes.len());
    for (o, sc) in outcomes.into_iter().zip(&problem.scenarios) {
        axpy(&mut s, sc.weight, &o.upper);
        caveats.extend(o.caveats);
        scenarios.push(o.report);
    }
    let upper_residual =
        problem
            .upper
            .theta_set()
            .distance_to_normal_cone(&theta, &neg(&s), opts.eps)?;
    let pass = upper_residual <= opts.tol && scenarios.iter().all(|s| s.pass);
    Ok(ResidualReport {
        schema: SCHEMA.to_string(),
        tol: opts.tol,
        value_tol: opts.value_tol,
        upper_residual,
        scenarios,
        caveats,
        pass,
    })
}

fn check_scenario(
    problem: &Problem,
    theta: &[f64],
    index: usize,
    c: &ScenarioCertificate,
    opts: &VerifyOptions,
) -> Result<ScenarioOutcome> {
    let lower = problem.lower.as_ref();
    let sc = &problem.scenarios[index];
    let d = lower.dim_z();
    check_len("z", &c.z, d)?;
    check_len("eta", &c.eta, d)?;
    let set = lower.feasible_set();
    let poly = set.polyhedron();
    let eps = opts.eps;
    let mu = c.mu.unwrap_or(0.0);
    let mut caveats = Vec::new();
    let mut upper = upper_term(problem, theta, sc, c);

    let ms = m_stationarity_inner(
        lower,
        problem.upper.as_ref(),
        theta,
        sc,
        &c.z,
        &c.eta,
        c.zeta.as_deref(),
        mu,
        c.beta,
        eps,
    )?;

    let violation = poly.slack(&c.z).into_iter().fold(0.0, f64::max);
    let g = lower.grad_z(&c.z, theta, &sc.x);
    let (lower_res, dec) = if violation > eps {
        (violation, None)
    } else {
        (
            set.distance_to_normal_cone(&c.z, &neg(&g), eps)?,
            normal_cone_multiplier(&poly, &c.z, &neg(&g), eps)?,
        )
    };

    let complementarity_gap = match &c.lambda {
        Some(lam) => {
            check_len("lambda", lam, poly.num_rows())?;
            poly.slack(&c.z)
                .iter()
                .zip(lam)
                .map(|(s, l)| (s * l).abs().max(if *l < 0.0 { -l } else { 0.0 }))
                .fold(0.0, f64::max)
        }
        None => dec
            .as_ref()
            .map_or(0.0, |d| d.complementarity_residual(&poly, &c.z)),
    };

    let index_sets_consistent = match (&c.j1, &c.j2) {
        (Some(j1), Some(j2)) => {
            let chosen = match &c.lambda {
                Some(lam) => crate::cone::active_set(&poly, &c.z, eps)
                    .ok()
                    .map(|active| {
                        let (i_plus, i_zero) = active.iter().partition(|&&i| lam[i] > eps);
                        ActiveDecomposition {
                            active,
                            lambda: lam.clone(),
                            i_plus,
                            i_zero,
                        }
                    }),
                None => dec.clone(),
            };
            Some(match chosen {
                Some(dec) => match face_difference_for(&poly, &dec, j1, j2, eps) {
                    Ok(diff) => {
                        diff.contains(&neg(&c.eta), eps)
                            && polar_cone(&diff).contains(&ms.zeta, eps)?
                    }
                    Err(_) => false,
                },
                None => false,
            })
        }
        _ => None,
    };

    let sample = lower.minimize(theta, &sc.x)?;
    let value_gap = (lower.cost(&c.z, theta, &sc.x) - sample.value).max(0.0);

    let mut value_certificate_ok = true;
    if mu > 0.0 {
        let g_theta = lower.grad_theta(&c.z, theta, &sc.x);
        let g_n = match (&c.argmin_points, &c.value_weights) {
            (Some(points), Some(weights)) => {
                for (k, p) in points.iter().enumerate() {
                    check_len("argmin point", p, d)?;
                    let gap = lower.cost(p, theta, &sc.x) - sample.value;
                    if gap > opts.value_tol {
                        value_certificate_ok = false;
                        caveats.push(format!(
                            "scenario {index}: argmin point {k} is suboptimal by {gap:.3e}"
                        ));
                    }
                }
                value_subdifferential(lower, theta, &sc.x, points)?.combine(weights)?
            }
            _ => {
                let sub = value_subdifferential(lower, theta, &sc.x, &sample.argmin_points)?;
                if !sample.exact {
                    caveats.push(format!(
                        "scenario {index}: minimizers sampled by multistart, the value subdifferential may be incomplete"
                    ));
                }
                if sub.is_singleton() {
                    sub.generators[0].clone()
                } else {
                    sub.nearest(&g_theta)?.1
                }
            }
        };
        for k in 0..upper.len() {
            upper[k] += mu * (g_theta[k] - g_n[k]);
        }
    }

    let graph_point = ms.membership.is_graph_point() && violation <= eps;
    let pass = graph_point
        && lower_res <= opts.tol
        && ms.residual <= opts.tol
        && ms.membership.is_member()
        && complementarity_gap <= opts.tol
        && value_gap <= opts.value_tol
        && value_certificate_ok;
    Ok(ScenarioOutcome {
        report: ScenarioReport {
            index,
            graph_point,
            lower_residual: lower_res,
            stationarity_residual: ms.residual,
            membership: ms.membership.is_member(),
            zeta: ms.zeta,
            complementarity_gap,
            value_gap: Some(value_gap),
            index_sets_consistent,
            witness: ms.membership,
            pass,
        },
        upper,
        caveats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stationarity::{Subgradient, ThetaSet, ThetaValue};

    /// `½ h z² − θz` over `z ≥ 0`.
    struct Scalar {
        h: f64,
        set: FeasibleSet,
    }

    impl Scalar {
        fn new(h: f64) -> Self {
            Self {
                h,
                set: FeasibleSet::Orthant(1),
            }
        }
    }

    impl LowerModel for Scalar {
        fn dim_z(&self) -> usize {
            1
        }
        fn dim_theta(&self) -> usize {
            1
        }
        fn feasible_set(&self) -> &FeasibleSet {
            &self.set
        }
        fn cost(&self, z: &[f64], t: &[f64], _: &[f64]) -> f64 {
            0.5 * self.h * z[0] * z[0] - t[0] * z[0]
        }
        fn grad_z(&self, z: &[f64], t: &[f64], _: &[f64]) -> Vec<f64> {
            vec![self.h * z[0] - t[0]]
        }
        fn hess_zz(&self, _: &[f64], _: &[f64], _: &[f64]) -> Rows {
            vec![vec![self.h]]
        }
        fn hess_ztheta_t(&self, _: &[f64], _: &[f64], _: &[f64], eta: &[f64]) -> Vec<f64> {
            vec![-eta[0]]
        }
        fn grad_theta(&self, z: &[f64], _: &[f64], _: &[f64]) -> Vec<f64> {
            vec![-z[0]]
        }
    }

    /// `½ (z − y)²` with free `θ`.
    struct Tracking(ThetaSet);

    impl UpperModel for Tracking {
        fn loss(&self, z: &[f64], _: &[f64], y: &[f64], _: &[f64]) -> f64 {
            0.5 * (z[0] - y[0]).powi(2)
        }
        fn grad_z(&self, z: &[f64], _: &[f64], y: &[f64], _: &[f64]) -> Subgradient {
            Subgradient::smooth(vec![z[0] - y[0]])
        }
        fn grad_theta(&self, _: &[f64], _: &[f64], _: &[f64], _: &[f64]) -> Vec<f64> {
            vec![0.0]
        }
        fn theta_set(&self) -> &ThetaSet {
            &self.0
        }
    }

    fn problem(y: f64) -> Problem {
        Problem::new(
            Box::new(Scalar::new(1.0)),
            Box::new(Tracking(ThetaSet::Free)),
            vec![Scenario {
                x: vec![],
                y: vec![y],
                weight: 1.0,
            }],
        )
        .unwrap()
    }

    #[test]
    fn interior_optimum_passes() {
        let p = problem(1.0);
        let cert = Certificate::new(
            ThetaValue::Scalar(1.0),
            vec![ScenarioCertificate::new(vec![1.0], vec![0.0])],
        );
        let r = verify_certificate(&p, &cert, &VerifyOptions::default()).unwrap();
        assert!(r.pass, "{}", r.to_text());
        assert_eq!(r.upper_residual, 0.0);
    }

    #[test]
    fn wrong_theta_fails_lower_residual() {
        let p = problem(1.0);
        let cert = Certificate::new(
            ThetaValue::Scalar(2.0),
            vec![ScenarioCertificate::new(vec![1.0], vec![0.0])],
        );
        let r = verify_certificate(&p, &cert, &VerifyOptions::default()).unwrap();
        assert!(!r.pass);
        assert!(!r.scenarios[0].graph_point);
        assert!((r.scenarios[0].lower_residual - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nonzero_multiplier_moves_upper_residual() {
        // At θ = 2, z = 2 the stationarity line forces η = −(z − y) = −1,
        // and then ∇²_{zθ}𝔠ᵀη = 1 leaves an upper residual of 1.
        let p = problem(1.0);
        let cert = Certificate::new(
            ThetaValue::Scalar(2.0),
            vec![ScenarioCertificate::new(vec![2.0], vec![-1.0])],
        );
        let r = verify_certificate(&p, &cert, &VerifyOptions::default()).unwrap();
        assert!(r.scenarios[0].pass);
        assert!((r.upper_residual - 1.0).abs() < 1e-12);
        assert!(!r.pass);
    }

    #[test]
    fn infeasible_z_reports_violation() {
        let p = problem(1.0);
        let cert = Certificate::new(
            ThetaValue::Scalar(1.0),
            vec![ScenarioCertificate::new(vec![-0.5], vec![0.0])],
        );
        let r = verify_certificate(&p, &cert, &VerifyOptions::default()).unwrap();
        assert!(!r.scenarios[0].pass);
        assert!((r.scenarios[0].lower_residual - 0.5).abs() < 1e-12);
    }

    #[test]
    fn mode_and_mu_must_agree() {
        let p = problem(1.0);
        let mut sc = ScenarioCertificate::new(vec![1.0], vec![0.0]);
        let cert = Certificate::new(ThetaValue::Scalar(1.0), vec![sc.clone()]);
        assert!(verify_certificate_penalized(&p, &cert, &VerifyOptions::default()).is_err());
        sc.mu = Some(0.0);
        let cert = Certificate::new(ThetaValue::Scalar(1.0), vec![sc.clone()]);
        assert!(verify_certificate(&p, &cert, &VerifyOptions::default()).is_err());
        sc.mu = Some(-1.0);
        let cert = Certificate::new(ThetaValue::Scalar(1.0), vec![sc]);
        assert!(verify_certificate_penalized(&p, &cert, &VerifyOptions::default()).is_err());
    }

    #[test]
    fn nnamcq_depends_on_curvature() {
        assert!(!nnamcq_check(&Scalar::new(0.0), &[0.0], &[], &[0.0], 1e-9).unwrap());
        assert!(nnamcq_check(&Scalar::new(1.0), &[0.0], &[], &[0.0], 1e-9).unwrap());
    }

    #[test]
    fn recovered_multiplier_certifies() {
        let p = problem(1.0);
        let sc = &p.scenarios[0];
        let eta = recover_multiplier(
            p.lower.as_ref(),
            p.upper.as_ref(),
            &[2.0],
            sc,
            &[2.0],
            0.0,
            1e-9,
        )
        .unwrap()
        .unwrap();
        assert!((eta[0] + 1.0).abs() < 1e-9);
        let ms = m_stationarity_check(
            p.lower.as_ref(),
            p.upper.as_ref(),
            &[2.0],
            sc,
            &[2.0],
            &eta,
            None,
            1e-9,
        )
        .unwrap();
        assert!(ms.membership.is_member());
    }

    #[test]
    fn psi_collects_generators() {
        let p = problem(1.0);
        let psi = psi_set(
            p.lower.as_ref(),
            p.upper.as_ref(),
            &[1.0],
            &p.scenarios[0],
            &[(vec![1.0], vec![vec![0.5], vec![-2.0]])],
        )
        .unwrap();
        assert_eq!(psi, vec![vec![-0.5], vec![2.0]]);
    }
}
