//! Command-line front end. `run` parses arguments, executes one subcommand
//! and maps the outcome to an exit code: 0 on success or pass, 2 when a
//! verification fails, 1 on usage, input or numerical errors.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::cone::{
    active_set, critical_cone_lambda_free, near_threshold_rows, normal_cone_multiplier,
    tangent_cone, ConeRepV, DEFAULT_EPS,
};
use crate::error::{check_len, Error, Result};
use crate::gen::{gen_newsvendor, gen_portfolio, GenOptions};
use crate::graph_normal::{limiting_normal_member_oracle, GraphPoint, Membership, NormalPair};
use crate::io::{
    open_csv, read_centers_csv, read_certificate, read_demand_csv, read_json, read_portfolio_csv,
    read_problem, ProblemFile, SetSpec,
};
use crate::linalg::Rows;
use crate::newsvendor::{
    bandwidth_grid_search, conditional_cdf, grad_theta_cdf, solve_newsvendor, spo_loss_newsvendor,
    NewsvendorInstance,
};
use crate::portfolio::{
    empirical_spo_objective, fit_least_squares, realizable_certificate, solve_simplex_qp,
    spo_local_search, spo_loss, LinearPredictor, PortfolioInstance,
};
use crate::stationarity::{
    fd_check_lower, fd_check_upper, relative_error, verify_certificate,
    verify_certificate_penalized, FdReport, Mode, ResidualReport, VerifyOptions, SCHEMA,
};

#[derive(Debug, Parser)]
#[command(
    name = "mstat",
    version,
    about = "Coderivative membership and M-stationarity certificate checks"
)]
pub struct Cli {
    /// Residual tolerance for verification.
    #[arg(long, global = true, default_value_t = 1e-8)]
    pub tol: f64,
    /// Seed for data generation and randomized checks.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Also write the JSON result to this path.
    #[arg(long, global = true)]
    pub report: Option<PathBuf>,
    /// Output format on stdout.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Text,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Active set, tangent, normal and critical cones at a point.
    Cones {
        /// Query file with the set, the point and an optional vector.
        #[arg(long)]
        input: PathBuf,
    },
    /// Membership of (zeta, eta) in the graph normal cone of N_Z.
    GphNormal {
        /// Query file with the set, z, g, zeta and eta.
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = MethodArg::Auto)]
        method: MethodArg,
    },
    /// Check a stationarity certificate against a problem.
    Verify(VerifyArgs),
    /// Mean-variance portfolio with a linear predictor.
    SpoPortfolio {
        #[command(subcommand)]
        action: PortfolioAction,
    },
    /// Kernel-regression newsvendor.
    Newsvendor {
        #[command(subcommand)]
        action: NewsvendorAction,
    },
    /// Write a synthetic problem.
    Gen(GenArgs),
    /// Finite-difference check of model derivatives.
    FdCheck(FdArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    /// Closed form for the orthant and simplex, explicit systems otherwise.
    Auto,
    /// Support-pattern systems on the polyhedral description.
    Explicit,
    /// Enumeration of face pairs of the critical cone.
    Oracle,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    /// Lower level convex in z.
    Convex,
    /// Value-function penalty with calmness modulus `mu`.
    Penalized,
}

#[derive(Debug, Args)]
pub struct ProblemArgs {
    /// Problem file (JSON).
    #[arg(long)]
    pub problem: PathBuf,
    /// Scenarios from CSV, replacing those in the problem file.
    #[arg(long)]
    pub samples_csv: Option<PathBuf>,
    /// Kernel centers from CSV (newsvendor only).
    #[arg(long)]
    pub centers_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// Certificate file (JSON).
    #[arg(long)]
    pub certificate: PathBuf,
    /// Stationarity system to check; penalized needs `mu` in the certificate.
    #[arg(long, value_enum, default_value_t = ModeArg::Convex)]
    pub mode: ModeArg,
    /// Tolerance on lower-level value gaps.
    #[arg(long, default_value_t = 1e-6)]
    pub value_tol: f64,
}

#[derive(Debug, Subcommand)]
pub enum PortfolioAction {
    /// Solve the simplex QP for a return vector.
    Solve {
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(
            long,
            value_delimiter = ',',
            allow_hyphen_values = true,
            required = true
        )]
        r: Vec<f64>,
    },
    /// Least-squares predictor.
    Fit {
        #[command(flatten)]
        problem: ProblemArgs,
    },
    /// Coordinate search on the empirical SPO objective.
    Search {
        #[command(flatten)]
        problem: ProblemArgs,
        /// Starting predictor (defaults to the least-squares fit).
        #[arg(long)]
        theta0: Option<PathBuf>,
        #[arg(long, default_value_t = 200)]
        steps: usize,
        #[arg(long, default_value_t = 0.05)]
        step_size: f64,
    },
    /// Per-sample and mean SPO loss of a predictor.
    Loss {
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long)]
        theta: Option<PathBuf>,
    },
    /// Certificate with optimal decisions and zero multipliers.
    Certify {
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long)]
        theta: Option<PathBuf>,
    },
    /// Check a certificate against a portfolio problem.
    Verify(VerifyArgs),
}

#[derive(Debug, Subcommand)]
pub enum NewsvendorAction {
    /// Order quantity for a context.
    Solve {
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long)]
        theta: f64,
        #[arg(
            long,
            value_delimiter = ',',
            allow_hyphen_values = true,
            required = true
        )]
        x: Vec<f64>,
    },
    /// Per-sample and mean SPO loss at a bandwidth.
    Loss {
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long)]
        theta: f64,
    },
    /// Check a certificate against a newsvendor problem.
    Verify(VerifyArgs),
    /// Bandwidth with the smallest leave-one-out SPO loss.
    Gridsearch {
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long, value_delimiter = ',', default_value = "0.25,0.5,1,2,4")]
        grid: Vec<f64>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum GenKind {
    Portfolio,
    Newsvendor,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(value_enum)]
    pub kind: GenKind,
    /// Number of samples.
    #[arg(long, default_value_t = 20)]
    pub n: usize,
    /// Context dimension.
    #[arg(long, default_value_t = 2)]
    pub dx: usize,
    /// Decision dimension (1 for the newsvendor).
    #[arg(long)]
    pub dz: Option<usize>,
    /// Outcome noise level (0 for the portfolio, 1 for the newsvendor by default).
    #[arg(long)]
    pub noise: Option<f64>,
    /// Output file (stdout when absent).
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FdOp {
    /// Bandwidth derivative of the conditional CDF (newsvendor).
    GradThetaCdf,
    /// All lower-level derivatives.
    Lower,
    /// Upper-level gradients away from kinks.
    Upper,
}

#[derive(Debug, Args)]
pub struct FdArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[arg(long, value_enum)]
    pub op: FdOp,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    /// Central-difference step.
    #[arg(long, default_value_t = 1e-5)]
    pub step: f64,
    /// Largest acceptable relative error.
    #[arg(long, default_value_t = 1e-6)]
    pub threshold: f64,
}

/// Result of one command: the JSON value, its text rendering, and a verdict
/// for commands that check something.
pub struct Outcome {
    pub json: Value,
    pub text: String,
    pub pass: Option<bool>,
}

impl Outcome {
    fn info(json: Value, text: String) -> Self {
        Self {
            json,
            text,
            pass: None,
        }
    }

    fn verdict(json: Value, text: String, pass: bool) -> Self {
        Self {
            json,
            text,
            pass: Some(pass),
        }
    }
}

fn to_value<T: Serialize>(v: &T) -> Result<Value> {
    Ok(serde_json::to_value(v)?)
}

fn verdict_word(pass: bool) -> &'static str {
    if pass {
        "pass"
    } else {
        "fail"
    }
}

/// Parses `args`, runs the command and writes its output to `out`. Returns
/// the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = if e.use_stderr() {
                write!(err, "{e}")
            } else {
                write!(out, "{e}")
            };
            return code;
        }
    };
    match execute(&cli) {
        Ok(outcome) => {
            if let Some(path) = &cli.report {
                let written = serde_json::to_string_pretty(&outcome.json)
                    .map_err(Error::from)
                    .and_then(|s| std::fs::write(path, s + "\n").map_err(Error::from));
                if let Err(e) = written {
                    let _ = writeln!(err, "error: cannot write report {}: {e}", path.display());
                    return 1;
                }
            }
            let shown = match cli.format {
                Format::Json => serde_json::to_string_pretty(&outcome.json).unwrap_or_default(),
                Format::Text => outcome.text.trim_end().to_string(),
            };
            let _ = writeln!(out, "{shown}");
            match outcome.pass {
                Some(false) => 2,
                _ => 0,
            }
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            1
        }
    }
}

fn execute(cli: &Cli) -> Result<Outcome> {
    if !(cli.tol >= 0.0) {
        return Err(Error::Invalid(format!(
            "tolerance {} must be nonnegative",
            cli.tol
        )));
    }
    match &cli.command {
        Command::Cones { input } => cones(input),
        Command::GphNormal { input, method } => gph_normal(input, *method),
        Command::Verify(args) => verify(cli, args, None),
        Command::SpoPortfolio { action } => portfolio(cli, action),
        Command::Newsvendor { action } => newsvendor(cli, action),
        Command::Gen(args) => gen(cli, args),
        Command::FdCheck(args) => fd_check(cli, args),
    }
}

#[derive(serde::Deserialize)]
struct ConesInput {
    #[serde(rename = "Z")]
    set: SetSpec,
    z: Vec<f64>,
    /// Optional normal vector for the multiplier and the critical cone.
    #[serde(default)]
    v: Option<Vec<f64>>,
    #[serde(default)]
    eps: Option<f64>,
}

fn cones(input: &Path) -> Result<Outcome> {
    let q: ConesInput = read_json(input)?;
    let eps = q.eps.unwrap_or(DEFAULT_EPS);
    let p = q.set.resolve(q.z.len())?.polyhedron();
    p.check_feasible(&q.z, eps)?;
    let active = active_set(&p, &q.z, eps)?;
    let tangent = tangent_cone(&p, &q.z, eps)?;
    let normal = ConeRepV::new(
        p.dim(),
        active.iter().map(|&i| p.row(i).to_vec()).collect(),
        Vec::new(),
    )?;
    let mut json = json!({
        "schema": SCHEMA,
        "active": active,
        "near_threshold": near_threshold_rows(&p, &q.z, eps),
        "tangent": tangent,
        "normal": normal,
    });
    let mut text = format!("active rows: {active:?}\n");
    if let Some(v) = &q.v {
        check_len("v", v, p.dim())?;
        match normal_cone_multiplier(&p, &q.z, v, eps)? {
            Some(dec) => {
                let critical = critical_cone_lambda_free(&p, &q.z, v, eps)?;
                text.push_str(&format!(
                    "v is normal; multiplier {:?}; I+ {:?}, I0 {:?}\n",
                    dec.lambda, dec.i_plus, dec.i_zero
                ));
                json["v_in_normal_cone"] = json!(true);
                json["lambda"] = json!(dec.lambda);
                json["i_plus"] = json!(dec.i_plus);
                json["i_zero"] = json!(dec.i_zero);
                json["critical"] = to_value(&critical)?;
            }
            None => {
                text.push_str("v is not in the normal cone\n");
                json["v_in_normal_cone"] = json!(false);
            }
        }
    }
    Ok(Outcome::info(json, text))
}

#[derive(serde::Deserialize)]
struct GphInput {
    #[serde(rename = "Z")]
    set: SetSpec,
    z: Vec<f64>,
    g: Vec<f64>,
    zeta: Vec<f64>,
    eta: Vec<f64>,
    #[serde(default)]
    eps: Option<f64>,
}

fn gph_normal(input: &Path, method: MethodArg) -> Result<Outcome> {
    let q: GphInput = read_json(input)?;
    let eps = q.eps.unwrap_or(DEFAULT_EPS);
    let set = q.set.resolve(q.z.len())?;
    let pair = NormalPair::new(q.zeta, q.eta)?;
    let m = match method {
        MethodArg::Auto => set.coderivative_member(&q.z, &q.g, &pair, eps)?,
        MethodArg::Explicit => set.graph_normal_cone(&q.z, &q.g, eps)?.member(&pair)?,
        MethodArg::Oracle => limiting_normal_member_oracle(
            &set.polyhedron(),
            &GraphPoint::new(q.z.clone(), q.g.clone())?,
            &pair,
            eps,
        )?,
    };
    let member = m.is_member();
    let (method_name, witness) = match &m {
        Membership::Member { method, witness } => (Some(to_value(method)?), to_value(witness)?),
        Membership::NotMember {
            method,
            diagnostics,
        } => (
            Some(to_value(method)?),
            json!({ "diagnostics": diagnostics }),
        ),
        Membership::EmptyCoderivative { reason } => (None, json!({ "reason": reason })),
    };
    let json = json!({
        "schema": SCHEMA,
        "member": member,
        "graph_point": m.is_graph_point(),
        "method": method_name,
        "witness": witness,
    });
    let text = match &m {
        Membership::EmptyCoderivative { reason } => {
            format!("member: false\nnot a graph point: {reason}\n")
        }
        _ => format!("member: {member}\n"),
    };
    Ok(Outcome::verdict(json, text, member))
}

fn load_problem(args: &ProblemArgs) -> Result<ProblemFile> {
    let mut p = read_problem(&args.problem)?;
    match &mut p {
        ProblemFile::SpoPortfolio(f) => {
            if args.centers_csv.is_some() {
                return Err(Error::Invalid(
                    "--centers-csv applies to newsvendor problems".into(),
                ));
            }
            if let Some(path) = &args.samples_csv {
                f.instance.samples =
                    read_portfolio_csv(open_csv(path)?, &path.display().to_string())?;
            }
        }
        ProblemFile::NewsvendorKernel(f) => {
            if let Some(path) = &args.samples_csv {
                f.instance.samples = read_demand_csv(open_csv(path)?, &path.display().to_string())?;
            }
            if let Some(path) = &args.centers_csv {
                f.instance.centers =
                    read_centers_csv(open_csv(path)?, &path.display().to_string())?;
            }
        }
    }
    p.validate()?;
    Ok(p)
}

#[derive(Serialize)]
struct VerifyOutput<'a> {
    mode: Mode,
    #[serde(flatten)]
    report: &'a ResidualReport,
}

fn verify(cli: &Cli, args: &VerifyArgs, expect: Option<&str>) -> Result<Outcome> {
    let file = load_problem(&args.problem)?;
    if let Some(kind) = expect {
        if file.kind() != kind {
            return Err(Error::Invalid(format!(
                "expected a {kind} problem, got {}",
                file.kind()
            )));
        }
    }
    let problem = file.to_problem()?;
    let cert = read_certificate(&args.certificate)?;
    let opts = VerifyOptions {
        tol: cli.tol,
        value_tol: args.value_tol,
        ..VerifyOptions::default()
    };
    let (mode, report) = match args.mode {
        ModeArg::Convex => (Mode::Convex, verify_certificate(&problem, &cert, &opts)?),
        ModeArg::Penalized => (
            Mode::Penalized,
            verify_certificate_penalized(&problem, &cert, &opts)?,
        ),
    };
    let json = to_value(&VerifyOutput {
        mode,
        report: &report,
    })?;
    let text = format!(
        "mode: {}\n{}",
        if mode == Mode::Convex {
            "convex"
        } else {
            "penalized"
        },
        report.to_text()
    );
    Ok(Outcome::verdict(json, text, report.pass))
}

fn portfolio_instance(args: &ProblemArgs) -> Result<(PortfolioInstance, Option<Rows>)> {
    match load_problem(args)? {
        ProblemFile::SpoPortfolio(f) => Ok((f.instance, f.theta_true)),
        other => Err(Error::Invalid(format!(
            "expected an spo_portfolio problem, got {}",
            other.kind()
        ))),
    }
}

/// A predictor file: a bare matrix, or an object with a `theta` matrix.
fn read_predictor(path: &Path) -> Result<LinearPredictor> {
    let v: Value = read_json(path)?;
    let m = match v {
        Value::Object(mut o) => o
            .remove("theta")
            .ok_or_else(|| Error::Invalid(format!("{}: no \"theta\" field", path.display())))?,
        other => other,
    };
    LinearPredictor::new(serde_json::from_value(m)?)
}

fn predictor_or_truth(theta: &Option<PathBuf>, truth: Option<Rows>) -> Result<LinearPredictor> {
    match (theta, truth) {
        (Some(p), _) => read_predictor(p),
        (None, Some(t)) => LinearPredictor::new(t),
        (None, None) => Err(Error::Invalid(
            "no --theta given and the problem has no ground-truth predictor".into(),
        )),
    }
}

fn portfolio(cli: &Cli, action: &PortfolioAction) -> Result<Outcome> {
    match action {
        PortfolioAction::Solve { problem, r } => {
            let (inst, _) = portfolio_instance(problem)?;
            let sol = solve_simplex_qp(r, &inst.sigma, inst.lambda)?;
            let text = format!(
                "z: {:?}\ntau: {}\nkkt residual: {:.3e}\n",
                sol.z, sol.tau, sol.kkt_residual
            );
            Ok(Outcome::info(to_value(&sol)?, text))
        }
        PortfolioAction::Fit { problem } => {
            let (inst, _) = portfolio_instance(problem)?;
            let fit = fit_least_squares(&inst)?;
            let obj = empirical_spo_objective(&fit, &inst)?;
            let text = format!("theta: {:?}\nspo objective: {obj:.6e}\n", fit.theta);
            Ok(Outcome::info(
                json!({"theta": fit.theta, "objective": obj}),
                text,
            ))
        }
        PortfolioAction::Search {
            problem,
            theta0,
            steps,
            step_size,
        } => {
            let (inst, _) = portfolio_instance(problem)?;
            let start = match theta0 {
                Some(p) => read_predictor(p)?,
                None => fit_least_squares(&inst)?,
            };
            let res = spo_local_search(&inst, &start, *steps, *step_size, cli.seed)?;
            let text = format!(
                "theta: {:?}\nspo objective: {:.6e} after {} accepted moves\n",
                res.predictor.theta,
                res.objective,
                res.trace.len() - 1
            );
            Ok(Outcome::info(
                json!({"theta": res.predictor.theta, "objective": res.objective, "trace": res.trace}),
                text,
            ))
        }
        PortfolioAction::Loss { problem, theta } => {
            let (inst, truth) = portfolio_instance(problem)?;
            let pred = predictor_or_truth(theta, truth)?;
            let losses = inst
                .samples
                .iter()
                .map(|s| spo_loss(&pred, &s.x, &s.r, &inst))
                .collect::<Result<Vec<_>>>()?;
            let obj = empirical_spo_objective(&pred, &inst)?;
            let text = format!("spo objective: {obj:.6e}\n");
            Ok(Outcome::info(
                json!({"objective": obj, "losses": losses}),
                text,
            ))
        }
        PortfolioAction::Certify { problem, theta } => {
            let (inst, truth) = portfolio_instance(problem)?;
            let pred = predictor_or_truth(theta, truth)?;
            let cert = realizable_certificate(&pred, &inst)?;
            let json = to_value(&cert)?;
            let text = serde_json::to_string_pretty(&json)?;
            Ok(Outcome::info(json, text))
        }
        PortfolioAction::Verify(args) => verify(cli, args, Some("spo_portfolio")),
    }
}

fn newsvendor_instance(args: &ProblemArgs) -> Result<NewsvendorInstance> {
    match load_problem(args)? {
        ProblemFile::NewsvendorKernel(f) => Ok(f.instance),
        other => Err(Error::Invalid(format!(
            "expected a newsvendor_kernel problem, got {}",
            other.kind()
        ))),
    }
}

fn newsvendor(cli: &Cli, action: &NewsvendorAction) -> Result<Outcome> {
    match action {
        NewsvendorAction::Solve { problem, theta, x } => {
            let inst = newsvendor_instance(problem)?;
            let model = inst.model(*theta)?;
            let z = solve_newsvendor(&model, x, inst.h, inst.b)?;
            let resid = (inst.h + inst.b) * conditional_cdf(&model, z, x)? - inst.b;
            let text = format!("z: {z}\nquantile residual: {resid:.3e}\n");
            Ok(Outcome::info(json!({"z": z, "residual": resid}), text))
        }
        NewsvendorAction::Loss { problem, theta } => {
            let inst = newsvendor_instance(problem)?;
            let model = inst.model(*theta)?;
            let w = inst.weights()?;
            let losses = inst
                .samples
                .iter()
                .map(|s| spo_loss_newsvendor(&model, &s.x, s.y, inst.h, inst.b))
                .collect::<Result<Vec<_>>>()?;
            let obj: f64 = losses.iter().zip(&w).map(|(l, w)| l * w).sum();
            let text = format!("spo objective: {obj:.6e}\n");
            Ok(Outcome::info(
                json!({"objective": obj, "losses": losses}),
                text,
            ))
        }
        NewsvendorAction::Verify(args) => verify(cli, args, Some("newsvendor_kernel")),
        NewsvendorAction::Gridsearch { problem, grid } => {
            let inst = newsvendor_instance(problem)?;
            let res = bandwidth_grid_search(&inst, grid)?;
            let text = format!(
                "theta: {}\nleave-one-out spo loss: {:.6e}\n",
                res.theta, res.objective
            );
            Ok(Outcome::info(to_value(&res)?, text))
        }
    }
}

fn gen(cli: &Cli, args: &GenArgs) -> Result<Outcome> {
    let opts = GenOptions {
        n: args.n,
        dx: args.dx,
        dz: args.dz.unwrap_or(match args.kind {
            GenKind::Portfolio => 2,
            GenKind::Newsvendor => 1,
        }),
        noise: args.noise.unwrap_or(match args.kind {
            GenKind::Portfolio => 0.0,
            GenKind::Newsvendor => 1.0,
        }),
        seed: cli.seed,
    };
    let file = match args.kind {
        GenKind::Portfolio => gen_portfolio(&opts)?,
        GenKind::Newsvendor => gen_newsvendor(&opts)?,
    };
    let json = to_value(&file)?;
    let body = serde_json::to_string_pretty(&json)?;
    match &args.output {
        Some(path) => {
            std::fs::write(path, body + "\n")?;
            let text = format!("wrote {} problem to {}\n", file.kind(), path.display());
            Ok(Outcome::info(json, text))
        }
        None => Ok(Outcome::info(json, body)),
    }
}

#[derive(Serialize)]
struct FdSummary {
    op: String,
    trials: usize,
    step: f64,
    threshold: f64,
    max_relative_error: f64,
    worst_trial: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    worst_report: Option<FdReport>,
    pass: bool,
}

fn fd_check(cli: &Cli, args: &FdArgs) -> Result<Outcome> {
    let file = load_problem(&args.problem)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cli.seed);
    let h = args.step;
    let mut errors: Vec<(f64, Option<FdReport>)> = Vec::with_capacity(args.trials);
    match (&file, args.op) {
        (ProblemFile::NewsvendorKernel(f), FdOp::GradThetaCdf) => {
            let inst = &f.instance;
            for _ in 0..args.trials {
                let theta = rng.gen_range(0.5..2.0);
                let c = &inst.centers[rng.gen_range(0..inst.centers.len())];
                let x: Vec<f64> = c.x.iter().map(|v| v + rng.gen_range(-0.5..0.5)).collect();
                let y = c.y + rng.gen_range(-2.0..2.0) * theta;
                let model = inst.model(theta)?;
                let analytic = grad_theta_cdf(&model, y, &x)?;
                let fd = (conditional_cdf(&inst.model(theta + h)?, y, &x)?
                    - conditional_cdf(&inst.model(theta - h)?, y, &x)?)
                    / (2.0 * h);
                errors.push((relative_error(analytic, fd), None));
            }
        }
        (_, FdOp::GradThetaCdf) => {
            return Err(Error::Invalid(
                "grad-theta-cdf needs a newsvendor_kernel problem".into(),
            ))
        }
        (_, op) => {
            let problem = file.to_problem()?;
            let dz = problem.lower.dim_z();
            for _ in 0..args.trials {
                let s = &problem.scenarios[rng.gen_range(0..problem.scenarios.len())];
                let (theta, z) = match &file {
                    ProblemFile::SpoPortfolio(_) => {
                        let theta: Vec<f64> = (0..problem.lower.dim_theta())
                            .map(|_| rng.gen_range(-0.5..0.5))
                            .collect();
                        let raw: Vec<f64> = (0..dz).map(|_| rng.gen_range(0.0..1.0)).collect();
                        let total: f64 = raw.iter().sum::<f64>() + rng.gen_range(0.1..1.0);
                        (theta, raw.iter().map(|v| v / total).collect::<Vec<_>>())
                    }
                    ProblemFile::NewsvendorKernel(_) => {
                        let theta = vec![rng.gen_range(0.5..2.0)];
                        // Keep away from the kink of the realized cost.
                        let offset =
                            rng.gen_range(0.5..2.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                        (theta, vec![(s.y[0] + offset).max(0.0)])
                    }
                };
                let report = match op {
                    FdOp::Lower => fd_check_lower(problem.lower.as_ref(), &z, &theta, &s.x, h),
                    _ => {
                        let z = if (z[0] - s.y[0]).abs() < 0.1 && dz == 1 {
                            vec![s.y[0] + 1.0]
                        } else {
                            z
                        };
                        fd_check_upper(problem.upper.as_ref(), &z, &s.x, &s.y, &theta, h)
                    }
                };
                errors.push((report.max(), Some(report)));
            }
        }
    }
    let (worst_trial, max_err) =
        errors
            .iter()
            .enumerate()
            .map(|(i, (e, _))| (i, *e))
            .fold((0, 0.0_f64), |acc, (i, e)| {
                if e > acc.1 || e.is_nan() {
                    (i, e)
                } else {
                    acc
                }
            });
    let pass = max_err <= args.threshold;
    let summary = FdSummary {
        op: format!("{:?}", args.op),
        trials: args.trials,
        step: h,
        threshold: args.threshold,
        max_relative_error: max_err,
        worst_trial,
        worst_report: errors.get(worst_trial).and_then(|e| e.1.clone()),
        pass,
    };
    let text = format!(
        "max relative error: {max_err:.3e} over {} trials (threshold {:.1e})\nverdict: {}\n",
        args.trials,
        args.threshold,
        verdict_word(pass)
    );
    Ok(Outcome::verdict(to_value(&summary)?, text, pass))
}
