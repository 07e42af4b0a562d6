//! Deterministic synthetic problem generators.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{NewsvendorFile, PortfolioFile, ProblemFile};
use crate::linalg::Rows;
use crate::newsvendor::{Center, DemandSample, NewsvendorInstance, THETA_BOUNDS};
use crate::portfolio::{LinearPredictor, PortfolioInstance, PortfolioSample};
use crate::stationarity::SCHEMA;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenOptions {
    pub n: usize,
    pub dx: usize,
    pub dz: usize,
    /// Standard deviation of additive Gaussian noise on the outcomes.
    pub noise: f64,
    pub seed: u64,
}

impl GenOptions {
    fn check(&self) -> Result<()> {
        if self.n == 0 || self.dx == 0 || self.dz == 0 {
            return Err(Error::Invalid("n, dx and dz must be positive".into()));
        }
        if !(self.noise >= 0.0) || !self.noise.is_finite() {
            return Err(Error::Invalid(format!(
                "noise {} must be nonnegative",
                self.noise
            )));
        }
        Ok(())
    }
}

/// Portfolio data `r_n = θ₀ᵀx_n + noise·ε_n` with a random well-conditioned
/// covariance. The generating `θ₀` is attached as `theta_true`; with
/// `noise = 0` the data are realizable and `θ₀` has zero SPO loss.
pub fn gen_portfolio(opts: &GenOptions) -> Result<ProblemFile> {
    opts.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let (dx, dz) = (opts.dx, opts.dz);
    let theta: Rows = (0..dx)
        .map(|_| (0..dz).map(|_| rng.gen_range(0.05..0.3)).collect())
        .collect();
    let b: Rows = (0..dz)
        .map(|_| (0..dz).map(|_| rng.gen_range(-0.5..0.5)).collect())
        .collect();
    let mut sigma = vec![vec![0.0; dz]; dz];
    for i in 0..dz {
        for j in 0..=i {
            let v: f64 =
                (0..dz).map(|k| b[i][k] * b[j][k]).sum::<f64>() + if i == j { 0.5 } else { 0.0 };
            sigma[i][j] = v;
            sigma[j][i] = v;
        }
    }
    let predictor = LinearPredictor::new(theta.clone())?;
    let samples = (0..opts.n)
        .map(|_| {
            let x: Vec<f64> = (0..dx).map(|_| rng.gen_range(0.5..1.5)).collect();
            let mut r = predictor.predict(&x);
            if opts.noise > 0.0 {
                for v in r.iter_mut() {
                    *v += opts.noise * rng.sample::<f64, _>(StandardNormal);
                }
            }
            PortfolioSample { x, r, weight: None }
        })
        .collect();
    let instance = PortfolioInstance::new(sigma, 5.0, samples)?;
    Ok(ProblemFile::SpoPortfolio(PortfolioFile {
        schema: SCHEMA.to_string(),
        instance,
        theta_true: Some(theta),
    }))
}

/// Newsvendor data with demand `10 + 5·mean(x) + noise·ε`; the kernel
/// centers and the scenarios are the same observations.
pub fn gen_newsvendor(opts: &GenOptions) -> Result<ProblemFile> {
    opts.check()?;
    if opts.dz != 1 {
        return Err(Error::Invalid(
            "newsvendor decisions are scalar (dz = 1)".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let samples: Vec<DemandSample> = (0..opts.n)
        .map(|_| {
            let x: Vec<f64> = (0..opts.dx).map(|_| rng.gen_range(0.0..1.0)).collect();
            let mean = x.iter().sum::<f64>() / opts.dx as f64;
            let y = 10.0 + 5.0 * mean + opts.noise * rng.sample::<f64, _>(StandardNormal);
            DemandSample { x, y, weight: None }
        })
        .collect();
    let centers = samples
        .iter()
        .map(|s| Center {
            x: s.x.clone(),
            y: s.y,
        })
        .collect();
    let instance = NewsvendorInstance {
        h: 1.0,
        b: 3.0,
        centers,
        samples,
        theta_bounds: THETA_BOUNDS,
    };
    instance.validate()?;
    Ok(ProblemFile::NewsvendorKernel(NewsvendorFile {
        schema: SCHEMA.to_string(),
        instance,
    }))
}
