//! Response mechanisms that generate a data defect correlation: a logit
//! propensity model (analytic limits and a finite-population simulation),
//! Heckman-style latent selection, and multi-stage sampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{ddc_population_oracle, FinitePopulation};

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal distribution function, via `erfc` so both tails keep
/// full relative precision.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `logit Pr(R = 1 | Y) = alpha + beta * Y` for a binary `Y` with mean `mu`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogitResponseModel {
    pub alpha: f64,
    pub beta: f64,
    pub mu: f64,
}

impl LogitResponseModel {
    pub fn new(alpha: f64, beta: f64, mu: f64) -> Result<Self> {
        if !(alpha.is_finite() && beta.is_finite()) {
            return Err(Error::InvalidArgument(
                "alpha and beta must be finite".into(),
            ));
        }
        if !(mu > 0.0 && mu < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "mu {mu} must lie in (0, 1)"
            )));
        }
        Ok(Self { alpha, beta, mu })
    }

    fn propensity(&self, y: bool) -> f64 {
        logistic(self.alpha + if y { self.beta } else { 0.0 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogitLimits {
    /// Limiting response fraction `p`.
    pub f_limit: f64,
    /// Limiting ddc.
    pub rho_limit: f64,
}

/// Large-`N` limits of the response fraction and of the ddc.
pub fn logit_limits(model: &LogitResponseModel) -> LogitLimits {
    let p0 = model.propensity(false);
    let p1 = model.propensity(true);
    let mu = model.mu;
    let f = (1.0 - mu) * p0 + mu * p1;
    let rho = (p1 - p0) * (mu * (1.0 - mu)).sqrt() / (f * (1.0 - f)).sqrt();
    LogitLimits {
        f_limit: f,
        rho_limit: rho,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BiasMse {
    pub bias: f64,
    pub mse: f64,
    /// Sampling variance of the respondent mean at `n = f N`.
    pub variance: f64,
}

/// Asymptotic bias of the respondent mean and its MSE at population size `N`.
///
/// `bias = rho * sqrt((1 - f) / f) * sigma_Y` and
/// `mse = bias^2 + (1 - f) / (f N) * sigma_Y^2`, with `f` and `rho` the
/// large-`N` limits and `sigma_Y^2 = mu (1 - mu)`.
pub fn logit_bias_mse(model: &LogitResponseModel, population: u64) -> Result<BiasMse> {
    if population < 2 {
        return Err(Error::InvalidArgument(
            "population must be at least 2".into(),
        ));
    }
    let LogitLimits {
        f_limit: f,
        rho_limit,
    } = logit_limits(model);
    if !(f > 0.0 && f < 1.0) || f * (1.0 - f) == 0.0 {
        return Err(Error::DegenerateResponse(f));
    }
    let var_y = model.mu * (1.0 - model.mu);
    let bias = rho_limit * ((1.0 - f) / f).sqrt() * var_y.sqrt();
    let variance = (1.0 - f) / (f * population as f64) * var_y;
    Ok(BiasMse {
        bias,
        mse: bias * bias + variance,
        variance,
    })
}

/// Per-replication outcome of [`simulate_logit_population`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Replication {
    pub f: f64,
    pub rho: f64,
    pub error: f64,
    /// `(Ybar_n - Ybar_N) / sqrt((1 - f) sigma^2 / n)`, which equals `rho sqrt(N)`.
    pub z: f64,
    /// Redraws needed before a usable population appeared.
    pub redraws: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

impl MeanSd {
    fn of(values: impl Iterator<Item = f64> + Clone) -> Self {
        let n = values.clone().count() as f64;
        let mean = values.clone().sum::<f64>() / n;
        let sd = if n > 1.0 {
            (values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, sd }
    }

    /// Monte Carlo standard error of the mean over `reps` replications.
    pub fn standard_error(&self, reps: usize) -> f64 {
        self.sd / (reps as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationSummary {
    pub model: LogitResponseModel,
    pub population: u64,
    pub replications: usize,
    pub seed: u64,
    pub f: MeanSd,
    pub rho: MeanSd,
    pub error: MeanSd,
    pub z: MeanSd,
    pub limits: LogitLimits,
    pub redraws: u64,
    /// More than 1% of draws had to be redrawn.
    pub redraw_warning: bool,
    pub runs: Vec<Replication>,
}

/// Gives replication `index` its own ChaCha stream so results do not depend
/// on evaluation order.
pub fn replication_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

const MAX_REDRAWS: u32 = 1000;

/// Draws finite populations from the logit model and measures the empirical
/// response fraction, ddc and error in each.
pub fn simulate_logit_population(
    model: &LogitResponseModel,
    population: u64,
    seed: u64,
    replications: usize,
) -> Result<SimulationSummary> {
    if population < 100 {
        return Err(Error::InvalidArgument(
            "population must be at least 100".into(),
        ));
    }
    if replications == 0 {
        return Err(Error::InvalidArgument(
            "replications must be positive".into(),
        ));
    }
    let p0 = model.propensity(false);
    let p1 = model.propensity(true);
    let size = population as usize;

    let runs: Vec<Replication> = (0..replications as u64)
        .into_par_iter()
        .map(|index| -> Result<Replication> {
            let mut rng = replication_rng(seed, index);
            let mut redraws = 0;
            loop {
                let mut y = Vec::with_capacity(size);
                let mut r = Vec::with_capacity(size);
                for _ in 0..size {
                    let yi = rng.gen::<f64>() < model.mu;
                    let ri = rng.gen::<f64>() < if yi { p1 } else { p0 };
                    y.push(if yi { 1.0 } else { 0.0 });
                    r.push(ri);
                }
                let pop = match FinitePopulation::unweighted(y, r) {
                    Ok(pop) => pop,
                    Err(Error::UndefinedCorrelation(_)) => {
                        redraws += 1;
                        if redraws > MAX_REDRAWS {
                            return Err(Error::DegenerateResponse(p0.max(p1)));
                        }
                        continue;
                    }
                    Err(e) => return Err(e),
                };
                let rho = match ddc_population_oracle(&pop) {
                    Ok(rho) => rho,
                    Err(Error::UndefinedCorrelation(_)) => {
                        redraws += 1;
                        if redraws > MAX_REDRAWS {
                            return Err(Error::DegenerateResponse(p0.max(p1)));
                        }
                        continue;
                    }
                    Err(e) => return Err(e),
                };
                let n = pop.respondents() as f64;
                let f = n / population as f64;
                let error = pop.sample_mean() - pop.population_mean();
                let sd = pop.population_sd();
                let z = error / ((1.0 - f) * sd * sd / n).sqrt();
                return Ok(Replication {
                    f,
                    rho,
                    error,
                    z,
                    redraws,
                });
            }
        })
        .collect::<Result<_>>()?;

    let redraws: u64 = runs.iter().map(|r| u64::from(r.redraws)).sum();
    let total_draws = replications as u64 + redraws;
    Ok(SimulationSummary {
        model: *model,
        population,
        replications,
        seed,
        f: MeanSd::of(runs.iter().map(|r| r.f)),
        rho: MeanSd::of(runs.iter().map(|r| r.rho)),
        error: MeanSd::of(runs.iter().map(|r| r.error)),
        z: MeanSd::of(runs.iter().map(|r| r.z)),
        limits: logit_limits(model),
        redraws,
        redraw_warning: redraws as f64 > 0.01 * total_draws as f64,
        runs,
    })
}

/// Latent-selection parameters: correlation `r` between the outcome and
/// selection errors, and standardized selection threshold `z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeckmanParams {
    pub r: f64,
    pub z: f64,
}

impl HeckmanParams {
    pub fn new(r: f64, z: f64) -> Result<Self> {
        if !(r.is_finite() && (-1.0..=1.0).contains(&r)) {
            return Err(Error::InvalidArgument(format!("r {r} must lie in [-1, 1]")));
        }
        if !z.is_finite() {
            return Err(Error::InvalidArgument("z must be finite".into()));
        }
        Ok(Self { r, z })
    }
}

/// `r * phi(z) / sqrt(Phi(-z) (1 - Phi(-z)))`.
pub fn heckman_ddc(params: &HeckmanParams) -> Result<f64> {
    let HeckmanParams { r, z } = *params;
    let upper = normal_cdf(-z);
    let lower = normal_cdf(z);
    if upper < f64::MIN_POSITIVE || lower < f64::MIN_POSITIVE {
        return Err(Error::TailUnderflow(z));
    }
    Ok(r * normal_pdf(z) / (upper * lower).sqrt())
}

/// Monte Carlo estimate of `corr(U1, 1{U2 >= z})` for standard bivariate
/// normal `(U1, U2)` with correlation `r`.
pub fn heckman_oracle(params: &HeckmanParams, draws: usize, seed: u64) -> Result<f64> {
    heckman_monte_carlo(params, draws, seed, false)
}

/// As [`heckman_oracle`], but every draw is paired with the one that negates
/// the idiosyncratic selection error. For fixed `e1` the selection indicator
/// is monotone in `e2`, so the pair is negatively correlated.
pub fn heckman_oracle_antithetic(params: &HeckmanParams, draws: usize, seed: u64) -> Result<f64> {
    heckman_monte_carlo(params, draws, seed, true)
}

fn heckman_monte_carlo(
    params: &HeckmanParams,
    draws: usize,
    seed: u64,
    antithetic: bool,
) -> Result<f64> {
    if draws < 2 {
        return Err(Error::InvalidArgument("need at least two draws".into()));
    }
    let HeckmanParams { r, z } = *params;
    let s = (1.0 - r * r).sqrt();
    let mut rng = replication_rng(seed, 0);
    let (mut su, mut sr, mut suu, mut srr, mut sur) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let mut count = 0usize;
    let mut push = |e1: f64, e2: f64| {
        let u1 = e1;
        let u2 = r * e1 + s * e2;
        let sel = if u2 >= z { 1.0 } else { 0.0 };
        su += u1;
        sr += sel;
        suu += u1 * u1;
        srr += sel;
        sur += u1 * sel;
        count += 1;
    };
    let base = if antithetic { draws / 2 } else { draws };
    for _ in 0..base {
        let e1: f64 = rng.sample(StandardNormal);
        let e2: f64 = rng.sample(StandardNormal);
        push(e1, e2);
        if antithetic {
            push(e1, -e2);
        }
    }
    let n = count as f64;
    let cov = sur / n - (su / n) * (sr / n);
    let var_u = suu / n - (su / n) * (su / n);
    let var_r = srr / n - (sr / n) * (sr / n);
    if var_r <= 0.0 || var_u <= 0.0 {
        return Err(Error::UndefinedCorrelation(
            "no variation in the selection indicator; increase draws".into(),
        ));
    }
    Ok(cov / (var_u * var_r).sqrt())
}

/// One stage of a multi-stage selection: `realized` units kept out of
/// `population`. `persons` gives the stage population in persons when the
/// stage counts other units (e.g. households).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingStage {
    pub name: String,
    pub population: u64,
    pub realized: u64,
    pub persons: Option<u64>,
}

impl SamplingStage {
    pub fn new(name: impl Into<String>, population: u64, realized: u64) -> Self {
        Self {
            name: name.into(),
            population,
            realized,
            persons: None,
        }
    }

    pub fn with_persons(mut self, persons: u64) -> Self {
        self.persons = Some(persons);
        self
    }

    pub fn fraction(&self) -> f64 {
        self.realized as f64 / self.population as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DominatingPopulation {
    /// Person population of the first stage where representativeness breaks.
    pub dps: u64,
    pub per_stage_fractions: Vec<f64>,
    /// Product of the per-stage fractions.
    pub overall_fraction: f64,
}

/// Population size that governs the error amplification when the sample
/// first becomes unrepresentative at `first_biased_stage` (1-based).
pub fn dominating_population(
    stages: &[SamplingStage],
    first_biased_stage: usize,
) -> Result<DominatingPopulation> {
    if stages.is_empty() {
        return Err(Error::InvalidStages("no stages".into()));
    }
    if first_biased_stage == 0 || first_biased_stage > stages.len() {
        return Err(Error::InvalidStages(format!(
            "first biased stage {first_biased_stage} outside 1..={}",
            stages.len()
        )));
    }
    for s in stages {
        if s.population == 0 || s.realized == 0 || s.realized > s.population {
            return Err(Error::InvalidStages(format!(
                "stage '{}' has realized {} of population {}",
                s.name, s.realized, s.population
            )));
        }
    }
    for w in stages.windows(2) {
        if w[1].population != w[0].realized {
            return Err(Error::InvalidStages(format!(
                "stage '{}' population {} does not equal the previous stage's realized {}",
                w[1].name, w[1].population, w[0].realized
            )));
        }
    }
    let per_stage_fractions: Vec<f64> = stages.iter().map(SamplingStage::fraction).collect();
    let stage = &stages[first_biased_stage - 1];
    Ok(DominatingPopulation {
        dps: stage.persons.unwrap_or(stage.population),
        overall_fraction: per_stage_fractions.iter().product(),
        per_stage_fractions,
    })
}
