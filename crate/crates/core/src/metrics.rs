//! Exact error decomposition of a (weighted) survey mean.
//!
//! For a population of size `N` with outcome `Y`, recording indicator `R`
//! and respondent weights `w`, the error of the weighted mean factors as
//!
//! ```text
//! mean_w(Y) - mean_N(Y) = corr(Y, w*R) * sqrt((N - n_w) / n_w) * sd_N(Y)
//! ```
//!
//! where `n_w = n / (1 + CV_w^2)` is the Kish effective sample size. All
//! population moments here use denominator `N`, and `CV_w^2` uses
//! denominator `n` over mean-1 weights; with those conventions the identity
//! is exact rather than approximate.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for the consistency check between a reported design effect and
/// a reported weight coefficient of variation.
pub const DESIGN_EFFECT_CV_TOLERANCE: f64 = 1e-9;

/// Summary statistics for one survey wave.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyWave {
    pub survey_id: String,
    pub wave_start: NaiveDate,
    pub wave_end: NaiveDate,
    /// Respondent count.
    pub n: u64,
    /// Weighted estimate of the proportion.
    pub estimate: f64,
    /// Reported standard error, kept for reference only.
    pub se: Option<f64>,
    pub design_effect: Option<f64>,
    /// Coefficient of variation of the mean-1 weights.
    pub cv_w: Option<f64>,
}

impl SurveyWave {
    pub fn validate(&self) -> Result<()> {
        if self.wave_start > self.wave_end {
            return Err(Error::InvalidArgument(format!(
                "wave_start {} is after wave_end {}",
                self.wave_start, self.wave_end
            )));
        }
        if self.n == 0 {
            return Err(Error::InvalidArgument("n must be at least 1".into()));
        }
        check_proportion("estimate", self.estimate)?;
        if let Some(se) = self.se {
            if !(se.is_finite() && (0.0..=1.0).contains(&se)) {
                return Err(Error::InvalidArgument(format!("se {se} outside [0, 1]")));
            }
        }
        if let Some(de) = self.design_effect {
            if !(de.is_finite() && de >= 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "design_effect {de} must be >= 1"
                )));
            }
        }
        if let Some(cv) = self.cv_w {
            if !(cv.is_finite() && cv >= 0.0) {
                return Err(Error::InvalidArgument(format!("cv_w {cv} must be >= 0")));
            }
        }
        if let (Some(de), Some(cv)) = (self.design_effect, self.cv_w) {
            if (de - (1.0 + cv * cv)).abs() > DESIGN_EFFECT_CV_TOLERANCE {
                return Err(Error::InvalidArgument(format!(
                    "design_effect {de} disagrees with 1 + cv_w^2 = {}",
                    1.0 + cv * cv
                )));
            }
        }
        Ok(())
    }

    /// Design effect due to weighting. A reported design effect wins, then
    /// `1 + cv_w^2`, then 1. It is never backed out of `se`.
    pub fn effective_design_effect(&self) -> f64 {
        self.design_effect
            .or(self.cv_w.map(|cv| 1.0 + cv * cv))
            .unwrap_or(1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationFrame {
    /// Target population size in persons.
    pub size: u64,
    pub label: String,
}

impl PopulationFrame {
    pub fn new(size: u64, label: impl Into<String>) -> Result<Self> {
        if size == 0 {
            return Err(Error::InvalidArgument(
                "population size must be positive".into(),
            ));
        }
        Ok(Self {
            size,
            label: label.into(),
        })
    }
}

/// The factors of the error identity for one wave, plus derived quantities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorDecomposition {
    pub wave_end: NaiveDate,
    pub benchmark: f64,
    pub total_error: f64,
    pub ddc: f64,
    pub scarcity: f64,
    pub difficulty: f64,
    pub n_w: f64,
    pub design_effect: f64,
    /// Standardized actual error, `ddc * sqrt(N)`.
    pub z_w: f64,
    pub data_defect_index: f64,
    pub n_eff: f64,
    pub log10_n_eff: f64,
    /// Set when `ddc` was exactly zero and `n_eff` used the SRS expectation
    /// `1/(N-1)` in place of `ddc^2`.
    pub srs_floor_applied: bool,
}

impl ErrorDecomposition {
    /// `ddc * scarcity * difficulty`, which equals `total_error` up to rounding.
    pub fn reconstructed_error(&self) -> f64 {
        self.ddc * self.scarcity * self.difficulty
    }
}

fn check_proportion(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "{name} {value} outside [0, 1]"
        )))
    }
}

/// `sqrt((N - n_w) / n_w)`.
pub fn data_scarcity(n_w: f64, population: u64) -> Result<f64> {
    let big_n = population as f64;
    if !(n_w.is_finite() && n_w > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "n_w {n_w} must be positive"
        )));
    }
    if n_w >= big_n {
        return Err(Error::SampleExceedsPopulation { n_w, population });
    }
    Ok(((big_n - n_w) / n_w).sqrt())
}

/// Standard deviation of a binary outcome with population mean `p`.
pub fn binary_difficulty(p: f64) -> f64 {
    (p * (1.0 - p)).sqrt()
}

/// Decomposes one wave's error against a benchmark proportion.
pub fn decompose_wave(
    wave: &SurveyWave,
    frame: &PopulationFrame,
    benchmark_value: f64,
) -> Result<ErrorDecomposition> {
    wave.validate()?;
    check_proportion("benchmark", benchmark_value)?;
    if wave.n > frame.size {
        return Err(Error::SampleExceedsPopulation {
            n_w: wave.n as f64,
            population: frame.size,
        });
    }

    let design_effect = wave.effective_design_effect();
    let (n_w, design_effect) = kish_effective_n(wave.n, Weighting::DesignEffect(design_effect))?;
    let scarcity = data_scarcity(n_w, frame.size)?;
    let difficulty = binary_difficulty(benchmark_value);
    let total_error = wave.estimate - benchmark_value;

    let ddc = if difficulty == 0.0 {
        if total_error != 0.0 {
            return Err(Error::DegenerateBenchmark {
                benchmark: benchmark_value,
                total_error,
            });
        }
        0.0
    } else {
        ddc_from_error(total_error, n_w, frame.size, difficulty)?
    };

    let rho_sq = ddc * ddc;
    let srs_floor_applied = rho_sq == 0.0;
    let n_eff = bias_adjusted_neff(rho_sq, n_w, frame.size)?;

    Ok(ErrorDecomposition {
        wave_end: wave.wave_end,
        benchmark: benchmark_value,
        total_error,
        ddc,
        scarcity,
        difficulty,
        n_w,
        design_effect,
        z_w: ddc * (frame.size as f64).sqrt(),
        data_defect_index: rho_sq,
        n_eff,
        log10_n_eff: n_eff.log10(),
        srs_floor_applied,
    })
}

/// Recovers the data defect correlation from an observed error through the
/// standardized error `Z_w = error / (sqrt((1 - f_w) / n_w) * sigma)`, with
/// `ddc = Z_w / sqrt(N)`.
pub fn ddc_from_error(total_error: f64, n_w: f64, population: u64, sigma: f64) -> Result<f64> {
    if !total_error.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "total error {total_error} is not finite"
        )));
    }
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "sigma {sigma} must be nonnegative"
        )));
    }
    // validates 0 < n_w < N
    data_scarcity(n_w, population)?;
    if total_error == 0.0 {
        return Ok(0.0);
    }
    if sigma == 0.0 {
        return Err(Error::DegenerateBenchmark {
            benchmark: f64::NAN,
            total_error,
        });
    }
    let big_n = population as f64;
    let f_w = n_w / big_n;
    let z_w = total_error / (((1.0 - f_w) / n_w).sqrt() * sigma);
    Ok(z_w / big_n.sqrt())
}

/// Source of the weighting design effect for [`kish_effective_n`].
#[derive(Debug, Clone, Copy)]
pub enum Weighting<'a> {
    /// Respondent weights; any positive scale.
    Weights(&'a [f64]),
    DesignEffect(f64),
}

/// Returns `(n_w, design_effect)` with `n_w = n / (1 + CV_w^2)`.
pub fn kish_effective_n(n: u64, weighting: Weighting<'_>) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    let design_effect = match weighting {
        Weighting::DesignEffect(de) => {
            if !(de.is_finite() && de >= 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "design effect {de} must be >= 1"
                )));
            }
            de
        }
        Weighting::Weights(w) => {
            if w.len() as u64 != n {
                return Err(Error::Schema(format!(
                    "{} weights supplied for {n} respondents",
                    w.len()
                )));
            }
            1.0 + weight_cv_squared(w)?
        }
    };
    Ok((n as f64 / design_effect, design_effect))
}

/// Squared coefficient of variation of the weights after rescaling them to
/// mean 1, with denominator `n`.
pub fn weight_cv_squared(weights: &[f64]) -> Result<f64> {
    if weights.is_empty() {
        return Err(Error::InvalidWeights("no weights".into()));
    }
    if let Some(bad) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
        return Err(Error::InvalidWeights(format!(
            "weight {bad} is not strictly positive"
        )));
    }
    let n = weights.len() as f64;
    let mean = weights.iter().sum::<f64>() / n;
    let var = weights
        .iter()
        .map(|w| {
            let d = w / mean - 1.0;
            d * d
        })
        .sum::<f64>()
        / n;
    Ok(var)
}

/// Size of a simple random sample whose mean has the same MSE as the
/// observed estimate: `n_w / (N - n_w) / rho_sq`.
///
/// `rho_sq == 0` is replaced by the SRS expectation `1 / (N - 1)`, which
/// makes the result roughly `n_w` instead of infinite.
pub fn bias_adjusted_neff(rho_sq: f64, n_w: f64, population: u64) -> Result<f64> {
    if !(rho_sq.is_finite() && rho_sq >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "rho^2 {rho_sq} must be >= 0"
        )));
    }
    data_scarcity(n_w, population)?;
    if population < 2 {
        return Err(Error::InvalidArgument(
            "population must be at least 2".into(),
        ));
    }
    let big_n = population as f64;
    let rho_sq = if rho_sq == 0.0 {
        srs_expected_rho_sq(population)
    } else {
        rho_sq
    };
    Ok(n_w / (big_n - n_w) / rho_sq)
}

/// Expected squared ddc under simple random sampling, taken as `1/(N-1)`.
pub fn srs_expected_rho_sq(population: u64) -> f64 {
    1.0 / (population as f64 - 1.0)
}

/// A fully enumerated population: outcomes for every unit, the recording
/// indicator, and weights for the recorded units in unit order.
#[derive(Debug, Clone, PartialEq)]
pub struct FinitePopulation {
    y: Vec<f64>,
    r: Vec<bool>,
    w: Option<Vec<f64>>,
}

impl FinitePopulation {
    pub fn new(y: Vec<f64>, r: Vec<bool>, w: Option<Vec<f64>>) -> Result<Self> {
        if y.len() != r.len() {
            return Err(Error::Schema(format!(
                "y has {} units but r has {}",
                y.len(),
                r.len()
            )));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "y contains non-finite values".into(),
            ));
        }
        let n = r.iter().filter(|&&ri| ri).count();
        if n == 0 || n == r.len() {
            return Err(Error::UndefinedCorrelation(
                "need at least one respondent and one nonrespondent".into(),
            ));
        }
        if let Some(w) = &w {
            if w.len() != n {
                return Err(Error::Schema(format!(
                    "{} weights for {n} respondents",
                    w.len()
                )));
            }
            weight_cv_squared(w)?;
        }
        Ok(Self { y, r, w })
    }

    pub fn unweighted(y: Vec<f64>, r: Vec<bool>) -> Result<Self> {
        Self::new(y, r, None)
    }

    pub fn size(&self) -> usize {
        self.y.len()
    }

    pub fn respondents(&self) -> u64 {
        self.r.iter().filter(|&&ri| ri).count() as u64
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn r(&self) -> &[bool] {
        &self.r
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.w.as_deref()
    }

    /// `R_w = w * R` over all units; nonrespondents are 0.
    pub fn weighted_indicator(&self) -> Vec<f64> {
        let mut weights = self.w.iter().flatten();
        self.r
            .iter()
            .map(|&ri| {
                if ri {
                    weights.next().copied().unwrap_or(1.0)
                } else {
                    0.0
                }
            })
            .collect()
    }

    pub fn population_mean(&self) -> f64 {
        self.y.iter().sum::<f64>() / self.y.len() as f64
    }

    /// Standard deviation of `Y` with denominator `N`.
    pub fn population_sd(&self) -> f64 {
        let mean = self.population_mean();
        let ss: f64 = self.y.iter().map(|v| (v - mean) * (v - mean)).sum();
        (ss / self.y.len() as f64).sqrt()
    }

    /// Weighted respondent mean (the plain respondent mean without weights).
    pub fn sample_mean(&self) -> f64 {
        let rw = self.weighted_indicator();
        let num: f64 = self.y.iter().zip(&rw).map(|(y, w)| y * w).sum();
        let den: f64 = rw.iter().sum();
        num / den
    }

    pub fn kish_effective_n(&self) -> Result<(f64, f64)> {
        match &self.w {
            Some(w) => kish_effective_n(self.respondents(), Weighting::Weights(w)),
            None => kish_effective_n(self.respondents(), Weighting::DesignEffect(1.0)),
        }
    }
}

/// Pearson correlation of `Y` and `R_w` over every unit of the population,
/// with denominator-`N` moments.
pub fn ddc_population_oracle(pop: &FinitePopulation) -> Result<f64> {
    let rw = pop.weighted_indicator();
    let n = pop.size() as f64;
    let mean_y = pop.population_mean();
    let mean_r = rw.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (y, r) in pop.y.iter().zip(&rw) {
        let dy = y - mean_y;
        let dr = r - mean_r;
        sxy += dy * dr;
        sxx += dy * dy;
        syy += dr * dr;
    }
    if sxx == 0.0 {
        return Err(Error::UndefinedCorrelation("Y has zero variance".into()));
    }
    if syy == 0.0 {
        return Err(Error::UndefinedCorrelation("R_w has zero variance".into()));
    }
    Ok(sxy / (sxx.sqrt() * syy.sqrt()))
}
