//! Survey data-quality analytics built on the data defect correlation (ddc).
//!
//! The error of a weighted survey mean against a benchmark splits exactly
//! into data quality (ddc), data quantity (scarcity) and problem difficulty
//! (outcome spread). From that identity this crate derives bias-adjusted
//! effective sample sizes, scenario corrections for outcomes that have no
//! benchmark, and simulation oracles for the response mechanisms that
//! produce a nonzero ddc.
//!
//! Module map:
//! - [`metrics`]: the decomposition, Kish and bias-adjusted sample sizes,
//!   and the brute-force population correlation.
//! - [`kendall`]: tau-b for comparing rankings.
//! - [`benchmark`]: benchmark series, imputation, sensitivity and revisions.
//! - [`scenarios`]: willingness/hesitancy corrections under a ddc split.
//! - [`response_models`]: logit and latent-selection mechanisms, multi-stage
//!   dominating population size.
//! - [`ingest`]: CSV schemas and composition comparisons.

pub mod benchmark;
pub mod error;
pub mod ingest;
pub mod kendall;
pub mod metrics;
pub mod response_models;
pub mod scenarios;

pub use error::{Error, Result};
pub use kendall::kendall_tau;
pub use metrics::{
    bias_adjusted_neff, ddc_from_error, ddc_population_oracle, decompose_wave, kish_effective_n,
    ErrorDecomposition, FinitePopulation, PopulationFrame, SurveyWave, Weighting,
};
