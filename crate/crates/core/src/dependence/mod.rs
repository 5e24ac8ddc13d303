//! Information quality ratio of co-occurrence samples, a parametric model
//! of how it depends on window radius, and the extrapolated lower bound on
//! its limit as the sample grows.

mod bound;
mod iqr;
mod model;

use thiserror::Error;

pub use bound::{
    extrapolate_limit, fit_reduction_power_law, iterate_with_rates, limits_per_m, read_rates_tsv, reduction_rates,
    write_rates_tsv, BoundResult, ReductionFit, ReductionRate, DEFAULT_RESIDUAL_THRESHOLD, DEFAULT_STEPS,
};
pub use iqr::{iqr, iqr_table, iqr_profile, ProfileConfig, ProfileRecord, IqrProfile};
pub use model::{dependence_model_predict, fit_dependence_model, fit_dependence_points, DependenceFit, SentenceStats};

#[derive(Debug, Error)]
pub enum DependenceError {
    #[error("co-occurrence table is empty")]
    Empty,
    #[error("joint entropy is zero (a single co-occurring pair type)")]
    ZeroEntropy,
    #[error("cannot sample {k} of {documents} documents")]
    InfeasibleK { k: usize, documents: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("profile covers {0} usable m values; at least 4 are needed")]
    TooFewM(usize),
    #[error("fit residual is not finite")]
    NonFiniteResidual,
    #[error("no pair of sample sizes k and 2k in the profile")]
    NoDoublingPairs,
    #[error("IQR mean is zero at k = {k}, m = {m}; the reduction rate is undefined")]
    ZeroMean { k: usize, m: usize },
    #[error("m = {m} has {points} positive rate points; at least 3 are needed")]
    InsufficientPoints { m: usize, points: usize },
    #[error("rates do not decay with sample size (gamma = {0})")]
    NonDecaying(f64),
    #[error("non-finite value at extrapolation step {0}")]
    NonFinite(usize),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
}
