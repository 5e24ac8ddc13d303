//! Desk-scale word-vector trainers over aggregated co-occurrence counts and
//! checks of the factorizations they converge to.
//!
//! Every objective is written as a function of the score matrix
//! `S = U Vᵀ (+ a 1ᵀ + 1 bᵀ)`, so one gradient routine serves all of them:
//! `∂L/∂U = G V`, `∂L/∂V = Gᵀ U`, `∂L/∂a = G 1`, `∂L/∂b = Gᵀ 1` with
//! `G = ∂L/∂S`.

mod ansatz;
mod io;
mod loss;
mod train;
mod verify;

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cooccurrence::CoocModel;
use crate::ifm::{IfmError, IfmModel};

pub use ansatz::{ansatz_errors, ansatz_pair, AnsatzErrors, AnsatzParams};
pub use io::{read_pair, write_pair};
pub use loss::{evaluate_loss, gradient_check, GradientCheck};
pub use train::{train, TrainResult};
pub use verify::{
    all_pairs, dissect_unclamped_bias, frequency_ratio_report, ratio_convention, softmax_target, target_matrix,
    verify_factorization, BiasFit, EntryError, FactorizationReport, FrequencyRatioReport, Side,
};

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("no positive co-occurrences to train on")]
    EmptyCounts,
    #[error("vocabulary of {size} exceeds the softmax-nll cap of {cap}")]
    VocabCap { size: usize, cap: usize },
    #[error("loss became non-finite at epoch {epoch}")]
    Divergence { epoch: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("row {0} has no non-occurring columns, so beta must be 1")]
    FullRow(usize),
    #[error("pair has no bias parameters")]
    NoBiases,
    #[error("frequencies are constant; the exponent is unidentifiable")]
    DegenerateFrequencies,
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Ifm(#[from] IfmError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    /// GloVe without bias terms: `u·v = log F`.
    GloveClamped,
    /// GloVe with biases: `u·v + a + b = log F`.
    Glove,
    /// Full-softmax skip-gram negative log-likelihood.
    SoftmaxNll,
    /// Weighted least squares of `u·v` against `log(F / f^m_t)`.
    SoftmaxRegression,
    /// Least squares against the closed-form negative-sampling target.
    SgnsExact,
    /// Logistic negative sampling with stochastic negatives.
    SgnsSampled,
}

impl Objective {
    pub const ALL: [Objective; 6] = [
        Self::GloveClamped,
        Self::Glove,
        Self::SoftmaxNll,
        Self::SoftmaxRegression,
        Self::SgnsExact,
        Self::SgnsSampled,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::GloveClamped => "glove-clamped",
            Self::Glove => "glove",
            Self::SoftmaxNll => "softmax-nll",
            Self::SoftmaxRegression => "softmax-regression",
            Self::SgnsExact => "sgns-exact",
            Self::SgnsSampled => "sgns-sampled",
        }
    }

    pub fn has_biases(self) -> bool {
        self == Self::Glove
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Objective {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|o| o.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Self::ALL.iter().map(|o| o.name()).collect();
                format!("unknown objective `{s}` (expected one of {})", names.join(", "))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub objective: Objective,
    pub dim: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Negative-sampling noise exponent.
    pub alpha: f64,
    /// Negatives per positive for the SGNS objectives.
    pub negatives: usize,
    /// GloVe weight `min((F / x_max)^weight_exponent, 1)`.
    pub x_max: f64,
    pub weight_exponent: f64,
    /// Stop when the relative loss change drops below this; 0 runs to the epoch cap.
    pub tolerance: f64,
    /// Halve the learning rate and retry whenever a step increases the loss.
    pub halve_on_increase: bool,
    /// Half-width of the uniform initialization; `None` means `0.5 / dim`.
    pub init_scale: Option<f64>,
    pub softmax_vocab_cap: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            objective: Objective::GloveClamped,
            dim: 10,
            learning_rate: 0.05,
            epochs: 1000,
            seed: 0,
            alpha: 0.75,
            negatives: 5,
            x_max: 100.0,
            weight_exponent: 0.75,
            tolerance: 1e-9,
            halve_on_increase: true,
            init_scale: None,
            softmax_vocab_cap: 2000,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), EmbeddingError> {
        let bad = |m: &str| Err(EmbeddingError::Config(m.to_string()));
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad("alpha must lie in [0, 1]");
        }
        if self.negatives == 0 {
            return bad("negatives must be at least 1");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.dim == 0 {
            return bad("dim must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if !(self.x_max > 0.0) {
            return bad("x_max must be positive");
        }
        if let Some(s) = self.init_scale {
            if !(s >= 0.0 && s.is_finite()) {
                return bad("init scale must be finite and non-negative");
            }
        }
        Ok(())
    }

    pub fn target_params(&self) -> TargetParams {
        TargetParams {
            alpha: self.alpha,
            negatives: self.negatives,
        }
    }
}

/// Hyper-parameters that enter the negative-sampling target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetParams {
    pub alpha: f64,
    pub negatives: usize,
}

impl Default for TargetParams {
    fn default() -> Self {
        Self {
            alpha: 0.75,
            negatives: 5,
        }
    }
}

/// Dense co-occurrence counts with row marginals, as consumed by the trainers.
#[derive(Debug, Clone, PartialEq)]
pub struct CountTable {
    counts: Array2<f64>,
    marginals: Array1<f64>,
    total: f64,
}

impl CountTable {
    /// Any square non-negative matrix; marginals are row sums.
    pub fn from_dense(counts: Array2<f64>) -> Result<Self, EmbeddingError> {
        if !counts.is_square() {
            return Err(EmbeddingError::Shape("count matrix must be square".into()));
        }
        if counts.iter().any(|&c| !(c.is_finite() && c >= 0.0)) {
            return Err(EmbeddingError::Config("counts must be finite and non-negative".into()));
        }
        let marginals = counts.sum_axis(Axis(1));
        let total = marginals.sum();
        Ok(Self {
            counts,
            marginals,
            total,
        })
    }

    pub fn from_cooc(model: &CoocModel) -> Self {
        let n = model.vocab_size();
        let mut counts = Array2::zeros((n, n));
        for (t, s, v) in model.entries() {
            counts[[t as usize, s as usize]] = v;
        }
        Self::from_dense(counts).expect("co-occurrence counts are valid")
    }

    pub fn from_ifm(model: &IfmModel) -> Result<Self, EmbeddingError> {
        Ok(Self::from_cooc(&model.to_cooc_model()?))
    }

    pub fn len(&self) -> usize {
        self.counts.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0.0
    }

    pub fn counts(&self) -> &Array2<f64> {
        &self.counts
    }

    /// `f^m_t` as row sums.
    pub fn marginals(&self) -> &Array1<f64> {
        &self.marginals
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    /// Positive entries in row-major order.
    pub fn positive(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.counts
            .indexed_iter()
            .filter(|(_, &c)| c > 0.0)
            .map(|((t, s), &c)| (t, s, c))
    }

    pub fn transposed(&self) -> Self {
        Self::from_dense(self.counts.t().to_owned()).expect("transpose of valid counts")
    }
}

/// Two vector families `U`, `V` and optional GloVe biases `a`, `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingPair {
    pub u: Array2<f64>,
    pub v: Array2<f64>,
    pub a: Option<Array1<f64>>,
    pub b: Option<Array1<f64>>,
    pub objective: Objective,
}

impl EmbeddingPair {
    pub fn new(u: Array2<f64>, v: Array2<f64>, objective: Objective) -> Result<Self, EmbeddingError> {
        if u.dim() != v.dim() {
            return Err(EmbeddingError::Shape(format!(
                "U is {:?} but V is {:?}",
                u.dim(),
                v.dim()
            )));
        }
        let n = u.nrows();
        let (a, b) = if objective.has_biases() {
            (Some(Array1::zeros(n)), Some(Array1::zeros(n)))
        } else {
            (None, None)
        };
        Ok(Self { u, v, a, b, objective })
    }

    pub fn zeros(n: usize, k: usize, objective: Objective) -> Self {
        Self::new(Array2::zeros((n, k)), Array2::zeros((n, k)), objective).expect("equal shapes")
    }

    pub fn vocab_size(&self) -> usize {
        self.u.nrows()
    }

    pub fn dim(&self) -> usize {
        self.u.ncols()
    }

    /// `U Vᵀ`, plus `a_t + b_s` when biases are present.
    pub fn scores(&self) -> Array2<f64> {
        let mut s = self.u.dot(&self.v.t());
        if let (Some(a), Some(b)) = (&self.a, &self.b) {
            for ((t, c), x) in s.indexed_iter_mut() {
                *x += a[t] + b[c];
            }
        }
        s
    }

    /// Inner products only, without biases.
    pub fn inner_products(&self) -> Array2<f64> {
        self.u.dot(&self.v.t())
    }
}
