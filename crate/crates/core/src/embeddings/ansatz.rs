use ndarray::Array2;

use super::{CountTable, EmbeddingError, EmbeddingPair, Objective};

/// Per-row ansatz parameters: the probability mass `beta_t` placed on
/// occurring columns and the number `n_t` of non-occurring columns.
#[derive(Debug, Clone, PartialEq)]
pub struct AnsatzParams {
    pub beta: Vec<f64>,
    pub non_occurring: Vec<usize>,
}

impl AnsatzParams {
    /// Rows with non-occurring columns must have `0 < beta < 1`; rows
    /// without any must have `beta = 1`.
    pub fn new(counts: &CountTable, beta: Vec<f64>) -> Result<Self, EmbeddingError> {
        let n = counts.len();
        if beta.len() != n {
            return Err(EmbeddingError::Shape(format!("{} betas for {n} rows", beta.len())));
        }
        let non_occurring: Vec<usize> = counts
            .counts()
            .rows()
            .into_iter()
            .map(|row| row.iter().filter(|&&c| c <= 0.0).count())
            .collect();
        for (t, (&b, &z)) in beta.iter().zip(&non_occurring).enumerate() {
            if z == 0 && b != 1.0 {
                return Err(EmbeddingError::FullRow(t));
            }
            if z > 0 && !(b > 0.0 && b < 1.0) {
                return Err(EmbeddingError::Config(format!("beta for row {t} must lie in (0, 1)")));
            }
        }
        Ok(Self { beta, non_occurring })
    }

    /// The same `beta` for every row that has non-occurring columns, 1 elsewhere.
    pub fn uniform(counts: &CountTable, beta: f64) -> Result<Self, EmbeddingError> {
        let betas = counts
            .counts()
            .rows()
            .into_iter()
            .map(|row| if row.iter().any(|&c| c <= 0.0) { beta } else { 1.0 })
            .collect();
        Self::new(counts, betas)
    }
}

/// Full-rank pair whose inner products are `log(beta_t F / f^m_t)` on
/// occurring entries and `log((1 − beta_t) / n_t)` elsewhere, so every
/// softmax row sums to one exactly. Built as `U = targets`, `V = I`.
pub fn ansatz_pair(counts: &CountTable, params: &AnsatzParams, k: usize) -> Result<EmbeddingPair, EmbeddingError> {
    let n = counts.len();
    if k != n {
        return Err(EmbeddingError::Config(format!(
            "the ansatz needs full rank (k = {n}), got k = {k}"
        )));
    }
    let c = counts.counts();
    let f = counts.marginals();
    let u = Array2::from_shape_fn((n, n), |(t, s)| {
        let beta = params.beta[t];
        if c[[t, s]] > 0.0 {
            (beta * c[[t, s]] / f[t]).ln()
        } else {
            ((1.0 - beta) / params.non_occurring[t] as f64).ln()
        }
    });
    EmbeddingPair::new(u, Array2::eye(n), Objective::SoftmaxNll)
}

/// Closed-form softmax errors of the ansatz.
#[derive(Debug, Clone, PartialEq)]
pub struct AnsatzErrors {
    /// `(t, s, (F / f^m_t)(1 − beta_t))` for occurring entries.
    pub positive: Vec<(usize, usize, f64)>,
    /// `(t, (1 − beta_t) / n_t)`, the probability left on each non-occurring column.
    pub non_occurring: Vec<(usize, f64)>,
}

pub fn ansatz_errors(counts: &CountTable, params: &AnsatzParams) -> AnsatzErrors {
    let f = counts.marginals();
    let positive = counts
        .positive()
        .map(|(t, s, x)| (t, s, x / f[t] * (1.0 - params.beta[t])))
        .collect();
    let non_occurring = params
        .non_occurring
        .iter()
        .enumerate()
        .filter(|(_, &z)| z > 0)
        .map(|(t, &z)| (t, (1.0 - params.beta[t]) / z as f64))
        .collect();
    AnsatzErrors {
        positive,
        non_occurring,
    }
}
