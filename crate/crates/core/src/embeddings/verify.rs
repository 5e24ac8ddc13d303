use ndarray::Array2;
use serde::Serialize;

use super::loss::check_shapes;
use super::{CountTable, EmbeddingError, EmbeddingPair, Objective, TargetParams};
use crate::stats::{linear_regression, std_dev};

/// Convergence target of each objective on positive entries; non-occurring
/// entries are `NaN`.
///
/// * GloVe (both forms): `log F`.
/// * Softmax (both forms): `log(F / f^m_t)`.
/// * `sgns-exact`: `−log[(F / f^m_t) · M_α / (f^m_s)^α] + log k`.
/// * `sgns-sampled`: the stationary point of the logistic objective,
///   `log[(F / f^m_t) · M_α / (f^m_s)^α] − log k`.
pub fn target_matrix(objective: Objective, counts: &CountTable, params: &TargetParams) -> Array2<f64> {
    let c = counts.counts();
    let f = counts.marginals();
    let m_alpha: f64 = f.iter().filter(|&&x| x > 0.0).map(|x| x.powf(params.alpha)).sum();
    let log_k = (params.negatives as f64).ln();
    Array2::from_shape_fn(c.raw_dim(), |(t, s)| {
        let x = c[[t, s]];
        if x <= 0.0 {
            return f64::NAN;
        }
        let conditional = (x / f[t]).ln();
        let shifted = conditional + m_alpha.ln() - params.alpha * f[s].ln();
        match objective {
            Objective::Glove | Objective::GloveClamped => x.ln(),
            Objective::SoftmaxNll | Objective::SoftmaxRegression => conditional,
            Objective::SgnsExact => -shifted + log_k,
            Objective::SgnsSampled => shifted - log_k,
        }
    })
}

/// `log(F / f^m_t)` on positive entries, as `(t, s, value)` in row-major order.
pub fn softmax_target(counts: &CountTable) -> Vec<(usize, usize, f64)> {
    let target = target_matrix(Objective::SoftmaxNll, counts, &TargetParams::default());
    counts
        .positive()
        .map(|(t, s, _)| (t, s, target[[t, s]]))
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct EntryError {
    pub t: usize,
    pub s: usize,
    pub predicted: f64,
    pub target: f64,
    pub error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FactorizationReport {
    pub objective: Objective,
    pub positive_entries: usize,
    pub max_abs_error: f64,
    pub mean_abs_error: f64,
    pub entries: Vec<EntryError>,
}

impl FactorizationReport {
    pub fn converged(&self, tolerance: f64) -> bool {
        self.max_abs_error <= tolerance
    }
}

/// Compares the pair's scores with its objective's target on positive
/// entries only; non-occurring pairs diverge to −∞ and are excluded.
pub fn verify_factorization(
    pair: &EmbeddingPair,
    counts: &CountTable,
    params: &TargetParams,
) -> Result<FactorizationReport, EmbeddingError> {
    check_shapes(pair, counts)?;
    let target = target_matrix(pair.objective, counts, params);
    let scores = pair.scores();
    let entries: Vec<EntryError> = counts
        .positive()
        .map(|(t, s, _)| {
            let predicted = scores[[t, s]];
            let target = target[[t, s]];
            EntryError {
                t,
                s,
                predicted,
                target,
                error: (predicted - target).abs(),
            }
        })
        .collect();
    let max_abs_error = entries.iter().map(|e| e.error).fold(0.0, f64::max);
    let mean_abs_error = if entries.is_empty() {
        0.0
    } else {
        entries.iter().map(|e| e.error).sum::<f64>() / entries.len() as f64
    };
    Ok(FactorizationReport {
        objective: pair.objective,
        positive_entries: entries.len(),
        max_abs_error,
        mean_abs_error,
        entries,
    })
}

/// Which family supplies the differenced vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    /// `(u_t − u_s)·v_w`.
    UDiff,
    /// `(v_t − v_s)·u_w`.
    VDiff,
}

impl std::str::FromStr for Side {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "u" | "u-diff" => Ok(Self::UDiff),
            "v" | "v-diff" => Ok(Self::VDiff),
            other => Err(format!("unknown side `{other}` (expected u-diff|v-diff)")),
        }
    }
}

/// Which differences carry the frequency ratio on IFM-valued counts, and
/// with what factor on `log(f_s / f_t)`. Unclamped GloVe has none: its
/// biases absorb the frequencies.
pub fn ratio_convention(objective: Objective, alpha: f64) -> Option<(Side, f64)> {
    match objective {
        Objective::GloveClamped => Some((Side::UDiff, -1.0)),
        Objective::Glove => None,
        Objective::SoftmaxNll | Objective::SoftmaxRegression => Some((Side::VDiff, -1.0)),
        Objective::SgnsExact => Some((Side::VDiff, 1.0 - alpha)),
        Objective::SgnsSampled => Some((Side::VDiff, alpha - 1.0)),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FrequencyRatioReport {
    pub side: Side,
    pub scale: f64,
    pub pairs: usize,
    pub probes: usize,
    /// `max |(x_t − x_s)·y_w − scale·log(f_s / f_t)|` over pairs and probes.
    pub max_deviation: f64,
    pub mean_deviation: f64,
    /// Largest across-probe standard deviation of the action, over pairs.
    pub max_probe_std: f64,
}

/// Ordered pairs `(t, s)` with `t < s`.
pub fn all_pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|t| (t + 1..n).map(move |s| (t, s))).collect()
}

/// Measures how far vector differences acting on every probe vector are
/// from `scale · log(f_s / f_t)`, and how constant they are across probes.
pub fn frequency_ratio_report(
    pair: &EmbeddingPair,
    freqs: &[f64],
    side: Side,
    scale: f64,
    pairs: &[(usize, usize)],
) -> Result<FrequencyRatioReport, EmbeddingError> {
    let n = pair.vocab_size();
    if freqs.len() != n {
        return Err(EmbeddingError::Shape(format!(
            "{} frequencies for {n} vectors",
            freqs.len()
        )));
    }
    if let Some(&(t, s)) = pairs.iter().find(|&&(t, s)| t >= n || s >= n) {
        return Err(EmbeddingError::Shape(format!("pair ({t}, {s}) out of range")));
    }
    // products[i, w] = x_i · y_w
    let products = match side {
        Side::UDiff => pair.u.dot(&pair.v.t()),
        Side::VDiff => pair.v.dot(&pair.u.t()),
    };
    let mut max_deviation = 0.0f64;
    let mut sum_deviation = 0.0;
    let mut max_probe_std = 0.0f64;
    for &(t, s) in pairs {
        let predicted = scale * (freqs[s] / freqs[t]).ln();
        let actions: Vec<f64> = (0..n).map(|w| products[[t, w]] - products[[s, w]]).collect();
        for &a in &actions {
            let d = (a - predicted).abs();
            max_deviation = max_deviation.max(d);
            sum_deviation += d;
        }
        max_probe_std = max_probe_std.max(std_dev(&actions));
    }
    let cells = pairs.len() * n;
    Ok(FrequencyRatioReport {
        side,
        scale,
        pairs: pairs.len(),
        probes: n,
        max_deviation,
        mean_deviation: if cells == 0 { 0.0 } else { sum_deviation / cells as f64 },
        max_probe_std,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BiasFit {
    /// Slope of `a_t` against `log f_t`.
    pub gamma: f64,
    pub r_squared: f64,
    /// Slope of `b_s` against `log f_s`.
    pub gamma_context: f64,
    pub r_squared_context: f64,
}

/// Fits `e^{a_t} ∝ f_t^γ` (and likewise for `b`) by regressing biases on
/// log frequency.
pub fn dissect_unclamped_bias(pair: &EmbeddingPair, freqs: &[f64]) -> Result<BiasFit, EmbeddingError> {
    let (Some(a), Some(b)) = (&pair.a, &pair.b) else {
        return Err(EmbeddingError::NoBiases);
    };
    if freqs.len() != a.len() {
        return Err(EmbeddingError::Shape(format!(
            "{} frequencies for {} biases",
            freqs.len(),
            a.len()
        )));
    }
    let logs: Vec<f64> = freqs.iter().map(|f| f.ln()).collect();
    let fa = linear_regression(&logs, a.as_slice().expect("contiguous"))
        .ok_or(EmbeddingError::DegenerateFrequencies)?;
    let fb = linear_regression(&logs, b.as_slice().expect("contiguous"))
        .ok_or(EmbeddingError::DegenerateFrequencies)?;
    Ok(BiasFit {
        gamma: fa.slope,
        r_squared: fa.r_squared,
        gamma_context: fb.slope,
        r_squared_context: fb.r_squared,
    })
}
