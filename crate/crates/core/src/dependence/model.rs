use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{DependenceError, IqrProfile};
use crate::cooccurrence::{total_capacity, CapacityFormula};
use crate::corpus::Corpus;
use crate::stats::nelder_mead;

/// Sentence-length histogram and token count of a (sampled) corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceStats {
    pub histogram: BTreeMap<usize, u64>,
    pub tokens: u64,
}

impl SentenceStats {
    pub fn from_histogram(histogram: BTreeMap<usize, u64>) -> Self {
        let tokens = histogram.iter().map(|(&l, &c)| l as u64 * c).sum();
        Self { histogram, tokens }
    }

    pub fn from_corpus(corpus: &Corpus) -> Self {
        Self::from_histogram(corpus.sentence_length_histogram())
    }

    /// `T_m`.
    pub fn capacity(&self, m: usize, formula: CapacityFormula) -> f64 {
        total_capacity(&self.histogram, m, formula) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DependenceFit {
    pub nu: f64,
    pub m_max: f64,
    pub rho: f64,
    /// Sum of squared log residuals.
    pub residual: f64,
    /// Set when the measured profile or the residual surface is too flat
    /// in m for `nu` to be identified.
    pub flat: bool,
}

fn g(m: f64, nu: f64, m_max: f64) -> f64 {
    if m > m_max {
        1.0
    } else {
        m.powf(1.0 - nu) / m_max.powf(1.0 - nu)
    }
}

/// `Î/ρ = q_m G_m / (2m) + (1 − q_m) M / T_m` with `q_m = (T_m − T_{m−1}) / 2M`.
fn bracket(nu: f64, m_max: f64, stats: &SentenceStats, m: usize, formula: CapacityFormula) -> f64 {
    let tokens = stats.tokens as f64;
    let t_m = stats.capacity(m, formula);
    let q = (t_m - stats.capacity(m - 1, formula)) / (2.0 * tokens);
    let mf = m as f64;
    q * g(mf, nu, m_max) / (2.0 * mf) + (1.0 - q) * tokens / t_m
}

/// Predicted IQR at radius `m` for a sample with the given sentence
/// statistics. Infinite where `T_m = 0` (radius 1 under the default capacity).
pub fn dependence_model_predict(params: &DependenceFit, stats: &SentenceStats, m: usize, formula: CapacityFormula) -> f64 {
    assert!(m >= 1, "radius must be at least 1");
    params.rho * bracket(params.nu, params.m_max, stats, m, formula)
}

/// Fits `(nu, m_max, rho)` to the replicate means of a profile.
pub fn fit_dependence_model(
    profile: &IqrProfile,
    stats: &SentenceStats,
    formula: CapacityFormula,
) -> Result<DependenceFit, DependenceError> {
    let points: Vec<(usize, f64)> = profile.means().into_iter().map(|((_, m), (i, _))| (m, i)).collect();
    fit_dependence_points(&points, stats, formula)
}

/// Least squares in log space over `(m, iqr)` points. `rho` is profiled out
/// in closed form; `(nu, log m_max)` are found by grid search and refined by
/// Nelder–Mead from the best grid point. Points with `T_m = 0` or a
/// non-positive IQR are skipped.
pub fn fit_dependence_points(
    points: &[(usize, f64)],
    stats: &SentenceStats,
    formula: CapacityFormula,
) -> Result<DependenceFit, DependenceError> {
    let usable: Vec<(usize, f64)> = points
        .iter()
        .copied()
        .filter(|&(m, y)| m >= 1 && y > 0.0 && stats.capacity(m, formula) > 0.0)
        .collect();
    let distinct: BTreeSet<usize> = usable.iter().map(|p| p.0).collect();
    if distinct.len() < 4 {
        return Err(DependenceError::TooFewM(distinct.len()));
    }
    let log_y: Vec<f64> = usable.iter().map(|p| p.1.ln()).collect();
    // (residual, log rho) for fixed nu and m_max
    let profile_rho = |nu: f64, m_max: f64| -> (f64, f64) {
        if !(nu > 0.0 && m_max >= 1.0 && nu.is_finite() && m_max.is_finite()) {
            return (f64::INFINITY, f64::NAN);
        }
        let log_b: Vec<f64> = usable
            .iter()
            .map(|&(m, _)| bracket(nu, m_max, stats, m, formula).ln())
            .collect();
        let log_rho = log_y.iter().zip(&log_b).map(|(y, b)| y - b).sum::<f64>() / log_y.len() as f64;
        let r = log_y
            .iter()
            .zip(&log_b)
            .map(|(y, b)| (y - log_rho - b).powi(2))
            .sum::<f64>();
        (if r.is_nan() { f64::INFINITY } else { r }, log_rho)
    };

    let m_top = *distinct.iter().next_back().unwrap() as f64;
    let mut best = (f64::INFINITY, 1.0, 1.0);
    for i in 1..=40 {
        let nu = 0.1 * i as f64;
        for j in 0..=60 {
            let m_max = (4.0 * m_top).powf(j as f64 / 60.0);
            let (r, _) = profile_rho(nu, m_max);
            if r < best.0 {
                best = (r, nu, m_max);
            }
        }
    }
    if !best.0.is_finite() {
        return Err(DependenceError::NonFiniteResidual);
    }
    let objective = |p: &[f64]| profile_rho(p[0], p[1].exp()).0;
    let refined = nelder_mead(objective, &[best.1, best.2.ln()], &[0.05, 0.1], 5000, 1e-14);
    let (nu, m_max) = (refined.point[0], refined.point[1].exp());
    let (residual, log_rho) = profile_rho(nu, m_max);
    if !residual.is_finite() {
        return Err(DependenceError::NonFiniteResidual);
    }

    let ys: Vec<f64> = usable.iter().map(|p| p.1).collect();
    let mean = ys.iter().sum::<f64>() / ys.len() as f64;
    let spread = ys.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b)) - ys.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    let nudged = profile_rho(nu * 1.1, m_max).0;
    let flat = spread / mean < 1e-2 || (nudged - residual).abs() <= 1e-9 * (1.0 + residual);
    Ok(DependenceFit {
        nu,
        m_max,
        rho: log_rho.exp(),
        residual,
        flat,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy() -> SentenceStats {
        SentenceStats::from_histogram(BTreeMap::from([(5, 3)]))
    }

    #[test]
    fn toy_corpus_by_hand() {
        // T_1 = 0, T_2 = 3·(1·8) = 24, M = 15, q = 24/30 = 0.8,
        // G_2 = 2^{-1}/4^{-1} = 2, Î = 0.8·2/4 + 0.2·15/24 = 0.525
        let stats = toy();
        assert_eq!(stats.tokens, 15);
        assert_eq!(stats.capacity(2, CapacityFormula::Paper), 24.0);
        let params = DependenceFit {
            nu: 2.0,
            m_max: 4.0,
            rho: 1.0,
            residual: 0.0,
            flat: false,
        };
        let v = dependence_model_predict(&params, &stats, 2, CapacityFormula::Paper);
        assert!((v - 0.525).abs() < 1e-15);
        assert!(dependence_model_predict(&params, &stats, 1, CapacityFormula::Paper).is_infinite());
    }

    #[test]
    fn g_meets_one_at_cutoff() {
        for nu in [0.5, 1.8, 3.0] {
            assert_eq!(g(30.0, nu, 30.0), 1.0);
            assert!((g(30.0 - 1e-9, nu, 30.0) - 1.0).abs() < 1e-9);
            assert_eq!(g(31.0, nu, 30.0), 1.0);
        }
    }

    #[test]
    fn capacity_increments_telescope() {
        let stats = SentenceStats::from_histogram(BTreeMap::from([(3, 2), (7, 1), (12, 4)]));
        let l_max = 12;
        let sum: f64 = (1..=l_max)
            .map(|m| stats.capacity(m, CapacityFormula::Paper) - stats.capacity(m - 1, CapacityFormula::Paper))
            .sum();
        assert_eq!(sum, stats.capacity(l_max, CapacityFormula::Paper));
    }

    fn planted_stats() -> SentenceStats {
        SentenceStats::from_histogram((3..=70).map(|l| (l, 5 + (l % 7) as u64)).collect())
    }

    #[test]
    fn recovers_planted_parameters() {
        let stats = planted_stats();
        let truth = DependenceFit {
            nu: 1.8,
            m_max: 30.0,
            rho: 0.6,
            residual: 0.0,
            flat: false,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let points: Vec<(usize, f64)> = (2..80)
            .map(|m| {
                let v = dependence_model_predict(&truth, &stats, m, CapacityFormula::Paper);
                (m, v * (1.0 + 0.01 * rng.random_range(-1.0..1.0)))
            })
            .collect();
        let fit = fit_dependence_points(&points, &stats, CapacityFormula::Paper).unwrap();
        assert!((fit.nu / 1.8 - 1.0).abs() < 0.1, "{fit:?}");
        assert!((fit.m_max / 30.0 - 1.0).abs() < 0.1, "{fit:?}");
        assert!((fit.rho / 0.6 - 1.0).abs() < 0.1, "{fit:?}");
        assert!(!fit.flat);
    }

    #[test]
    fn constant_profile_is_flagged() {
        let stats = planted_stats();
        let points: Vec<(usize, f64)> = (2..20).map(|m| (m, 0.2)).collect();
        let fit = fit_dependence_points(&points, &stats, CapacityFormula::Paper).unwrap();
        assert!(fit.flat);
        assert!(fit.rho > 0.0);
    }

    #[test]
    fn needs_four_radii() {
        let points = [(1, 0.3), (2, 0.2), (3, 0.1), (4, 0.05)];
        // m = 1 has T_1 = 0 and is skipped
        assert!(matches!(
            fit_dependence_points(&points, &planted_stats(), CapacityFormula::Paper),
            Err(DependenceError::TooFewM(3))
        ));
    }
}
