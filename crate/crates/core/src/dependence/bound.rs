use std::collections::BTreeMap;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use super::{DependenceError, IqrProfile};

pub const DEFAULT_STEPS: usize = 1 << 10;
/// Largest tolerated |log10 residual| when choosing `k_min`.
pub const DEFAULT_RESIDUAL_THRESHOLD: f64 = 0.1;

/// `δ = (E[I_k] − E[I_2k]) / E[I_k]` at one radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReductionRate {
    pub m: usize,
    pub k: usize,
    pub tokens_k: f64,
    pub tokens_2k: f64,
    pub iqr_k: f64,
    pub iqr_2k: f64,
    pub delta: f64,
    /// The IQR grew with the sample, against the expected decay.
    pub negative: bool,
}

impl ReductionRate {
    pub fn new(m: usize, k: usize, tokens_k: f64, tokens_2k: f64, iqr_k: f64, iqr_2k: f64) -> Self {
        let delta = (iqr_k - iqr_2k) / iqr_k;
        Self {
            m,
            k,
            tokens_k,
            tokens_2k,
            iqr_k,
            iqr_2k,
            delta,
            negative: delta < 0.0,
        }
    }
}

pub fn reduction_rates(profile: &IqrProfile) -> Result<Vec<ReductionRate>, DependenceError> {
    let means = profile.means();
    let mut rates = Vec::new();
    for (&(k, m), &(iqr_k, tokens_k)) in &means {
        let Some(&(iqr_2k, tokens_2k)) = means.get(&(2 * k, m)) else {
            continue;
        };
        if iqr_k == 0.0 {
            return Err(DependenceError::ZeroMean { k, m });
        }
        rates.push(ReductionRate::new(m, k, tokens_k, tokens_2k, iqr_k, iqr_2k));
    }
    if rates.is_empty() {
        return Err(DependenceError::NoDoublingPairs);
    }
    rates.sort_by_key(|r| (r.m, r.k));
    Ok(rates)
}

pub fn write_rates_tsv<W: Write>(rates: &[ReductionRate], mut out: W) -> io::Result<()> {
    writeln!(out, "m\tk\ttokens_k\ttokens_2k\tiqr_k\tiqr_2k\tdelta\tnegative")?;
    for r in rates {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.m, r.k, r.tokens_k, r.tokens_2k, r.iqr_k, r.iqr_2k, r.delta, r.negative
        )?;
    }
    Ok(())
}

/// Reads the format of [`write_rates_tsv`]; `delta` is recomputed from the
/// IQR columns and the `negative` column is optional.
pub fn read_rates_tsv(text: &str) -> Result<Vec<ReductionRate>, DependenceError> {
    let mut rates = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let err = |reason: &str| DependenceError::Parse {
            line: i + 1,
            reason: reason.to_string(),
        };
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() < 6 {
            return Err(err("expected `m k tokens_k tokens_2k iqr_k iqr_2k ...`"));
        }
        let int = |s: &str| s.trim().parse::<usize>().map_err(|_| err("bad integer"));
        let num = |s: &str| s.trim().parse::<f64>().map_err(|_| err("bad number"));
        let iqr_k = num(f[4])?;
        if iqr_k == 0.0 {
            return Err(err("iqr_k is zero"));
        }
        rates.push(ReductionRate::new(int(f[0])?, int(f[1])?, num(f[2])?, num(f[3])?, iqr_k, num(f[5])?));
    }
    if rates.is_empty() {
        return Err(DependenceError::NoDoublingPairs);
    }
    Ok(rates)
}

/// `δ_{2k,m} ≈ M_{2k}^{−γ} / 10^{b_m}` with a shared `γ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionFit {
    pub gamma: f64,
    pub b: BTreeMap<usize, f64>,
    pub k_min: usize,
    /// Largest |log10 residual| against per-m least-squares intercepts.
    pub max_residual: f64,
    pub threshold_met: bool,
    pub points: usize,
}

struct Trial {
    gamma: f64,
    max_residual: f64,
    points: usize,
}

/// Pooled within-m regression of `log10 δ` on `log10 M_2k`.
fn shared_slope(groups: &BTreeMap<usize, Vec<(f64, f64)>>) -> Option<Trial> {
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for pts in groups.values() {
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        for &(x, y) in pts {
            sxy += (x - mx) * (y - my);
            sxx += (x - mx).powi(2);
        }
    }
    if sxx == 0.0 {
        return None;
    }
    let gamma = -sxy / sxx;
    let mut max_residual = 0.0f64;
    for pts in groups.values() {
        let b = pts.iter().map(|&(x, y)| -y - gamma * x).sum::<f64>() / pts.len() as f64;
        for &(x, y) in pts {
            max_residual = max_residual.max((y + gamma * x + b).abs());
        }
    }
    Some(Trial {
        gamma,
        max_residual,
        points: groups.values().map(Vec::len).sum(),
    })
}

/// Fits the shared exponent on positive rates with `k ≥ k_min`, then pins
/// each `b_m` so the curve passes through that radius's last point.
///
/// Without an explicit `k_min`, the smallest sample size whose log-log
/// residuals all fall below `threshold` is used; if none does, the one with
/// the smallest residual, with `threshold_met` cleared.
pub fn fit_reduction_power_law(
    rates: &[ReductionRate],
    k_min: Option<usize>,
    threshold: f64,
) -> Result<ReductionFit, DependenceError> {
    let positive: Vec<&ReductionRate> = rates.iter().filter(|r| r.delta > 0.0 && r.tokens_2k > 0.0).collect();
    let radii: Vec<usize> = {
        let mut ms: Vec<usize> = rates.iter().map(|r| r.m).collect();
        ms.sort_unstable();
        ms.dedup();
        ms
    };
    let candidates: Vec<usize> = match k_min {
        Some(k) => vec![k],
        None => {
            let mut ks: Vec<usize> = positive.iter().map(|r| r.k).collect();
            ks.sort_unstable();
            ks.dedup();
            ks
        }
    };
    let groups_from = |k0: usize| -> Result<BTreeMap<usize, Vec<(f64, f64)>>, DependenceError> {
        let mut groups: BTreeMap<usize, Vec<(f64, f64)>> = radii.iter().map(|&m| (m, Vec::new())).collect();
        for r in positive.iter().filter(|r| r.k >= k0) {
            groups.get_mut(&r.m).unwrap().push((r.tokens_2k.log10(), r.delta.log10()));
        }
        match groups.iter().find(|(_, pts)| pts.len() < 3) {
            Some((&m, pts)) => Err(DependenceError::InsufficientPoints { m, points: pts.len() }),
            None => Ok(groups),
        }
    };

    let mut first_error = None;
    let mut best: Option<(usize, Trial)> = None;
    for &k0 in &candidates {
        let groups = match groups_from(k0) {
            Ok(g) => g,
            Err(e) => {
                first_error.get_or_insert(e);
                continue;
            }
        };
        let Some(trial) = shared_slope(&groups) else { continue };
        let met = trial.max_residual <= threshold;
        if best.as_ref().is_none_or(|(_, b)| trial.max_residual < b.max_residual) {
            best = Some((k0, trial));
        }
        if met {
            best = best.filter(|(k, _)| *k == k0);
            break;
        }
    }
    let Some((k_min, trial)) = best else {
        return Err(first_error.unwrap_or(DependenceError::InsufficientPoints {
            m: radii.first().copied().unwrap_or(0),
            points: 0,
        }));
    };
    if !(trial.gamma > 0.0) {
        return Err(DependenceError::NonDecaying(trial.gamma));
    }
    let mut b = BTreeMap::new();
    for &m in &radii {
        let last = positive
            .iter()
            .filter(|r| r.m == m && r.k >= k_min)
            .max_by(|a, c| a.tokens_2k.total_cmp(&c.tokens_2k))
            .expect("every radius has at least three points");
        b.insert(m, -last.delta.log10() - trial.gamma * last.tokens_2k.log10());
    }
    Ok(ReductionFit {
        gamma: trial.gamma,
        b,
        k_min,
        max_residual: trial.max_residual,
        threshold_met: trial.max_residual <= threshold,
        points: trial.points,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundResult {
    pub start: f64,
    pub tokens_k: f64,
    pub gamma: f64,
    pub b: f64,
    pub steps: usize,
    /// IQR after iterating the doubling update.
    pub limit: f64,
    /// `I_k [1 − M_{2k}^{−γ} / (10^b (1 − 2^{−γ}))]`.
    pub bound: f64,
    /// `10^{−b/γ} (2^γ − 1)^{−1/γ}`; the bound is positive iff `M_k` exceeds it.
    pub threshold: f64,
    pub positive: bool,
}

/// Applies `I ← I (1 − δ_j)` for each rate in turn.
pub fn iterate_with_rates<I>(start: f64, rates: I) -> Result<f64, DependenceError>
where
    I: IntoIterator<Item = f64>,
{
    let mut value = start;
    for (step, delta) in rates.into_iter().enumerate() {
        value *= 1.0 - delta;
        if !value.is_finite() {
            return Err(DependenceError::NonFinite(step + 1));
        }
    }
    Ok(value)
}

/// Iterates `steps` doublings of the sample from `(start, M_k)` with
/// `δ = M^{−γ} / 10^b`, working with `log10 M` so the token count never
/// overflows, and evaluates the closed-form bound beside it.
pub fn extrapolate_limit(start: f64, gamma: f64, b: f64, tokens_k: f64, steps: usize) -> Result<BoundResult, DependenceError> {
    let log_m0 = tokens_k.log10();
    let rates = (1..=steps).map(|j| 10f64.powf(-gamma * (log_m0 + j as f64 * 2f64.log10()) - b));
    let limit = iterate_with_rates(start, rates)?;
    let tokens_2k = 2.0 * tokens_k;
    let bound = start * (1.0 - tokens_2k.powf(-gamma) / (10f64.powf(b) * (1.0 - 2f64.powf(-gamma))));
    let threshold = 10f64.powf(-b / gamma) * (2f64.powf(gamma) - 1.0).powf(-1.0 / gamma);
    if !bound.is_finite() {
        return Err(DependenceError::NonFinite(0));
    }
    Ok(BoundResult {
        start,
        tokens_k,
        gamma,
        b,
        steps,
        limit,
        bound,
        threshold,
        positive: threshold < tokens_k,
    })
}

/// Extrapolates each fitted radius from its last (largest-sample) point.
pub fn limits_per_m(
    rates: &[ReductionRate],
    fit: &ReductionFit,
    steps: usize,
) -> Result<BTreeMap<usize, BoundResult>, DependenceError> {
    let mut out = BTreeMap::new();
    for (&m, &b) in &fit.b {
        let last = rates
            .iter()
            .filter(|r| r.m == m)
            .max_by(|a, c| a.tokens_2k.total_cmp(&c.tokens_2k))
            .expect("fitted radii have rates");
        out.insert(m, extrapolate_limit(last.iqr_2k, fit.gamma, b, last.tokens_2k, steps)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dependence::ProfileRecord;
    use proptest::prelude::*;

    fn profile(points: &[(usize, usize, f64, u64)]) -> IqrProfile {
        IqrProfile {
            records: points
                .iter()
                .map(|&(k, m, iqr, tokens)| ProfileRecord {
                    k,
                    m,
                    replicate: 0,
                    iqr,
                    tokens,
                })
                .collect(),
            replicates: 1,
        }
    }

    #[test]
    fn rate_arithmetic() {
        let rates = reduction_rates(&profile(&[(1, 1, 0.4, 10), (2, 1, 0.3, 20), (4, 1, 0.3, 40), (8, 1, 0.33, 80)])).unwrap();
        assert_eq!(rates.len(), 3);
        assert!((rates[0].delta - 0.25).abs() < 1e-15);
        assert_eq!(rates[1].delta, 0.0);
        assert!(rates[2].negative && !rates[1].negative);
        assert_eq!((rates[0].tokens_k, rates[0].tokens_2k), (10.0, 20.0));
    }

    #[test]
    fn missing_doubling_pairs() {
        assert!(matches!(
            reduction_rates(&profile(&[(1, 1, 0.4, 10), (3, 1, 0.3, 30)])),
            Err(DependenceError::NoDoublingPairs)
        ));
    }

    fn planted(gamma: f64, bs: &[(usize, f64)], ks: &[usize]) -> Vec<ReductionRate> {
        let mut out = Vec::new();
        for &(m, b) in bs {
            for &k in ks {
                let tokens_2k = 200.0 * k as f64;
                let delta = tokens_2k.powf(-gamma) / 10f64.powf(b);
                out.push(ReductionRate::new(m, k, tokens_2k / 2.0, tokens_2k, 0.5, 0.5 * (1.0 - delta)));
            }
        }
        out
    }

    #[test]
    fn recovers_planted_power_law() {
        let rates = planted(1.0, &[(1, 0.5), (2, 0.8)], &[1, 2, 4, 8, 16]);
        let fit = fit_reduction_power_law(&rates, None, DEFAULT_RESIDUAL_THRESHOLD).unwrap();
        assert!((fit.gamma - 1.0).abs() < 1e-6);
        assert!((fit.b[&1] - 0.5).abs() < 1e-6);
        assert!((fit.b[&2] - 0.8).abs() < 1e-6);
        assert_eq!(fit.k_min, 1);
        assert!(fit.threshold_met);
    }

    #[test]
    fn curve_passes_through_last_point() {
        let mut rates = planted(0.7, &[(1, 0.2)], &[1, 2, 4, 8]);
        rates[3] = ReductionRate::new(1, 8, 800.0, 1600.0, 0.5, 0.499);
        let fit = fit_reduction_power_law(&rates, Some(1), 1e9).unwrap();
        let last = rates[3];
        let predicted = last.tokens_2k.powf(-fit.gamma) / 10f64.powf(fit.b[&1]);
        assert!((predicted - last.delta).abs() < 1e-12);
    }

    #[test]
    fn k_min_skips_early_curvature() {
        let mut rates = planted(1.0, &[(1, 0.5)], &[1, 2, 4, 8, 16, 32]);
        rates[0] = ReductionRate::new(1, 1, 100.0, 200.0, 0.5, 0.3);
        let fit = fit_reduction_power_law(&rates, None, DEFAULT_RESIDUAL_THRESHOLD).unwrap();
        assert_eq!(fit.k_min, 2);
        assert!((fit.gamma - 1.0).abs() < 1e-9);
    }

    #[test]
    fn fit_errors() {
        let two = planted(1.0, &[(1, 0.5)], &[1, 2]);
        assert!(matches!(
            fit_reduction_power_law(&two, None, DEFAULT_RESIDUAL_THRESHOLD),
            Err(DependenceError::InsufficientPoints { m: 1, points: 2 })
        ));
        let growing = planted(-0.5, &[(1, 3.0)], &[1, 2, 4, 8]);
        assert!(matches!(
            fit_reduction_power_law(&growing, None, DEFAULT_RESIDUAL_THRESHOLD),
            Err(DependenceError::NonDecaying(_))
        ));
    }

    #[test]
    fn closed_form_by_hand() {
        // 0.4 (1 − 100^{-1} / (0.1 · 0.5)) = 0.32
        let r = extrapolate_limit(0.4, 1.0, -1.0, 50.0, DEFAULT_STEPS).unwrap();
        assert!((r.bound - 0.32).abs() < 1e-15, "{}", r.bound);
        assert!(r.limit >= r.bound && r.limit <= r.start);
        // threshold 10^{1} (2 − 1)^{-1} = 10
        assert!((r.threshold - 10.0).abs() < 1e-12);
        assert!(r.positive);
        assert!(!extrapolate_limit(0.4, 1.0, -1.0, 9.0, 8).unwrap().positive);
    }

    #[test]
    fn constant_rate_drives_limit_to_zero() {
        let limit = iterate_with_rates(0.4, std::iter::repeat_n(0.1, DEFAULT_STEPS)).unwrap();
        assert!(limit < 1e-40);
        assert!(iterate_with_rates(0.4, [0.5, f64::INFINITY]).is_err());
    }

    #[test]
    fn rates_file_round_trip() {
        let rates = planted(1.0, &[(1, 0.5)], &[1, 2, 4]);
        let mut buf = Vec::new();
        write_rates_tsv(&rates, &mut buf).unwrap();
        let back = read_rates_tsv(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back, rates);
    }

    proptest! {
        #[test]
        fn limit_sits_between_bound_and_start(
            start in 0.01f64..1.0,
            gamma in 0.1f64..2.0,
            b in -1.0f64..3.0,
            log_m in 1.0f64..7.0,
        ) {
            let tokens = 10f64.powf(log_m);
            // keep every δ inside (0, 1)
            prop_assume!((2.0 * tokens).powf(-gamma) / 10f64.powf(b) < 1.0);
            let r = extrapolate_limit(start, gamma, b, tokens, DEFAULT_STEPS).unwrap();
            prop_assert!(r.limit <= r.start);
            prop_assert!(r.limit >= r.bound - 1e-15);
            prop_assert_eq!(r.positive, r.bound > 0.0 || (r.threshold - tokens).abs() < 1e-9 * tokens);
        }

        #[test]
        fn sequence_never_increases(start in 0.01f64..1.0, rates in prop::collection::vec(0.0f64..1.0, 1..50)) {
            let mut prev = start;
            for n in 1..=rates.len() {
                let v = iterate_with_rates(start, rates[..n].iter().copied()).unwrap();
                prop_assert!(v <= prev);
                prop_assert!(v >= start * (1.0 - rates[..n].iter().sum::<f64>()) - 1e-15);
                prev = v;
            }
        }
    }
}
