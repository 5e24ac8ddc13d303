use ndarray::{Array1, Array2};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::loss::{param_grads, Problem};
use super::{CountTable, EmbeddingError, EmbeddingPair, Objective, TrainConfig};

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub pair: EmbeddingPair,
    /// Loss before the first step, then after every epoch.
    pub losses: Vec<f64>,
    pub converged: bool,
    pub epochs_run: usize,
    pub final_learning_rate: f64,
    /// Whether softmax rows were shifted to unit normalizer (softmax-nll only).
    pub gauge_normalized: bool,
}

/// Full-batch gradient descent on the configured objective.
///
/// Deterministic for a fixed seed. With `halve_on_increase`, a step that
/// raises the loss (or makes it non-finite) is retried at half the rate;
/// without it a non-finite loss aborts with [`EmbeddingError::Divergence`].
/// The sampled objective redraws its negatives every epoch and accepts
/// every finite step.
pub fn train(counts: &CountTable, config: &TrainConfig) -> Result<TrainResult, EmbeddingError> {
    config.validate()?;
    let n = counts.len();
    if counts.is_empty() {
        return Err(EmbeddingError::EmptyCounts);
    }
    if config.dim > n {
        return Err(EmbeddingError::Config(format!(
            "dim {} exceeds vocabulary size {n}",
            config.dim
        )));
    }
    if config.objective == Objective::SoftmaxNll && n > config.softmax_vocab_cap {
        return Err(EmbeddingError::VocabCap {
            size: n,
            cap: config.softmax_vocab_cap,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut pair = initial_pair(n, config, &mut rng);
    let mut problem = Problem::new(counts, config);
    let sampled = config.objective == Objective::SgnsSampled;
    let noise = sampled.then(|| noise_distribution(counts, config.alpha));
    if let Some(noise) = &noise {
        problem.set_negatives(sample_negatives(counts, noise, config.negatives, &mut rng));
    }

    let mut lr = config.learning_rate;
    let min_lr = config.learning_rate * 1e-12;
    let (mut current, mut grad) = problem.loss_and_grad(&pair.scores());
    if !current.is_finite() {
        return Err(EmbeddingError::Divergence { epoch: 0 });
    }
    let mut losses = vec![current];
    let mut converged = false;
    let mut epochs_run = 0;

    'epochs: for epoch in 1..=config.epochs {
        epochs_run = epoch;
        let step = param_grads(&pair, &grad);
        let (next, next_loss) = loop {
            let trial = descend(&pair, &step, lr);
            let loss = problem.loss(&trial.scores());
            let acceptable = loss.is_finite() && (sampled || !config.halve_on_increase || loss <= current);
            if acceptable {
                break (trial, loss);
            }
            if !config.halve_on_increase || sampled {
                return Err(EmbeddingError::Divergence { epoch });
            }
            lr *= 0.5;
            if lr < min_lr {
                // no descent direction left at machine precision
                converged = true;
                break 'epochs;
            }
        };
        let change = (current - next_loss).abs() / current.abs().max(f64::MIN_POSITIVE);
        pair = next;
        if let Some(noise) = &noise {
            problem.set_negatives(sample_negatives(counts, noise, config.negatives, &mut rng));
        }
        let (loss, g) = problem.loss_and_grad(&pair.scores());
        current = loss;
        grad = g;
        losses.push(current);
        if !sampled && change < config.tolerance {
            converged = true;
            break;
        }
    }

    let gauge_normalized = config.objective == Objective::SoftmaxNll && normalize_softmax_gauge(&mut pair);
    Ok(TrainResult {
        pair,
        losses,
        converged,
        epochs_run,
        final_learning_rate: lr,
        gauge_normalized,
    })
}

fn initial_pair(n: usize, config: &TrainConfig, rng: &mut ChaCha8Rng) -> EmbeddingPair {
    let k = config.dim;
    let scale = config.init_scale.unwrap_or(0.5 / k as f64);
    let mut draw = |_| {
        if scale == 0.0 {
            0.0
        } else {
            rng.random_range(-scale..scale)
        }
    };
    let u = Array2::from_shape_fn((n, k), &mut draw);
    let v = Array2::from_shape_fn((n, k), &mut draw);
    EmbeddingPair::new(u, v, config.objective).expect("equal shapes")
}

fn descend(pair: &EmbeddingPair, grad: &EmbeddingPair, lr: f64) -> EmbeddingPair {
    let step = |x: &Option<Array1<f64>>, g: &Option<Array1<f64>>| match (x, g) {
        (Some(x), Some(g)) => Some(x - &(g * lr)),
        _ => None,
    };
    EmbeddingPair {
        u: &pair.u - &(&grad.u * lr),
        v: &pair.v - &(&grad.v * lr),
        a: step(&pair.a, &grad.a),
        b: step(&pair.b, &grad.b),
        objective: pair.objective,
    }
}

fn noise_distribution(counts: &CountTable, alpha: f64) -> WeightedIndex<f64> {
    let weights: Vec<f64> = counts
        .marginals()
        .iter()
        .map(|&f| if f > 0.0 { f.powf(alpha) } else { 0.0 })
        .collect();
    WeightedIndex::new(weights).expect("non-empty counts have a positive marginal")
}

/// Each row `t` draws `k` negatives, each standing for `f^m_t` occurrences,
/// so every row carries `k f^m_t` negative mass.
fn sample_negatives(counts: &CountTable, noise: &WeightedIndex<f64>, k: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let n = counts.len();
    let mut neg = Array2::zeros((n, n));
    for (t, &f) in counts.marginals().iter().enumerate() {
        if f == 0.0 {
            continue;
        }
        for _ in 0..k {
            neg[[t, noise.sample(rng)]] += f;
        }
    }
    neg
}

/// Shifts every row of `U Vᵀ` by its log-sum-exp, which leaves the softmax
/// unchanged and makes each row's normalizer exactly one. Solves `V z = 1`
/// (least squares when `V` is not square) and sets `U ← U − c zᵀ`.
/// Returns false if `VᵀV` is singular.
pub(crate) fn normalize_softmax_gauge(pair: &mut EmbeddingPair) -> bool {
    let scores = pair.inner_products();
    let shifts: Vec<f64> = scores
        .rows()
        .into_iter()
        .map(|row| {
            let max = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
            max + row.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
        })
        .collect();
    let v = &pair.v;
    let ones = Array1::<f64>::ones(v.nrows());
    let z = if v.is_square() {
        solve(v.clone(), ones.clone())
    } else {
        solve(v.t().dot(v), v.t().dot(&ones))
    };
    let Some(z) = z else {
        return false;
    };
    for (mut row, c) in pair.u.rows_mut().into_iter().zip(shifts) {
        row.scaled_add(-c, &z);
    }
    true
}

/// Gaussian elimination with partial pivoting.
pub(crate) fn solve(mut a: Array2<f64>, mut b: Array1<f64>) -> Option<Array1<f64>> {
    let n = a.nrows();
    let scale = a.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[[i, col]].abs().total_cmp(&a[[j, col]].abs()))?;
        if a[[pivot, col]].abs() <= scale * 1e-14 {
            return None;
        }
        if pivot != col {
            for j in 0..n {
                a.swap([col, j], [pivot, j]);
            }
            b.swap(col, pivot);
        }
        for i in col + 1..n {
            let factor = a[[i, col]] / a[[col, col]];
            if factor == 0.0 {
                continue;
            }
            for j in col..n {
                a[[i, j]] -= factor * a[[col, j]];
            }
            b[i] -= factor * b[col];
        }
    }
    let mut x = Array1::zeros(n);
    for i in (0..n).rev() {
        let tail: f64 = (i + 1..n).map(|j| a[[i, j]] * x[j]).sum();
        x[i] = (b[i] - tail) / a[[i, i]];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embeddings::{evaluate_loss, verify_factorization, TargetParams};
    use ndarray::array;

    fn positive_counts() -> CountTable {
        CountTable::from_dense(array![
            [12.0, 3.0, 40.0, 7.0],
            [3.0, 150.0, 9.0, 22.0],
            [40.0, 9.0, 5.0, 61.0],
            [7.0, 22.0, 61.0, 2.0],
        ])
        .unwrap()
    }

    #[test]
    fn solve_small_system() {
        let x = solve(array![[2.0, 1.0], [1.0, 3.0]], array![3.0, 5.0]).unwrap();
        assert!((x[0] - 0.8).abs() < 1e-12 && (x[1] - 1.4).abs() < 1e-12);
        assert!(solve(array![[1.0, 2.0], [2.0, 4.0]], array![1.0, 1.0]).is_none());
    }

    #[test]
    fn clamped_glove_full_rank_fits_exactly() {
        let counts = positive_counts();
        let config = TrainConfig {
            objective: Objective::GloveClamped,
            dim: 4,
            learning_rate: 1.0,
            epochs: 20_000,
            seed: 3,
            ..TrainConfig::default()
        };
        let result = train(&counts, &config).unwrap();
        let last = *result.losses.last().unwrap();
        assert!(last < 1e-6, "final loss {last}");
        let report = verify_factorization(&result.pair, &counts, &TargetParams::default()).unwrap();
        assert!(report.max_abs_error < 1e-3, "{}", report.max_abs_error);
    }

    #[test]
    fn training_is_deterministic() {
        let counts = positive_counts();
        for objective in Objective::ALL {
            let config = TrainConfig {
                objective,
                dim: 3,
                learning_rate: 0.5,
                epochs: 50,
                seed: 17,
                ..TrainConfig::default()
            };
            let a = train(&counts, &config).unwrap();
            let b = train(&counts, &config).unwrap();
            assert_eq!(a.pair, b.pair, "{objective}");
            assert_eq!(a.losses, b.losses);
        }
    }

    #[test]
    fn loss_never_increases_with_halving() {
        let counts = positive_counts();
        for objective in [Objective::Glove, Objective::SoftmaxNll, Objective::SgnsExact] {
            let config = TrainConfig {
                objective,
                dim: 2,
                learning_rate: 50.0,
                epochs: 300,
                seed: 1,
                ..TrainConfig::default()
            };
            let result = train(&counts, &config).unwrap();
            assert!(result.losses.windows(2).all(|w| w[1] <= w[0]), "{objective}");
            assert!(result.final_learning_rate < 50.0);
        }
    }

    #[test]
    fn divergence_reports_epoch() {
        let counts = positive_counts();
        let config = TrainConfig {
            objective: Objective::GloveClamped,
            dim: 4,
            learning_rate: 1e6,
            epochs: 100,
            halve_on_increase: false,
            init_scale: Some(1.0),
            ..TrainConfig::default()
        };
        match train(&counts, &config) {
            Err(EmbeddingError::Divergence { epoch }) => assert!(epoch >= 1),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn softmax_vocab_cap() {
        let counts = positive_counts();
        let config = TrainConfig {
            objective: Objective::SoftmaxNll,
            dim: 2,
            softmax_vocab_cap: 3,
            ..TrainConfig::default()
        };
        assert!(matches!(train(&counts, &config), Err(EmbeddingError::VocabCap { .. })));
    }

    #[test]
    fn gauge_normalization_keeps_loss() {
        let counts = positive_counts();
        let config = TrainConfig {
            objective: Objective::SoftmaxNll,
            dim: 4,
            learning_rate: 1.0,
            epochs: 200,
            init_scale: Some(1.0),
            ..TrainConfig::default()
        };
        let result = train(&counts, &config).unwrap();
        assert!(result.gauge_normalized);
        let before = *result.losses.last().unwrap();
        let after = evaluate_loss(&result.pair, &counts, &config).unwrap();
        assert!((before - after).abs() < 1e-9);
        for row in result.pair.inner_products().rows() {
            let z: f64 = row.iter().map(|x| x.exp()).sum();
            assert!((z - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn sampled_sgns_runs_and_is_reproducible() {
        let counts = positive_counts();
        let config = TrainConfig {
            objective: Objective::SgnsSampled,
            dim: 4,
            learning_rate: 0.5,
            epochs: 100,
            seed: 4,
            ..TrainConfig::default()
        };
        let a = train(&counts, &config).unwrap();
        let b = train(&counts, &config).unwrap();
        assert_eq!(a.pair, b.pair);
        assert_eq!(a.epochs_run, 100);
    }
}
