use ndarray::{Array2, Axis, Zip};

use super::verify::target_matrix;
use super::{CountTable, EmbeddingError, EmbeddingPair, Objective, TargetParams, TrainConfig};

/// GloVe's frequency weight, zero for non-occurring pairs.
pub(crate) fn glove_weight(count: f64, x_max: f64, exponent: f64) -> f64 {
    if count <= 0.0 {
        0.0
    } else {
        (count / x_max).powf(exponent).min(1.0)
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// One objective bound to one count table.
///
/// Losses are normalized: regression objectives by the total weight,
/// likelihood objectives by `M_F^m`.
pub(crate) struct Problem<'a> {
    objective: Objective,
    counts: &'a CountTable,
    weights: Array2<f64>,
    weight_sum: f64,
    targets: Array2<f64>,
    /// Negative-sample weights for the logistic objective.
    negatives: Array2<f64>,
}

impl<'a> Problem<'a> {
    pub(crate) fn new(counts: &'a CountTable, config: &TrainConfig) -> Self {
        let objective = config.objective;
        let c = counts.counts();
        let weights = match objective {
            Objective::Glove | Objective::GloveClamped | Objective::SoftmaxRegression => {
                c.mapv(|x| glove_weight(x, config.x_max, config.weight_exponent))
            }
            Objective::SgnsExact => c.mapv(|x| if x > 0.0 { 1.0 } else { 0.0 }),
            Objective::SoftmaxNll | Objective::SgnsSampled => Array2::zeros((0, 0)),
        };
        let weight_sum = weights.sum();
        let targets = match objective {
            Objective::SoftmaxNll | Objective::SgnsSampled => Array2::zeros((0, 0)),
            _ => target_matrix(objective, counts, &config.target_params()).mapv(|t| if t.is_finite() { t } else { 0.0 }),
        };
        let negatives = if objective == Objective::SgnsSampled {
            expected_negatives(counts, &config.target_params())
        } else {
            Array2::zeros((0, 0))
        };
        Self {
            objective,
            counts,
            weights,
            weight_sum,
            targets,
            negatives,
        }
    }

    pub(crate) fn set_negatives(&mut self, negatives: Array2<f64>) {
        self.negatives = negatives;
    }

    /// Loss and `∂L/∂S` at the given scores.
    pub(crate) fn loss_and_grad(&self, scores: &Array2<f64>) -> (f64, Array2<f64>) {
        match self.objective {
            Objective::SoftmaxNll => self.softmax_nll(scores),
            Objective::SgnsSampled => self.logistic(scores),
            _ => self.regression(scores),
        }
    }

    pub(crate) fn loss(&self, scores: &Array2<f64>) -> f64 {
        self.loss_and_grad(scores).0
    }

    fn regression(&self, scores: &Array2<f64>) -> (f64, Array2<f64>) {
        let mut grad = scores - &self.targets;
        let mut loss = 0.0;
        Zip::from(&mut grad).and(&self.weights).for_each(|r, &w| {
            loss += w * *r * *r;
            *r *= 2.0 * w / self.weight_sum;
        });
        (loss / self.weight_sum, grad)
    }

    fn softmax_nll(&self, scores: &Array2<f64>) -> (f64, Array2<f64>) {
        let counts = self.counts.counts();
        let marginals = self.counts.marginals();
        let total = self.counts.total();
        let mut grad = Array2::zeros(scores.raw_dim());
        let mut loss = 0.0;
        for (t, (row, mut g)) in scores.axis_iter(Axis(0)).zip(grad.axis_iter_mut(Axis(0))).enumerate() {
            let f = marginals[t];
            if f == 0.0 {
                continue;
            }
            let max = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
            let lse = max + row.iter().map(|&x| (x - max).exp()).sum::<f64>().ln();
            for (s, (&x, gs)) in row.iter().zip(g.iter_mut()).enumerate() {
                let c = counts[[t, s]];
                if c > 0.0 {
                    loss -= c * (x - lse);
                }
                *gs = (f * (x - lse).exp() - c) / total;
            }
        }
        (loss / total, grad)
    }

    fn logistic(&self, scores: &Array2<f64>) -> (f64, Array2<f64>) {
        let counts = self.counts.counts();
        let total = self.counts.total();
        let mut grad = Array2::zeros(scores.raw_dim());
        let mut loss = 0.0;
        Zip::from(&mut grad)
            .and(scores)
            .and(counts)
            .and(&self.negatives)
            .for_each(|g, &x, &pos, &neg| {
                if pos > 0.0 {
                    loss += pos * softplus(-x);
                }
                if neg > 0.0 {
                    loss += neg * softplus(x);
                }
                *g = (-pos * sigmoid(-x) + neg * sigmoid(x)) / total;
            });
        (loss / total, grad)
    }
}

/// Expected negative counts `k f^m_t (f^m_s)^α / Σ_l (f^m_l)^α`.
pub(crate) fn expected_negatives(counts: &CountTable, params: &TargetParams) -> Array2<f64> {
    let f = counts.marginals();
    let noise = f.mapv(|x| if x > 0.0 { x.powf(params.alpha) } else { 0.0 });
    let z = noise.sum();
    let n = counts.len();
    Array2::from_shape_fn((n, n), |(t, s)| params.negatives as f64 * f[t] * noise[s] / z)
}

/// Chain rule from `∂L/∂S` to the parameters; returned in pair form.
pub(crate) fn param_grads(pair: &EmbeddingPair, g: &Array2<f64>) -> EmbeddingPair {
    EmbeddingPair {
        u: g.dot(&pair.v),
        v: g.t().dot(&pair.u),
        a: pair.a.as_ref().map(|_| g.sum_axis(Axis(1))),
        b: pair.b.as_ref().map(|_| g.sum_axis(Axis(0))),
        objective: pair.objective,
    }
}

/// Objective value of a pair; the sampled objective is evaluated with its
/// expected negatives.
pub fn evaluate_loss(pair: &EmbeddingPair, counts: &CountTable, config: &TrainConfig) -> Result<f64, EmbeddingError> {
    check_shapes(pair, counts)?;
    let config = TrainConfig {
        objective: pair.objective,
        ..config.clone()
    };
    Ok(Problem::new(counts, &config).loss(&pair.scores()))
}

pub(crate) fn check_shapes(pair: &EmbeddingPair, counts: &CountTable) -> Result<(), EmbeddingError> {
    if pair.vocab_size() != counts.len() || pair.v.dim() != pair.u.dim() {
        return Err(EmbeddingError::Shape(format!(
            "pair has {} rows, counts have {}",
            pair.vocab_size(),
            counts.len()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientCheck {
    /// `‖g_analytic − g_numeric‖ / max(‖g_analytic‖, ‖g_numeric‖)`.
    pub relative_error: f64,
    pub analytic_norm: f64,
}

/// Compares the analytic gradient with central differences of step `h`.
pub fn gradient_check(
    pair: &EmbeddingPair,
    counts: &CountTable,
    config: &TrainConfig,
    h: f64,
) -> Result<GradientCheck, EmbeddingError> {
    check_shapes(pair, counts)?;
    let config = TrainConfig {
        objective: pair.objective,
        ..config.clone()
    };
    let problem = Problem::new(counts, &config);
    let (_, g) = problem.loss_and_grad(&pair.scores());
    let analytic = flatten(&param_grads(pair, &g));
    let base = flatten(pair);
    let numeric: Vec<f64> = (0..base.len())
        .map(|i| {
            let mut plus = base.clone();
            let mut minus = base.clone();
            plus[i] += h;
            minus[i] -= h;
            let lp = problem.loss(&unflatten(pair, &plus).scores());
            let lm = problem.loss(&unflatten(pair, &minus).scores());
            (lp - lm) / (2.0 * h)
        })
        .collect();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, b)| a - b).collect();
    let scale = norm(&analytic).max(norm(&numeric));
    Ok(GradientCheck {
        relative_error: if scale == 0.0 { 0.0 } else { norm(&diff) / scale },
        analytic_norm: norm(&analytic),
    })
}

fn flatten(pair: &EmbeddingPair) -> Vec<f64> {
    let mut out: Vec<f64> = pair.u.iter().chain(pair.v.iter()).copied().collect();
    if let (Some(a), Some(b)) = (&pair.a, &pair.b) {
        out.extend(a.iter().chain(b.iter()));
    }
    out
}

fn unflatten(like: &EmbeddingPair, flat: &[f64]) -> EmbeddingPair {
    let (n, k) = like.u.dim();
    let nk = n * k;
    let mut pair = like.clone();
    pair.u.iter_mut().zip(&flat[..nk]).for_each(|(x, &y)| *x = y);
    pair.v.iter_mut().zip(&flat[nk..2 * nk]).for_each(|(x, &y)| *x = y);
    if let (Some(a), Some(b)) = (pair.a.as_mut(), pair.b.as_mut()) {
        a.iter_mut().zip(&flat[2 * nk..2 * nk + n]).for_each(|(x, &y)| *x = y);
        b.iter_mut().zip(&flat[2 * nk + n..]).for_each(|(x, &y)| *x = y);
    }
    pair
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_pair(n: usize, k: usize, objective: Objective, rng: &mut ChaCha8Rng) -> EmbeddingPair {
        let mut pair = EmbeddingPair::zeros(n, k, objective);
        pair.u.mapv_inplace(|_| rng.random_range(-1.0..1.0));
        pair.v.mapv_inplace(|_| rng.random_range(-1.0..1.0));
        if let (Some(a), Some(b)) = (pair.a.as_mut(), pair.b.as_mut()) {
            a.mapv_inplace(|_| rng.random_range(-1.0..1.0));
            b.mapv_inplace(|_| rng.random_range(-1.0..1.0));
        }
        pair
    }

    fn random_counts(n: usize, rng: &mut ChaCha8Rng) -> CountTable {
        let m = Array2::from_shape_fn((n, n), |_| {
            if rng.random_bool(0.25) {
                0.0
            } else {
                rng.random_range(1..300) as f64
            }
        });
        CountTable::from_dense(m).unwrap()
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for objective in Objective::ALL {
            for trial in 0..5 {
                let n = 3 + trial;
                let k = 1 + trial % 4;
                let counts = random_counts(n, &mut rng);
                let pair = random_pair(n, k, objective, &mut rng);
                let config = TrainConfig {
                    objective,
                    ..TrainConfig::default()
                };
                let check = gradient_check(&pair, &counts, &config, 1e-5).unwrap();
                assert!(
                    check.relative_error < 1e-5,
                    "{objective}: relative error {}",
                    check.relative_error
                );
            }
        }
    }

    #[test]
    fn transposition_swaps_factors() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let counts = random_counts(5, &mut rng);
        let pair = random_pair(5, 3, Objective::GloveClamped, &mut rng);
        let swapped = EmbeddingPair {
            u: pair.v.clone(),
            v: pair.u.clone(),
            ..pair.clone()
        };
        let config = TrainConfig::default();
        let direct = evaluate_loss(&pair, &counts, &config).unwrap();
        let transposed = evaluate_loss(&swapped, &counts.transposed(), &config).unwrap();
        assert!((direct - transposed).abs() <= 1e-12 * direct.abs());
    }

    #[test]
    fn uniform_rows_are_optimal_at_zero() {
        let counts = CountTable::from_dense(Array2::from_elem((4, 4), 3.0)).unwrap();
        let pair = EmbeddingPair::zeros(4, 2, Objective::SoftmaxNll);
        let config = TrainConfig {
            objective: Objective::SoftmaxNll,
            ..TrainConfig::default()
        };
        let problem = Problem::new(&counts, &config);
        let (loss, g) = problem.loss_and_grad(&pair.scores());
        assert!((loss - 4f64.ln()).abs() < 1e-12);
        assert!(g.iter().all(|x| x.abs() < 1e-15));
    }

    #[test]
    fn weights_cap_at_one() {
        assert_eq!(glove_weight(0.0, 100.0, 0.75), 0.0);
        assert_eq!(glove_weight(500.0, 100.0, 0.75), 1.0);
        assert!((glove_weight(10.0, 100.0, 0.75) - 0.1f64.powf(0.75)).abs() < 1e-15);
    }

    #[test]
    fn expected_negatives_rows() {
        let counts = CountTable::from_dense(array![[0.0, 2.0], [2.0, 4.0]]).unwrap();
        let neg = expected_negatives(&counts, &TargetParams { alpha: 0.5, negatives: 3 });
        let rows = neg.sum_axis(Axis(1));
        assert!((rows[0] - 3.0 * 2.0).abs() < 1e-12);
        assert!((rows[1] - 3.0 * 6.0).abs() < 1e-12);
    }
}
