//! Independent frequencies model: expected co-occurrences when every
//! token's window is filled by independent unigram draws.

use std::io::{self, Write};

use thiserror::Error;

use crate::cooccurrence::{CoocError, CoocModel, WindowConfig};
use crate::corpus::{Corpus, TokenId};

/// Largest vocabulary that may be materialized as a dense matrix.
pub const DENSE_LIMIT: usize = 2000;

#[derive(Debug, Error)]
pub enum IfmError {
    #[error("frequency for id {0} must be positive and finite")]
    BadFrequency(usize),
    #[error("empty frequency table")]
    Empty,
    #[error("unknown target id {0}")]
    UnknownTarget(TokenId),
    #[error("vocabulary mismatch: model has {model} types, counts have {counts}")]
    VocabMismatch { model: usize, counts: usize },
    #[error("vocabulary of {0} types is too large to materialize (limit {DENSE_LIMIT})")]
    TooLarge(usize),
    #[error(transparent)]
    Cooc(#[from] CoocError),
}

/// Which statistics the model is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrequencySource {
    /// Raw unigram counts `f`: entries `2m f_t f_s / M`, marginals `2m f_t`.
    Unigram,
    /// Window-inflated marginals `f^m` of an observed model: entries
    /// `f^m_t f^m_s / M_F^m`, marginals `f^m_t`.
    Inflated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IfmModel {
    freqs: Vec<f64>,
    total: f64,
    window: WindowConfig,
    source: FrequencySource,
}

impl IfmModel {
    pub fn from_unigrams(freqs: Vec<f64>, window: WindowConfig) -> Result<Self, IfmError> {
        Self::new(freqs, window, FrequencySource::Unigram)
    }

    pub fn from_corpus(corpus: &Corpus, window: WindowConfig) -> Self {
        let freqs = corpus.vocab().freqs().iter().map(|&f| f as f64).collect();
        Self::from_unigrams(freqs, window).expect("vocabulary frequencies are positive")
    }

    /// Uses the marginals of an observed model. Types that never
    /// co-occur have zero marginal and are rejected.
    pub fn from_inflated(model: &CoocModel) -> Result<Self, IfmError> {
        Self::new(model.marginals().to_vec(), model.window(), FrequencySource::Inflated)
    }

    pub fn new(freqs: Vec<f64>, window: WindowConfig, source: FrequencySource) -> Result<Self, IfmError> {
        if freqs.is_empty() {
            return Err(IfmError::Empty);
        }
        if let Some(i) = freqs.iter().position(|&f| !(f.is_finite() && f > 0.0)) {
            return Err(IfmError::BadFrequency(i));
        }
        let total = freqs.iter().sum();
        Ok(Self {
            freqs,
            total,
            window,
            source,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.freqs.len()
    }

    pub fn freqs(&self) -> &[f64] {
        &self.freqs
    }

    /// `M` (or `M_F^m` for the inflated variant).
    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn window(&self) -> WindowConfig {
        self.window
    }

    pub fn source(&self) -> FrequencySource {
        self.source
    }

    fn scale(&self) -> f64 {
        match self.source {
            FrequencySource::Unigram => 2.0 * self.window.radius() as f64,
            FrequencySource::Inflated => 1.0,
        }
    }

    /// `F̂_{t,s}`; symmetric by construction.
    pub fn entry(&self, t: TokenId, s: TokenId) -> f64 {
        let product = self.freqs[t as usize] * self.freqs[s as usize];
        self.scale() * product / self.total
    }

    /// Analytic row sum `2m f_t` (or `f^m_t`).
    pub fn marginal(&self, t: TokenId) -> f64 {
        self.scale() * self.freqs[t as usize]
    }

    /// Analytic matrix total `2mM` (or `M_F^m`).
    pub fn grand_total(&self) -> f64 {
        self.scale() * self.total
    }

    pub fn row(&self, t: TokenId) -> impl Iterator<Item = (TokenId, f64)> + '_ {
        (0..self.vocab_size() as TokenId).map(move |s| (s, self.entry(t, s)))
    }

    /// Dense materialization as a co-occurrence model, for vocabularies up
    /// to [`DENSE_LIMIT`] types.
    pub fn to_cooc_model(&self) -> Result<CoocModel, IfmError> {
        let n = self.vocab_size();
        if n > DENSE_LIMIT {
            return Err(IfmError::TooLarge(n));
        }
        let entries = (0..n as TokenId).flat_map(|t| self.row(t).map(move |(s, v)| (t, s, v)));
        Ok(CoocModel::from_entries(n, self.window, entries)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScatterPoint {
    pub s: TokenId,
    /// `F^m_{t,s} + 1`.
    pub empirical: f64,
    /// `F̂^m_{t,s} + 1`.
    pub model: f64,
}

/// Empirical vs. model co-occurrences for one target word, both offset by
/// one so that non-occurring pairs stay plottable on log axes. Distance
/// from `y = x` is the pair's statistical dependence.
pub fn deviation_scatter(
    empirical: &CoocModel,
    model: &IfmModel,
    t: TokenId,
) -> Result<Vec<ScatterPoint>, IfmError> {
    if empirical.vocab_size() != model.vocab_size() {
        return Err(IfmError::VocabMismatch {
            model: model.vocab_size(),
            counts: empirical.vocab_size(),
        });
    }
    if t as usize >= model.vocab_size() {
        return Err(IfmError::UnknownTarget(t));
    }
    Ok(model
        .row(t)
        .map(|(s, expected)| (s, empirical.get(t, s), expected))
        .filter(|&(_, e, x)| e != 0.0 || x != 0.0)
        .map(|(s, e, x)| ScatterPoint {
            s,
            empirical: e + 1.0,
            model: x + 1.0,
        })
        .collect())
}

/// `s<TAB>empirical+1<TAB>ifm+1`, one line per point.
pub fn write_scatter_tsv<W: Write>(points: &[ScatterPoint], types: &[String], mut out: W) -> io::Result<()> {
    for p in points {
        writeln!(out, "{}\t{}\t{}", types[p.s as usize], p.empirical, p.model)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cooccurrence::{count_cooccurrences, pmi_matrix};
    use crate::corpus::{generate_zipf_corpus, SentenceLengths, ZipfCorpusConfig};
    use proptest::prelude::*;

    fn w(m: usize) -> WindowConfig {
        WindowConfig::sentence(m).unwrap()
    }

    #[test]
    fn entry_example() {
        // f = (4, 2, 4) gives M = 10
        let model = IfmModel::from_unigrams(vec![4.0, 2.0, 4.0], w(2)).unwrap();
        assert!((model.entry(0, 1) - 3.2).abs() < 1e-12);
        assert_eq!(model.entry(0, 1), model.entry(1, 0));
    }

    #[test]
    fn marginal_examples() {
        let model = IfmModel::from_unigrams(vec![5.0, 1.0], w(3)).unwrap();
        assert_eq!(model.marginal(0), 30.0);
        let model = IfmModel::from_unigrams(vec![1.0, 3.0], w(1)).unwrap();
        assert_eq!(model.marginal(0), 2.0);
    }

    #[test]
    fn half_window_frequency_reproduces_row() {
        // f_t = M / 2m makes row t equal to f
        let model = IfmModel::from_unigrams(vec![10.0, 3.0, 7.0], w(1)).unwrap();
        for s in 0..3 {
            assert!((model.entry(0, s) - model.freqs()[s as usize]).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_non_positive() {
        assert!(matches!(
            IfmModel::from_unigrams(vec![1.0, 0.0], w(1)),
            Err(IfmError::BadFrequency(1))
        ));
    }

    #[test]
    fn scatter_on_model_valued_counts_is_diagonal() {
        let model = IfmModel::from_unigrams(vec![5.0, 3.0, 2.0], w(2)).unwrap();
        let counts = model.to_cooc_model().unwrap();
        let pts = deviation_scatter(&counts, &model, 1).unwrap();
        assert_eq!(pts.len(), 3);
        for p in pts {
            assert_eq!(p.empirical, p.model);
        }
    }

    #[test]
    fn scatter_for_absent_target_has_unit_empirical() {
        let model = IfmModel::from_unigrams(vec![5.0, 3.0, 2.0], w(2)).unwrap();
        let counts = CoocModel::from_entries(3, w(2), [(0, 1, 2.0), (1, 0, 2.0)]).unwrap();
        let pts = deviation_scatter(&counts, &model, 2).unwrap();
        assert!(pts.iter().all(|p| p.empirical == 1.0));
        assert!(deviation_scatter(&counts, &model, 3).is_err());
    }

    #[test]
    fn iid_corpus_scatter_tracks_diagonal() {
        let corpus = generate_zipf_corpus(&ZipfCorpusConfig {
            vocab_size: 50,
            tokens: 100_000,
            sentence_lengths: SentenceLengths::Fixed(25),
            documents: 1,
            seed: 11,
        })
        .unwrap();
        let window = w(3);
        let counts = count_cooccurrences(&corpus, window);
        let model = IfmModel::from_corpus(&corpus, window);
        let t = corpus.vocab().by_rank()[0];
        let pts = deviation_scatter(&counts, &model, t).unwrap();
        let xs: Vec<f64> = pts.iter().map(|p| p.model.ln()).collect();
        let ys: Vec<f64> = pts.iter().map(|p| p.empirical.ln()).collect();
        let r = crate::stats::pearson(&xs, &ys);
        assert!(r > 0.9, "log correlation {r}");
    }

    proptest! {
        #[test]
        fn identities_hold(freqs in prop::collection::vec(1u32..1000, 2..60), m in 1usize..10) {
            let f: Vec<f64> = freqs.iter().map(|&x| x as f64).collect();
            let model = IfmModel::from_unigrams(f.clone(), w(m)).unwrap();
            let n = f.len() as TokenId;
            let mut grand = 0.0;
            for t in 0..n {
                let row: f64 = model.row(t).map(|(_, v)| v).sum();
                prop_assert!((row - 2.0 * m as f64 * f[t as usize]).abs() <= 1e-9 * row.max(1.0));
                grand += row;
                for s in 0..n {
                    prop_assert_eq!(model.entry(t, s), model.entry(s, t));
                }
            }
            let analytic = model.grand_total();
            prop_assert!((grand - analytic).abs() <= 1e-9 * analytic);
            let pmi = pmi_matrix(&model.to_cooc_model().unwrap());
            for v in pmi.values() {
                prop_assert!(v.abs() < 1e-9);
            }
        }

        #[test]
        fn permutation_equivariant(freqs in prop::collection::vec(1u32..100, 3..12), seed in any::<u64>()) {
            use rand::{seq::SliceRandom, SeedableRng};
            let f: Vec<f64> = freqs.iter().map(|&x| x as f64).collect();
            let mut perm: Vec<usize> = (0..f.len()).collect();
            perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let g: Vec<f64> = perm.iter().map(|&i| f[i]).collect();
            let a = IfmModel::from_unigrams(f, w(2)).unwrap();
            let b = IfmModel::from_unigrams(g, w(2)).unwrap();
            for (i, &pi) in perm.iter().enumerate() {
                for (j, &pj) in perm.iter().enumerate() {
                    let (x, y) = (b.entry(i as TokenId, j as TokenId), a.entry(pi as TokenId, pj as TokenId));
                    prop_assert!((x - y).abs() <= 1e-12 * x);
                }
            }
        }
    }
}
