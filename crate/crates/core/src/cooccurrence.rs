//! Symmetric sliding-window co-occurrence counts and their derived views.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, Document, TokenId};

#[derive(Debug, Error)]
pub enum CoocError {
    #[error("window radius must be at least 1")]
    ZeroRadius,
    #[error("token id {id} outside vocabulary of size {size}")]
    IdOutOfRange { id: TokenId, size: usize },
    #[error("count for ({t}, {s}) is not a finite non-negative number: {value}")]
    BadCount { t: TokenId, s: TokenId, value: f64 },
    #[error("counts are not symmetric at ({t}, {s})")]
    Asymmetric { t: TokenId, s: TokenId },
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    /// Windows never cross a sentence boundary.
    #[default]
    Sentence,
    /// Windows may cross sentence boundaries but not document boundaries.
    Document,
}

impl fmt::Display for Boundary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Sentence => "sentence",
            Self::Document => "document",
        })
    }
}

impl FromStr for Boundary {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sentence" => Ok(Self::Sentence),
            "document" => Ok(Self::Document),
            other => Err(format!("unknown boundary `{other}` (expected sentence|document)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowConfig {
    radius: usize,
    pub boundary: Boundary,
}

impl WindowConfig {
    pub fn new(radius: usize, boundary: Boundary) -> Result<Self, CoocError> {
        if radius == 0 {
            return Err(CoocError::ZeroRadius);
        }
        Ok(Self { radius, boundary })
    }

    pub fn sentence(radius: usize) -> Result<Self, CoocError> {
        Self::new(radius, Boundary::Sentence)
    }

    pub fn radius(&self) -> usize {
        self.radius
    }
}

/// Sparse symmetric co-occurrence counts with row marginals and total.
///
/// Counts are `f64` so that model-valued (fractional) matrices share the
/// same interface as empirical ones. Entries are kept in `(t, s)` order,
/// which makes every derived sum deterministic.
#[derive(Debug, Clone, PartialEq)]
pub struct CoocModel {
    counts: BTreeMap<(TokenId, TokenId), f64>,
    marginals: Vec<f64>,
    total: f64,
    window: WindowConfig,
    vocab_size: usize,
    vocab_hash: Option<String>,
}

impl CoocModel {
    /// Builds a model from explicit entries. Zero entries are dropped,
    /// repeated keys are summed, and the result must be exactly symmetric.
    pub fn from_entries<I>(vocab_size: usize, window: WindowConfig, entries: I) -> Result<Self, CoocError>
    where
        I: IntoIterator<Item = (TokenId, TokenId, f64)>,
    {
        let mut counts = BTreeMap::new();
        for (t, s, value) in entries {
            for id in [t, s] {
                if id as usize >= vocab_size {
                    return Err(CoocError::IdOutOfRange {
                        id,
                        size: vocab_size,
                    });
                }
            }
            if !value.is_finite() || value < 0.0 {
                return Err(CoocError::BadCount { t, s, value });
            }
            if value > 0.0 {
                *counts.entry((t, s)).or_insert(0.0) += value;
            }
        }
        for (&(t, s), &v) in &counts {
            if counts.get(&(s, t)) != Some(&v) {
                return Err(CoocError::Asymmetric { t, s });
            }
        }
        Ok(Self::assemble(counts, vocab_size, window, None))
    }

    fn assemble(
        counts: BTreeMap<(TokenId, TokenId), f64>,
        vocab_size: usize,
        window: WindowConfig,
        vocab_hash: Option<String>,
    ) -> Self {
        let mut marginals = vec![0.0; vocab_size];
        for (&(t, _), &v) in &counts {
            marginals[t as usize] += v;
        }
        let total = marginals.iter().sum();
        Self {
            counts,
            marginals,
            total,
            window,
            vocab_size,
            vocab_hash,
        }
    }

    pub fn with_vocab_hash(mut self, hash: String) -> Self {
        self.vocab_hash = Some(hash);
        self
    }

    pub fn get(&self, t: TokenId, s: TokenId) -> f64 {
        self.counts.get(&(t, s)).copied().unwrap_or(0.0)
    }

    /// Non-zero entries in `(t, s)` order.
    pub fn entries(&self) -> impl Iterator<Item = (TokenId, TokenId, f64)> + '_ {
        self.counts.iter().map(|(&(t, s), &v)| (t, s, v))
    }

    /// Non-zero entries of row `t` in column order.
    pub fn row(&self, t: TokenId) -> impl Iterator<Item = (TokenId, f64)> + '_ {
        self.counts
            .range((t, 0)..=(t, TokenId::MAX))
            .map(|(&(_, s), &v)| (s, v))
    }

    pub fn nnz(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// `f^m_t`, the row sum for `t`.
    pub fn marginal(&self, t: TokenId) -> f64 {
        self.marginals[t as usize]
    }

    pub fn marginals(&self) -> &[f64] {
        &self.marginals
    }

    /// `M_F^m`, the sum of all counts.
    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn window(&self) -> WindowConfig {
        self.window
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn vocab_hash(&self) -> Option<&str> {
        self.vocab_hash.as_deref()
    }

    pub fn is_symmetric(&self) -> bool {
        self.counts
            .iter()
            .all(|(&(t, s), v)| self.counts.get(&(s, t)) == Some(v))
    }

    /// Writes `t<TAB>s<TAB>count` lines in id order, using type strings.
    pub fn write_tsv<W: Write>(&self, types: &[String], mut out: W) -> io::Result<()> {
        for (&(t, s), &v) in &self.counts {
            writeln!(out, "{}\t{}\t{}", types[t as usize], types[s as usize], v)?;
        }
        Ok(())
    }

    pub fn sidecar(&self) -> CoocSidecar {
        CoocSidecar {
            m: self.window.radius,
            boundary: self.window.boundary,
            vocab_hash: self.vocab_hash.clone(),
            vocab_size: self.vocab_size,
            total: self.total,
        }
    }

    /// Parses the TSV written by [`CoocModel::write_tsv`]. Type ids are
    /// assigned in order of first appearance in the file.
    pub fn read_tsv(text: &str, sidecar: &CoocSidecar) -> Result<(Self, Vec<String>), CoocError> {
        Self::parse_tsv(text, sidecar, Vec::new(), true)
    }

    /// Parses the TSV against a known vocabulary, keeping its id order and
    /// its types that never co-occur. Every type in the file must be listed.
    pub fn read_tsv_with_types(
        text: &str,
        sidecar: &CoocSidecar,
        types: Vec<String>,
    ) -> Result<(Self, Vec<String>), CoocError> {
        Self::parse_tsv(text, sidecar, types, false)
    }

    fn parse_tsv(
        text: &str,
        sidecar: &CoocSidecar,
        mut types: Vec<String>,
        grow: bool,
    ) -> Result<(Self, Vec<String>), CoocError> {
        let window = WindowConfig::new(sidecar.m, sidecar.boundary)?;
        let mut index: HashMap<String, TokenId> =
            types.iter().enumerate().map(|(i, t)| (t.clone(), i as TokenId)).collect();
        if index.len() != types.len() {
            return Err(CoocError::Parse {
                line: 0,
                reason: "vocabulary lists a type twice".into(),
            });
        }
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let parse = |reason: &str| CoocError::Parse {
                line: i + 1,
                reason: reason.to_string(),
            };
            let mut fields = line.split('\t');
            let (Some(t), Some(s), Some(c), None) =
                (fields.next(), fields.next(), fields.next(), fields.next())
            else {
                return Err(parse("expected three tab-separated fields"));
            };
            let value: f64 = c.parse().map_err(|_| parse("count is not a number"))?;
            let mut intern = |w: &str| -> Result<TokenId, CoocError> {
                if let Some(&id) = index.get(w) {
                    return Ok(id);
                }
                if !grow {
                    return Err(parse(&format!("type `{w}` is not in the vocabulary")));
                }
                let id = types.len() as TokenId;
                index.insert(w.to_string(), id);
                types.push(w.to_string());
                Ok(id)
            };
            let (t, s) = (intern(t)?, intern(s)?);
            entries.push((t, s, value));
        }
        let n = types.len();
        let mut model = Self::from_entries(n, window, entries)?;
        model.vocab_hash = sidecar.vocab_hash.clone();
        Ok((model, types))
    }
}

/// JSON metadata written next to a co-occurrence TSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoocSidecar {
    pub m: usize,
    pub boundary: Boundary,
    pub vocab_hash: Option<String>,
    pub vocab_size: usize,
    /// `M_F^m`.
    pub total: f64,
}

/// Counts every ordered pair of positions `i != j` with `|i - j| <= m`
/// inside the same sentence (or document, per the boundary mode).
///
/// Documents are counted in parallel; integer merging keeps the result
/// identical to a sequential pass for any thread count.
pub fn count_cooccurrences(corpus: &Corpus, window: WindowConfig) -> CoocModel {
    count_documents(corpus.documents(), corpus.vocab().len(), window)
        .with_vocab_hash(corpus.vocab().content_hash())
}

/// Counts a subset of documents against a vocabulary of `vocab_size` ids.
pub fn count_documents<'a, D>(docs: D, vocab_size: usize, window: WindowConfig) -> CoocModel
where
    D: IntoParallelIterator<Item = &'a Document>,
{
    let merged = docs
        .into_par_iter()
        .fold(HashMap::new, |mut acc: HashMap<(TokenId, TokenId), u64>, doc| {
            count_document(doc, window, &mut acc);
            acc
        })
        .reduce(HashMap::new, |mut a, b| {
            if a.len() < b.len() {
                return merge_into(b, a);
            }
            for (k, v) in b {
                *a.entry(k).or_insert(0) += v;
            }
            a
        });
    let counts = merged.into_iter().map(|(k, v)| (k, v as f64)).collect();
    CoocModel::assemble(counts, vocab_size, window, None)
}

fn merge_into(
    mut into: HashMap<(TokenId, TokenId), u64>,
    from: HashMap<(TokenId, TokenId), u64>,
) -> HashMap<(TokenId, TokenId), u64> {
    for (k, v) in from {
        *into.entry(k).or_insert(0) += v;
    }
    into
}

fn count_document(doc: &Document, window: WindowConfig, acc: &mut HashMap<(TokenId, TokenId), u64>) {
    let m = window.radius;
    let mut count_span = |span: &[TokenId]| {
        for (i, &a) in span.iter().enumerate() {
            for &b in span.iter().skip(i + 1).take(m) {
                *acc.entry((a, b)).or_insert(0) += 1;
                *acc.entry((b, a)).or_insert(0) += 1;
            }
        }
    };
    match window.boundary {
        Boundary::Sentence => doc.sentences().for_each(&mut count_span),
        Boundary::Document => count_span(doc.tokens()),
    }
}

/// Per-sentence co-occurrence capacity `(min(m, L) - 1)(2L - min(m, L))`.
///
/// This closed form equals ordered-pair counting at radius `m - 1`; use
/// [`exact_sentence_capacity`] for the radius-`m` count.
pub fn sentence_capacity(len: usize, m: usize) -> u64 {
    if len == 0 || m == 0 {
        return 0;
    }
    let mm = m.min(len) as u64;
    let l = len as u64;
    (mm - 1) * (2 * l - mm)
}

/// Ordered pairs within radius `m` in a sentence of length `len`:
/// `m(2L - m - 1)` for `m < L`, otherwise `L(L - 1)`.
pub fn exact_sentence_capacity(len: usize, m: usize) -> u64 {
    let (l, m) = (len as u64, m as u64);
    if m >= l {
        l * l.saturating_sub(1)
    } else {
        m * (2 * l - m - 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CapacityFormula {
    /// `(min(m, L) - 1)(2L - min(m, L))`.
    #[default]
    Paper,
    /// Radius-`m` ordered-pair count.
    Exact,
}

impl CapacityFormula {
    pub fn per_sentence(self, len: usize, m: usize) -> u64 {
        match self {
            Self::Paper => sentence_capacity(len, m),
            Self::Exact => exact_sentence_capacity(len, m),
        }
    }
}

impl FromStr for CapacityFormula {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "paper" => Ok(Self::Paper),
            "exact" => Ok(Self::Exact),
            other => Err(format!("unknown capacity formula `{other}` (expected paper|exact)")),
        }
    }
}

/// `T_m = Σ_L S_L T_{L,m}` over a sentence-length histogram; `T_0 = 0`.
pub fn total_capacity(histogram: &BTreeMap<usize, u64>, m: usize, formula: CapacityFormula) -> u64 {
    if m == 0 {
        return 0;
    }
    histogram
        .iter()
        .map(|(&len, &count)| count * formula.per_sentence(len, m))
        .sum()
}

/// `F[t,s] / f^m_t` over the stored entries.
pub fn conditional_matrix(model: &CoocModel) -> BTreeMap<(TokenId, TokenId), f64> {
    model
        .entries()
        .map(|(t, s, v)| {
            let f = model.marginal(t);
            assert!(f > 0.0, "row {t} has entries but zero marginal");
            ((t, s), v / f)
        })
        .collect()
}

/// `ln(F[t,s] M_F / (f^m_t f^m_s))` over the stored (positive) entries.
pub fn pmi_matrix(model: &CoocModel) -> BTreeMap<(TokenId, TokenId), f64> {
    let total = model.total();
    model
        .entries()
        .map(|(t, s, v)| {
            let denom = model.marginal(t) * model.marginal(s);
            ((t, s), (v * total / denom).ln())
        })
        .collect()
}
