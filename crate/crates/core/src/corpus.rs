//! Corpus ingestion, vocabulary statistics and the harmonic frequency model.
//!
//! Token ids are dense and assigned in first-occurrence order across the
//! documents in input order, so the same bytes always produce the same ids.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub type TokenId = u32;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed document record at line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("empty corpus")]
    Empty,
    #[error("vocabulary size must be at least 1")]
    EmptyVocabulary,
    #[error("infeasible generator parameters: {0}")]
    Infeasible(String),
}

/// What happens to punctuation at the edges of whitespace-delimited words.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PunctuationPolicy {
    /// Strip leading and trailing non-alphanumeric characters; internal
    /// apostrophes and hyphens survive ("they're", "well-known").
    #[default]
    Strip,
    Keep,
}

impl FromStr for PunctuationPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "strip" => Ok(Self::Strip),
            "keep" => Ok(Self::Keep),
            other => Err(format!("unknown punctuation policy `{other}` (expected strip|keep)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct TokenizeConfig {
    pub lowercase: bool,
    pub punctuation: PunctuationPolicy,
}

impl Default for TokenizeConfig {
    fn default() -> Self {
        Self {
            lowercase: true,
            punctuation: PunctuationPolicy::Strip,
        }
    }
}

/// Splits raw text into sentences of word tokens.
///
/// A sentence ends after a whitespace-delimited word whose last character
/// is `.`, `!` or `?`. Text without a terminator is a single sentence.
/// Words that are empty after punctuation stripping are dropped, but still
/// close a sentence when they carry a terminator.
pub fn tokenize(text: &str, config: &TokenizeConfig) -> Vec<Vec<String>> {
    let mut sentences = Vec::new();
    let mut current: Vec<String> = Vec::new();
    for raw in text.split_whitespace() {
        let ends_sentence = matches!(raw.chars().last(), Some('.' | '!' | '?'));
        let trimmed = match config.punctuation {
            PunctuationPolicy::Strip => raw.trim_matches(|c: char| !c.is_alphanumeric()),
            PunctuationPolicy::Keep => raw,
        };
        if !trimmed.is_empty() {
            current.push(if config.lowercase {
                trimmed.to_lowercase()
            } else {
                trimmed.to_string()
            });
        }
        if ends_sentence && !current.is_empty() {
            sentences.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        sentences.push(current);
    }
    sentences
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub label: Option<String>,
    tokens: Vec<TokenId>,
    sentence_spans: Vec<(usize, usize)>,
}

impl Document {
    pub fn tokens(&self) -> &[TokenId] {
        &self.tokens
    }

    /// Half-open `(start, end)` ranges that partition `tokens`.
    pub fn sentence_spans(&self) -> &[(usize, usize)] {
        &self.sentence_spans
    }

    pub fn sentences(&self) -> impl Iterator<Item = &[TokenId]> + '_ {
        self.sentence_spans.iter().map(|&(a, b)| &self.tokens[a..b])
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    types: Vec<String>,
    index: HashMap<String, TokenId>,
    freqs: Vec<u64>,
    ranks: Vec<u32>,
}

impl Vocabulary {
    fn from_counts(types: Vec<String>, freqs: Vec<u64>) -> Self {
        let index = types
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as TokenId))
            .collect();
        // stable sort keeps first-occurrence order among ties
        let mut order: Vec<usize> = (0..types.len()).collect();
        order.sort_by(|&a, &b| freqs[b].cmp(&freqs[a]));
        let mut ranks = vec![0u32; types.len()];
        for (r, &id) in order.iter().enumerate() {
            ranks[id] = r as u32 + 1;
        }
        Self {
            types,
            index,
            freqs,
            ranks,
        }
    }

    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }

    pub fn id(&self, word: &str) -> Option<TokenId> {
        self.index.get(word).copied()
    }

    pub fn word(&self, id: TokenId) -> &str {
        &self.types[id as usize]
    }

    pub fn types(&self) -> &[String] {
        &self.types
    }

    pub fn freq(&self, id: TokenId) -> u64 {
        self.freqs[id as usize]
    }

    pub fn freqs(&self) -> &[u64] {
        &self.freqs
    }

    pub fn rank(&self, id: TokenId) -> u32 {
        self.ranks[id as usize]
    }

    /// Ids ordered by rank, most frequent first.
    pub fn by_rank(&self) -> Vec<TokenId> {
        let mut ids = vec![0; self.len()];
        for (id, &r) in self.ranks.iter().enumerate() {
            ids[r as usize - 1] = id as TokenId;
        }
        ids
    }

    /// SHA-256 over the newline-joined type strings in id order.
    pub fn content_hash(&self) -> String {
        types_hash(&self.types)
    }
}

/// The hash [`Vocabulary::content_hash`] gives for these types in this order.
pub fn types_hash<S: AsRef<str>>(types: &[S]) -> String {
    let mut hasher = Sha256::new();
    for t in types {
        hasher.update(t.as_ref().as_bytes());
        hasher.update(b"\n");
    }
    hex(&hasher.finalize())
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    use std::fmt::Write;
    bytes.iter().fold(String::with_capacity(bytes.len() * 2), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    documents: Vec<Document>,
    vocab: Vocabulary,
    total_tokens: u64,
}

impl Corpus {
    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn total_tokens(&self) -> u64 {
        self.total_tokens
    }

    /// Builds a corpus from pre-tokenized documents (documents → sentences → words).
    pub fn from_tokenized<D, S, W>(docs: D) -> Result<Self, CorpusError>
    where
        D: IntoIterator<Item = S>,
        S: IntoIterator<Item = Vec<W>>,
        W: AsRef<str>,
    {
        let mut builder = CorpusBuilder::default();
        for doc in docs {
            let sentences = doc
                .into_iter()
                .map(|s| s.iter().map(|w| w.as_ref().to_string()).collect())
                .collect();
            builder.push(None, sentences);
        }
        builder.finish()
    }

    /// Tokenizes each text as one document.
    pub fn from_texts<I, T>(texts: I, config: &TokenizeConfig) -> Result<Self, CorpusError>
    where
        I: IntoIterator<Item = T>,
        T: AsRef<str>,
    {
        let mut builder = CorpusBuilder::default();
        for text in texts {
            builder.push(None, tokenize(text.as_ref(), config));
        }
        builder.finish()
    }

    /// Number of sentences for each sentence length `L`.
    pub fn sentence_length_histogram(&self) -> BTreeMap<usize, u64> {
        sentence_length_histogram(self.documents.iter())
    }

    /// One `{"id", "text"}` line per document, each sentence closed by a
    /// period, so that [`ingest`] reads the same documents back.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> io::Result<()> {
        for (i, doc) in self.documents.iter().enumerate() {
            let text = doc
                .sentences()
                .map(|s| {
                    let words: Vec<&str> = s.iter().map(|&t| self.vocab.word(t)).collect();
                    words.join(" ") + "."
                })
                .collect::<Vec<_>>()
                .join(" ");
            let id = doc.label.clone().unwrap_or_else(|| format!("doc{i}"));
            let line = serde_json::json!({ "id": id, "text": text });
            writeln!(out, "{line}")?;
        }
        Ok(())
    }
}

pub fn sentence_length_histogram<'a>(
    docs: impl IntoIterator<Item = &'a Document>,
) -> BTreeMap<usize, u64> {
    let mut hist = BTreeMap::new();
    for doc in docs {
        for &(a, b) in doc.sentence_spans() {
            *hist.entry(b - a).or_insert(0) += 1;
        }
    }
    hist
}

#[derive(Default)]
struct CorpusBuilder {
    index: HashMap<String, TokenId>,
    types: Vec<String>,
    freqs: Vec<u64>,
    documents: Vec<Document>,
    total: u64,
}

impl CorpusBuilder {
    fn push(&mut self, label: Option<String>, sentences: Vec<Vec<String>>) {
        let mut tokens = Vec::new();
        let mut spans = Vec::with_capacity(sentences.len());
        for sentence in sentences {
            if sentence.is_empty() {
                continue;
            }
            let start = tokens.len();
            for word in sentence {
                let id = match self.index.get(&word) {
                    Some(&id) => id,
                    None => {
                        let id = self.types.len() as TokenId;
                        self.index.insert(word.clone(), id);
                        self.types.push(word);
                        self.freqs.push(0);
                        id
                    }
                };
                self.freqs[id as usize] += 1;
                tokens.push(id);
            }
            spans.push((start, tokens.len()));
        }
        if tokens.is_empty() {
            return;
        }
        self.total += tokens.len() as u64;
        self.documents.push(Document {
            label,
            tokens,
            sentence_spans: spans,
        });
    }

    fn finish(self) -> Result<Corpus, CorpusError> {
        if self.total == 0 {
            return Err(CorpusError::Empty);
        }
        Ok(Corpus {
            documents: self.documents,
            vocab: Vocabulary::from_counts(self.types, self.freqs),
            total_tokens: self.total,
        })
    }
}

/// Reads a corpus from a directory of `.txt` files (one document per file,
/// lexicographic order) or from a JSON-lines file with a `"text"` field.
pub fn ingest(path: &Path, config: &TokenizeConfig) -> Result<Corpus, CorpusError> {
    let io_err = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    let raw: Vec<(Option<String>, String)> = if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)
            .map_err(io_err)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "txt"))
            .collect();
        files.sort();
        files
            .into_iter()
            .map(|p| {
                let text = fs::read_to_string(&p).map_err(|source| CorpusError::Io {
                    path: p.clone(),
                    source,
                })?;
                let label = p.file_name().map(|n| n.to_string_lossy().into_owned());
                Ok((label, text))
            })
            .collect::<Result<_, CorpusError>>()?
    } else {
        let content = fs::read_to_string(path).map_err(io_err)?;
        parse_jsonl(&content)?
    };

    let tokenized: Vec<_> = raw
        .into_par_iter()
        .map(|(label, text)| (label, tokenize(&text, config)))
        .collect();
    let mut builder = CorpusBuilder::default();
    for (label, sentences) in tokenized {
        builder.push(label, sentences);
    }
    builder.finish()
}

fn parse_jsonl(content: &str) -> Result<Vec<(Option<String>, String)>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in content.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(line).map_err(|e| CorpusError::Malformed {
                line: line_no,
                reason: e.to_string(),
            })?;
        let text = value
            .get("text")
            .and_then(|t| t.as_str())
            .ok_or_else(|| CorpusError::Malformed {
                line: line_no,
                reason: "missing string field \"text\"".into(),
            })?;
        let label = match value.get("id") {
            None | Some(serde_json::Value::Null) => None,
            Some(serde_json::Value::String(s)) => Some(s.clone()),
            Some(other) => Some(other.to_string()),
        };
        out.push((label, text.to_string()));
    }
    Ok(out)
}

/// Model frequencies `N / r` for ranks `r = 1..=N`; the least frequent type
/// gets exactly 1.
pub fn harmonic_model(n: usize) -> Result<Vec<f64>, CorpusError> {
    if n == 0 {
        return Err(CorpusError::EmptyVocabulary);
    }
    Ok((1..=n).map(|r| n as f64 / r as f64).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum SentenceLengths {
    Fixed(usize),
    /// Inclusive range.
    Uniform { min: usize, max: usize },
}

impl SentenceLengths {
    fn sample(&self, rng: &mut impl Rng) -> usize {
        match *self {
            Self::Fixed(l) => l,
            Self::Uniform { min, max } => rng.random_range(min..=max),
        }
    }

    fn validate(&self) -> Result<(), CorpusError> {
        match *self {
            Self::Fixed(0) => Err(CorpusError::Infeasible("sentence length 0".into())),
            Self::Uniform { min, max } if min == 0 || min > max => Err(CorpusError::Infeasible(
                format!("bad sentence length range {min}-{max}"),
            )),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for SentenceLengths {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Fixed(l) => write!(f, "fixed:{l}"),
            Self::Uniform { min, max } => write!(f, "uniform:{min}-{max}"),
        }
    }
}

impl FromStr for SentenceLengths {
    type Err = String;

    /// `fixed:20` or `uniform:5-40`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || format!("bad sentence length spec `{s}` (expected fixed:L or uniform:A-B)");
        let (kind, arg) = s.split_once(':').ok_or_else(bad)?;
        match kind {
            "fixed" => arg.parse().map(Self::Fixed).map_err(|_| bad()),
            "uniform" => {
                let (a, b) = arg.split_once('-').ok_or_else(bad)?;
                Ok(Self::Uniform {
                    min: a.parse().map_err(|_| bad())?,
                    max: b.parse().map_err(|_| bad())?,
                })
            }
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ZipfCorpusConfig {
    pub vocab_size: usize,
    pub tokens: usize,
    pub sentence_lengths: SentenceLengths,
    pub documents: usize,
    pub seed: u64,
}

/// Synthetic corpus with harmonic unigram frequencies.
///
/// Every type is placed once, the remaining `tokens - vocab_size` positions
/// are i.i.d. draws proportional to [`harmonic_model`], and the stream is
/// shuffled before being cut into sentences. Sentences are split
/// contiguously into `documents` documents of near-equal sentence counts.
/// Type strings are `w<rank>`.
pub fn generate_zipf_corpus(config: &ZipfCorpusConfig) -> Result<Corpus, CorpusError> {
    let n = config.vocab_size;
    let m = config.tokens;
    if n < 2 {
        return Err(CorpusError::Infeasible(format!("vocab size {n} < 2")));
    }
    if m < n {
        return Err(CorpusError::Infeasible(format!("{m} tokens < vocab size {n}")));
    }
    config.sentence_lengths.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let weights = harmonic_model(n)?;
    let dist = WeightedIndex::new(&weights).expect("harmonic weights are positive");
    let mut stream: Vec<usize> = (0..n).collect();
    stream.extend((n..m).map(|_| dist.sample(&mut rng)));
    stream.shuffle(&mut rng);

    let mut sentences: Vec<Vec<String>> = Vec::new();
    let mut pos = 0;
    while pos < m {
        let len = config.sentence_lengths.sample(&mut rng).min(m - pos);
        sentences.push(
            stream[pos..pos + len]
                .iter()
                .map(|&r| format!("w{}", r + 1))
                .collect(),
        );
        pos += len;
    }
    let docs = config.documents.max(1);
    if docs > sentences.len() {
        return Err(CorpusError::Infeasible(format!(
            "{docs} documents but only {} sentences",
            sentences.len()
        )));
    }
    let total = sentences.len();
    let mut builder = CorpusBuilder::default();
    let mut iter = sentences.into_iter();
    for d in 0..docs {
        let take = (d + 1) * total / docs - d * total / docs;
        builder.push(Some(format!("doc{d}")), iter.by_ref().take(take).collect());
    }
    builder.finish()
}
