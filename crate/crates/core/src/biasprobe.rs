//! Analogical dissonance: how far the log frequency ratios of an analogy's
//! two dyads disagree, averaged per category and compared across corpora.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::corpus::Corpus;

#[derive(Debug, Error)]
pub enum BiasError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("frequency table is empty")]
    EmptyTable,
    #[error("`{0}` is not in the frequency table")]
    OutOfVocabulary(String),
    #[error("largest count is 1, so the normalizer log f_max is 0")]
    Degenerate,
    #[error("dissonance needs positive counts")]
    ZeroCount,
    #[error("analogy words must be non-empty")]
    EmptyWord,
    #[error("category {id}: all {dropped} analogies are out of vocabulary")]
    AllDropped { id: String, dropped: usize },
    #[error("no analogy files under {0}")]
    NoCategories(PathBuf),
}

/// `x : y` with dyads `x = (t, s)` and `y = (t̃, s̃)`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Analogy {
    pub x: (String, String),
    pub y: (String, String),
}

impl Analogy {
    pub fn new(x: (&str, &str), y: (&str, &str)) -> Result<Self, BiasError> {
        if [x.0, x.1, y.0, y.1].iter().any(|w| w.is_empty()) {
            return Err(BiasError::EmptyWord);
        }
        Ok(Self {
            x: (x.0.to_string(), x.1.to_string()),
            y: (y.0.to_string(), y.1.to_string()),
        })
    }

    pub fn words(&self) -> [&str; 4] {
        [&self.x.0, &self.x.1, &self.y.0, &self.y.1]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalogyCategory {
    pub id: String,
    pub name: String,
    pub analogies: Vec<Analogy>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyTable {
    counts: BTreeMap<String, u64>,
    max_log: f64,
}

impl FrequencyTable {
    pub fn from_counts<I, S>(counts: I) -> Result<Self, BiasError>
    where
        I: IntoIterator<Item = (S, u64)>,
        S: Into<String>,
    {
        let mut table = BTreeMap::new();
        for (word, c) in counts {
            if c == 0 {
                return Err(BiasError::Malformed {
                    line: 0,
                    reason: "counts must be positive".into(),
                });
            }
            *table.entry(word.into()).or_insert(0) += c;
        }
        let max = table.values().copied().max().ok_or(BiasError::EmptyTable)?;
        Ok(Self {
            counts: table,
            max_log: (max as f64).ln(),
        })
    }

    /// Unigram counts of an ingested corpus.
    pub fn from_corpus(corpus: &Corpus) -> Self {
        let vocab = corpus.vocab();
        Self::from_counts(vocab.types().iter().cloned().zip(vocab.freqs().iter().copied()))
            .expect("ingested corpora are non-empty with positive counts")
    }

    /// `type<whitespace>count` per line; duplicate types are summed. With
    /// `fold_case`, types are lowercased before merging.
    pub fn parse(text: &str, fold_case: bool) -> Result<Self, BiasError> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let malformed = |reason: &str| BiasError::Malformed {
                line: i + 1,
                reason: reason.to_string(),
            };
            let (word, count) = line
                .rsplit_once(|c: char| c.is_whitespace())
                .ok_or_else(|| malformed("expected `type<TAB>count`"))?;
            let word = word.trim();
            if word.is_empty() {
                return Err(malformed("empty type"));
            }
            let count: u64 = count.parse().map_err(|_| malformed("count is not a non-negative integer"))?;
            if count == 0 {
                return Err(malformed("counts must be positive"));
            }
            let word = if fold_case { word.to_lowercase() } else { word.to_string() };
            entries.push((word, count));
        }
        Self::from_counts(entries)
    }

    pub fn load(path: &Path, fold_case: bool) -> Result<Self, BiasError> {
        let text = fs::read_to_string(path).map_err(|source| BiasError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, fold_case)
    }

    pub fn get(&self, word: &str) -> Option<u64> {
        self.counts.get(word).copied()
    }

    /// `log` of the largest count, taken over the whole table.
    pub fn max_log(&self) -> f64 {
        self.max_log
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u64)> + '_ {
        self.counts.iter().map(|(w, &c)| (w.as_str(), c))
    }

    fn lookup(&self, analogy: &Analogy) -> Result<[u64; 4], BiasError> {
        let mut f = [0; 4];
        for (slot, word) in f.iter_mut().zip(analogy.words()) {
            *slot = self.get(word).ok_or_else(|| BiasError::OutOfVocabulary(word.to_string()))?;
        }
        Ok(f)
    }
}

/// `|log(f_t f_s̃ / (f_s f_t̃))| / log f_max`.
pub fn dissonance(analogy: &Analogy, freqs: &FrequencyTable) -> Result<f64, BiasError> {
    dissonance_from_counts(freqs.lookup(analogy)?, freqs.max_log)
}

/// Dissonance of the counts `[f_t, f_s, f_t̃, f_s̃]` under the normalizer
/// `max_log`, which need not be the log of an integer.
pub fn dissonance_from_counts(counts: [u64; 4], max_log: f64) -> Result<f64, BiasError> {
    if !(max_log > 0.0) {
        return Err(BiasError::Degenerate);
    }
    if counts.contains(&0) {
        return Err(BiasError::ZeroCount);
    }
    let [ft, fs, ftt, fst] = counts.map(|f| f as u128);
    // integer products keep equal ratios exactly at zero
    let numerator = ((ft * fst) as f64 / (fs * ftt) as f64).ln().abs();
    Ok(numerator / max_log)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DroppedAnalogy {
    pub analogy: Analogy,
    pub missing: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategoryAverage {
    /// Frequency-weighted mean of the included Δ values.
    pub d: f64,
    pub included: usize,
    /// `(Δ, weight)` per included analogy, in input order.
    pub deltas: Vec<(f64, f64)>,
    pub dropped: Vec<DroppedAnalogy>,
}

/// `D = Σ w_i Δ_i / Σ w_i` with `w_i = f_t + f_s + f_t̃ + f_s̃`; analogies
/// with an out-of-vocabulary word are dropped and recorded.
pub fn category_average(category: &AnalogyCategory, freqs: &FrequencyTable) -> Result<CategoryAverage, BiasError> {
    if freqs.max_log <= 0.0 {
        return Err(BiasError::Degenerate);
    }
    let mut deltas = Vec::new();
    let mut dropped = Vec::new();
    for analogy in &category.analogies {
        match freqs.lookup(analogy) {
            Ok(f) => {
                let delta = dissonance(analogy, freqs)?;
                deltas.push((delta, f.iter().map(|&c| c as f64).sum()));
            }
            Err(BiasError::OutOfVocabulary(missing)) => dropped.push(DroppedAnalogy {
                analogy: analogy.clone(),
                missing,
            }),
            Err(e) => return Err(e),
        }
    }
    if deltas.is_empty() {
        return Err(BiasError::AllDropped {
            id: category.id.clone(),
            dropped: dropped.len(),
        });
    }
    let (num, den) = deltas
        .iter()
        .fold((0.0, 0.0), |(n, d), &(delta, w)| (n + w * delta, d + w));
    Ok(CategoryAverage {
        d: num / den,
        included: deltas.len(),
        deltas,
        dropped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Lower {
    A,
    B,
    Tie,
}

#[derive(Debug, Clone, Serialize)]
pub struct CategoryComparison {
    pub id: String,
    pub name: String,
    pub analogies: usize,
    pub a: Result<CategoryAverage, String>,
    pub b: Option<Result<CategoryAverage, String>>,
    /// `D_A − D_B` when both sides are defined.
    pub diff: Option<f64>,
    pub lower: Option<Lower>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DissonanceReport {
    pub categories: Vec<CategoryComparison>,
}

/// Per-category averages for one or two tables. Category failures are
/// recorded in place, never fatal.
pub fn compare_corpora(
    categories: &[AnalogyCategory],
    freqs_a: &FrequencyTable,
    freqs_b: Option<&FrequencyTable>,
) -> Result<DissonanceReport, BiasError> {
    for table in std::iter::once(freqs_a).chain(freqs_b) {
        if table.max_log <= 0.0 {
            return Err(BiasError::Degenerate);
        }
    }
    let categories = categories
        .par_iter()
        .map(|cat| {
            let a = category_average(cat, freqs_a).map_err(|e| e.to_string());
            let b = freqs_b.map(|t| category_average(cat, t).map_err(|e| e.to_string()));
            let (diff, lower) = match (&a, &b) {
                (Ok(a), Some(Ok(b))) => {
                    let lower = if a.d < b.d {
                        Lower::A
                    } else if b.d < a.d {
                        Lower::B
                    } else {
                        Lower::Tie
                    };
                    (Some(a.d - b.d), Some(lower))
                }
                _ => (None, None),
            };
            CategoryComparison {
                id: cat.id.clone(),
                name: cat.name.clone(),
                analogies: cat.analogies.len(),
                a,
                b,
                diff,
                lower,
            }
        })
        .collect();
    Ok(DissonanceReport { categories })
}

impl DissonanceReport {
    /// One row per category: `category name D_A [D_B lower] dropped_A [dropped_B]`.
    /// Undefined averages are written as `dropped`; the lower of two values
    /// is marked with `*`.
    pub fn write_table<W: Write>(&self, mut out: W) -> io::Result<()> {
        let two = self.categories.iter().any(|c| c.b.is_some());
        if two {
            writeln!(out, "category\tname\tD_A\tD_B\tdropped_A\tdropped_B")?;
        } else {
            writeln!(out, "category\tname\tD\tdropped")?;
        }
        let cell = |r: &Result<CategoryAverage, String>, star: bool| match r {
            Ok(avg) => format!("{}{}", avg.d, if star { "*" } else { "" }),
            Err(_) => "dropped".to_string(),
        };
        let drops = |r: &Result<CategoryAverage, String>, total: usize| match r {
            Ok(avg) => avg.dropped.len(),
            Err(_) => total,
        };
        for c in &self.categories {
            write!(
                out,
                "{}\t{}\t{}",
                c.id,
                c.name,
                cell(&c.a, c.lower == Some(Lower::A))
            )?;
            if let Some(b) = &c.b {
                write!(out, "\t{}", cell(b, c.lower == Some(Lower::B)))?;
            }
            write!(out, "\t{}", drops(&c.a, c.analogies))?;
            if let Some(b) = &c.b {
                write!(out, "\t{}", drops(b, c.analogies))?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    /// Bar data `category D_A D_B diff`, only for categories defined on both sides.
    pub fn write_bars<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "category\tD_A\tD_B\tdiff")?;
        for c in &self.categories {
            if let (Ok(a), Some(Ok(b)), Some(diff)) = (&c.a, &c.b, c.diff) {
                writeln!(out, "{}\t{}\t{}\t{}", c.id, a.d, b.d, diff)?;
            }
        }
        Ok(())
    }

    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        for c in &self.categories {
            let two = c.b.is_some();
            for (label, r) in std::iter::once(("A", &c.a)).chain(c.b.as_ref().map(|b| ("B", b))) {
                if let Err(e) = r {
                    out.push(if two { format!("corpus {label}: {e}") } else { e.clone() });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BatsOptions {
    /// Expand every slash-separated answer instead of the first.
    pub exhaustive: bool,
    /// Keep both `x:y` and `y:x`.
    pub ordered: bool,
}

#[derive(Debug, Clone, Default)]
pub struct BatsLoad {
    pub categories: Vec<AnalogyCategory>,
    pub warnings: Vec<String>,
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), BiasError> {
    let io_err = |source| BiasError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err)?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()
        .map_err(io_err)?;
    entries.sort();
    for path in entries {
        if path.is_dir() {
            collect_files(&path, out)?;
        } else if path.extension().is_some_and(|e| e == "txt") {
            out.push(path);
        }
    }
    Ok(())
}

/// `"E03 [UK_city - county]"` → `("E03", "UK_city - county")`.
fn category_label(stem: &str) -> (String, String) {
    match stem.split_once(' ') {
        Some((id, rest)) => (
            id.to_string(),
            rest.trim().trim_start_matches('[').trim_end_matches(']').trim().to_string(),
        ),
        None => (stem.to_string(), stem.to_string()),
    }
}

/// Analogies of one category file. Words are lowercased.
pub fn parse_bats_category(id: &str, name: &str, text: &str, options: BatsOptions) -> Result<AnalogyCategory, BiasError> {
    let mut lines: Vec<Vec<(String, String)>> = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let Some((word, answers)) = line.split_once(|c: char| c.is_whitespace()) else {
            return Err(BiasError::Malformed {
                line: i + 1,
                reason: "expected `word<TAB>answer[/answer...]`".into(),
            });
        };
        let word = word.to_lowercase();
        let mut variants = answers.trim().split('/').map(|a| a.trim().to_lowercase()).filter(|a| !a.is_empty());
        let dyads: Vec<(String, String)> = if options.exhaustive {
            variants.map(|a| (word.clone(), a)).collect()
        } else {
            variants.next().map(|a| (word.clone(), a)).into_iter().collect()
        };
        if dyads.is_empty() {
            return Err(BiasError::Malformed {
                line: i + 1,
                reason: "no answer".into(),
            });
        }
        if seen.insert(dyads.clone()) {
            lines.push(dyads);
        }
    }
    let mut analogies = Vec::new();
    let mut unique = BTreeSet::new();
    for i in 0..lines.len() {
        for j in 0..lines.len() {
            if i == j || (!options.ordered && j < i) {
                continue;
            }
            for x in &lines[i] {
                for y in &lines[j] {
                    if x == y {
                        continue;
                    }
                    let analogy = Analogy::new((&x.0, &x.1), (&y.0, &y.1))?;
                    let key = if options.ordered || analogy.x <= analogy.y {
                        (analogy.x.clone(), analogy.y.clone())
                    } else {
                        (analogy.y.clone(), analogy.x.clone())
                    };
                    if unique.insert(key) {
                        analogies.push(analogy);
                    }
                }
            }
        }
    }
    Ok(AnalogyCategory {
        id: id.to_string(),
        name: name.to_string(),
        analogies,
    })
}

/// Walks a BATS directory; each `.txt` file is one category. Files that
/// yield no analogies are skipped with a warning.
pub fn load_bats(dir: &Path, options: BatsOptions) -> Result<BatsLoad, BiasError> {
    if !dir.is_dir() {
        return Err(BiasError::Io {
            path: dir.to_path_buf(),
            source: io::Error::new(io::ErrorKind::NotFound, "not a directory"),
        });
    }
    let mut files = Vec::new();
    collect_files(dir, &mut files)?;
    let mut load = BatsLoad::default();
    for path in files {
        let text = fs::read_to_string(&path).map_err(|source| BiasError::Io {
            path: path.clone(),
            source,
        })?;
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let (id, name) = category_label(&stem);
        let category = parse_bats_category(&id, &name, &text, options).map_err(|e| match e {
            BiasError::Malformed { line, reason } => BiasError::Malformed {
                line,
                reason: format!("{}: {reason}", path.display()),
            },
            other => other,
        })?;
        if category.analogies.is_empty() {
            load.warnings.push(format!("{}: no analogies, skipped", path.display()));
        } else {
            load.categories.push(category);
        }
    }
    if load.categories.is_empty() {
        return Err(BiasError::NoCategories(dir.to_path_buf()));
    }
    Ok(load)
}
