use std::collections::BTreeMap;
use std::io::{self, Write};

use ndarray::{Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::DependenceError;
use crate::cooccurrence::{count_documents, Boundary, CoocModel, WindowConfig};
use crate::corpus::Corpus;

fn xlogx(p: f64) -> f64 {
    if p > 0.0 {
        p * p.ln()
    } else {
        0.0
    }
}

/// Mutual information over joint entropy of `P = F / M_F`, with marginals
/// `p = f / M_F`. Rounding is clamped into `[0, 1]`.
pub fn iqr(model: &CoocModel) -> Result<f64, DependenceError> {
    if model.is_empty() || model.total() <= 0.0 {
        return Err(DependenceError::Empty);
    }
    let total = model.total();
    let p = |t: u32| model.marginal(t) / total;
    let mut mi = 0.0;
    let mut h = 0.0;
    for (t, s, v) in model.entries() {
        let joint = v / total;
        mi += joint * (joint / (p(t) * p(s))).ln();
        h -= xlogx(joint);
    }
    ratio(mi, h)
}

/// Same as [`iqr`] for any non-negative table, using row and column marginals.
pub fn iqr_table(counts: &Array2<f64>) -> Result<f64, DependenceError> {
    let total = counts.sum();
    if !(total > 0.0) {
        return Err(DependenceError::Empty);
    }
    let rows = counts.sum_axis(Axis(1));
    let cols = counts.sum_axis(Axis(0));
    let mut mi = 0.0;
    let mut h = 0.0;
    for ((t, s), &v) in counts.indexed_iter() {
        if v > 0.0 {
            let joint = v / total;
            mi += joint * (joint * total * total / (rows[t] * cols[s])).ln();
            h -= xlogx(joint);
        }
    }
    ratio(mi, h)
}

fn ratio(mi: f64, h: f64) -> Result<f64, DependenceError> {
    if h <= 0.0 {
        return Err(DependenceError::ZeroEntropy);
    }
    Ok((mi / h).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileConfig {
    pub k_values: Vec<usize>,
    pub m_values: Vec<usize>,
    pub replicates: usize,
    pub seed: u64,
    pub boundary: Boundary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileRecord {
    pub k: usize,
    pub m: usize,
    pub replicate: usize,
    pub iqr: f64,
    /// Tokens in the sampled documents, `M_k`.
    pub tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IqrProfile {
    pub records: Vec<ProfileRecord>,
    pub replicates: usize,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of one `(k, replicate)` sample; every radius reuses the same sample.
fn replicate_seed(seed: u64, k: usize, replicate: usize) -> u64 {
    splitmix(splitmix(splitmix(seed) ^ k as u64) ^ replicate as u64)
}

/// IQR over a grid of sample sizes and radii. Each replicate draws `k`
/// documents without replacement from its own seed; results are sorted by
/// `(k, m, replicate)` so the output does not depend on scheduling.
pub fn iqr_profile(corpus: &Corpus, config: &ProfileConfig) -> Result<IqrProfile, DependenceError> {
    let docs = corpus.documents();
    if config.replicates == 0 {
        return Err(DependenceError::Config("replicates must be at least 1".into()));
    }
    if config.k_values.is_empty() || config.m_values.is_empty() {
        return Err(DependenceError::Config("empty k or m grid".into()));
    }
    if let Some(&k) = config.k_values.iter().find(|&&k| k == 0 || k > docs.len()) {
        return Err(DependenceError::InfeasibleK {
            k,
            documents: docs.len(),
        });
    }
    let windows = config
        .m_values
        .iter()
        .map(|&m| WindowConfig::new(m, config.boundary))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| DependenceError::Config(e.to_string()))?;
    let cells: Vec<(usize, usize)> = config
        .k_values
        .iter()
        .flat_map(|&k| (0..config.replicates).map(move |r| (k, r)))
        .collect();
    let vocab_size = corpus.vocab().len();
    let results: Vec<Result<Vec<ProfileRecord>, DependenceError>> = cells
        .par_iter()
        .map(|&(k, replicate)| {
            let mut rng = ChaCha8Rng::seed_from_u64(replicate_seed(config.seed, k, replicate));
            let mut picked = rand::seq::index::sample(&mut rng, docs.len(), k).into_vec();
            picked.sort_unstable();
            let sample: Vec<_> = picked.iter().map(|&i| &docs[i]).collect();
            let tokens = sample.iter().map(|d| d.len() as u64).sum();
            windows
                .iter()
                .map(|&window| {
                    let model = count_documents(sample.par_iter().copied(), vocab_size, window);
                    Ok(ProfileRecord {
                        k,
                        m: window.radius(),
                        replicate,
                        iqr: iqr(&model)?,
                        tokens,
                    })
                })
                .collect()
        })
        .collect();
    let mut records = Vec::with_capacity(cells.len() * windows.len());
    for r in results {
        records.extend(r?);
    }
    records.sort_by_key(|r| (r.k, r.m, r.replicate));
    Ok(IqrProfile {
        records,
        replicates: config.replicates,
    })
}

impl IqrProfile {
    /// Replicate means `(mean iqr, mean tokens)` per `(k, m)`.
    pub fn means(&self) -> BTreeMap<(usize, usize), (f64, f64)> {
        let mut acc: BTreeMap<(usize, usize), (f64, f64, usize)> = BTreeMap::new();
        for r in &self.records {
            let e = acc.entry((r.k, r.m)).or_insert((0.0, 0.0, 0));
            e.0 += r.iqr;
            e.1 += r.tokens as f64;
            e.2 += 1;
        }
        acc.into_iter()
            .map(|(key, (i, t, n))| (key, (i / n as f64, t / n as f64)))
            .collect()
    }

    pub fn write_tsv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "k\tm\treplicate\tiqr\ttokens")?;
        for r in &self.records {
            writeln!(out, "{}\t{}\t{}\t{}\t{}", r.k, r.m, r.replicate, r.iqr, r.tokens)?;
        }
        Ok(())
    }

    pub fn read_tsv(text: &str) -> Result<Self, DependenceError> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let err = |reason: &str| DependenceError::Parse {
                line: i + 1,
                reason: reason.to_string(),
            };
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 5 {
                return Err(err("expected `k m replicate iqr tokens`"));
            }
            let int = |s: &str| s.parse::<usize>().map_err(|_| err("bad integer"));
            records.push(ProfileRecord {
                k: int(f[0])?,
                m: int(f[1])?,
                replicate: int(f[2])?,
                iqr: f[3].parse().map_err(|_| err("bad iqr"))?,
                tokens: f[4].parse().map_err(|_| err("bad token count"))?,
            });
        }
        let replicates = records.iter().map(|r| r.replicate + 1).max().unwrap_or(0);
        Ok(Self { records, replicates })
    }
}
