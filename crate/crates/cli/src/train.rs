use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use cooc_core::cooccurrence::{count_cooccurrences, CoocModel, CoocSidecar};
use cooc_core::corpus::types_hash;
use cooc_core::embeddings::{
    all_pairs, dissect_unclamped_bias, frequency_ratio_report, ratio_convention, read_pair, train as fit, verify_factorization,
    write_pair, BiasFit, CountTable, EmbeddingError, EmbeddingPair, FrequencyRatioReport, Objective, TargetParams,
    TrainConfig,
};
use cooc_core::ifm::IfmModel;
use serde::{Deserialize, Serialize};

use crate::count::{CorpusArgs, WindowArgs};
use crate::run::{failure, usage, CliResult, Run};
use crate::Global;

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct CountsArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub corpus: CorpusArgs,
    /// Co-occurrence TSV written by `cooc`; its sidecar is the same path with a .json extension.
    #[arg(long, conflicts_with = "corpus")]
    pub counts: Option<PathBuf>,
    /// `vocab.tsv` fixing the type order of --counts; defaults to the one
    /// beside the counts file when present.
    #[arg(long, requires = "counts")]
    pub vocab: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub window: WindowArgs,
    /// Replace the counts with their independent-frequencies model.
    #[arg(long)]
    #[serde(default)]
    pub ifm: bool,
}

impl CountsArgs {
    fn load(&self, run: &mut Run) -> CliResult<(CountTable, Vec<String>)> {
        let (model, types) = match (&self.counts, &self.corpus.corpus) {
            (Some(path), None) => read_counts(path, self.vocab.as_deref(), run)?,
            (None, Some(_)) => {
                let corpus = self.corpus.load(run)?;
                let window = self.window.window()?;
                let types = corpus.vocab().types().to_vec();
                if self.ifm {
                    let ifm = IfmModel::from_corpus(&corpus, window);
                    return Ok((CountTable::from_ifm(&ifm).map_err(usage)?, types));
                }
                (count_cooccurrences(&corpus, window), types)
            }
            _ => return Err(usage("give exactly one of --corpus or --counts")),
        };
        if self.ifm {
            let ifm = IfmModel::from_inflated(&model).map_err(usage)?;
            return Ok((CountTable::from_ifm(&ifm).map_err(usage)?, types));
        }
        Ok((CountTable::from_cooc(&model), types))
    }
}

fn read_counts(path: &Path, vocab: Option<&Path>, run: &mut Run) -> CliResult<(CoocModel, Vec<String>)> {
    let read = |p: &Path| fs::read_to_string(p).map_err(|e| usage(format!("cannot read {}: {e}", p.display())));
    let sidecar_path = path.with_extension("json");
    let sidecar: CoocSidecar =
        serde_json::from_str(&read(&sidecar_path)?).map_err(|e| usage(format!("{}: {e}", sidecar_path.display())))?;
    let beside = path.with_file_name("vocab.tsv");
    let vocab_path = vocab.map(Path::to_path_buf).or_else(|| beside.exists().then_some(beside));
    let text = read(path)?;
    let parsed = match &vocab_path {
        Some(vp) => {
            let types: Vec<String> = read(vp)?
                .lines()
                .skip(1)
                .filter(|l| !l.is_empty())
                .map(|l| l.split('\t').next().unwrap_or_default().to_string())
                .collect();
            if sidecar.vocab_hash.as_ref().is_some_and(|h| *h != types_hash(&types)) {
                return Err(usage(format!("{} does not match the vocabulary hash in {}", vp.display(), sidecar_path.display())));
            }
            CoocModel::read_tsv_with_types(&text, &sidecar, types).map_err(usage)?
        }
        None => CoocModel::read_tsv(&text, &sidecar).map_err(usage)?,
    };
    run.input(path)?;
    run.input(&sidecar_path)?;
    if let Some(vp) = &vocab_path {
        run.input(vp)?;
    }
    Ok(parsed)
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct CheckArgs {
    /// Largest tolerated factorization error on positive entries.
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// Largest tolerated frequency-ratio deviation (checked with --ifm).
    #[arg(long)]
    pub ratio_tolerance: Option<f64>,
    /// Most frequent types used in the frequency-ratio check.
    #[arg(long)]
    pub ratio_types: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub negatives: Option<usize>,
}

#[derive(Debug, Serialize)]
struct FactorizationSummary {
    objective: Objective,
    positive_entries: usize,
    max_abs_error: f64,
    mean_abs_error: f64,
    tolerance: Option<f64>,
    passed: bool,
}

#[derive(Debug, Serialize)]
struct RatioCheck {
    #[serde(flatten)]
    report: FrequencyRatioReport,
    tolerance: f64,
    passed: bool,
}

#[derive(Debug, Serialize)]
struct Verification {
    factorization: FactorizationSummary,
    frequency_ratio: Option<RatioCheck>,
    bias_fit: Option<BiasFit>,
    passed: bool,
}

fn verification(pair: &EmbeddingPair, counts: &CountTable, ifm: bool, check: &CheckArgs) -> CliResult<Verification> {
    let params = TargetParams {
        alpha: check.alpha.unwrap_or(0.75),
        negatives: check.negatives.unwrap_or(5),
    };
    let report = verify_factorization(pair, counts, &params).map_err(usage)?;
    let factorization = FactorizationSummary {
        objective: report.objective,
        positive_entries: report.positive_entries,
        max_abs_error: report.max_abs_error,
        mean_abs_error: report.mean_abs_error,
        tolerance: check.tolerance,
        passed: check.tolerance.is_none_or(|t| report.converged(t)),
    };
    let freqs = counts.marginals().to_vec();
    let frequency_ratio = match ratio_convention(pair.objective, params.alpha) {
        Some((side, scale)) if ifm => {
            // the most frequent types, in id order
            let mut order: Vec<usize> = (0..freqs.len()).collect();
            order.sort_by(|&a, &b| freqs[b].total_cmp(&freqs[a]).then(a.cmp(&b)));
            order.truncate(check.ratio_types.unwrap_or(100));
            order.sort_unstable();
            let pairs: Vec<(usize, usize)> = all_pairs(order.len()).into_iter().map(|(i, j)| (order[i], order[j])).collect();
            let report = frequency_ratio_report(pair, &freqs, side, scale, &pairs).map_err(usage)?;
            let tolerance = check.ratio_tolerance.unwrap_or(0.05);
            Some(RatioCheck {
                passed: report.max_deviation <= tolerance,
                report,
                tolerance,
            })
        }
        _ => None,
    };
    let bias_fit = match dissect_unclamped_bias(pair, &freqs) {
        Ok(fit) => Some(fit),
        Err(EmbeddingError::NoBiases | EmbeddingError::DegenerateFrequencies) => None,
        Err(e) => return Err(usage(e)),
    };
    let passed = factorization.passed && frequency_ratio.as_ref().is_none_or(|r| r.passed);
    Ok(Verification {
        factorization,
        frequency_ratio,
        bias_fit,
        passed,
    })
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct TrainArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub input: CountsArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub check: CheckArgs,
    /// glove-clamped, glove, softmax-nll, softmax-regression, sgns-exact or sgns-sampled.
    #[arg(long)]
    pub objective: Option<Objective>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub x_max: Option<f64>,
    #[arg(long)]
    pub weight_exponent: Option<f64>,
    /// Relative loss change that counts as converged; 0 runs every epoch.
    #[arg(long)]
    pub convergence: Option<f64>,
    #[arg(long)]
    pub init_scale: Option<f64>,
    /// Keep the learning rate fixed even when the loss rises.
    #[arg(long)]
    #[serde(default)]
    pub no_halving: bool,
    #[arg(long)]
    pub softmax_vocab_cap: Option<usize>,
}

impl TrainArgs {
    fn config(&self, seed: u64) -> TrainConfig {
        let d = TrainConfig::default();
        TrainConfig {
            objective: self.objective.unwrap_or(d.objective),
            dim: self.dim.unwrap_or(d.dim),
            learning_rate: self.learning_rate.unwrap_or(d.learning_rate),
            epochs: self.epochs.unwrap_or(d.epochs),
            seed,
            alpha: self.check.alpha.unwrap_or(d.alpha),
            negatives: self.check.negatives.unwrap_or(d.negatives),
            x_max: self.x_max.unwrap_or(d.x_max),
            weight_exponent: self.weight_exponent.unwrap_or(d.weight_exponent),
            tolerance: self.convergence.unwrap_or(d.tolerance),
            halve_on_increase: !self.no_halving,
            init_scale: self.init_scale.or(d.init_scale),
            softmax_vocab_cap: self.softmax_vocab_cap.unwrap_or(d.softmax_vocab_cap),
        }
    }
}

#[derive(Debug, Serialize)]
struct TrainSummary {
    config: TrainConfig,
    vocab_size: usize,
    initial_loss: f64,
    final_loss: f64,
    epochs_run: usize,
    converged: bool,
    final_learning_rate: f64,
    gauge_normalized: bool,
}

/// Writes `pair.tsv`, `losses.tsv`, `train.json` and `verification.json`.
pub fn train(global: &Global, args: TrainArgs) -> CliResult<()> {
    let config = args.config(global.seed());
    config.validate().map_err(usage)?;
    let mut run = Run::new("train", global.out(), &args, Some(global.seed()), global.threads)?;
    run.resolve("train", &config)?;
    let (counts, types) = args.input.load(&mut run)?;
    let result = fit(&counts, &config).map_err(|e| match e {
        EmbeddingError::Divergence { .. } => failure(e),
        other => usage(other),
    })?;
    run.write_with("pair.tsv", |w| write_pair(&result.pair, &types, w))?;
    run.write_with("losses.tsv", |w| {
        use std::io::Write;
        writeln!(w, "epoch\tloss")?;
        for (epoch, loss) in result.losses.iter().enumerate() {
            writeln!(w, "{epoch}\t{loss}")?;
        }
        Ok(())
    })?;
    run.write_json(
        "train.json",
        &TrainSummary {
            config,
            vocab_size: counts.len(),
            initial_loss: result.losses[0],
            final_loss: *result.losses.last().unwrap(),
            epochs_run: result.epochs_run,
            converged: result.converged,
            final_learning_rate: result.final_learning_rate,
            gauge_normalized: result.gauge_normalized,
        },
    )?;
    let check = verification(&result.pair, &counts, args.input.ifm, &args.check)?;
    run.write_json("verification.json", &check)?;
    let passed = check.passed;
    run.finish()?;
    if !passed {
        return Err(failure("verification thresholds not met; see verification.json"));
    }
    Ok(())
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct VerifyArgs {
    /// Pair file written by `train`.
    #[arg(long)]
    pub pair: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub input: CountsArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub check: CheckArgs,
}

/// Writes `verification.json`; exits 1 when a given threshold is missed.
pub fn verify(global: &Global, args: VerifyArgs) -> CliResult<()> {
    let pair_path = args.pair.clone().ok_or_else(|| usage("--pair is required"))?;
    let mut run = Run::new("verify", global.out(), &args, None, global.threads)?;
    let text = fs::read_to_string(&pair_path).map_err(|e| usage(format!("cannot read {}: {e}", pair_path.display())))?;
    let (pair, pair_types) = read_pair(&text).map_err(usage)?;
    run.input(&pair_path)?;
    let (counts, types) = args.input.load(&mut run)?;
    if pair_types != types {
        return Err(usage("the pair's types do not match the counts' types in order"));
    }
    let check = verification(&pair, &counts, args.input.ifm, &args.check)?;
    run.write_json("verification.json", &check)?;
    let passed = check.passed;
    run.finish()?;
    if !passed {
        return Err(failure("verification thresholds not met; see verification.json"));
    }
    Ok(())
}
