use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::Args;
use cooc_core::cooccurrence::CapacityFormula;
use cooc_core::dependence::{
    dependence_model_predict, fit_dependence_model, fit_reduction_power_law, iqr_profile, limits_per_m, read_rates_tsv,
    reduction_rates, write_rates_tsv, BoundResult, DependenceError, DependenceFit, ProfileConfig, ReductionFit,
    ReductionRate, SentenceStats, DEFAULT_RESIDUAL_THRESHOLD, DEFAULT_STEPS,
};
use serde::{Deserialize, Serialize};

use crate::count::CorpusArgs;
use crate::run::{failure, parse_range, usage, CliResult, Run};
use crate::Global;

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct IqrArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub corpus: CorpusArgs,
    /// Sample sizes as powers of two, `a..b` gives k = 2^a ..= 2^b.
    #[arg(long)]
    pub k_powers: Option<String>,
    /// Radii `a..b`.
    #[arg(long)]
    pub m: Option<String>,
    /// Replicates per (k, m) cell.
    #[arg(long)]
    pub reps: Option<usize>,
    /// sentence or document.
    #[arg(long)]
    pub boundary: Option<cooc_core::cooccurrence::Boundary>,
    /// Fit the dependence model to the profile.
    #[arg(long)]
    #[serde(default)]
    pub fit: bool,
    /// paper or exact sentence capacity in the dependence model.
    #[arg(long)]
    pub capacity: Option<CapacityFormula>,
    /// Fit reduction rates and extrapolate the limiting IQR.
    #[arg(long)]
    #[serde(default)]
    pub bound: bool,
    /// Rates TSV to bound from instead of a corpus profile.
    #[arg(long)]
    pub rates_file: Option<PathBuf>,
    /// Smallest k in the power-law fit; chosen from residuals when absent.
    #[arg(long)]
    pub k_min: Option<usize>,
    #[arg(long)]
    pub residual_threshold: Option<f64>,
    /// Doubling steps in the extrapolation.
    #[arg(long)]
    pub steps: Option<usize>,
}

#[derive(Serialize)]
struct BoundReport<'a> {
    fit: &'a ReductionFit,
    negative_rates: usize,
    limits: &'a BTreeMap<usize, BoundResult>,
}

#[derive(Serialize)]
struct FitReport<'a> {
    #[serde(flatten)]
    fit: &'a DependenceFit,
    capacity: CapacityFormula,
}

fn dependence_error(e: DependenceError) -> crate::run::CliError {
    match e {
        DependenceError::NonFiniteResidual | DependenceError::NonFinite(_) | DependenceError::ZeroEntropy => failure(e),
        other => usage(other),
    }
}

fn write_bound(run: &mut Run, rates: &[ReductionRate], args: &IqrArgs) -> CliResult<()> {
    let threshold = args.residual_threshold.unwrap_or(DEFAULT_RESIDUAL_THRESHOLD);
    let fit = fit_reduction_power_law(rates, args.k_min, threshold).map_err(dependence_error)?;
    let limits = limits_per_m(rates, &fit, args.steps.unwrap_or(DEFAULT_STEPS)).map_err(dependence_error)?;
    for r in rates.iter().filter(|r| r.negative) {
        eprintln!("warning: IQR grew from k = {} to {} at m = {}", r.k, 2 * r.k, r.m);
    }
    if !fit.threshold_met {
        eprintln!(
            "warning: no k_min brings log-log residuals under {threshold}; using k_min = {} (residual {})",
            fit.k_min, fit.max_residual
        );
    }
    run.write_json(
        "bound.json",
        &BoundReport {
            fit: &fit,
            negative_rates: rates.iter().filter(|r| r.negative).count(),
            limits: &limits,
        },
    )?;
    run.write_with("limits.tsv", |w| {
        writeln!(w, "m\tstart\ttokens_k\tlimit\tbound\tthreshold\tpositive")?;
        for (m, b) in &limits {
            writeln!(w, "{m}\t{}\t{}\t{}\t{}\t{}\t{}", b.start, b.tokens_k, b.limit, b.bound, b.threshold, b.positive)?;
        }
        Ok(())
    })
}

/// Writes `profile.tsv`, `means.tsv` and, where the grid allows, `rates.tsv`;
/// `--fit` adds `fit.json` and `model.tsv`, `--bound` adds `bound.json` and
/// `limits.tsv`.
pub fn iqr(global: &Global, args: IqrArgs) -> CliResult<()> {
    let mut run = Run::new("iqr", global.out(), &args, Some(global.seed()), global.threads)?;
    if let Some(path) = &args.rates_file {
        if args.corpus.corpus.is_some() {
            return Err(usage("give either --corpus or --rates-file"));
        }
        let text = fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
        let rates = read_rates_tsv(&text).map_err(usage)?;
        run.input(path)?;
        write_bound(&mut run, &rates, &args)?;
        return run.finish();
    }

    let corpus = args.corpus.load(&mut run)?;
    let docs = corpus.documents().len();
    let k_values: Vec<usize> = match &args.k_powers {
        Some(s) => parse_range(s)?
            .into_iter()
            .map(|p| 1usize.checked_shl(p as u32).ok_or_else(|| usage("k power too large")))
            .collect::<CliResult<_>>()?,
        None => (0..usize::BITS).map(|p| 1usize << p).take_while(|&k| k <= docs).collect(),
    };
    let config = ProfileConfig {
        k_values,
        m_values: parse_range(args.m.as_deref().unwrap_or("1..10"))?,
        replicates: args.reps.unwrap_or(75),
        seed: global.seed(),
        boundary: args.boundary.unwrap_or_default(),
    };
    let doubling = config.k_values.iter().any(|k| config.k_values.contains(&(2 * k)));
    if args.bound && !doubling {
        return Err(usage("--bound needs sample sizes k and 2k in --k-powers (at least three consecutive powers)"));
    }
    run.resolve("profile", &config)?;
    let profile = iqr_profile(&corpus, &config).map_err(dependence_error)?;
    run.write_with("profile.tsv", |w| profile.write_tsv(w))?;
    let means = profile.means();
    run.write_with("means.tsv", |w| {
        writeln!(w, "k\tm\tiqr\ttokens")?;
        for ((k, m), (i, t)) in &means {
            writeln!(w, "{k}\t{m}\t{i}\t{t}")?;
        }
        Ok(())
    })?;
    let rates = if doubling {
        let rates = reduction_rates(&profile).map_err(dependence_error)?;
        run.write_with("rates.tsv", |w| write_rates_tsv(&rates, w))?;
        Some(rates)
    } else {
        None
    };

    if args.fit {
        let stats = SentenceStats::from_corpus(&corpus);
        let capacity = args.capacity.unwrap_or_default();
        let fit = fit_dependence_model(&profile, &stats, capacity).map_err(dependence_error)?;
        if fit.flat {
            eprintln!("warning: the profile is too flat in m to identify nu");
        }
        run.write_json("fit.json", &FitReport { fit: &fit, capacity })?;
        run.write_with("model.tsv", |w| {
            writeln!(w, "k\tm\tiqr\tpredicted")?;
            for ((k, m), (i, _)) in &means {
                writeln!(w, "{k}\t{m}\t{i}\t{}", dependence_model_predict(&fit, &stats, *m, capacity))?;
            }
            Ok(())
        })?;
    }
    if args.bound {
        write_bound(&mut run, rates.as_deref().expect("checked above"), &args)?;
    }
    run.finish()
}
