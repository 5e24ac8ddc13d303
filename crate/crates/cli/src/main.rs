//! `cooc`: co-occurrence statistics, embedding factorization checks,
//! dissonance reports and IQR bounds from the command line.

mod bias;
mod count;
mod iqr;
mod run;
mod train;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use run::{load_config, merge, usage, CliResult};

#[derive(Debug, Parser)]
#[command(name = "cooc", version, about = "Word co-occurrence statistics toolkit")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct Global {
    /// Master seed for every random choice.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; outputs do not depend on this.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory; nothing is written outside it.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// JSON file supplying any flag; the command line takes precedence.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

impl Global {
    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn out(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("cooc-out"))
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Count windowed co-occurrences.
    Cooc(count::CoocArgs),
    /// Empirical vs. independent-frequencies counts for one word.
    IfmCompare(count::IfmArgs),
    /// Train an embedding pair and verify its factorization.
    Train(train::TrainArgs),
    /// Verify a trained pair against counts.
    Verify(train::VerifyArgs),
    /// Analogical dissonance per category, for one or two corpora.
    Bias(bias::BiasArgs),
    /// IQR profile, dependence fit, reduction rates and limiting bound.
    Iqr(iqr::IqrArgs),
}

fn run(cli: Cli) -> CliResult<()> {
    let config = match &cli.global.config {
        Some(path) => load_config(path)?,
        None => Default::default(),
    };
    let mut global = merge(&cli.global, &config)?;
    global.config = cli.global.config.clone();
    if let Some(t) = global.threads {
        if t == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(run::failure)?;
    }
    match cli.command {
        Command::Cooc(a) => count::cooc(&global, merge(&a, &config)?),
        Command::IfmCompare(a) => count::ifm_compare(&global, merge(&a, &config)?),
        Command::Train(a) => train::train(&global, merge(&a, &config)?),
        Command::Verify(a) => train::verify(&global, merge(&a, &config)?),
        Command::Bias(a) => bias::bias(&global, merge(&a, &config)?),
        Command::Iqr(a) => iqr::iqr(&global, merge(&a, &config)?),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code() as u8)
        }
    }
}
