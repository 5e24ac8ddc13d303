use std::path::PathBuf;

use clap::Args;
use cooc_core::biasprobe::{compare_corpora, load_bats, BatsOptions, FrequencyTable};
use serde::{Deserialize, Serialize};

use crate::run::{usage, CliResult, Run};
use crate::Global;

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct BiasArgs {
    /// BATS-layout directory of analogy files.
    #[arg(long)]
    pub analogies: Option<PathBuf>,
    /// `type<TAB>count` table of corpus A.
    #[arg(long)]
    pub freqs_a: Option<PathBuf>,
    /// Optional table of corpus B; adds differences and bar data.
    #[arg(long)]
    pub freqs_b: Option<PathBuf>,
    /// Expand every slash-separated answer.
    #[arg(long)]
    #[serde(default)]
    pub exhaustive: bool,
    /// Keep both orders of each analogy.
    #[arg(long)]
    #[serde(default)]
    pub ordered: bool,
    /// Match table types case-sensitively.
    #[arg(long)]
    #[serde(default)]
    pub keep_case: bool,
}

/// Writes `table.tsv`, `report.json` and, with two tables, `bars.tsv`.
pub fn bias(global: &Global, args: BiasArgs) -> CliResult<()> {
    let dir = args.analogies.clone().ok_or_else(|| usage("--analogies is required"))?;
    let path_a = args.freqs_a.clone().ok_or_else(|| usage("--freqs-a is required"))?;
    let mut run = Run::new("bias", global.out(), &args, None, global.threads)?;
    let load = load_bats(
        &dir,
        BatsOptions {
            exhaustive: args.exhaustive,
            ordered: args.ordered,
        },
    )
    .map_err(usage)?;
    run.input(&dir)?;
    for w in &load.warnings {
        eprintln!("warning: {w}");
    }
    let fold = !args.keep_case;
    let table_a = FrequencyTable::load(&path_a, fold).map_err(usage)?;
    run.input(&path_a)?;
    let table_b = match &args.freqs_b {
        Some(p) => {
            let t = FrequencyTable::load(p, fold).map_err(usage)?;
            run.input(p)?;
            Some(t)
        }
        None => None,
    };
    let report = compare_corpora(&load.categories, &table_a, table_b.as_ref()).map_err(usage)?;
    for w in report.warnings() {
        eprintln!("warning: {w}");
    }
    run.write_with("table.tsv", |w| report.write_table(w))?;
    if table_b.is_some() {
        run.write_with("bars.tsv", |w| report.write_bars(w))?;
    }
    run.write_json("report.json", &report)?;
    run.finish()
}
