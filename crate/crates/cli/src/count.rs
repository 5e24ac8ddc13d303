use std::path::PathBuf;

use clap::Args;
use cooc_core::cooccurrence::{count_cooccurrences, Boundary, WindowConfig};
use cooc_core::corpus::PunctuationPolicy;
use cooc_core::ifm::{deviation_scatter, write_scatter_tsv, IfmModel};
use cooc_core::stats::pearson;
use serde::{Deserialize, Serialize};

use crate::run::{read_corpus, usage, CliResult, Run};
use crate::Global;

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct CorpusArgs {
    /// Directory of .txt documents or a JSONL file with a "text" field.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Keep case instead of lowercasing.
    #[arg(long)]
    #[serde(default)]
    pub keep_case: bool,
    #[arg(long)]
    pub punctuation: Option<PunctuationPolicy>,
}

impl CorpusArgs {
    pub fn load(&self, run: &mut Run) -> CliResult<cooc_core::corpus::Corpus> {
        let path = self.corpus.as_ref().ok_or_else(|| usage("--corpus is required"))?;
        let corpus = read_corpus(path, !self.keep_case, self.punctuation.unwrap_or_default())?;
        run.input(path)?;
        Ok(corpus)
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct WindowArgs {
    /// Window radius.
    #[arg(long)]
    pub m: Option<usize>,
    /// sentence or document.
    #[arg(long)]
    pub boundary: Option<Boundary>,
}

impl WindowArgs {
    pub fn window(&self) -> CliResult<WindowConfig> {
        WindowConfig::new(self.m.unwrap_or(2), self.boundary.unwrap_or_default()).map_err(usage)
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct CoocArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub corpus: CorpusArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub window: WindowArgs,
}

/// Writes `cooc.tsv` (`t s count`), its `cooc.json` sidecar and `vocab.tsv`.
pub fn cooc(global: &Global, args: CoocArgs) -> CliResult<()> {
    let window = args.window.window()?;
    let mut run = Run::new("cooc", global.out(), &args, None, global.threads)?;
    run.resolve("window", &window)?;
    let corpus = args.corpus.load(&mut run)?;
    let model = count_cooccurrences(&corpus, window);
    let types = corpus.vocab().types();
    run.write_with("cooc.tsv", |w| model.write_tsv(types, w))?;
    run.write_json("cooc.json", &model.sidecar())?;
    run.write_with("vocab.tsv", |w| {
        use std::io::Write;
        writeln!(w, "type\tcount")?;
        for (word, count) in types.iter().zip(corpus.vocab().freqs()) {
            writeln!(w, "{word}\t{count}")?;
        }
        Ok(())
    })?;
    run.finish()
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct IfmArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub corpus: CorpusArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub window: WindowArgs,
    /// Target word.
    #[arg(long)]
    pub word: Option<String>,
}

#[derive(Serialize)]
struct ScatterSummary<'a> {
    word: &'a str,
    m: usize,
    rows: usize,
    /// Pearson correlation of the log-offset columns.
    log_pearson: f64,
}

/// Writes `scatter.tsv` (`type empirical+1 ifm+1`) and `summary.json`.
pub fn ifm_compare(global: &Global, args: IfmArgs) -> CliResult<()> {
    let window = args.window.window()?;
    let word = args.word.clone().ok_or_else(|| usage("--word is required"))?;
    let mut run = Run::new("ifm-compare", global.out(), &args, None, global.threads)?;
    run.resolve("window", &window)?;
    let corpus = args.corpus.load(&mut run)?;
    let key = if args.corpus.keep_case { word.clone() } else { word.to_lowercase() };
    let t = corpus
        .vocab()
        .id(&key)
        .ok_or_else(|| usage(format!("`{word}` is not in the corpus vocabulary")))?;
    let empirical = count_cooccurrences(&corpus, window);
    let model = IfmModel::from_corpus(&corpus, window);
    let points = deviation_scatter(&empirical, &model, t).map_err(usage)?;
    let types = corpus.vocab().types();
    let mut body = b"type\tempirical_plus_1\tifm_plus_1\n".to_vec();
    write_scatter_tsv(&points, types, &mut body).map_err(crate::run::failure)?;
    run.write("scatter.tsv", &body)?;
    let xs: Vec<f64> = points.iter().map(|p| p.model.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.empirical.ln()).collect();
    run.write_json(
        "summary.json",
        &ScatterSummary {
            word: &key,
            m: window.radius(),
            rows: points.len(),
            log_pearson: pearson(&xs, &ys),
        },
    )?;
    run.finish()
}
