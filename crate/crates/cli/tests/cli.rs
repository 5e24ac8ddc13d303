use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn cooc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cooc")).args(args).output().expect("cooc runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn fixture() -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures/zipf150.jsonl")
        .to_string_lossy()
        .into_owned()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn small_corpus(dir: &Path) -> String {
    let corpus = dir.join("corpus");
    fs::create_dir_all(&corpus).unwrap();
    fs::write(corpus.join("a.txt"), "The cat sat on the mat. The dog sat too.").unwrap();
    fs::write(corpus.join("b.txt"), "A cat and a dog! They sat.").unwrap();
    corpus.to_string_lossy().into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn missing_corpus_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = cooc(&["cooc", "--corpus", "/no/such/corpus", "--out", s(dir.path())]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("does not exist"), "{}", stderr(&out));
}

#[test]
fn bad_objective_is_a_usage_error() {
    let out = cooc(&["train", "--objective", "word2vec"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn out_of_vocabulary_word_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = small_corpus(dir.path());
    let out = cooc(&["ifm-compare", "--corpus", &corpus, "--word", "zebra", "--out", s(&dir.path().join("o"))]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("zebra"));
}

#[test]
fn ifm_compare_writes_scatter() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = small_corpus(dir.path());
    let o = dir.path().join("o");
    let out = cooc(&["ifm-compare", "--corpus", &corpus, "--word", "cat", "--out", s(&o)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let scatter = fs::read_to_string(o.join("scatter.tsv")).unwrap();
    assert!(scatter.starts_with("type\tempirical_plus_1\tifm_plus_1\n"));
    assert_eq!(json(&o.join("summary.json"))["word"], "cat");
}

#[test]
fn document_windows_cross_sentences() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = small_corpus(dir.path());
    let total = |boundary: &str| {
        let o = dir.path().join(boundary);
        let out = cooc(&["cooc", "--corpus", &corpus, "--m", "2", "--boundary", boundary, "--out", s(&o)]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        json(&o.join("cooc.json"))["total"].as_f64().unwrap()
    };
    let (sentence, document) = (total("sentence"), total("document"));
    assert!(document > sentence, "{document} vs {sentence}");
}

#[test]
fn cooc_outputs_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = small_corpus(dir.path());
    let o = dir.path().join("o");
    let out = cooc(&["cooc", "--corpus", &corpus, "--m", "1", "--out", s(&o)]);
    assert_eq!(code(&out), 0);
    let tsv = fs::read_to_string(o.join("cooc.tsv")).unwrap();
    assert!(tsv.lines().all(|l| l.split('\t').count() == 3));
    assert!(tsv.contains("the\tcat\t1\n"));
    let manifest = json(&o.join("manifest.json"));
    assert_eq!(manifest["subcommand"], "cooc");
    assert_eq!(manifest["resolved"]["window"]["radius"], 1);
    assert_eq!(manifest["inputs"].as_object().unwrap().len(), 1);
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 3);
}

#[test]
fn config_fills_only_unset_flags() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = small_corpus(dir.path());
    let config = dir.path().join("config.json");
    fs::write(&config, format!(r#"{{"corpus": {corpus:?}, "m": 3, "boundary": "document"}}"#)).unwrap();

    let from_config = dir.path().join("c");
    assert_eq!(code(&cooc(&["cooc", "--config", s(&config), "--out", s(&from_config)])), 0);
    let sidecar = json(&from_config.join("cooc.json"));
    assert_eq!(sidecar["m"], 3);
    assert_eq!(sidecar["boundary"], "document");

    let overridden = dir.path().join("d");
    assert_eq!(code(&cooc(&["cooc", "--config", s(&config), "--m", "1", "--out", s(&overridden)])), 0);
    let sidecar = json(&overridden.join("cooc.json"));
    assert_eq!(sidecar["m"], 1);
    assert_eq!(sidecar["boundary"], "document");
}

#[test]
fn manifest_replays_a_seeded_run() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = small_corpus(dir.path());
    let first = dir.path().join("first");
    let out = cooc(&[
        "train", "--corpus", &corpus, "--objective", "sgns-sampled", "--dim", "3", "--epochs", "20", "--seed", "42",
        "--out", s(&first),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let again = dir.path().join("again");
    let manifest = first.join("manifest.json");
    assert_eq!(code(&cooc(&["train", "--config", s(&manifest), "--out", s(&again)])), 0);
    assert_eq!(json(&again.join("manifest.json"))["seed"], 42);
    assert_eq!(fs::read(first.join("pair.tsv")).unwrap(), fs::read(again.join("pair.tsv")).unwrap());

    let reseeded = dir.path().join("reseeded");
    assert_eq!(code(&cooc(&["train", "--config", s(&manifest), "--seed", "43", "--out", s(&reseeded)])), 0);
    assert_ne!(fs::read(first.join("pair.tsv")).unwrap(), fs::read(reseeded.join("pair.tsv")).unwrap());
}

#[test]
fn softmax_on_ifm_passes_frequency_ratio_check() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = small_corpus(dir.path());
    let o = dir.path().join("o");
    let out = cooc(&[
        "train", "--corpus", &corpus, "--ifm", "--m", "2", "--objective", "softmax-nll", "--dim", "10",
        "--learning-rate", "100", "--epochs", "4000", "--convergence", "0", "--out", s(&o),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let v = json(&o.join("verification.json"));
    let dev = v["frequency_ratio"]["max_deviation"].as_f64().unwrap();
    assert!(dev < 0.05, "{dev}");
    assert_eq!(v["passed"], true);
}

#[test]
fn train_then_verify_from_counts() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = small_corpus(dir.path());
    let counts = dir.path().join("counts");
    assert_eq!(code(&cooc(&["cooc", "--corpus", &corpus, "--m", "2", "--out", s(&counts)])), 0);
    let cooc_tsv = counts.join("cooc.tsv");
    let trained = dir.path().join("trained");
    let out = cooc(&[
        "train", "--counts", s(&cooc_tsv), "--objective", "glove-clamped", "--dim", "10", "--learning-rate", "0.5",
        "--epochs", "5000", "--out", s(&trained),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let pair = trained.join("pair.tsv");
    let verified = dir.path().join("verified");
    let out = cooc(&["verify", "--pair", s(&pair), "--counts", s(&cooc_tsv), "--out", s(&verified)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let v = json(&verified.join("verification.json"));
    assert_eq!(v["factorization"]["objective"], "glove-clamped");

    // an impossible tolerance is a numerical failure
    let strict = dir.path().join("strict");
    let out = cooc(&[
        "verify", "--pair", s(&pair), "--counts", s(&cooc_tsv), "--tolerance", "1e-30", "--out", s(&strict),
    ]);
    assert_eq!(code(&out), 1);
    assert_eq!(json(&strict.join("verification.json"))["passed"], false);
}

#[test]
fn divergence_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = small_corpus(dir.path());
    let out = cooc(&[
        "train", "--corpus", &corpus, "--objective", "glove-clamped", "--learning-rate", "1e12", "--no-halving",
        "--epochs", "50", "--out", s(&dir.path().join("o")),
    ]);
    assert_eq!(code(&out), 1, "{}", stderr(&out));
}

#[test]
fn rates_file_reproduces_hand_bound() {
    let dir = tempfile::tempdir().unwrap();
    let rates = dir.path().join("rates.tsv");
    fs::write(
        &rates,
        "m\tk\ttokens_k\ttokens_2k\tiqr_k\tiqr_2k\tdelta\tnegative\n\
         1\t1\t6.25\t12.5\t0.5\t0.1\t0.8\tfalse\n\
         1\t2\t12.5\t25\t0.5\t0.3\t0.4\tfalse\n\
         1\t4\t25\t50\t0.5\t0.4\t0.2\tfalse\n",
    )
    .unwrap();
    let o = dir.path().join("o");
    let out = cooc(&["iqr", "--rates-file", s(&rates), "--out", s(&o)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let bound = json(&o.join("bound.json"));
    let one = &bound["limits"]["1"];
    assert!((one["bound"].as_f64().unwrap() - 0.32).abs() < 1e-12, "{one}");
    assert_eq!(one["positive"], true);
    assert!(one["limit"].as_f64().unwrap() >= 0.32);
    assert!(fs::read_to_string(o.join("limits.tsv")).unwrap().starts_with("m\tstart"));
}

#[test]
fn bound_without_doubling_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = small_corpus(dir.path());
    let out = cooc(&["iqr", "--corpus", &corpus, "--k-powers", "0..0", "--bound", "--out", s(&dir.path().join("o"))]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("2k"), "{}", stderr(&out));
}

#[test]
fn iqr_profile_and_fit_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let o = dir.path().join("o");
    let out = cooc(&[
        "iqr", "--corpus", &fixture(), "--k-powers", "2..4", "--m", "1..6", "--reps", "4", "--fit", "--seed", "3",
        "--out", s(&o),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let profile = fs::read_to_string(o.join("profile.tsv")).unwrap();
    assert_eq!(profile.lines().count(), 1 + 3 * 6 * 4);
    let rates = fs::read_to_string(o.join("rates.tsv")).unwrap();
    assert_eq!(rates.lines().count(), 1 + 2 * 6);
    let fit = json(&o.join("fit.json"));
    assert!(fit["nu"].as_f64().unwrap() > 0.0);
    assert_eq!(fit["capacity"], "paper");
    assert_eq!(json(&o.join("manifest.json"))["resolved"]["profile"]["replicates"], 4);
}

#[test]
fn bias_with_all_oov_category_still_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let bats = dir.path().join("bats");
    fs::create_dir_all(&bats).unwrap();
    fs::write(bats.join("E01 [capital - country].txt"), "london\tengland\nparis\tfrance\n").unwrap();
    fs::write(bats.join("E02 [missing - words].txt"), "zzz\tyyy\nqqq\tppp\n").unwrap();
    let a = dir.path().join("a.txt");
    let b = dir.path().join("b.txt");
    fs::write(&a, "london 100\nengland 1000\nparis 80\nfrance 900\nthe 100000\n").unwrap();
    fs::write(&b, "London 100\nengland 1000\nparis 800\nfrance 90\nthe 100000\n").unwrap();
    let o = dir.path().join("o");
    let out = cooc(&["bias", "--analogies", s(&bats), "--freqs-a", s(&a), "--freqs-b", s(&b), "--out", s(&o)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stderr(&out).contains("E02"));
    let table = fs::read_to_string(o.join("table.tsv")).unwrap();
    let e02 = table.lines().find(|l| l.starts_with("E02")).unwrap();
    assert!(e02.contains("dropped"), "{e02}");
    let e01 = table.lines().find(|l| l.starts_with("E01")).unwrap();
    assert!(e01.contains('*'), "{e01}");
    let bars = fs::read_to_string(o.join("bars.tsv")).unwrap();
    assert_eq!(bars.lines().count(), 2);
}

#[test]
fn zero_threads_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = small_corpus(dir.path());
    assert_eq!(code(&cooc(&["cooc", "--corpus", &corpus, "--threads", "0", "--out", s(&dir.path().join("o"))])), 2);
}
