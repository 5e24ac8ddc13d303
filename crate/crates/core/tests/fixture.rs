//! The bundled 150-document Zipf corpus is a pure function of its generator
//! config; these tests pin it and regenerate it on demand.

use std::path::PathBuf;

use cooc_core::corpus::{generate_zipf_corpus, ingest, SentenceLengths, TokenizeConfig, ZipfCorpusConfig};

fn fixture_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/zipf150.jsonl")
}

fn fixture_config() -> ZipfCorpusConfig {
    ZipfCorpusConfig {
        vocab_size: 200,
        tokens: 60_000,
        sentence_lengths: SentenceLengths::Uniform { min: 5, max: 40 },
        documents: 150,
        seed: 150,
    }
}

fn render() -> Vec<u8> {
    let corpus = generate_zipf_corpus(&fixture_config()).unwrap();
    let mut out = Vec::new();
    corpus.write_jsonl(&mut out).unwrap();
    out
}

#[test]
#[ignore = "rewrites fixtures/zipf150.jsonl"]
fn regenerate_zipf150() {
    std::fs::write(fixture_path(), render()).unwrap();
}

#[test]
fn bundled_fixture_matches_generator() {
    let bundled = std::fs::read(fixture_path()).expect("fixtures/zipf150.jsonl is missing");
    assert!(bundled == render(), "fixture drifted from its generator; rerun the ignored regenerate test");
}

#[test]
fn fixture_reads_back_as_generated() {
    let generated = generate_zipf_corpus(&fixture_config()).unwrap();
    let read = ingest(&fixture_path(), &TokenizeConfig::default()).unwrap();
    assert_eq!(read.documents().len(), 150);
    assert_eq!(read.total_tokens(), 60_000);
    assert_eq!(read.vocab().types(), generated.vocab().types());
    assert_eq!(read.vocab().freqs(), generated.vocab().freqs());
    assert_eq!(read.sentence_length_histogram(), generated.sentence_length_histogram());
    for (a, b) in read.documents().iter().zip(generated.documents()) {
        assert_eq!(a.tokens(), b.tokens());
        assert_eq!(a.sentence_spans(), b.sentence_spans());
        assert_eq!(a.label, b.label);
    }
}
