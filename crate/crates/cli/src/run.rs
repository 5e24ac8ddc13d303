use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use cooc_core::corpus::{ingest, Corpus, PunctuationPolicy, TokenizeConfig};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

/// Exit status 2 for bad usage or input, 1 for numerical or internal failure.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Failure(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            Self::Usage(_) => 2,
            Self::Failure(_) => 1,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Self::Usage(m) | Self::Failure(m) => m,
        }
    }
}

pub fn usage(e: impl Display) -> CliError {
    CliError::Usage(e.to_string())
}

pub fn failure(e: impl Display) -> CliError {
    CliError::Failure(e.to_string())
}

pub type CliResult<T> = Result<T, CliError>;

/// Reads a JSON config. A previous run manifest is accepted too; its
/// `config` object is used.
pub fn load_config(path: &Path) -> CliResult<Map<String, Value>> {
    let text = fs::read_to_string(path).map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
    let value: Value = serde_json::from_str(&text).map_err(|e| usage(format!("config {}: {e}", path.display())))?;
    let Value::Object(mut map) = value else {
        return Err(usage("config must be a JSON object"));
    };
    if map.contains_key("subcommand") {
        if let Some(Value::Object(mut inner)) = map.remove("config") {
            if let Some(seed) = map.remove("seed").filter(|s| !s.is_null()) {
                inner.insert("seed".into(), seed);
            }
            return Ok(inner);
        }
    }
    Ok(map
        .into_iter()
        .map(|(k, v)| (k.replace('-', "_"), v))
        .collect())
}

/// Fills every option the command line left unset (or every flag it left
/// off) from the config.
pub fn merge<T: Serialize + DeserializeOwned>(cli: &T, config: &Map<String, Value>) -> CliResult<T> {
    let Value::Object(mut fields) = serde_json::to_value(cli).map_err(failure)? else {
        return Err(failure("arguments did not serialize to an object"));
    };
    for (key, value) in config {
        if let Some(slot) = fields.get_mut(key) {
            if matches!(slot, Value::Null | Value::Bool(false)) {
                *slot = value.clone();
            }
        }
    }
    serde_json::from_value(Value::Object(fields)).map_err(|e| usage(format!("config: {e}")))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// SHA-256 of a file, or of the sorted `(relative path, file hash)` list of
/// a directory.
pub fn hash_input(path: &Path) -> CliResult<String> {
    if path.is_dir() {
        let mut files = Vec::new();
        collect(path, path, &mut files)?;
        files.sort();
        let mut hasher = Sha256::new();
        for (rel, digest) in files {
            hasher.update(format!("{rel}\t{digest}\n"));
        }
        Ok(hex(&hasher.finalize()))
    } else {
        let bytes = fs::read(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
        Ok(hex(&Sha256::digest(&bytes)))
    }
}

fn collect(root: &Path, dir: &Path, out: &mut Vec<(String, String)>) -> CliResult<()> {
    let entries = fs::read_dir(dir).map_err(|e| usage(format!("cannot read {}: {e}", dir.display())))?;
    for entry in entries {
        let path = entry.map_err(usage)?.path();
        if path.is_dir() {
            collect(root, &path, out)?;
        } else {
            let rel = path.strip_prefix(root).unwrap_or(&path).to_string_lossy().into_owned();
            out.push((rel, hash_input(&path)?));
        }
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct RunManifest<'a> {
    subcommand: &'a str,
    version: &'a str,
    config: &'a Value,
    seed: Option<u64>,
    threads: Option<usize>,
    /// Defaults filled in, as the computation saw them.
    resolved: &'a BTreeMap<String, Value>,
    inputs: &'a BTreeMap<String, String>,
    outputs: &'a [String],
    duration_secs: f64,
}

/// Output directory plus the bookkeeping for its manifest.
pub struct Run {
    subcommand: &'static str,
    out: PathBuf,
    config: Value,
    seed: Option<u64>,
    threads: Option<usize>,
    resolved: BTreeMap<String, Value>,
    inputs: BTreeMap<String, String>,
    outputs: Vec<String>,
    started: Instant,
}

impl Run {
    pub fn new(
        subcommand: &'static str,
        out: PathBuf,
        config: &impl Serialize,
        seed: Option<u64>,
        threads: Option<usize>,
    ) -> CliResult<Self> {
        fs::create_dir_all(&out).map_err(|e| usage(format!("cannot create {}: {e}", out.display())))?;
        Ok(Self {
            subcommand,
            out,
            config: serde_json::to_value(config).map_err(failure)?,
            seed,
            threads,
            resolved: BTreeMap::new(),
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            started: Instant::now(),
        })
    }

    pub fn resolve(&mut self, key: &str, value: &impl Serialize) -> CliResult<()> {
        self.resolved.insert(key.to_string(), serde_json::to_value(value).map_err(failure)?);
        Ok(())
    }

    pub fn input(&mut self, path: &Path) -> CliResult<()> {
        let digest = hash_input(path)?;
        self.inputs.insert(path.display().to_string(), digest);
        Ok(())
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> CliResult<()> {
        let path = self.out.join(name);
        fs::write(&path, bytes).map_err(|e| failure(format!("cannot write {}: {e}", path.display())))?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    pub fn write_with(&mut self, name: &str, f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> CliResult<()> {
        let mut buf = Vec::new();
        f(&mut buf).map_err(failure)?;
        self.write(name, &buf)
    }

    pub fn write_json(&mut self, name: &str, value: &impl Serialize) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(failure)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// Writes `manifest.json`; it is the only output holding wall-clock time.
    pub fn finish(self) -> CliResult<()> {
        let manifest = RunManifest {
            subcommand: self.subcommand,
            version: env!("CARGO_PKG_VERSION"),
            config: &self.config,
            seed: self.seed,
            threads: self.threads,
            resolved: &self.resolved,
            inputs: &self.inputs,
            outputs: &self.outputs,
            duration_secs: self.started.elapsed().as_secs_f64(),
        };
        let text = serde_json::to_string_pretty(&manifest).map_err(failure)? + "\n";
        let path = self.out.join("manifest.json");
        fs::write(&path, text).map_err(|e| failure(format!("cannot write {}: {e}", path.display())))
    }
}

pub fn read_corpus(path: &Path, lowercase: bool, punctuation: PunctuationPolicy) -> CliResult<Corpus> {
    if !path.exists() {
        return Err(usage(format!("corpus {} does not exist", path.display())));
    }
    ingest(path, &TokenizeConfig { lowercase, punctuation }).map_err(usage)
}

/// `a..b`, inclusive.
pub fn parse_range(s: &str) -> CliResult<Vec<usize>> {
    let bad = || usage(format!("expected a range `a..b`, got `{s}`"));
    let (a, b) = s.split_once("..").ok_or_else(bad)?;
    let a: usize = a.trim().parse().map_err(|_| bad())?;
    let b: usize = b.trim().parse().map_err(|_| bad())?;
    if a > b {
        return Err(bad());
    }
    Ok((a..=b).collect())
}
