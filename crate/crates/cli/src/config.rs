//! Run configuration: one JSON file plus dotted `--set` overrides.

use std::path::{Path, PathBuf};

use hybridseq::hmm::GibbsConfig;
use hybridseq::hybrid::FeatureMode;
use hybridseq::nncore::TrainConfig;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Hmm,
    Lstm,
    HybridSeq,
    HybridJoint,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Hmm => "hmm",
            ModelKind::Lstm => "lstm",
            ModelKind::HybridSeq => "hybrid-seq",
            ModelKind::HybridJoint => "hybrid-joint",
        }
    }

    /// Row label in summary tables.
    pub fn method(self) -> &'static str {
        match self {
            ModelKind::Hmm => "HMM",
            ModelKind::Lstm => "LSTM",
            ModelKind::HybridSeq => "Hybrid",
            ModelKind::HybridJoint => "Joint hybrid",
        }
    }

    pub fn has_hmm(self) -> bool {
        self != ModelKind::Lstm
    }

    pub fn has_lstm(self) -> bool {
        self != ModelKind::Hmm
    }

    pub fn parse(s: &str) -> CliResult<Self> {
        serde_json::from_value(Value::String(s.to_string()))
            .map_err(|_| CliError::config(format!("unknown model kind {s:?} (hmm, lstm, hybrid-seq, hybrid-joint)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataKind {
    /// Character streams from plain text files.
    #[default]
    Text,
    /// CSV files of real-valued features with a binary `target` column.
    Signal,
}

fn default_split() -> [f64; 3] {
    [0.9, 0.05, 0.05]
}

fn default_bins() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    #[serde(default)]
    pub kind: DataKind,
    pub train: Vec<PathBuf>,
    /// When both `valid` and `test` are empty, every training file is split
    /// contiguously by `split`.
    #[serde(default)]
    pub valid: Vec<PathBuf>,
    #[serde(default)]
    pub test: Vec<PathBuf>,
    #[serde(default = "default_split")]
    pub split: [f64; 3],
    /// Quantile bins per signal feature.
    #[serde(default = "default_bins")]
    pub n_bins: usize,
}

impl DataConfig {
    pub fn is_split(&self) -> bool {
        self.valid.is_empty() && self.test.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    pub model: ModelKind,
    #[serde(rename = "K", default)]
    pub k: Option<usize>,
    #[serde(rename = "H", default)]
    pub h: Option<usize>,
    #[serde(default)]
    pub gibbs: GibbsConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub feature_mode: FeatureMode,
    /// Overrides `gibbs.seed` and `train.seed` when present.
    #[serde(default)]
    pub seed: Option<u64>,
    pub output_dir: PathBuf,
}

impl RunConfig {
    pub fn states(&self) -> usize {
        self.k.unwrap_or(0)
    }

    pub fn hidden(&self) -> usize {
        self.h.unwrap_or(0)
    }

    /// Checks everything that can be checked before touching the data.
    pub fn validate(&self) -> CliResult<()> {
        let kind = self.model;
        match (kind.has_hmm(), self.k) {
            (true, None) => return Err(CliError::config(format!("K: required for model {}", kind.name()))),
            (_, Some(0)) => return Err(CliError::config("K: must be >= 1")),
            _ => {}
        }
        match (kind.has_lstm(), self.h) {
            (true, None) => return Err(CliError::config(format!("H: required for model {}", kind.name()))),
            (_, Some(0)) => return Err(CliError::config("H: must be >= 1")),
            _ => {}
        }
        if kind == ModelKind::Hmm || kind == ModelKind::HybridSeq {
            self.gibbs.validate().map_err(|e| CliError::from(e).context("gibbs"))?;
        }
        if kind.has_lstm() {
            self.train.validate().map_err(|e| CliError::from(e).context("train"))?;
        }
        let d = &self.data;
        if d.train.is_empty() {
            return Err(CliError::config("data.train: at least one file is required"));
        }
        for (field, paths) in [("data.train", &d.train), ("data.valid", &d.valid), ("data.test", &d.test)] {
            for (i, p) in paths.iter().enumerate() {
                if !p.is_file() {
                    return Err(CliError::config(format!("{field}[{i}]: no such file: {}", p.display())));
                }
            }
        }
        if d.split.iter().any(|&f| !(f > 0.0)) || (d.split.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(CliError::config(format!("data.split: fractions must be positive and sum to 1, got {:?}", d.split)));
        }
        if d.kind == DataKind::Signal && d.n_bins < 2 {
            return Err(CliError::config("data.n_bins: must be >= 2"));
        }
        Ok(())
    }
}

/// Sets `path` (dotted) inside `root`, creating objects on the way. The
/// value is parsed as JSON when possible and kept as a string otherwise.
pub fn apply_override(root: &mut Value, assignment: &str) -> CliResult<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::config(format!("--set {assignment:?}: expected KEY=VALUE")))?;
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(CliError::config(format!("--set {assignment:?}: malformed key")));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if !node.is_object() {
            return Err(CliError::config(format!("--set {key}: {} is not an object", parts[..i].join("."))));
        }
        let map = node.as_object_mut().expect("checked above");
        if i + 1 == parts.len() {
            map.insert(part.to_string(), value);
            return Ok(());
        }
        node = map.entry(part.to_string()).or_insert_with(|| Value::Object(Map::new()));
    }
    Ok(())
}

/// Deserializes with the full path of the offending field in the message.
pub fn from_value<T: serde::de::DeserializeOwned>(value: Value, what: &str) -> CliResult<T> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        let at = if path == "." { String::new() } else { format!(" at {path}") };
        CliError::config(format!("{what}{at}: {}", e.inner()))
    })
}

pub fn read_json(path: &Path, what: &str) -> CliResult<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::config(format!("{what} {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::config(format!("{what} {}: {e}", path.display())))
}

/// Config file (or an empty object), then `--set` overrides, then `--seed`.
pub fn load_value(path: Option<&Path>, sets: &[String], seed: Option<u64>) -> CliResult<Value> {
    let mut value = match path {
        Some(p) => read_json(p, "config")?,
        None => Value::Object(Map::new()),
    };
    for s in sets {
        apply_override(&mut value, s)?;
    }
    if let Some(seed) = seed {
        apply_override(&mut value, &format!("seed={seed}"))?;
    }
    Ok(value)
}

pub fn load(path: Option<&Path>, sets: &[String], seed: Option<u64>) -> CliResult<RunConfig> {
    let value = load_value(path, sets, seed)?;
    let mut config: RunConfig = from_value(value, "config")?;
    if let Some(seed) = config.seed {
        config.gibbs.seed = seed;
        config.train.seed = seed;
    }
    config.validate()?;
    Ok(config)
}
