//! On-disk checkpoints and the trained model they hold.

use std::path::Path;

use hybridseq::hmm::{HmmCheckpoint, HmmParams};
use hybridseq::hybrid::{hmm_feature_stream, DiffHmm, FeatureMode, HybridKind, JointHybrid, SeqHybrid};
use hybridseq::interpret::{collect_states, StateMatrix};
use hybridseq::nncore::{evaluate, LstmCheckpoint, LstmParams, TrainConfig, CHECKPOINT_VERSION};
use hybridseq::task::{evaluate_hmm, PredictionStream};
use hybridseq::Matrix;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::{read_json, ModelKind, RunConfig};
use crate::data::{streams, Encoding, Part};
use crate::error::{CliError, CliResult};

pub const LIBRARY_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub version: u32,
    pub library_version: String,
    pub model: ModelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<HybridKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_mode: Option<FeatureMode>,
    pub encoding: Encoding,
    pub config: RunConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hmm: Option<HmmCheckpoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diff_hmm: Option<DiffHmm>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lstm: Option<LstmCheckpoint>,
}

/// A trained model of any kind.
#[derive(Debug, Clone)]
pub enum Model {
    Hmm(HmmParams),
    Lstm(LstmParams),
    Seq(SeqHybrid),
    Joint(JointHybrid),
}

fn lstm_checkpoint(params: &LstmParams, config: &TrainConfig, val_ll_history: &[f64]) -> LstmCheckpoint {
    LstmCheckpoint {
        version: CHECKPOINT_VERSION,
        v: params.n_out,
        h: params.hidden,
        params: params.clone(),
        config: config.clone(),
        epoch: val_ll_history.len(),
        val_ll_history: val_ll_history.to_vec(),
    }
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Hmm(_) => ModelKind::Hmm,
            Model::Lstm(_) => ModelKind::Lstm,
            Model::Seq(_) => ModelKind::HybridSeq,
            Model::Joint(_) => ModelKind::HybridJoint,
        }
    }

    /// Mean per-target log-likelihood over every part, state reset per part.
    pub fn evaluate(&self, parts: &[Part]) -> CliResult<f64> {
        let s = streams(parts);
        Ok(match self {
            Model::Hmm(p) => evaluate_hmm(p, &s)?,
            Model::Lstm(m) => evaluate(m, &s)?,
            Model::Seq(m) => evaluate(m, &s)?,
            Model::Joint(m) => evaluate(m, &s)?,
        })
    }

    /// Per-step HMM state distributions (filtered, or advanced one step).
    pub fn hmm_states(&self, stream: &PredictionStream) -> CliResult<Matrix> {
        match self {
            Model::Hmm(p) => Ok(hmm_feature_stream(p, &stream.hmm_obs, FeatureMode::Filtered)?.probs),
            Model::Seq(m) => Ok(hmm_feature_stream(&m.hmm, &stream.hmm_obs, m.mode)?.probs),
            Model::Joint(m) => Ok(m.features(stream)?),
            Model::Lstm(_) => Err(CliError::mode("this checkpoint has no HMM; use --mode kmeans")),
        }
    }

    /// LSTM hidden states, one row per step.
    pub fn lstm_states(&self, stream: &PredictionStream) -> CliResult<StateMatrix> {
        match self {
            Model::Lstm(m) => Ok(collect_states(m, stream)?),
            Model::Seq(m) => Ok(collect_states(m, stream)?),
            Model::Joint(m) => Ok(collect_states(m, stream)?),
            Model::Hmm(_) => Err(CliError::mode("an HMM-only checkpoint has no hidden units")),
        }
    }

    pub fn to_checkpoint(&self, encoding: &Encoding, config: &RunConfig, val_ll_history: &[f64]) -> Checkpoint {
        let mut ck = Checkpoint {
            version: CHECKPOINT_VERSION,
            library_version: LIBRARY_VERSION.to_string(),
            model: self.kind(),
            kind: None,
            feature_mode: None,
            encoding: encoding.clone(),
            config: config.clone(),
            hmm: None,
            diff_hmm: None,
            lstm: None,
        };
        match self {
            Model::Hmm(p) => ck.hmm = Some(HmmCheckpoint::new(p, &config.gibbs)),
            Model::Lstm(m) => ck.lstm = Some(lstm_checkpoint(m, &config.train, val_ll_history)),
            Model::Seq(m) => {
                ck.kind = Some(HybridKind::Sequential);
                ck.feature_mode = Some(m.mode);
                ck.hmm = Some(HmmCheckpoint::new(&m.hmm, &config.gibbs));
                ck.lstm = Some(lstm_checkpoint(&m.lstm, &config.train, val_ll_history));
            }
            Model::Joint(m) => {
                ck.kind = Some(HybridKind::Joint);
                ck.feature_mode = Some(m.mode);
                ck.diff_hmm = Some(m.hmm.clone());
                ck.lstm = Some(lstm_checkpoint(&m.lstm, &config.train, val_ll_history));
            }
        }
        ck
    }
}

fn missing(part: &str) -> CliError {
    CliError::version(format!("checkpoint is missing its {part} component"))
}

impl Checkpoint {
    pub fn model(&self) -> CliResult<Model> {
        let hmm = || -> CliResult<HmmParams> { Ok(self.hmm.clone().ok_or_else(|| missing("hmm"))?.into_params()?.0) };
        let lstm = || -> CliResult<LstmParams> { Ok(self.lstm.clone().ok_or_else(|| missing("lstm"))?.into_params()?) };
        let mode = self.feature_mode.unwrap_or_default();
        Ok(match self.model {
            ModelKind::Hmm => Model::Hmm(hmm()?),
            ModelKind::Lstm => Model::Lstm(lstm()?),
            ModelKind::HybridSeq => Model::Seq(SeqHybrid::new(hmm()?, lstm()?, mode)?),
            ModelKind::HybridJoint => {
                let diff = self.diff_hmm.clone().ok_or_else(|| missing("diff_hmm"))?;
                Model::Joint(JointHybrid::new(diff, lstm()?, mode)?)
            }
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("checkpoints serialize");
        s.push('\n');
        s
    }

    /// Reads a checkpoint, rejecting other format versions before parsing
    /// the rest.
    pub fn load(path: &Path) -> CliResult<Self> {
        let value = read_json(path, "checkpoint")?;
        let found = value.get("version").and_then(Value::as_u64);
        if found != Some(u64::from(CHECKPOINT_VERSION)) {
            let shown = found.map_or("none".to_string(), |v| v.to_string());
            return Err(CliError::version(format!(
                "checkpoint {}: unsupported version {shown} (expected {CHECKPOINT_VERSION})",
                path.display()
            )));
        }
        let mut ck: Checkpoint = serde_path_to_error::deserialize(value).map_err(|e| {
            CliError::version(format!("checkpoint {} at {}: {}", path.display(), e.path(), e.inner()))
        })?;
        ck.encoding.restore();
        Ok(ck)
    }
}
