//! `train`: fit the configured model, then write its checkpoint, report,
//! summary row and timings.

use std::fs;
use std::path::Path;
use std::time::Instant;

use hybridseq::hmm::gibbs_train;
use hybridseq::hybrid::{train_joint_hybrid, SeqHybrid};
use hybridseq::nncore::{self, train_lm, LstmParams, TrainFailure, TrainOutcome};
use serde::{Deserialize, Serialize};

use crate::config::{ModelKind, RunConfig};
use crate::data::{self, streams, SplitName, Splits};
use crate::error::{CliError, CliResult, EXIT_NUMERIC};
use crate::model::{Model, LIBRARY_VERSION};

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const LAST_GOOD_FILE: &str = "checkpoint.last_good.json";
pub const REPORT_FILE: &str = "report.json";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const TIMING_FILE: &str = "timing.json";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PerSplit<T> {
    pub train: Option<T>,
    pub valid: Option<T>,
    pub test: Option<T>,
}

impl<T> PerSplit<T> {
    pub fn set(&mut self, split: SplitName, value: T) {
        match split {
            SplitName::Train => self.train = Some(value),
            SplitName::Valid => self.valid = Some(value),
            SplitName::Test => self.test = Some(value),
        }
    }
}

/// Everything a run produced except timings, so that identical runs write
/// identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub library_version: String,
    pub model: ModelKind,
    #[serde(rename = "H")]
    pub h: Option<usize>,
    #[serde(rename = "K")]
    pub k: Option<usize>,
    /// Mean per-target log-likelihood.
    pub ll: PerSplit<f64>,
    pub n_pairs: PerSplit<usize>,
    pub val_ll_history: Vec<f64>,
    pub train_loss_history: Vec<f64>,
    pub lr_history: Vec<f64>,
    /// Data log-likelihood at each Gibbs sweep.
    pub gibbs_trace: Vec<f64>,
    pub checkpoint: String,
    pub timing: String,
    pub config: RunConfig,
}

impl Report {
    /// The number shown in summary tables: test LL, else validation LL.
    pub fn headline(&self) -> Option<f64> {
        self.ll.test.or(self.ll.valid)
    }
}

#[derive(Debug, Serialize)]
struct Stage {
    stage: String,
    seconds: f64,
}

#[derive(Debug, Default, Serialize)]
struct Timing {
    stages: Vec<Stage>,
    epoch_seconds: Vec<f64>,
}

impl Timing {
    fn stage(&mut self, name: &str, since: Instant) {
        self.stages.push(Stage { stage: name.to_string(), seconds: since.elapsed().as_secs_f64() });
    }
}

#[derive(Default)]
struct History {
    val_ll: Vec<f64>,
    train_loss: Vec<f64>,
    lr: Vec<f64>,
    epoch_seconds: Vec<f64>,
    gibbs_trace: Vec<f64>,
}

pub const TABLE_HEADER: &str = "| Method | LSTM dim | HMM states | LL |\n|---|---|---|---|\n";

fn cell(v: Option<usize>) -> String {
    v.map_or("-".to_string(), |x| x.to_string())
}

pub fn table_row(model: ModelKind, h: Option<usize>, k: Option<usize>, ll: Option<f64>) -> String {
    let ll = ll.map_or("-".to_string(), |x| format!("{x:.4}"));
    format!("| {} | {} | {} | {ll} |\n", model.method(), cell(h), cell(k))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::config(e.to_string()))?;
    s.push('\n');
    fs::write(path, s).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

struct Run<'a> {
    config: &'a RunConfig,
    splits: &'a Splits,
    history: History,
}

impl Run<'_> {
    /// Unpacks a training result; on a numeric failure the last good
    /// parameters are saved next to where the checkpoint would have gone.
    fn neural<M>(
        &mut self,
        stage: &str,
        result: Result<TrainOutcome<M>, TrainFailure<M>>,
        wrap: impl Fn(M) -> Model,
    ) -> CliResult<Model> {
        match result {
            Ok(o) => {
                self.history.val_ll = o.val_ll_history;
                self.history.train_loss = o.train_loss_history;
                self.history.lr = o.lr_history;
                self.history.epoch_seconds = o.epoch_seconds;
                Ok(wrap(o.model))
            }
            Err(f) => {
                let mut err = CliError::from(f.error).context(&format!("{stage} (epoch {})", f.epoch + 1));
                if err.code == EXIT_NUMERIC {
                    let path = self.config.output_dir.join(LAST_GOOD_FILE);
                    let ck = wrap(f.last_good).to_checkpoint(&self.splits.encoding, self.config, &[]);
                    fs::write(&path, ck.to_json())?;
                    err.message.push_str(&format!("; last good parameters written to {}", path.display()));
                }
                Err(err)
            }
        }
    }
}

pub fn cmd_train(config: &RunConfig) -> CliResult<Report> {
    let out = &config.output_dir;
    fs::create_dir_all(out).map_err(|e| CliError::config(format!("output_dir {}: {e}", out.display())))?;
    let mut timing = Timing::default();

    let start = Instant::now();
    let splits = data::prepare(&config.data, None)?;
    timing.stage("data", start);
    let train = streams(&splits.train);
    let valid = streams(&splits.valid);
    let (k, h) = (config.states(), config.hidden());
    let mut run = Run { config, splits: &splits, history: History::default() };

    let gibbs_stage = |run: &mut Run, timing: &mut Timing| -> CliResult<_> {
        let start = Instant::now();
        let obs: Vec<_> = train.iter().map(|s| s.hmm_obs.clone()).collect();
        let g = gibbs_train(&obs, k, &config.gibbs).map_err(|e| CliError::from(e).context("gibbs sampling"))?;
        timing.stage("gibbs", start);
        run.history.gibbs_trace = g.trace;
        Ok(g.params)
    };
    let model = match config.model {
        ModelKind::Hmm => Model::Hmm(gibbs_stage(&mut run, &mut timing)?),
        ModelKind::Lstm => {
            let start = Instant::now();
            let m = run.neural("lstm training", train_lm(&train, &valid, h, &config.train), Model::Lstm)?;
            timing.stage("lstm", start);
            m
        }
        ModelKind::HybridSeq => {
            let hmm = gibbs_stage(&mut run, &mut timing)?;
            let start = Instant::now();
            let first = &train[0];
            let lstm = LstmParams::init(first.input_dim(), h, first.n_classes, k, &mut config.train.rng());
            let model = SeqHybrid::new(hmm, lstm, config.feature_mode)?;
            let m = run.neural("hybrid lstm training", nncore::train(model, &train, &valid, &config.train), Model::Seq)?;
            timing.stage("lstm", start);
            m
        }
        ModelKind::HybridJoint => {
            let start = Instant::now();
            let result = train_joint_hybrid(&train, &valid, k, h, &config.train, config.feature_mode);
            let m = run.neural("joint training", result, Model::Joint)?;
            timing.stage("joint", start);
            m
        }
    };

    let start = Instant::now();
    let mut ll = PerSplit::default();
    let mut n_pairs = PerSplit::default();
    for split in SplitName::ALL {
        let parts = splits.get(split);
        if parts.is_empty() {
            continue;
        }
        let value = model.evaluate(parts).map_err(|e| e.context(&format!("evaluating {}", split.name())))?;
        ll.set(split, value);
        n_pairs.set(split, parts.iter().map(|p| p.stream.n_pairs()).sum());
    }
    timing.stage("eval", start);

    let history = run.history;
    let ck = model.to_checkpoint(&splits.encoding, config, &history.val_ll);
    fs::write(out.join(CHECKPOINT_FILE), ck.to_json())?;
    let kind = config.model;
    let report = Report {
        library_version: LIBRARY_VERSION.to_string(),
        model: kind,
        h: config.h.filter(|_| kind.has_lstm()),
        k: config.k.filter(|_| kind.has_hmm()),
        ll,
        n_pairs,
        val_ll_history: history.val_ll,
        train_loss_history: history.train_loss,
        lr_history: history.lr,
        gibbs_trace: history.gibbs_trace,
        checkpoint: CHECKPOINT_FILE.to_string(),
        timing: TIMING_FILE.to_string(),
        config: config.clone(),
    };
    write_json(&out.join(REPORT_FILE), &report)?;
    let row = table_row(kind, report.h, report.k, report.headline());
    fs::write(out.join(SUMMARY_FILE), format!("{TABLE_HEADER}{row}"))?;
    timing.epoch_seconds = history.epoch_seconds;
    write_json(&out.join(TIMING_FILE), &timing)?;
    Ok(report)
}
