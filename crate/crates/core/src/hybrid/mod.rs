//! HMM-LSTM hybrids. Both variants feed an HMM state distribution into
//! extra columns of the LSTM's output layer, next to the hidden state:
//!
//! * [`SeqHybrid`]: the HMM is trained first by Gibbs sampling and then
//!   frozen; only the LSTM and the widened output layer are trained.
//! * [`JointHybrid`]: the HMM is a softmax-parametrized [`DiffHmm`] trained by
//!   SGD together with the LSTM on the same next-step loss.

mod diff;

use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use diff::{diff_hmm_backward, diff_hmm_forward, DiffCache, DiffCarry, DiffHmm, DiffProbs};

use crate::error::{invalid, shape, Error, Result};
use crate::hmm::{forward_filter, gibbs_train, GibbsConfig, GibbsOutput, HmmParams, StatePosteriorSeq};
use crate::matrix::Matrix;
use crate::nncore::{self, LstmParams, LstmState, SequenceModel, TrainConfig, TrainFailure, TrainOutcome};
use crate::task::PredictionStream;

/// Which HMM quantity enters the output layer at step `t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureMode {
    /// `P(s_t | x_1..x_t)`.
    #[default]
    Filtered,
    /// `T^T P(s_t | x_1..x_t)`, the state distribution of the next step.
    Advance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HybridKind {
    Sequential,
    Joint,
}

/// Per-step HMM features over a whole observation sequence.
pub fn hmm_feature_stream(hmm: &HmmParams, obs: &crate::corpus::Observations, mode: FeatureMode) -> Result<StatePosteriorSeq> {
    let mut post = forward_filter(hmm, obs)?;
    if mode == FeatureMode::Advance {
        let k = hmm.n_states();
        let mut next = vec![0.0; k];
        for t in 0..post.probs.rows() {
            hmm.advance(post.probs.row(t), &mut next);
            post.probs.row_mut(t).copy_from_slice(&next);
        }
    }
    Ok(post)
}

fn widened_lstm<R: Rng + ?Sized>(stream: &PredictionStream, hidden: usize, k: usize, rng: &mut R) -> LstmParams {
    LstmParams::init(stream.input_dim(), hidden, stream.n_classes, k, rng)
}

/// LSTM with a frozen Gibbs-trained HMM feeding its output layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeqHybrid {
    pub hmm: HmmParams,
    pub lstm: LstmParams,
    pub mode: FeatureMode,
}

impl SeqHybrid {
    pub fn new(hmm: HmmParams, lstm: LstmParams, mode: FeatureMode) -> Result<Self> {
        if lstm.n_extra != hmm.n_states() {
            return Err(shape(format!(
                "output layer has {} HMM columns but the HMM has {} states",
                lstm.n_extra,
                hmm.n_states()
            )));
        }
        lstm.check_shapes()?;
        Ok(Self { hmm, lstm, mode })
    }

    /// Copy whose HMM columns in the output layer are all zero.
    pub fn ablated(&self) -> Self {
        let mut m = self.clone();
        m.lstm.zero_extra_columns();
        m
    }
}

impl SequenceModel for SeqHybrid {
    type Carry = LstmState;
    /// `T x K` feature rows of the stream.
    type Prepared = Matrix;

    fn prepare(&self, stream: &PredictionStream) -> Result<Matrix> {
        if stream.input_dim() != self.lstm.input_dim || stream.n_classes != self.lstm.n_out {
            return Err(shape("stream does not match model dimensions"));
        }
        Ok(hmm_feature_stream(&self.hmm, &stream.hmm_obs, self.mode)?.probs)
    }

    fn initial_carry(&self) -> LstmState {
        LstmState::zeros(self.lstm.hidden)
    }

    fn window_grad(&self, stream: &PredictionStream, feats: &Matrix, range: Range<usize>, carry: &mut LstmState, grads: &mut Self) -> Result<f64> {
        let k = feats.cols();
        let extra = &feats.as_slice()[range.start * k..range.end * k];
        nncore::window_grad(&self.lstm, stream, range, carry, extra, &mut grads.lstm, None)
    }

    fn window_logprob(&self, stream: &PredictionStream, feats: &Matrix, range: Range<usize>, carry: &mut LstmState) -> Result<f64> {
        let k = feats.cols();
        let extra = &feats.as_slice()[range.start * k..range.end * k];
        nncore::window_logprob(&self.lstm, stream, range, carry, extra)
    }

    fn zeros_like(&self) -> Self {
        Self { hmm: self.hmm.clone(), lstm: self.lstm.zeros_like(), mode: self.mode }
    }

    // the HMM is frozen and contributes no trainable tensors
    fn tensors(&self) -> Vec<&[f64]> {
        self.lstm.tensors().to_vec()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.lstm.tensors_mut().into_iter().collect()
    }
}

/// Result of the three-stage sequential recipe.
#[derive(Debug, Clone)]
pub struct SeqHybridOutcome {
    pub gibbs: GibbsOutput,
    pub train: TrainOutcome<SeqHybrid>,
}

/// Gibbs-trains a `k`-state HMM on the training streams, then trains an LSTM
/// with `hidden` units and a widened output layer while the HMM stays fixed.
pub fn train_seq_hybrid(
    train: &[PredictionStream],
    valid: &[PredictionStream],
    k: usize,
    hidden: usize,
    gibbs: &GibbsConfig,
    config: &TrainConfig,
    mode: FeatureMode,
) -> Result<SeqHybridOutcome> {
    let first = train.first().ok_or(Error::EmptyInput)?;
    log::info!("sequential hybrid: Gibbs sampling a {k}-state HMM");
    let obs: Vec<_> = train.iter().map(|s| s.hmm_obs.clone()).collect();
    let gibbs_out = gibbs_train(&obs, k, gibbs)?;
    log::info!("sequential hybrid: training the LSTM with the HMM frozen");
    let lstm = widened_lstm(first, hidden, k, &mut config.rng());
    let model = SeqHybrid::new(gibbs_out.params.clone(), lstm, mode)?;
    let outcome = nncore::train(model, train, valid, config)?;
    Ok(SeqHybridOutcome { gibbs: gibbs_out, train: outcome })
}

/// LSTM and differentiable HMM trained together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointHybrid {
    pub hmm: DiffHmm,
    pub lstm: LstmParams,
    pub mode: FeatureMode,
}

impl JointHybrid {
    pub fn new(hmm: DiffHmm, lstm: LstmParams, mode: FeatureMode) -> Result<Self> {
        if lstm.n_extra != hmm.n_states() {
            return Err(shape(format!(
                "output layer has {} HMM columns but the HMM has {} states",
                lstm.n_extra,
                hmm.n_states()
            )));
        }
        lstm.check_shapes()?;
        Ok(Self { hmm, lstm, mode })
    }

    /// LSTM parameters are drawn first (matching a standalone LSTM from the
    /// same seed), then the HMM logits.
    pub fn init(stream: &PredictionStream, hidden: usize, k: usize, mode: FeatureMode, seed_rng: &mut impl Rng) -> Result<Self> {
        if stream.hmm_obs.real_dim() != 0 {
            return Err(invalid("the joint hybrid needs categorical HMM observations"));
        }
        let lstm = widened_lstm(stream, hidden, k, seed_rng);
        let hmm = DiffHmm::init(k, stream.hmm_obs.cardinalities(), seed_rng);
        Self::new(hmm, lstm, mode)
    }

    pub fn ablated(&self) -> Self {
        let mut m = self.clone();
        m.lstm.zero_extra_columns();
        m
    }

    /// Feature rows (`T x K`) of a whole stream under the current logits.
    pub fn features(&self, stream: &PredictionStream) -> Result<Matrix> {
        let probs = self.hmm.probs();
        let t = stream.hmm_obs.len();
        let c = diff_hmm_forward(&self.hmm, &probs, &stream.hmm_obs, 0..t, &DiffCarry::Start, self.mode)?;
        Matrix::from_vec(t, self.hmm.n_states(), c.features)
    }
}

impl SequenceModel for JointHybrid {
    type Carry = (LstmState, DiffCarry);
    type Prepared = ();

    fn prepare(&self, stream: &PredictionStream) -> Result<()> {
        if stream.input_dim() != self.lstm.input_dim || stream.n_classes != self.lstm.n_out {
            return Err(shape("stream does not match model dimensions"));
        }
        self.hmm.check_observations(&stream.hmm_obs)
    }

    fn initial_carry(&self) -> Self::Carry {
        (LstmState::zeros(self.lstm.hidden), DiffCarry::Start)
    }

    fn window_grad(&self, stream: &PredictionStream, _: &(), range: Range<usize>, carry: &mut Self::Carry, grads: &mut Self) -> Result<f64> {
        let probs = self.hmm.probs();
        let cache = diff_hmm_forward(&self.hmm, &probs, &stream.hmm_obs, range.clone(), &carry.1, self.mode)?;
        let mut dfeat = vec![0.0; cache.features.len()];
        let loss = nncore::window_grad(&self.lstm, stream, range, &mut carry.0, &cache.features, &mut grads.lstm, Some(&mut dfeat))?;
        diff_hmm_backward(&probs, &stream.hmm_obs, &cache, &dfeat, &mut grads.hmm)?;
        carry.1 = cache.carry_out(&carry.1);
        Ok(loss)
    }

    fn window_logprob(&self, stream: &PredictionStream, _: &(), range: Range<usize>, carry: &mut Self::Carry) -> Result<f64> {
        let probs = self.hmm.probs();
        let cache = diff_hmm_forward(&self.hmm, &probs, &stream.hmm_obs, range.clone(), &carry.1, self.mode)?;
        let lp = nncore::window_logprob(&self.lstm, stream, range, &mut carry.0, &cache.features)?;
        carry.1 = cache.carry_out(&carry.1);
        Ok(lp)
    }

    fn zeros_like(&self) -> Self {
        Self { hmm: self.hmm.zeros_like(), lstm: self.lstm.zeros_like(), mode: self.mode }
    }

    fn tensors(&self) -> Vec<&[f64]> {
        let mut v = self.lstm.tensors().to_vec();
        v.extend(self.hmm.tensors());
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v: Vec<&mut [f64]> = self.lstm.tensors_mut().into_iter().collect();
        v.extend(self.hmm.tensors_mut());
        v
    }
}

pub fn train_joint_hybrid(
    train: &[PredictionStream],
    valid: &[PredictionStream],
    k: usize,
    hidden: usize,
    config: &TrainConfig,
    mode: FeatureMode,
) -> std::result::Result<TrainOutcome<JointHybrid>, TrainFailure<JointHybrid>> {
    let first = match train.first() {
        Some(s) => s,
        None => {
            let empty = JointHybrid { hmm: DiffHmm::zeros(0, &[]), lstm: LstmParams::zeros(0, 0, 0, 0), mode };
            return Err(TrainFailure { error: Error::EmptyInput, last_good: empty, epoch: 0 });
        }
    };
    let model = match JointHybrid::init(first, hidden, k, mode, &mut config.rng()) {
        Ok(m) => m,
        Err(error) => {
            let empty = JointHybrid { hmm: DiffHmm::zeros(k, &[]), lstm: LstmParams::zeros(0, 0, 0, 0), mode };
            return Err(TrainFailure { error, last_good: empty, epoch: 0 });
        }
    };
    nncore::train(model, train, valid, config)
}

#[cfg(test)]
mod tests;
