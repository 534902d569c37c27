use std::fmt;
use std::ops::Range;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::LstmParams;
use crate::corpus::BatchPlan;
use crate::error::{invalid, shape, Error, Result};
use crate::task::PredictionStream;

const EVAL_CHUNK: usize = 256;

/// A recurrent model the SGD loop can drive: it threads a carry through
/// consecutive windows and exposes its trainable tensors as flat slices.
pub trait SequenceModel: Clone {
    type Carry: Clone;
    /// Per-stream data computed once before training or evaluation.
    type Prepared;

    fn prepare(&self, stream: &PredictionStream) -> Result<Self::Prepared>;
    fn initial_carry(&self) -> Self::Carry;
    /// Summed loss over `range`; gradients are added into `grads`.
    fn window_grad(
        &self,
        stream: &PredictionStream,
        prepared: &Self::Prepared,
        range: Range<usize>,
        carry: &mut Self::Carry,
        grads: &mut Self,
    ) -> Result<f64>;
    /// Summed log-probability of the targets in `range`.
    fn window_logprob(
        &self,
        stream: &PredictionStream,
        prepared: &Self::Prepared,
        range: Range<usize>,
        carry: &mut Self::Carry,
    ) -> Result<f64>;
    fn zeros_like(&self) -> Self;
    /// Trainable tensors, in a fixed order shared with `tensors_mut`.
    fn tensors(&self) -> Vec<&[f64]>;
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LrRule {
    Paper,
    Plateau,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr0: f64,
    pub clip_norm: f64,
    pub epochs: usize,
    pub seq_len: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub lr_rule: LrRule,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { lr0: 1.0, clip_norm: 5.0, epochs: 10, seq_len: 50, batch_size: 16, seed: 0, lr_rule: LrRule::Paper }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return Err(invalid("train.lr0 must be a positive number"));
        }
        if !(self.clip_norm > 0.0) {
            return Err(invalid("train.clip_norm must be positive"));
        }
        if self.epochs == 0 {
            return Err(invalid("train.epochs must be >= 1"));
        }
        if self.seq_len == 0 || self.batch_size == 0 {
            return Err(invalid("train.seq_len and train.batch_size must be >= 1"));
        }
        Ok(())
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

/// Scales every tensor by `threshold / norm` when the global L2 norm
/// exceeds `threshold`. Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [&mut [f64]], threshold: f64) -> f64 {
    let norm = grads.iter().flat_map(|g| g.iter()).map(|x| x * x).sum::<f64>().sqrt();
    if norm > threshold {
        let scale = threshold / norm;
        grads.iter_mut().for_each(|g| g.iter_mut().for_each(|x| *x *= scale));
    }
    norm
}

/// `p <- p - lr * g`. Nothing is written if any updated value would be
/// non-finite.
pub fn sgd_step(params: &mut [&mut [f64]], grads: &[&[f64]], lr: f64) -> Result<()> {
    if params.len() != grads.len() || params.iter().zip(grads).any(|(p, g)| p.len() != g.len()) {
        return Err(shape("parameter and gradient tensors differ in shape"));
    }
    for (ti, (p, g)) in params.iter().zip(grads).enumerate() {
        if let Some(i) = p.iter().zip(g.iter()).position(|(p, g)| !(p - lr * g).is_finite()) {
            return Err(Error::Numeric(format!("non-finite update in tensor {ti} at index {i}")));
        }
    }
    for (p, g) in params.iter_mut().zip(grads) {
        for (p, g) in p.iter_mut().zip(g.iter()) {
            *p -= lr * g;
        }
    }
    Ok(())
}

/// Learning-rate schedule applied after each epoch from the validation
/// mean log-likelihoods `ll` (current) and `ll_prev`.
pub fn update_lr(lr: f64, ll: f64, ll_prev: f64, rule: LrRule) -> f64 {
    let halve = match rule {
        LrRule::Paper => (-ll).exp() > (-ll_prev).exp() + 1.0,
        LrRule::Plateau => ll < ll_prev + 1e-3,
    };
    if halve {
        lr / 2.0
    } else {
        lr
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome<M> {
    pub model: M,
    /// Mean validation log-likelihood after each epoch.
    pub val_ll_history: Vec<f64>,
    /// Mean training loss (nats per target) of each epoch.
    pub train_loss_history: Vec<f64>,
    /// Learning rate used during each epoch.
    pub lr_history: Vec<f64>,
    pub epoch_seconds: Vec<f64>,
}

/// Training stopped early; `last_good` holds the parameters before the
/// failing update.
#[derive(Debug)]
pub struct TrainFailure<M> {
    pub error: Error,
    pub last_good: M,
    pub epoch: usize,
}

impl<M> fmt::Display for TrainFailure<M> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "training failed in epoch {}: {}", self.epoch + 1, self.error)
    }
}

impl<M> From<TrainFailure<M>> for Error {
    fn from(f: TrainFailure<M>) -> Self {
        match f.error {
            Error::Numeric(msg) => Error::Numeric(format!("epoch {}: {msg}", f.epoch + 1)),
            other => other,
        }
    }
}

fn plan_for(stream: &PredictionStream, config: &TrainConfig) -> Result<BatchPlan> {
    let lanes = config.batch_size.min(stream.n_pairs() / config.seq_len).max(1);
    BatchPlan::new(stream.n_pairs(), config.seq_len, lanes)
}

/// Mean per-target log-likelihood with prepared per-stream data.
pub(crate) fn evaluate_prepared<M: SequenceModel>(model: &M, streams: &[PredictionStream], prepared: &[M::Prepared]) -> Result<f64> {
    let mut total = 0.0;
    let mut n = 0usize;
    for (stream, prep) in streams.iter().zip(prepared) {
        let mut carry = model.initial_carry();
        for range in stream.chunks(EVAL_CHUNK) {
            n += range.len();
            total += model.window_logprob(stream, prep, range, &mut carry)?;
        }
    }
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    Ok(total / n as f64)
}

/// Teacher-forced mean `log P(target_t | inputs <= t)` over every stream,
/// carrying state through each stream and resetting it between streams.
pub fn evaluate<M: SequenceModel>(model: &M, streams: &[PredictionStream]) -> Result<f64> {
    let prepared = streams.iter().map(|s| model.prepare(s)).collect::<Result<Vec<_>>>()?;
    evaluate_prepared(model, streams, &prepared)
}

/// Stateful truncated-BPTT SGD over `train`, with per-epoch validation on
/// `valid` driving the learning-rate rule.
pub fn train<M: SequenceModel>(
    model: M,
    train: &[PredictionStream],
    valid: &[PredictionStream],
    config: &TrainConfig,
) -> std::result::Result<TrainOutcome<M>, TrainFailure<M>> {
    let fail = |error: Error, model: &M, epoch: usize| TrainFailure { error, last_good: model.clone(), epoch };
    let setup = (|| -> Result<_> {
        config.validate()?;
        if train.is_empty() {
            return Err(Error::EmptyInput);
        }
        let plans = train.iter().map(|s| plan_for(s, config)).collect::<Result<Vec<_>>>()?;
        let train_prep = train.iter().map(|s| model.prepare(s)).collect::<Result<Vec<_>>>()?;
        let valid_prep = valid.iter().map(|s| model.prepare(s)).collect::<Result<Vec<_>>>()?;
        Ok((plans, train_prep, valid_prep))
    })();
    let (plans, train_prep, valid_prep) = match setup {
        Ok(x) => x,
        Err(e) => return Err(fail(e, &model, 0)),
    };

    let mut model = model;
    let mut lr = config.lr0;
    let mut out = TrainOutcome {
        model: model.clone(),
        val_ll_history: Vec::new(),
        train_loss_history: Vec::new(),
        lr_history: Vec::new(),
        epoch_seconds: Vec::new(),
    };
    for epoch in 0..config.epochs {
        let started = Instant::now();
        let mut loss_sum = 0.0;
        let mut n_batches = 0usize;
        for ((stream, prep), plan) in train.iter().zip(&train_prep).zip(&plans) {
            let mut carries = vec![model.initial_carry(); plan.batch_size];
            for batch in plan.batches() {
                let mut grads = model.zeros_like();
                let mut batch_loss = 0.0;
                for (range, carry) in batch.lanes.iter().zip(carries.iter_mut()) {
                    match model.window_grad(stream, prep, range.clone(), carry, &mut grads) {
                        Ok(l) => batch_loss += l,
                        Err(e) => return Err(fail(e, &model, epoch)),
                    }
                }
                let scale = 1.0 / (plan.batch_size * plan.seq_len) as f64;
                let mut g = grads.tensors_mut();
                g.iter_mut().for_each(|t| t.iter_mut().for_each(|x| *x *= scale));
                clip_global_norm(&mut g, config.clip_norm);
                drop(g);
                let g = grads.tensors();
                if let Err(e) = sgd_step(&mut model.tensors_mut(), &g, lr) {
                    return Err(fail(e, &model, epoch));
                }
                loss_sum += batch_loss * scale;
                n_batches += 1;
            }
        }
        let train_loss = loss_sum / n_batches as f64;
        let val_ll = if valid.is_empty() {
            -train_loss
        } else {
            match evaluate_prepared(&model, valid, &valid_prep) {
                Ok(v) => v,
                Err(e) => return Err(fail(e, &model, epoch)),
            }
        };
        log::info!("epoch {}: train loss {train_loss:.4}, validation LL {val_ll:.4}, lr {lr}", epoch + 1);
        out.lr_history.push(lr);
        out.train_loss_history.push(train_loss);
        if let Some(&prev) = out.val_ll_history.last() {
            lr = update_lr(lr, val_ll, prev, config.lr_rule);
        }
        out.val_ll_history.push(val_ll);
        out.epoch_seconds.push(started.elapsed().as_secs_f64());
    }
    out.model = model;
    Ok(out)
}

/// Initializes an LSTM from `config.seed` and trains it.
pub fn train_lm(
    train_streams: &[PredictionStream],
    valid: &[PredictionStream],
    hidden: usize,
    config: &TrainConfig,
) -> std::result::Result<TrainOutcome<LstmParams>, TrainFailure<LstmParams>> {
    let (input_dim, n_out) = train_streams.first().map_or((0, 0), |s| (s.input_dim(), s.n_classes));
    let model = LstmParams::init(input_dim, hidden, n_out, 0, &mut config.rng());
    train(model, train_streams, valid, config)
}

/// Largest disagreement between analytic and central-difference gradients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_rel_err: f64,
    pub n_checked: usize,
}

/// Relative error with a small absolute floor so that gradients that are
/// zero up to rounding compare as equal.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Compares `window_grad` against central finite differences of the summed
/// window loss for every trainable scalar.
pub fn gradient_check<M: SequenceModel>(model: &M, stream: &PredictionStream, range: Range<usize>, eps: f64) -> Result<GradCheck> {
    let prep = model.prepare(stream)?;
    let loss = |m: &M| -> Result<f64> {
        let mut carry = m.initial_carry();
        let mut sink = m.zeros_like();
        m.window_grad(stream, &prep, range.clone(), &mut carry, &mut sink)
    };
    let mut grads = model.zeros_like();
    model.window_grad(stream, &prep, range.clone(), &mut model.initial_carry(), &mut grads)?;
    let analytic: Vec<Vec<f64>> = grads.tensors().iter().map(|t| t.to_vec()).collect();
    let mut probe = model.clone();
    let mut worst = 0.0f64;
    let mut n = 0;
    for (ti, tensor) in analytic.iter().enumerate() {
        for (i, &a) in tensor.iter().enumerate() {
            let orig = probe.tensors()[ti][i];
            probe.tensors_mut()[ti][i] = orig + eps;
            let up = loss(&probe)?;
            probe.tensors_mut()[ti][i] = orig - eps;
            let down = loss(&probe)?;
            probe.tensors_mut()[ti][i] = orig;
            worst = worst.max(rel_err(a, (up - down) / (2.0 * eps)));
            n += 1;
        }
    }
    Ok(GradCheck { max_rel_err: worst, n_checked: n })
}
