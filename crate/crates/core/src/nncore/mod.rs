//! Single-layer LSTM language model with a linear softmax output layer.
//!
//! The cell is the standard one: sigmoid input, forget and output gates, a
//! tanh candidate, `c_t = f * c_{t-1} + i * g` and `h_t = o * tanh(c_t)`.
//! Gradients are derived by hand and checked against central finite
//! differences in the tests.
//!
//! The output layer may be wider than the hidden state: hybrids append one
//! column per HMM state and feed `[h_t ; p_t]` into it.

mod train;

use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use train::{
    clip_global_norm, evaluate, gradient_check, rel_err, sgd_step, train, train_lm, update_lr, GradCheck, LrRule,
    SequenceModel, TrainConfig, TrainFailure, TrainOutcome,
};

use crate::error::{shape, Error, Result};
use crate::matrix::Matrix;
use crate::task::{InputRows, PredictionStream};

pub const CHECKPOINT_VERSION: u32 = 1;
const INIT_RANGE: f64 = 0.08;
const FORGET_BIAS: f64 = 1.0;

/// All weights of the LSTM and its output map, in double precision.
///
/// Gate weights are stored input-major: row `k` of `w_in` (and row `j` of
/// `w_rec`) holds the `4H` pre-activation contributions of input unit `k`
/// (hidden unit `j`), gate blocks ordered input, forget, output, candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    pub input_dim: usize,
    pub hidden: usize,
    pub n_out: usize,
    /// Extra output-layer columns beyond the hidden state (HMM states).
    pub n_extra: usize,
    pub w_in: Matrix,
    pub w_rec: Matrix,
    pub bias: Vec<f64>,
    pub w_out: Matrix,
    pub b_out: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        Self { h: vec![0.0; hidden], c: vec![0.0; hidden] }
    }
}

/// Everything the backward pass needs from one forward window.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub rows: Range<usize>,
    pub h0: Vec<f64>,
    pub c0: Vec<f64>,
    /// `L x 4H` gate activations.
    gates: Vec<f64>,
    /// `L x H` cell states, their tanh, and hidden states.
    c: Vec<f64>,
    tc: Vec<f64>,
    h: Vec<f64>,
    hidden: usize,
}

impl ForwardCache {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn h(&self, t: usize) -> &[f64] {
        &self.h[t * self.hidden..(t + 1) * self.hidden]
    }

    pub fn c(&self, t: usize) -> &[f64] {
        &self.c[t * self.hidden..(t + 1) * self.hidden]
    }

    pub fn final_state(&self) -> LstmState {
        if self.is_empty() {
            return LstmState { h: self.h0.clone(), c: self.c0.clone() };
        }
        let l = self.len() - 1;
        LstmState { h: self.h(l).to_vec(), c: self.c(l).to_vec() }
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl LstmParams {
    pub fn zeros(input_dim: usize, hidden: usize, n_out: usize, n_extra: usize) -> Self {
        Self {
            input_dim,
            hidden,
            n_out,
            n_extra,
            w_in: Matrix::zeros(input_dim, 4 * hidden),
            w_rec: Matrix::zeros(hidden, 4 * hidden),
            bias: vec![0.0; 4 * hidden],
            w_out: Matrix::zeros(n_out, hidden + n_extra),
            b_out: vec![0.0; n_out],
        }
    }

    /// Uniform(-0.08, 0.08) weights with the forget-gate bias shifted by +1.
    ///
    /// The extra output columns are drawn last, so a model with `n_extra > 0`
    /// shares every other parameter with the plain model from the same RNG.
    pub fn init<R: Rng + ?Sized>(input_dim: usize, hidden: usize, n_out: usize, n_extra: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(input_dim, hidden, n_out, n_extra);
        let mut u = || rng.random_range(-INIT_RANGE..INIT_RANGE);
        p.w_in.as_mut_slice().iter_mut().for_each(|x| *x = u());
        p.w_rec.as_mut_slice().iter_mut().for_each(|x| *x = u());
        p.bias.iter_mut().for_each(|x| *x = u());
        for j in 0..hidden {
            p.bias[hidden + j] += FORGET_BIAS;
        }
        for r in 0..n_out {
            for c in 0..hidden {
                p.w_out[(r, c)] = u();
            }
        }
        p.b_out.iter_mut().for_each(|x| *x = u());
        for r in 0..n_out {
            for c in hidden..hidden + n_extra {
                p.w_out[(r, c)] = u();
            }
        }
        p
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.input_dim, self.hidden, self.n_out, self.n_extra)
    }

    pub fn tensors(&self) -> [&[f64]; 5] {
        [self.w_in.as_slice(), self.w_rec.as_slice(), &self.bias, self.w_out.as_slice(), &self.b_out]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 5] {
        [self.w_in.as_mut_slice(), self.w_rec.as_mut_slice(), &mut self.bias, self.w_out.as_mut_slice(), &mut self.b_out]
    }

    pub fn n_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }

    pub fn check_shapes(&self) -> Result<()> {
        let h = self.hidden;
        let ok = self.w_in.rows() == self.input_dim
            && self.w_in.cols() == 4 * h
            && self.w_rec.rows() == h
            && self.w_rec.cols() == 4 * h
            && self.bias.len() == 4 * h
            && self.w_out.rows() == self.n_out
            && self.w_out.cols() == h + self.n_extra
            && self.b_out.len() == self.n_out;
        if ok {
            Ok(())
        } else {
            Err(shape("LSTM parameter dimensions are inconsistent"))
        }
    }

    /// Copy with the extra output columns set to zero.
    pub fn zero_extra_columns(&mut self) {
        for r in 0..self.n_out {
            for c in self.hidden..self.hidden + self.n_extra {
                self.w_out[(r, c)] = 0.0;
            }
        }
    }
}

/// Runs the cell over input rows `rows` starting from `state`.
pub fn lstm_forward(params: &LstmParams, inputs: &InputRows, rows: Range<usize>, state: &LstmState) -> Result<ForwardCache> {
    let h = params.hidden;
    if inputs.dim() != params.input_dim {
        return Err(shape(format!("input dim {} != model input dim {}", inputs.dim(), params.input_dim)));
    }
    if state.h.len() != h || state.c.len() != h {
        return Err(shape(format!("initial state must have length {h}")));
    }
    if rows.end > inputs.len() {
        return Err(shape("input window out of range"));
    }
    let l = rows.len();
    let mut cache = ForwardCache {
        rows: rows.clone(),
        h0: state.h.clone(),
        c0: state.c.clone(),
        gates: vec![0.0; l * 4 * h],
        c: vec![0.0; l * h],
        tc: vec![0.0; l * h],
        h: vec![0.0; l * h],
        hidden: h,
    };
    let mut a = vec![0.0; 4 * h];
    let mut h_prev = state.h.clone();
    let mut c_prev = state.c.clone();
    for (s, t) in rows.enumerate() {
        a.copy_from_slice(&params.bias);
        let (idx, val) = inputs.row(t);
        for (&k, &v) in idx.iter().zip(val) {
            let w = params.w_in.row(k as usize);
            for (am, &wm) in a.iter_mut().zip(w) {
                *am += v * wm;
            }
        }
        if s > 0 {
            h_prev.copy_from_slice(&cache.h[(s - 1) * h..s * h]);
            c_prev.copy_from_slice(&cache.c[(s - 1) * h..s * h]);
        }
        for (j, &hj) in h_prev.iter().enumerate() {
            if hj == 0.0 {
                continue;
            }
            let w = params.w_rec.row(j);
            for (am, &wm) in a.iter_mut().zip(w) {
                *am += hj * wm;
            }
        }
        let g = &mut cache.gates[s * 4 * h..(s + 1) * 4 * h];
        for m in 0..3 * h {
            g[m] = sigmoid(a[m]);
        }
        for m in 3 * h..4 * h {
            g[m] = a[m].tanh();
        }
        for j in 0..h {
            let c = g[h + j] * c_prev[j] + g[j] * g[3 * h + j];
            let tc = c.tanh();
            cache.c[s * h + j] = c;
            cache.tc[s * h + j] = tc;
            cache.h[s * h + j] = g[2 * h + j] * tc;
        }
    }
    Ok(cache)
}

/// `logits = W_out [hidden ; extra] + b_out`, written into `out`.
pub fn output_logits(w_out: &Matrix, b_out: &[f64], hidden: &[f64], extra: &[f64], out: &mut [f64]) -> Result<()> {
    let width = hidden.len() + extra.len();
    if w_out.cols() != width || w_out.rows() != out.len() || b_out.len() != out.len() {
        return Err(shape(format!(
            "output map {}x{} cannot take {} inputs into {} logits",
            w_out.rows(),
            w_out.cols(),
            width,
            out.len()
        )));
    }
    let nh = hidden.len();
    for (r, o) in out.iter_mut().enumerate() {
        let w = w_out.row(r);
        let mut s = 0.0;
        for (wc, hc) in w[..nh].iter().zip(hidden) {
            s += wc * hc;
        }
        for (wc, pc) in w[nh..].iter().zip(extra) {
            s += wc * pc;
        }
        *o = s + b_out[r];
    }
    Ok(())
}

/// Cross-entropy in nats and its gradient `softmax(logits) - onehot(target)`.
pub fn softmax_xent(logits: &[f64], target: usize) -> (f64, Vec<f64>) {
    let mut d = vec![0.0; logits.len()];
    let loss = softmax_xent_into(logits, target, &mut d);
    (loss, d)
}

pub(crate) fn softmax_xent_into(logits: &[f64], target: usize, dlogits: &mut [f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (d, &z) in dlogits.iter_mut().zip(logits) {
        let e = (z - max).exp();
        *d = e;
        sum += e;
    }
    dlogits.iter_mut().for_each(|d| *d /= sum);
    dlogits[target] -= 1.0;
    sum.ln() + max - logits[target]
}

/// `log softmax(logits)[target]` without the gradient.
pub(crate) fn log_softmax_at(logits: &[f64], target: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|&z| (z - max).exp()).sum();
    logits[target] - max - sum.ln()
}

/// Gradients of a window loss with respect to the initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct StateGrad {
    pub dh0: Vec<f64>,
    pub dc0: Vec<f64>,
}

/// Backpropagation through one window. `dh_out` holds `dLoss/dh_t` coming
/// from the output layer (`L x H`, row-major); cell-parameter gradients are
/// added into `grads`.
pub fn bptt_backward(
    params: &LstmParams,
    inputs: &InputRows,
    cache: &ForwardCache,
    dh_out: &[f64],
    grads: &mut LstmParams,
) -> Result<StateGrad> {
    let h = params.hidden;
    let l = cache.len();
    if dh_out.len() != l * h {
        return Err(shape(format!("dh_out has {} entries, expected {}", dh_out.len(), l * h)));
    }
    grads.check_shapes()?;
    let mut dh_next = vec![0.0; h];
    let mut dc_next = vec![0.0; h];
    let mut da = vec![0.0; 4 * h];
    for s in (0..l).rev() {
        let g = &cache.gates[s * 4 * h..(s + 1) * 4 * h];
        let tc = &cache.tc[s * h..(s + 1) * h];
        let (h_prev, c_prev) = if s == 0 {
            (&cache.h0[..], &cache.c0[..])
        } else {
            (&cache.h[(s - 1) * h..s * h], &cache.c[(s - 1) * h..s * h])
        };
        for j in 0..h {
            let (i, f, o, cand) = (g[j], g[h + j], g[2 * h + j], g[3 * h + j]);
            let dh = dh_out[s * h + j] + dh_next[j];
            let d_o = dh * tc[j];
            let dc = dc_next[j] + dh * o * (1.0 - tc[j] * tc[j]);
            let di = dc * cand;
            let dg = dc * i;
            let df = dc * c_prev[j];
            dc_next[j] = dc * f;
            da[j] = di * i * (1.0 - i);
            da[h + j] = df * f * (1.0 - f);
            da[2 * h + j] = d_o * o * (1.0 - o);
            da[3 * h + j] = dg * (1.0 - cand * cand);
        }
        for (b, &d) in grads.bias.iter_mut().zip(&da) {
            *b += d;
        }
        let (idx, val) = inputs.row(cache.rows.start + s);
        for (&k, &v) in idx.iter().zip(val) {
            for (w, &d) in grads.w_in.row_mut(k as usize).iter_mut().zip(&da) {
                *w += v * d;
            }
        }
        for j in 0..h {
            let hp = h_prev[j];
            let wr = params.w_rec.row(j);
            let mut acc = 0.0;
            for (w, &d) in wr.iter().zip(&da) {
                acc += w * d;
            }
            dh_next[j] = acc;
            if hp != 0.0 {
                for (w, &d) in grads.w_rec.row_mut(j).iter_mut().zip(&da) {
                    *w += hp * d;
                }
            }
        }
    }
    Ok(StateGrad { dh0: dh_next, dc0: dc_next })
}

/// Forward, loss and backward over one window of prediction pairs.
///
/// `extra` holds the extra output-layer inputs for each step of the window
/// (`L x n_extra`, row-major). Returns the summed loss; gradients are added
/// into `grads`, and `dextra` (when given) receives `dLoss/dextra`.
pub(crate) fn window_grad(
    params: &LstmParams,
    stream: &PredictionStream,
    range: Range<usize>,
    state: &mut LstmState,
    extra: &[f64],
    grads: &mut LstmParams,
    mut dextra: Option<&mut [f64]>,
) -> Result<f64> {
    let (h, k, v) = (params.hidden, params.n_extra, params.n_out);
    let l = range.len();
    if extra.len() != l * k {
        return Err(shape(format!("extra features have {} entries, expected {}", extra.len(), l * k)));
    }
    let cache = lstm_forward(params, &stream.inputs, range.clone(), state)?;
    let mut logits = vec![0.0; v];
    let mut dlogits = vec![0.0; v];
    let mut dh_out = vec![0.0; l * h];
    let mut loss = 0.0;
    for s in 0..l {
        let hs = cache.h(s);
        let ex = &extra[s * k..(s + 1) * k];
        output_logits(&params.w_out, &params.b_out, hs, ex, &mut logits)?;
        loss += softmax_xent_into(&logits, stream.targets[range.start + s], &mut dlogits);
        for (r, &d) in dlogits.iter().enumerate() {
            grads.b_out[r] += d;
            let gw = grads.w_out.row_mut(r);
            for (g, &x) in gw[..h].iter_mut().zip(hs) {
                *g += d * x;
            }
            for (g, &x) in gw[h..].iter_mut().zip(ex) {
                *g += d * x;
            }
            let w = params.w_out.row(r);
            for (dh, &wc) in dh_out[s * h..(s + 1) * h].iter_mut().zip(&w[..h]) {
                *dh += d * wc;
            }
            if let Some(dx) = dextra.as_deref_mut() {
                for (dp, &wc) in dx[s * k..(s + 1) * k].iter_mut().zip(&w[h..]) {
                    *dp += d * wc;
                }
            }
        }
    }
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("non-finite loss in window starting at {}", range.start)));
    }
    bptt_backward(params, &stream.inputs, &cache, &dh_out, grads)?;
    *state = cache.final_state();
    Ok(loss)
}

/// Summed `log P(target)` over one window, threading `state`.
pub(crate) fn window_logprob(
    params: &LstmParams,
    stream: &PredictionStream,
    range: Range<usize>,
    state: &mut LstmState,
    extra: &[f64],
) -> Result<f64> {
    let k = params.n_extra;
    let cache = lstm_forward(params, &stream.inputs, range.clone(), state)?;
    let mut logits = vec![0.0; params.n_out];
    let mut total = 0.0;
    for s in 0..range.len() {
        output_logits(&params.w_out, &params.b_out, cache.h(s), &extra[s * k..(s + 1) * k], &mut logits)?;
        total += log_softmax_at(&logits, stream.targets[range.start + s]);
    }
    *state = cache.final_state();
    Ok(total)
}

/// Hidden state after every input row of the stream (teacher forced).
pub fn hidden_states(params: &LstmParams, inputs: &InputRows) -> Result<Matrix> {
    let h = params.hidden;
    let mut out = Matrix::zeros(inputs.len(), h);
    let mut state = LstmState::zeros(h);
    let mut start = 0;
    while start < inputs.len() {
        let end = (start + 256).min(inputs.len());
        let cache = lstm_forward(params, inputs, start..end, &state)?;
        for s in 0..cache.len() {
            out.row_mut(start + s).copy_from_slice(cache.h(s));
        }
        state = cache.final_state();
        start = end;
    }
    Ok(out)
}

/// A plain LSTM language model.
impl SequenceModel for LstmParams {
    type Carry = LstmState;
    type Prepared = ();

    fn prepare(&self, stream: &PredictionStream) -> Result<()> {
        if stream.input_dim() != self.input_dim || stream.n_classes != self.n_out {
            return Err(shape("stream does not match model dimensions"));
        }
        if self.n_extra != 0 {
            return Err(shape("plain LSTM evaluation needs n_extra = 0"));
        }
        Ok(())
    }

    fn initial_carry(&self) -> LstmState {
        LstmState::zeros(self.hidden)
    }

    fn window_grad(&self, stream: &PredictionStream, _: &(), range: Range<usize>, carry: &mut LstmState, grads: &mut Self) -> Result<f64> {
        window_grad(self, stream, range, carry, &[], grads, None)
    }

    fn window_logprob(&self, stream: &PredictionStream, _: &(), range: Range<usize>, carry: &mut LstmState) -> Result<f64> {
        window_logprob(self, stream, range, carry, &[])
    }

    fn zeros_like(&self) -> Self {
        LstmParams::zeros_like(self)
    }

    fn tensors(&self) -> Vec<&[f64]> {
        LstmParams::tensors(self).to_vec()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        LstmParams::tensors_mut(self).into_iter().collect()
    }
}

/// Versioned on-disk form of an LSTM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmCheckpoint {
    pub version: u32,
    #[serde(rename = "V")]
    pub v: usize,
    #[serde(rename = "H")]
    pub h: usize,
    pub params: LstmParams,
    pub config: TrainConfig,
    pub epoch: usize,
    pub val_ll_history: Vec<f64>,
}

impl LstmCheckpoint {
    pub fn into_params(self) -> Result<LstmParams> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::UnsupportedVersion { found: self.version, expected: CHECKPOINT_VERSION });
        }
        self.params.check_shapes()?;
        if self.params.hidden != self.h || self.params.n_out != self.v {
            return Err(shape("checkpoint header disagrees with its parameters"));
        }
        Ok(self.params)
    }
}
