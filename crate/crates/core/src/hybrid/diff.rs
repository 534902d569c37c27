//! HMM forward recursion over softmax-parametrized matrices, with its exact
//! reverse-mode gradient.

use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::FeatureMode;
use crate::corpus::Observations;
use crate::error::{invalid, shape, Error, Result};
use crate::hmm::{EmissionModel, HmmParams};
use crate::matrix::Matrix;

const INIT_NOISE: f64 = 0.01;
const MIN_NORMALIZER: f64 = 1e-300;

/// Unconstrained logits; every probability row is the softmax of a logit row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffHmm {
    pub pi_logits: Vec<f64>,
    pub trans_logits: Matrix,
    /// One `K x cardinality` logit matrix per categorical feature.
    pub emit_logits: Vec<Matrix>,
}

/// Softmaxed view of a [`DiffHmm`].
#[derive(Debug, Clone, PartialEq)]
pub struct DiffProbs {
    pub pi: Vec<f64>,
    pub trans: Matrix,
    pub emit: Vec<Matrix>,
}

/// Filtering state carried between windows.
#[derive(Debug, Clone, PartialEq)]
pub enum DiffCarry {
    /// Next step is the first of a sequence and uses the initial distribution.
    Start,
    /// Filtered distribution of the previous step.
    Dist(Vec<f64>),
}

fn softmax_row(logits: &[f64], out: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &z) in out.iter_mut().zip(logits) {
        *o = (z - max).exp();
        sum += *o;
    }
    out.iter_mut().for_each(|o| *o /= sum);
}

fn softmax_rows(m: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(m.rows(), m.cols());
    for r in 0..m.rows() {
        softmax_row(m.row(r), out.row_mut(r));
    }
    out
}

/// Adds `d logits` for a row with probabilities `probs` and gradient `dprobs`.
fn softmax_backward(probs: &[f64], dprobs: &[f64], dlogits: &mut [f64]) {
    let dot: f64 = probs.iter().zip(dprobs).map(|(p, d)| p * d).sum();
    for ((g, &p), &d) in dlogits.iter_mut().zip(probs).zip(dprobs) {
        *g += p * (d - dot);
    }
}

fn ln_floor(p: f64) -> f64 {
    p.max(MIN_NORMALIZER).ln()
}

impl DiffHmm {
    pub fn zeros(k: usize, cardinalities: &[usize]) -> Self {
        Self {
            pi_logits: vec![0.0; k],
            trans_logits: Matrix::zeros(k, k),
            emit_logits: cardinalities.iter().map(|&c| Matrix::zeros(k, c)).collect(),
        }
    }

    /// Near-uniform start: every logit is drawn from Uniform(-0.01, 0.01).
    pub fn init<R: Rng + ?Sized>(k: usize, cardinalities: &[usize], rng: &mut R) -> Self {
        let mut m = Self::zeros(k, cardinalities);
        for t in m.tensors_mut() {
            t.iter_mut().for_each(|x| *x = rng.random_range(-INIT_NOISE..INIT_NOISE));
        }
        m
    }

    /// Logits equal to the log of a reference categorical HMM.
    pub fn from_params(params: &HmmParams) -> Result<Self> {
        if params.emission.gaussian.is_some() {
            return Err(invalid("the differentiable HMM supports categorical emissions only"));
        }
        let log = |m: &Matrix| {
            let mut out = m.clone();
            out.as_mut_slice().iter_mut().for_each(|x| *x = ln_floor(*x));
            out
        };
        Ok(Self {
            pi_logits: params.pi.iter().map(|&p| ln_floor(p)).collect(),
            trans_logits: log(&params.trans),
            emit_logits: params.emission.categorical.iter().map(log).collect(),
        })
    }

    pub fn n_states(&self) -> usize {
        self.pi_logits.len()
    }

    pub fn cardinalities(&self) -> Vec<usize> {
        self.emit_logits.iter().map(Matrix::cols).collect()
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.n_states(), &self.cardinalities())
    }

    pub fn probs(&self) -> DiffProbs {
        let mut pi = vec![0.0; self.n_states()];
        softmax_row(&self.pi_logits, &mut pi);
        DiffProbs {
            pi,
            trans: softmax_rows(&self.trans_logits),
            emit: self.emit_logits.iter().map(softmax_rows).collect(),
        }
    }

    pub fn to_params(&self) -> Result<HmmParams> {
        let p = self.probs();
        HmmParams::new(p.pi, p.trans, EmissionModel { categorical: p.emit, gaussian: None })
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut v = vec![&self.pi_logits[..], self.trans_logits.as_slice()];
        v.extend(self.emit_logits.iter().map(Matrix::as_slice));
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = vec![&mut self.pi_logits[..], self.trans_logits.as_mut_slice()];
        v.extend(self.emit_logits.iter_mut().map(Matrix::as_mut_slice));
        v
    }

    pub fn check_observations(&self, obs: &Observations) -> Result<()> {
        if obs.real_dim() != 0 || obs.cardinalities() != self.cardinalities().as_slice() {
            return Err(shape(format!(
                "differentiable HMM expects categorical features {:?}, got {:?} (+{} real)",
                self.cardinalities(),
                obs.cardinalities(),
                obs.real_dim()
            )));
        }
        Ok(())
    }
}

/// Values of one forward window kept for the backward pass.
#[derive(Debug, Clone)]
pub struct DiffCache {
    pub rows: Range<usize>,
    k: usize,
    /// Carry the window started from (`None` = sequence start).
    p_in: Option<Vec<f64>>,
    /// `L x K` emission likelihoods, pre-normalization products, filtered rows.
    e: Vec<f64>,
    prior: Vec<f64>,
    z: Vec<f64>,
    filtered: Vec<f64>,
    /// `L x K` output-layer features.
    pub features: Vec<f64>,
    mode: FeatureMode,
}

impl DiffCache {
    pub fn filtered(&self, s: usize) -> &[f64] {
        &self.filtered[s * self.k..(s + 1) * self.k]
    }

    pub fn feature(&self, s: usize) -> &[f64] {
        &self.features[s * self.k..(s + 1) * self.k]
    }

    pub fn carry_out(&self, carry_in: &DiffCarry) -> DiffCarry {
        match self.rows.len() {
            0 => carry_in.clone(),
            l => DiffCarry::Dist(self.filtered(l - 1).to_vec()),
        }
    }
}

fn emission_row(probs: &DiffProbs, x: &[usize], out: &mut [f64]) {
    out.iter_mut().for_each(|o| *o = 1.0);
    for (m, &xf) in probs.emit.iter().zip(x) {
        for (s, o) in out.iter_mut().enumerate() {
            *o *= m[(s, xf)];
        }
    }
}

/// Filtering over rows `rows` of `obs` from `carry`, with per-step
/// renormalization.
pub fn diff_hmm_forward(
    hmm: &DiffHmm,
    probs: &DiffProbs,
    obs: &Observations,
    rows: Range<usize>,
    carry: &DiffCarry,
    mode: FeatureMode,
) -> Result<DiffCache> {
    hmm.check_observations(obs)?;
    let k = hmm.n_states();
    if rows.end > obs.len() {
        return Err(shape("observation window out of range"));
    }
    let p_in = match carry {
        DiffCarry::Start => None,
        DiffCarry::Dist(p) if p.len() == k => Some(p.clone()),
        DiffCarry::Dist(_) => return Err(shape(format!("carry must have length {k}"))),
    };
    let l = rows.len();
    let mut c = DiffCache {
        rows: rows.clone(),
        k,
        p_in,
        e: vec![0.0; l * k],
        prior: vec![0.0; l * k],
        z: vec![0.0; l],
        filtered: vec![0.0; l * k],
        features: vec![0.0; l * k],
        mode,
    };
    for (s, t) in rows.enumerate() {
        let cur = s * k..(s + 1) * k;
        emission_row(probs, obs.cat(t), &mut c.e[cur.clone()]);
        let prev = if s == 0 { c.p_in.clone() } else { Some(c.filtered[(s - 1) * k..s * k].to_vec()) };
        match prev {
            None => c.prior[cur.clone()].copy_from_slice(&probs.pi),
            Some(p) => {
                let q = &mut c.prior[cur.clone()];
                for i in 0..k {
                    let row = probs.trans.row(i);
                    for j in 0..k {
                        q[j] += p[i] * row[j];
                    }
                }
            }
        }
        let mut z = 0.0;
        for j in cur.clone() {
            c.filtered[j] = c.prior[j] * c.e[j];
            z += c.filtered[j];
        }
        if !(z >= MIN_NORMALIZER && z.is_finite()) {
            return Err(Error::DegenerateLikelihood { step: t });
        }
        c.z[s] = z;
        c.filtered[cur.clone()].iter_mut().for_each(|x| *x /= z);
        match mode {
            FeatureMode::Filtered => {
                let (f, p) = (&mut c.features[cur.clone()], &c.filtered[cur.clone()]);
                f.copy_from_slice(p);
            }
            FeatureMode::Advance => {
                for i in 0..k {
                    let pi = c.filtered[s * k + i];
                    let row = probs.trans.row(i);
                    for j in 0..k {
                        c.features[s * k + j] += pi * row[j];
                    }
                }
            }
        }
    }
    Ok(c)
}

/// Adds the gradient of a loss with `d loss / d features = dfeat`
/// (`L x K`) to the logits in `grads`. The incoming carry is treated as a
/// constant, like the recurrent state at a truncation boundary.
pub fn diff_hmm_backward(
    probs: &DiffProbs,
    obs: &Observations,
    cache: &DiffCache,
    dfeat: &[f64],
    grads: &mut DiffHmm,
) -> Result<()> {
    let k = cache.k;
    let l = cache.rows.len();
    if dfeat.len() != l * k {
        return Err(shape(format!("feature gradient has {} entries, expected {}", dfeat.len(), l * k)));
    }
    let mut d_pi = vec![0.0; k];
    let mut d_trans = Matrix::zeros(k, k);
    let mut d_emit: Vec<Matrix> = probs.emit.iter().map(|m| Matrix::zeros(m.rows(), m.cols())).collect();
    let mut dp_next = vec![0.0; k];
    let mut dp = vec![0.0; k];
    let mut du = vec![0.0; k];
    let mut others = vec![0.0; k];
    for s in (0..l).rev() {
        let t = cache.rows.start + s;
        let p = cache.filtered(s);
        let df = &dfeat[s * k..(s + 1) * k];
        dp.copy_from_slice(&dp_next);
        match cache.mode {
            FeatureMode::Filtered => dp.iter_mut().zip(df).for_each(|(a, b)| *a += b),
            FeatureMode::Advance => {
                for i in 0..k {
                    let row = probs.trans.row(i);
                    let mut acc = 0.0;
                    for j in 0..k {
                        d_trans[(i, j)] += p[i] * df[j];
                        acc += row[j] * df[j];
                    }
                    dp[i] += acc;
                }
            }
        }
        let dot: f64 = dp.iter().zip(p).map(|(a, b)| a * b).sum();
        let z = cache.z[s];
        for j in 0..k {
            du[j] = (dp[j] - dot) / z;
        }
        let e = &cache.e[s * k..(s + 1) * k];
        let q = &cache.prior[s * k..(s + 1) * k];
        // prior side
        let p_prev = if s == 0 { cache.p_in.as_deref() } else { Some(cache.filtered(s - 1)) };
        match p_prev {
            None => {
                for j in 0..k {
                    d_pi[j] += du[j] * e[j];
                }
                dp_next.iter_mut().for_each(|x| *x = 0.0);
            }
            Some(pp) => {
                for i in 0..k {
                    let row = probs.trans.row(i);
                    let mut acc = 0.0;
                    for j in 0..k {
                        let dq = du[j] * e[j];
                        d_trans[(i, j)] += pp[i] * dq;
                        acc += row[j] * dq;
                    }
                    dp_next[i] = if s == 0 { 0.0 } else { acc };
                }
            }
        }
        // emission side: d e_j = du_j q_j, spread over the factors of the product
        let x = obs.cat(t);
        for (f, &xf) in x.iter().enumerate() {
            others.iter_mut().for_each(|o| *o = 1.0);
            for (g, &xg) in x.iter().enumerate() {
                if g != f {
                    for j in 0..k {
                        others[j] *= probs.emit[g][(j, xg)];
                    }
                }
            }
            for j in 0..k {
                d_emit[f][(j, xf)] += du[j] * q[j] * others[j];
            }
        }
    }
    softmax_backward(&probs.pi, &d_pi, &mut grads.pi_logits);
    for i in 0..k {
        softmax_backward(probs.trans.row(i), d_trans.row(i), grads.trans_logits.row_mut(i));
    }
    for (f, dm) in d_emit.iter().enumerate() {
        for i in 0..k {
            softmax_backward(probs.emit[f].row(i), dm.row(i), grads.emit_logits[f].row_mut(i));
        }
    }
    Ok(())
}
