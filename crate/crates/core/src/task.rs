//! Next-step prediction view of a sequence, shared by every model.
//!
//! Step `t` consumes input row `t` and is scored on `targets[t]`, which is
//! the next observation (text) or the next target id (signals). The HMM
//! view of the same stream appends the target as an extra categorical
//! feature, so HMM filtering conditions on exactly what the recurrent model
//! has seen.

use std::ops::Range;

use crate::corpus::{Observations, Sequence};
use crate::error::{invalid, Error, Result};
use crate::hmm::{predictive_feature_loglik_sum, HmmParams};

/// Sparse input rows: one-hot / multi-hot categorical slots followed by
/// dense real values.
#[derive(Debug, Clone, PartialEq)]
pub struct InputRows {
    dim: usize,
    row_ptr: Vec<usize>,
    idx: Vec<u32>,
    val: Vec<f64>,
}

impl InputRows {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn row(&self, t: usize) -> (&[u32], &[f64]) {
        let r = self.row_ptr[t]..self.row_ptr[t + 1];
        (&self.idx[r.clone()], &self.val[r])
    }

    /// One-hot rows for a plain id stream.
    pub fn one_hot(ids: &[usize], dim: usize) -> Self {
        Self {
            dim,
            row_ptr: (0..=ids.len()).collect(),
            idx: ids.iter().map(|&i| i as u32).collect(),
            val: vec![1.0; ids.len()],
        }
    }

    /// Layout: every categorical feature as a one-hot block, then the real
    /// values, then an optional one-hot of the current target.
    pub fn from_observations(obs: &Observations, targets: Option<(&[usize], usize)>) -> Self {
        let cards = obs.cardinalities();
        let mut offsets = Vec::with_capacity(cards.len());
        let mut off = 0;
        for &c in cards {
            offsets.push(off);
            off += c;
        }
        let real_off = off;
        let target_off = real_off + obs.real_dim();
        let dim = target_off + targets.map_or(0, |(_, n)| n);
        let mut rows = Self { dim, row_ptr: vec![0], idx: Vec::new(), val: Vec::new() };
        for t in 0..obs.len() {
            for (f, &x) in obs.cat(t).iter().enumerate() {
                rows.idx.push((offsets[f] + x) as u32);
                rows.val.push(1.0);
            }
            for (d, &y) in obs.real_row(t).iter().enumerate() {
                rows.idx.push((real_off + d) as u32);
                rows.val.push(y);
            }
            if let Some((ys, _)) = targets {
                rows.idx.push((target_off + ys[t]) as u32);
                rows.val.push(1.0);
            }
            rows.row_ptr.push(rows.idx.len());
        }
        rows
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionStream {
    pub inputs: InputRows,
    /// `targets[t]` is predicted after consuming input `t`; one shorter than
    /// the inputs.
    pub targets: Vec<usize>,
    pub n_classes: usize,
    /// HMM view of the full stream (target appended for signal data).
    pub hmm_obs: Observations,
    /// Categorical feature of `hmm_obs` that the targets come from.
    pub target_feature: usize,
}

impl PredictionStream {
    pub fn from_sequence(seq: &Sequence) -> Result<Self> {
        if seq.len() < 2 {
            return Err(Error::InsufficientData("a stream needs at least two steps".into()));
        }
        match &seq.targets {
            None => {
                if seq.obs.n_categorical() != 1 || seq.obs.real_dim() != 0 {
                    return Err(invalid("streams without targets must hold exactly one categorical feature"));
                }
                let ids = seq.obs.feature_ids(0);
                let v = seq.obs.cardinalities()[0];
                Ok(Self {
                    inputs: InputRows::one_hot(&ids, v),
                    targets: ids[1..].to_vec(),
                    n_classes: v,
                    hmm_obs: seq.obs.clone(),
                    target_feature: 0,
                })
            }
            Some((ys, n)) => {
                let hmm_obs = seq.obs.with_categorical(ys, *n)?;
                Ok(Self {
                    inputs: InputRows::from_observations(&seq.obs, Some((ys, *n))),
                    targets: ys[1..].to_vec(),
                    n_classes: *n,
                    target_feature: hmm_obs.n_categorical() - 1,
                    hmm_obs,
                })
            }
        }
    }

    pub fn text(ids: &[usize], vocab: usize) -> Result<Self> {
        Self::from_sequence(&Sequence::text(ids.to_vec(), vocab)?)
    }

    pub fn n_pairs(&self) -> usize {
        self.targets.len()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.dim()
    }

    /// Windows of at most `len` pairs covering every pair in order.
    pub fn chunks(&self, len: usize) -> impl Iterator<Item = Range<usize>> + '_ {
        let n = self.n_pairs();
        (0..n.div_ceil(len)).map(move |i| i * len..((i + 1) * len).min(n))
    }
}

/// Mean HMM predictive log-likelihood of the targets over every stream,
/// weighted by prediction pairs, with filtering restarted per stream.
pub fn evaluate_hmm(params: &HmmParams, streams: &[PredictionStream]) -> Result<f64> {
    let mut total = 0.0;
    let mut n = 0usize;
    for s in streams {
        let (sum, count) = predictive_feature_loglik_sum(params, &s.hmm_obs, s.target_feature)?;
        total += sum;
        n += count;
    }
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    Ok(total / n as f64)
}
