//! Tools for looking inside trained models: hidden-state collection,
//! k-means clustering, HMM state labels, surrogate regression trees and
//! colored text renderings.

mod render;
mod tree;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use render::{render_colored_text, Palette, VizDocument, PALETTE_SIZE};
pub use tree::{fit_surrogate_tree, trailing_symbol, SurrogateTree, TreeConfig, TreeNode};

use crate::error::{Error, Result};
use crate::hybrid::{JointHybrid, SeqHybrid};
use crate::matrix::{argmax, Matrix};
use crate::nncore::{hidden_states, LstmParams};
use crate::task::PredictionStream;

/// Models with an LSTM whose hidden states can be inspected.
pub trait HasLstm {
    fn lstm(&self) -> &LstmParams;
}

impl HasLstm for LstmParams {
    fn lstm(&self) -> &LstmParams {
        self
    }
}

impl HasLstm for SeqHybrid {
    fn lstm(&self) -> &LstmParams {
        &self.lstm
    }
}

impl HasLstm for JointHybrid {
    fn lstm(&self) -> &LstmParams {
        &self.lstm
    }
}

/// Hidden states collected over a stream; row `t` is the state after
/// consuming symbol `alignment[t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateMatrix {
    pub rows: Matrix,
    pub alignment: Vec<usize>,
}

pub fn collect_states<M: HasLstm>(model: &M, stream: &PredictionStream) -> Result<StateMatrix> {
    let rows = hidden_states(model.lstm(), &stream.inputs)?;
    Ok(StateMatrix { alignment: (0..rows.rows()).collect(), rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clustering {
    pub k: usize,
    pub centroids: Matrix,
    pub assignments: Vec<usize>,
    pub inertia: f64,
    /// Inertia after each assignment step.
    pub inertia_history: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(x: &[f64], centroids: &Matrix) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for c in 0..centroids.rows() {
        let d = sq_dist(x, centroids.row(c));
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Within-cluster sum of squares of `assignments` around `centroids`.
pub fn inertia(data: &Matrix, centroids: &Matrix, assignments: &[usize]) -> f64 {
    assignments.iter().enumerate().map(|(i, &c)| sq_dist(data.row(i), centroids.row(c))).sum()
}

/// k-means++ seeding followed by Lloyd iterations until the assignment stops
/// changing or `max_iters` is reached.
pub fn kmeans(data: &Matrix, k: usize, seed: u64, max_iters: usize) -> Result<Clustering> {
    let n = data.rows();
    if k == 0 {
        return Err(crate::error::invalid("k must be >= 1"));
    }
    if n < k {
        return Err(Error::InsufficientData(format!("{n} points cannot form {k} clusters")));
    }
    if data.as_slice().iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("k-means input contains non-finite values".into()));
    }
    let dim = data.cols();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = Matrix::zeros(k, dim);
    centroids.row_mut(0).copy_from_slice(data.row(rng.random_range(0..n)));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(data.row(i), centroids.row(0))).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            crate::hmm::draw(&d2, &mut rng)
        } else {
            rng.random_range(0..n)
        };
        centroids.row_mut(c).copy_from_slice(data.row(pick));
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(data.row(i), centroids.row(c)));
        }
    }

    let mut assignments = vec![usize::MAX; n];
    let mut history = Vec::new();
    for _ in 0..max_iters.max(1) {
        let mut changed = false;
        let mut dists = vec![0.0; n];
        for i in 0..n {
            let (c, d) = nearest(data.row(i), &centroids);
            if c != assignments[i] {
                assignments[i] = c;
                changed = true;
            }
            dists[i] = d;
        }
        history.push(dists.iter().sum());
        if !changed {
            break;
        }
        // update step
        let mut sums = Matrix::zeros(k, dim);
        let mut counts = vec![0usize; k];
        for (i, &c) in assignments.iter().enumerate() {
            counts[c] += 1;
            for (s, x) in sums.row_mut(c).iter_mut().zip(data.row(i)) {
                *s += x;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                let inv = 1.0 / counts[c] as f64;
                for (m, s) in centroids.row_mut(c).iter_mut().zip(sums.row(c)) {
                    *m = s * inv;
                }
            } else {
                // re-seed an empty cluster at the point farthest from its centroid
                let far = (0..n)
                    .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)))
                    .unwrap_or(0);
                centroids.row_mut(c).copy_from_slice(data.row(far));
                dists[far] = 0.0;
            }
        }
    }
    let inertia = inertia(data, &centroids, &assignments);
    Ok(Clustering { k, centroids, assignments, inertia, inertia_history: history })
}

/// Most probable state per row, ties to the lowest index.
pub fn hmm_state_labels(posteriors: &Matrix) -> Vec<usize> {
    (0..posteriors.rows()).map(|t| argmax(posteriors.row(t))).collect()
}
