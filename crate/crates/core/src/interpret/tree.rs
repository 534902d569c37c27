//! CART regression trees that predict one hidden dimension from the
//! symbols just consumed.
//!
//! Offset `j` (1-based) refers to the `j`-th most recent symbol: for the
//! state after consuming symbol `t`, offset 1 is symbol `t`, offset 2 is
//! symbol `t - 1`, and so on.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::StateMatrix;
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TreeConfig {
    pub window: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Fraction of rows, taken from the end, held out for R².
    pub heldout: f64,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self { window: 5, max_depth: 4, min_leaf: 20, heldout: 0.2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum TreeNode {
    Leaf {
        value: f64,
        n: usize,
    },
    Split {
        offset: usize,
        symbol: usize,
        label: String,
        gain: f64,
        n: usize,
        value: f64,
        yes: Box<TreeNode>,
        no: Box<TreeNode>,
    },
}

impl TreeNode {
    pub fn predict(&self, symbols: &[usize], t: usize) -> f64 {
        match self {
            TreeNode::Leaf { value, .. } => *value,
            TreeNode::Split { offset, symbol, yes, no, .. } => {
                if trailing_symbol(symbols, t, *offset) == Some(*symbol) {
                    yes.predict(symbols, t)
                } else {
                    no.predict(symbols, t)
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { yes, no, .. } => 1 + yes.depth().max(no.depth()),
        }
    }

    pub fn leaves(&self) -> Vec<&TreeNode> {
        match self {
            TreeNode::Leaf { .. } => vec![self],
            TreeNode::Split { yes, no, .. } => {
                let mut v = yes.leaves();
                v.extend(no.leaves());
                v
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateTree {
    pub dim: usize,
    pub config: TreeConfig,
    pub root: TreeNode,
    pub train_r2: f64,
    pub heldout_r2: f64,
}

/// Symbol at `offset` behind row `t`, if it exists.
pub fn trailing_symbol(symbols: &[usize], t: usize, offset: usize) -> Option<usize> {
    (t + 1).checked_sub(offset).map(|i| symbols[i])
}

struct Fitter<'a> {
    symbols: &'a [usize],
    y: &'a [f64],
    config: &'a TreeConfig,
    n_symbols: usize,
    label: &'a dyn Fn(usize) -> String,
}

fn sse(sum: f64, sumsq: f64, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        (sumsq - sum * sum / n as f64).max(0.0)
    }
}

impl Fitter<'_> {
    fn grow(&self, rows: &[usize], depth: usize) -> TreeNode {
        let n = rows.len();
        let sum: f64 = rows.iter().map(|&i| self.y[i]).sum();
        let sumsq: f64 = rows.iter().map(|&i| self.y[i] * self.y[i]).sum();
        let mean = sum / n as f64;
        let leaf = TreeNode::Leaf { value: mean, n };
        if depth >= self.config.max_depth || n < 2 * self.config.min_leaf {
            return leaf;
        }
        let parent = sse(sum, sumsq, n);
        // (gain, offset, symbol)
        let mut best: Option<(f64, usize, usize)> = None;
        let mut acc = vec![(0usize, 0.0f64, 0.0f64); self.n_symbols];
        for offset in 1..=self.config.window {
            acc.iter_mut().for_each(|a| *a = (0, 0.0, 0.0));
            for &i in rows {
                if let Some(s) = trailing_symbol(self.symbols, i, offset) {
                    let a = &mut acc[s];
                    a.0 += 1;
                    a.1 += self.y[i];
                    a.2 += self.y[i] * self.y[i];
                }
            }
            for (s, &(cy, sy, qy)) in acc.iter().enumerate() {
                let cn = n - cy;
                if cy < self.config.min_leaf || cn < self.config.min_leaf {
                    continue;
                }
                let gain = parent - sse(sy, qy, cy) - sse(sum - sy, sumsq - qy, cn);
                if best.is_none_or(|(g, _, _)| gain > g) {
                    best = Some((gain, offset, s));
                }
            }
        }
        let Some((gain, offset, symbol)) = best else { return leaf };
        if !(gain > 1e-12 * parent) {
            return leaf;
        }
        let (yes, no): (Vec<usize>, Vec<usize>) =
            rows.iter().partition(|&&i| trailing_symbol(self.symbols, i, offset) == Some(symbol));
        TreeNode::Split {
            offset,
            symbol,
            label: (self.label)(symbol),
            gain,
            n,
            value: mean,
            yes: Box::new(self.grow(&yes, depth + 1)),
            no: Box::new(self.grow(&no, depth + 1)),
        }
    }
}

fn r2(root: &TreeNode, symbols: &[usize], y: &[f64], rows: std::ops::Range<usize>) -> f64 {
    let n = rows.len();
    if n == 0 {
        return 0.0;
    }
    let mean = rows.clone().map(|i| y[i]).sum::<f64>() / n as f64;
    let sst: f64 = rows.clone().map(|i| (y[i] - mean).powi(2)).sum();
    if sst <= 0.0 {
        return 0.0;
    }
    let sse: f64 = rows.map(|i| (y[i] - root.predict(symbols, i)).powi(2)).sum();
    1.0 - sse / sst
}

/// Fits a regression tree for hidden dimension `dim` on the first rows and
/// reports R² on the trailing held-out rows. `label` names symbol ids in
/// the emitted tree.
pub fn fit_surrogate_tree(
    states: &StateMatrix,
    dim: usize,
    symbols: &[usize],
    config: &TreeConfig,
    label: &dyn Fn(usize) -> String,
) -> Result<SurrogateTree> {
    let h = states.rows.cols();
    if dim >= h {
        return Err(invalid(format!("dimension {dim} out of range for {h} hidden units")));
    }
    if config.window == 0 || config.min_leaf == 0 {
        return Err(invalid("tree window and min_leaf must be >= 1"));
    }
    if !(config.heldout >= 0.0 && config.heldout < 1.0) {
        return Err(invalid("tree heldout fraction must be in [0, 1)"));
    }
    let t = states.rows.rows();
    if symbols.len() != t || states.alignment.len() != t {
        return Err(crate::error::shape("states and symbols must align one to one"));
    }
    if t <= 2 * config.min_leaf {
        return Err(Error::InsufficientData(format!("{t} rows cannot fill two leaves of {}", config.min_leaf)));
    }
    let y: Vec<f64> = (0..t).map(|i| states.rows[(i, dim)]).collect();
    let n_train = t - (t as f64 * config.heldout).floor() as usize;
    let n_symbols = symbols.iter().copied().max().map_or(0, |m| m + 1);
    let fitter = Fitter { symbols, y: &y, config, n_symbols, label };
    let rows: Vec<usize> = (0..n_train).collect();
    let root = fitter.grow(&rows, 0);
    Ok(SurrogateTree {
        dim,
        config: config.clone(),
        train_r2: r2(&root, symbols, &y, 0..n_train),
        heldout_r2: r2(&root, symbols, &y, n_train..t),
        root,
    })
}

impl SurrogateTree {
    /// One node per line: depth, test or leaf, gain, value and size.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# dim {} | train R2 {:.4} | held-out R2 {:.4}", self.dim, self.train_r2, self.heldout_r2);
        write_node(&self.root, 0, "", &mut out);
        out
    }
}

fn write_node(node: &TreeNode, depth: usize, branch: &str, out: &mut String) {
    let pad = "  ".repeat(depth);
    match node {
        TreeNode::Leaf { value, n } => {
            let _ = writeln!(out, "{pad}{depth} {branch}leaf value={value:.6} n={n}");
        }
        TreeNode::Split { offset, label, gain, n, value, yes, no, .. } => {
            let _ = writeln!(out, "{pad}{depth} {branch}x[-{offset}] == {label:?} gain={gain:.6} value={value:.6} n={n}");
            write_node(yes, depth + 1, "yes: ", out);
            write_node(no, depth + 1, "no: ", out);
        }
    }
}
