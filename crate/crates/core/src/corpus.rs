//! Corpus ingestion: symbol tables, discretization, contiguous splits and
//! truncated-BPTT batching.
//!
//! Text is handled as a stream of unicode scalar values. Signal data is a
//! table of real-valued feature columns with an optional binary `target`
//! column; it is either discretized per feature into quantile bins or kept
//! continuous (standardized with training statistics).

use std::collections::HashMap;
use std::hash::Hash;
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape, Error, Result};

/// Bijection between observed symbols and ids `0..V-1`; the last id is the
/// reserved unknown symbol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolTable<S = char>
where
    S: Eq + Hash,
{
    symbols: Vec<S>,
    #[serde(skip)]
    index: HashMap<S, usize>,
}

impl<S: Eq + Hash + Clone> SymbolTable<S> {
    /// Builds the table from the training stream in first-appearance order.
    pub fn build<I: IntoIterator<Item = S>>(stream: I) -> Result<Self> {
        let mut symbols = Vec::new();
        let mut index = HashMap::new();
        for s in stream {
            if !index.contains_key(&s) {
                index.insert(s.clone(), symbols.len());
                symbols.push(s);
            }
        }
        if symbols.is_empty() {
            return Err(Error::EmptyInput);
        }
        Ok(Self { symbols, index })
    }

    /// Alphabet size including the unknown id.
    pub fn len(&self) -> usize {
        self.symbols.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn unk_id(&self) -> usize {
        self.symbols.len()
    }

    pub fn id(&self, s: &S) -> usize {
        self.index.get(s).copied().unwrap_or(self.symbols.len())
    }

    pub fn lookup(&self, s: &S) -> Option<usize> {
        self.index.get(s).copied()
    }

    /// `None` for the unknown id and anything out of range.
    pub fn symbol(&self, id: usize) -> Option<&S> {
        self.symbols.get(id)
    }

    pub fn symbols(&self) -> &[S] {
        &self.symbols
    }

    pub fn encode<'a, I>(&self, stream: I) -> Vec<usize>
    where
        I: IntoIterator<Item = &'a S>,
        S: 'a,
    {
        stream.into_iter().map(|s| self.id(s)).collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Vec<Option<S>> {
        ids.iter().map(|&i| self.symbol(i).cloned()).collect()
    }

    /// Rebuilds the lookup index after deserialization.
    pub fn reindex(&mut self) {
        self.index = self.symbols.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
    }
}

impl SymbolTable<char> {
    pub fn from_text(text: &str) -> Result<Self> {
        Self::build(text.chars())
    }

    pub fn encode_text(&self, text: &str) -> Vec<usize> {
        text.chars().map(|c| self.id(&c)).collect()
    }

    /// Renders ids back to text, writing U+FFFD for the unknown id.
    pub fn decode_text(&self, ids: &[usize]) -> String {
        ids.iter().map(|&i| self.symbol(i).copied().unwrap_or('\u{FFFD}')).collect()
    }
}

/// Fraction of ids equal to `unk_id`.
pub fn unk_rate(ids: &[usize], unk_id: usize) -> f64 {
    if ids.is_empty() {
        return 0.0;
    }
    ids.iter().filter(|&&i| i == unk_id).count() as f64 / ids.len() as f64
}

/// Per-feature quantile bin edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretizationSpec {
    pub edges: Vec<Vec<f64>>,
}

impl DiscretizationSpec {
    /// Fits equal-frequency bins: edges are the empirical quantiles at
    /// `k / n_bins` (linear interpolation between order statistics). Tied
    /// quantiles collapse, so constant features end up with a single bin.
    pub fn fit(series: &[Vec<f64>], n_bins: usize) -> Result<Self> {
        if n_bins < 2 {
            return Err(invalid(format!("n_bins must be >= 2, got {n_bins}")));
        }
        if series.is_empty() || series.iter().any(Vec::is_empty) {
            return Err(Error::EmptyInput);
        }
        let mut edges = Vec::with_capacity(series.len());
        for (f, column) in series.iter().enumerate() {
            if column.iter().any(|x| !x.is_finite()) {
                return Err(invalid(format!("feature {f} has non-finite values")));
            }
            let mut sorted = column.clone();
            sorted.sort_by(f64::total_cmp);
            let mut e: Vec<f64> = Vec::new();
            for k in 1..n_bins {
                let q = quantile_sorted(&sorted, k as f64 / n_bins as f64);
                if e.last().is_none_or(|&last| q > last) && q > sorted[0] {
                    e.push(q);
                }
            }
            edges.push(e);
        }
        Ok(Self { edges })
    }

    pub fn n_features(&self) -> usize {
        self.edges.len()
    }

    pub fn n_bins(&self, feature: usize) -> usize {
        self.edges[feature].len() + 1
    }

    pub fn cardinalities(&self) -> Vec<usize> {
        (0..self.n_features()).map(|f| self.n_bins(f)).collect()
    }

    /// Bin index: the number of edges `<= x`.
    pub fn bin(&self, feature: usize, x: f64) -> usize {
        self.edges[feature].partition_point(|&e| e <= x)
    }
}

/// Linear-interpolation quantile of an ascending slice.
pub(crate) fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Per-feature mean and standard deviation from the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(series: &[Vec<f64>]) -> Result<Self> {
        if series.is_empty() || series.iter().any(Vec::is_empty) {
            return Err(Error::EmptyInput);
        }
        let mut mean = Vec::new();
        let mut std = Vec::new();
        for column in series {
            let n = column.len() as f64;
            let m = column.iter().sum::<f64>() / n;
            let v = column.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
            mean.push(m);
            std.push(if v > 0.0 { v.sqrt() } else { 1.0 });
        }
        Ok(Self { mean, std })
    }

    pub fn apply(&self, feature: usize, x: f64) -> f64 {
        (x - self.mean[feature]) / self.std[feature]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Train,
    Validation,
    Test,
}

/// Segment lengths for a contiguous three-way split. Validation and test get
/// `floor(n * fraction)`; the remainder goes to training.
pub fn split_lengths(n: usize, fractions: (f64, f64, f64)) -> Result<(usize, usize, usize)> {
    let (a, b, c) = fractions;
    if !(a > 0.0 && b > 0.0 && c > 0.0) {
        return Err(invalid("split fractions must be positive"));
    }
    if (a + b + c - 1.0).abs() > 1e-9 {
        return Err(invalid(format!("split fractions sum to {}, expected 1", a + b + c)));
    }
    let val = (n as f64 * b + 1e-9).floor() as usize;
    let test = (n as f64 * c + 1e-9).floor() as usize;
    let train = n.saturating_sub(val + test);
    if train == 0 || val == 0 || test == 0 {
        return Err(invalid(format!(
            "split of {n} items with fractions ({a}, {b}, {c}) leaves an empty segment"
        )));
    }
    Ok((train, val, test))
}

/// Contiguous, order-preserving ranges covering `0..n`.
pub fn split_ranges(n: usize, fractions: (f64, f64, f64)) -> Result<[Range<usize>; 3]> {
    let (train, val, _) = split_lengths(n, fractions)?;
    Ok([0..train, train..train + val, train + val..n])
}

pub fn split<T: Clone>(stream: &[T], fractions: (f64, f64, f64)) -> Result<[Vec<T>; 3]> {
    let [a, b, c] = split_ranges(stream.len(), fractions)?;
    Ok([stream[a].to_vec(), stream[b].to_vec(), stream[c].to_vec()])
}

/// Observations for one stream: categorical features (ids per feature) and
/// real-valued features, one row per time step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observations {
    len: usize,
    cardinalities: Vec<usize>,
    categorical: Vec<usize>,
    real_dim: usize,
    real: Vec<f64>,
}

impl Observations {
    /// Single categorical feature, e.g. encoded text.
    pub fn categorical(ids: Vec<usize>, cardinality: usize) -> Result<Self> {
        let len = ids.len();
        Self::new(len, vec![cardinality], ids, 0, Vec::new())
    }

    pub fn new(
        len: usize,
        cardinalities: Vec<usize>,
        categorical: Vec<usize>,
        real_dim: usize,
        real: Vec<f64>,
    ) -> Result<Self> {
        let f = cardinalities.len();
        if categorical.len() != len * f {
            return Err(shape(format!("categorical block has {} ids, expected {}", categorical.len(), len * f)));
        }
        if real.len() != len * real_dim {
            return Err(shape(format!("real block has {} values, expected {}", real.len(), len * real_dim)));
        }
        for (i, &id) in categorical.iter().enumerate() {
            let card = cardinalities[i % f.max(1)];
            if id >= card {
                return Err(shape(format!("id {id} at position {} out of range {card}", i / f.max(1))));
            }
        }
        if real.iter().any(|x| !x.is_finite()) {
            return Err(invalid("non-finite real observation"));
        }
        Ok(Self { len, cardinalities, categorical, real_dim, real })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn n_categorical(&self) -> usize {
        self.cardinalities.len()
    }

    pub fn cardinalities(&self) -> &[usize] {
        &self.cardinalities
    }

    pub fn real_dim(&self) -> usize {
        self.real_dim
    }

    #[inline]
    pub fn cat(&self, t: usize) -> &[usize] {
        let f = self.cardinalities.len();
        &self.categorical[t * f..(t + 1) * f]
    }

    #[inline]
    pub fn real_row(&self, t: usize) -> &[f64] {
        &self.real[t * self.real_dim..(t + 1) * self.real_dim]
    }

    /// Ids of one categorical feature over the whole stream.
    pub fn feature_ids(&self, feature: usize) -> Vec<usize> {
        (0..self.len).map(|t| self.cat(t)[feature]).collect()
    }

    /// Appends one categorical feature column.
    pub fn with_categorical(&self, ids: &[usize], cardinality: usize) -> Result<Self> {
        if ids.len() != self.len {
            return Err(shape("appended feature length differs from stream length"));
        }
        let f = self.cardinalities.len();
        let mut categorical = Vec::with_capacity(self.len * (f + 1));
        for (t, &id) in ids.iter().enumerate() {
            categorical.extend_from_slice(self.cat(t));
            categorical.push(id);
        }
        let mut cards = self.cardinalities.clone();
        cards.push(cardinality);
        Self::new(self.len, cards, categorical, self.real_dim, self.real.clone())
    }

    pub fn slice(&self, range: Range<usize>) -> Self {
        let f = self.cardinalities.len();
        let d = self.real_dim;
        Self {
            len: range.len(),
            cardinalities: self.cardinalities.clone(),
            categorical: self.categorical[range.start * f..range.end * f].to_vec(),
            real_dim: d,
            real: self.real[range.start * d..range.end * d].to_vec(),
        }
    }
}

/// One stream of observations with an optional parallel target stream.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub obs: Observations,
    /// Target ids and their class count, when the prediction target differs
    /// from the next observation.
    pub targets: Option<(Vec<usize>, usize)>,
}

impl Sequence {
    pub fn text(ids: Vec<usize>, vocab: usize) -> Result<Self> {
        Ok(Self { obs: Observations::categorical(ids, vocab)?, targets: None })
    }

    pub fn with_targets(obs: Observations, targets: Vec<usize>, n_classes: usize) -> Result<Self> {
        if targets.len() != obs.len() {
            return Err(shape("target length differs from input length"));
        }
        if let Some(&bad) = targets.iter().find(|&&y| y >= n_classes) {
            return Err(shape(format!("target id {bad} out of range {n_classes}")));
        }
        Ok(Self { obs, targets: Some((targets, n_classes)) })
    }

    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceDataset {
    pub split: SplitTag,
    pub sequences: Vec<Sequence>,
}

impl SequenceDataset {
    pub fn new(split: SplitTag, sequences: Vec<Sequence>) -> Self {
        Self { split, sequences }
    }

    pub fn total_len(&self) -> usize {
        self.sequences.iter().map(Sequence::len).sum()
    }
}

/// One step of a batch plan: a window of pair indices per lane. Pair `t`
/// feeds input `t` and predicts target `t + 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub lanes: Vec<Range<usize>>,
}

/// Truncated-BPTT batching for one stream with `n_pairs` prediction pairs.
///
/// The pairs are cut into `batch_size` contiguous lanes of equal length;
/// each lane is walked in non-overlapping windows of `seq_len`, so hidden
/// state can be carried from one window to the next within a lane. Any
/// remainder shorter than a full window is dropped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchPlan {
    pub seq_len: usize,
    pub batch_size: usize,
    lane_len: usize,
    n_windows: usize,
}

impl BatchPlan {
    pub fn new(n_pairs: usize, seq_len: usize, batch_size: usize) -> Result<Self> {
        if seq_len == 0 || batch_size == 0 {
            return Err(invalid("seq_len and batch_size must be >= 1"));
        }
        let lane_len = n_pairs / batch_size;
        let n_windows = lane_len / seq_len;
        if n_windows == 0 {
            return Err(Error::InsufficientData(format!(
                "{} symbols cannot fill {batch_size} lane(s) of one {seq_len}-step window",
                n_pairs + 1
            )));
        }
        Ok(Self { seq_len, batch_size, lane_len, n_windows })
    }

    pub fn n_batches(&self) -> usize {
        self.n_windows
    }

    /// Number of targets emitted over one pass.
    pub fn n_targets(&self) -> usize {
        self.n_windows * self.seq_len * self.batch_size
    }

    pub fn batches(&self) -> impl Iterator<Item = Batch> + '_ {
        (0..self.n_windows).map(move |w| Batch {
            lanes: (0..self.batch_size)
                .map(|b| {
                    let start = b * self.lane_len + w * self.seq_len;
                    start..start + self.seq_len
                })
                .collect(),
        })
    }
}

/// Batches a plain id stream into (input window, target window) pairs per
/// lane, mainly useful for inspection and tests.
pub fn batch(ids: &[usize], seq_len: usize, batch_size: usize) -> Result<Vec<Vec<(Vec<usize>, Vec<usize>)>>> {
    let plan = BatchPlan::new(ids.len().saturating_sub(1), seq_len, batch_size)?;
    Ok(plan
        .batches()
        .map(|b| {
            b.lanes
                .iter()
                .map(|r| (ids[r.clone()].to_vec(), ids[r.start + 1..r.end + 1].to_vec()))
                .collect()
        })
        .collect())
}

/// Raw signal table: one column per feature plus an optional binary target.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalTable {
    pub feature_names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
    pub target: Option<Vec<usize>>,
}

impl SignalTable {
    pub fn len(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn slice(&self, range: Range<usize>) -> Self {
        Self {
            feature_names: self.feature_names.clone(),
            columns: self.columns.iter().map(|c| c[range.clone()].to_vec()).collect(),
            target: self.target.as_ref().map(|t| t[range].to_vec()),
        }
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_reader(file)
    }

    /// Parses CSV with a header row; a final column named `target` must hold
    /// 0/1 values and becomes the target stream.
    pub fn from_reader<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers: Vec<String> = rdr
            .headers()
            .map_err(|e| invalid(format!("csv header: {e}")))?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        if headers.is_empty() {
            return Err(Error::EmptyInput);
        }
        let has_target = headers.last().is_some_and(|h| h == "target");
        let n_features = headers.len() - usize::from(has_target);
        let mut columns = vec![Vec::new(); n_features];
        let mut target = has_target.then(Vec::new);
        for (row, record) in rdr.records().enumerate() {
            let record = record.map_err(|e| invalid(format!("csv row {}: {e}", row + 2)))?;
            if record.len() != headers.len() {
                return Err(invalid(format!("csv row {} has {} fields, expected {}", row + 2, record.len(), headers.len())));
            }
            for (f, column) in columns.iter_mut().enumerate() {
                let v: f64 = record[f]
                    .trim()
                    .parse()
                    .map_err(|_| invalid(format!("csv row {} column {}: not a number", row + 2, headers[f])))?;
                column.push(v);
            }
            if let Some(t) = target.as_mut() {
                match record[n_features].trim() {
                    "0" => t.push(0),
                    "1" => t.push(1),
                    other => return Err(invalid(format!("csv row {}: target must be 0 or 1, got {other:?}", row + 2))),
                }
            }
        }
        if columns.first().is_none_or(Vec::is_empty) {
            return Err(Error::EmptyInput);
        }
        Ok(Self { feature_names: headers[..n_features].to_vec(), columns, target })
    }

    /// Discretized observations: one categorical feature per column.
    pub fn discretize(&self, spec: &DiscretizationSpec) -> Result<Observations> {
        if spec.n_features() != self.columns.len() {
            return Err(shape("discretizer feature count differs from table"));
        }
        let n = self.len();
        let mut ids = Vec::with_capacity(n * self.columns.len());
        for t in 0..n {
            for (f, c) in self.columns.iter().enumerate() {
                ids.push(spec.bin(f, c[t]));
            }
        }
        Observations::new(n, spec.cardinalities(), ids, 0, Vec::new())
    }

    /// Standardized real-valued observations.
    pub fn standardize(&self, z: &Standardizer) -> Result<Observations> {
        let n = self.len();
        let d = self.columns.len();
        let mut real = Vec::with_capacity(n * d);
        for t in 0..n {
            for (f, c) in self.columns.iter().enumerate() {
                real.push(z.apply(f, c[t]));
            }
        }
        Observations::new(n, Vec::new(), Vec::new(), d, real)
    }
}
