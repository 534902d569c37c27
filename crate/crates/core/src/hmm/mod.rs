//! Discrete-time hidden Markov model with categorical and/or diagonal
//! Gaussian emissions.
//!
//! Filtering runs in normalized probability space: each step's unnormalized
//! row is divided by its sum and the log of that normalizer is accumulated
//! into the sequence log-likelihood. Gaussian emission densities are shifted
//! by their per-step maximum log value before exponentiation so long
//! real-valued sequences do not underflow.

mod gibbs;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use gibbs::{
    gibbs_train, sample_dirichlet, sample_emissions, sample_transitions, EmissionPrior, EmissionStats,
    GaussianPrior, GaussianStats, GibbsConfig, GibbsOutput,
};

use crate::corpus::Observations;
use crate::error::{invalid, shape, Error, Result};
use crate::matrix::{normalize, Matrix};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagGaussian {
    pub means: Matrix,
    pub variances: Matrix,
}

/// Product emission model: independent categorical features and an
/// optional diagonal Gaussian block, all conditioned on the hidden state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmissionModel {
    pub categorical: Vec<Matrix>,
    pub gaussian: Option<DiagGaussian>,
}

impl EmissionModel {
    pub fn categorical(probs: Matrix) -> Self {
        Self { categorical: vec![probs], gaussian: None }
    }

    pub fn kind(&self) -> &'static str {
        match (self.categorical.is_empty(), self.gaussian.is_some()) {
            (false, false) => "categorical",
            (true, true) => "gaussian",
            (false, true) => "mixed",
            (true, false) => "empty",
        }
    }

    pub fn cardinalities(&self) -> Vec<usize> {
        self.categorical.iter().map(Matrix::cols).collect()
    }

    pub fn real_dim(&self) -> usize {
        self.gaussian.as_ref().map_or(0, |g| g.means.cols())
    }

    /// Writes per-state emission likelihoods of observation `t` into `out`,
    /// scaled by `exp(-shift)`; returns `shift` (zero without Gaussians).
    pub fn likelihoods(&self, obs: &Observations, t: usize, out: &mut [f64]) -> f64 {
        let k = out.len();
        match &self.gaussian {
            None => {
                out.iter_mut().for_each(|x| *x = 1.0);
                for (f, &x) in obs.cat(t).iter().enumerate() {
                    let m = &self.categorical[f];
                    for (s, o) in out.iter_mut().enumerate() {
                        *o *= m[(s, x)];
                    }
                }
                0.0
            }
            Some(g) => {
                let y = obs.real_row(t);
                for (s, o) in out.iter_mut().enumerate() {
                    let mut lp = 0.0;
                    for (d, &v) in y.iter().enumerate() {
                        let var = g.variances[(s, d)];
                        let diff = v - g.means[(s, d)];
                        lp -= 0.5 * (LN_2PI + var.ln() + diff * diff / var);
                    }
                    for (f, &x) in obs.cat(t).iter().enumerate() {
                        lp += self.categorical[f][(s, x)].ln();
                    }
                    *o = lp;
                }
                let shift = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                if !shift.is_finite() {
                    out[..k].iter_mut().for_each(|x| *x = 0.0);
                    return 0.0;
                }
                out.iter_mut().for_each(|x| *x = (*x - shift).exp());
                shift
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HmmParams {
    pub pi: Vec<f64>,
    /// Row-stochastic; entry `(i, j)` is `P(s_{t+1} = j | s_t = i)`.
    pub trans: Matrix,
    pub emission: EmissionModel,
}

impl HmmParams {
    pub fn new(pi: Vec<f64>, trans: Matrix, emission: EmissionModel) -> Result<Self> {
        let p = Self { pi, trans, emission };
        p.validate()?;
        Ok(p)
    }

    pub fn n_states(&self) -> usize {
        self.pi.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.pi.len();
        if k == 0 {
            return Err(invalid("HMM needs at least one state"));
        }
        if self.trans.rows() != k || self.trans.cols() != k {
            return Err(shape(format!("transition matrix must be {k}x{k}")));
        }
        if self.pi.iter().any(|&p| p < 0.0 || !p.is_finite()) || (self.pi.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(invalid("initial distribution must be a probability vector"));
        }
        if !self.trans.is_row_stochastic(1e-9) {
            return Err(invalid("transition matrix must be row-stochastic"));
        }
        for (f, m) in self.emission.categorical.iter().enumerate() {
            if m.rows() != k {
                return Err(shape(format!("emission feature {f} has {} rows, expected {k}", m.rows())));
            }
            if !m.is_row_stochastic(1e-9) {
                return Err(invalid(format!("emission feature {f} must be row-stochastic")));
            }
        }
        if let Some(g) = &self.emission.gaussian {
            if g.means.rows() != k || g.variances.rows() != k || g.means.cols() != g.variances.cols() {
                return Err(shape("gaussian emission blocks must be K x D"));
            }
            if g.variances.as_slice().iter().any(|&v| !(v > 0.0 && v.is_finite())) {
                return Err(invalid("gaussian variances must be positive"));
            }
        }
        if self.emission.kind() == "empty" {
            return Err(invalid("emission model has no features"));
        }
        Ok(())
    }

    pub fn check_observations(&self, obs: &Observations) -> Result<()> {
        if obs.is_empty() {
            return Err(Error::EmptyInput);
        }
        let cards = self.emission.cardinalities();
        if obs.cardinalities() != cards.as_slice() {
            return Err(shape(format!(
                "observation cardinalities {:?} differ from model {:?}",
                obs.cardinalities(),
                cards
            )));
        }
        if obs.real_dim() != self.emission.real_dim() {
            return Err(shape("observation real dimension differs from model"));
        }
        Ok(())
    }

    /// One-step-ahead state distribution `T^T p`.
    pub fn advance(&self, p: &[f64], out: &mut [f64]) {
        let k = self.n_states();
        out.iter_mut().for_each(|x| *x = 0.0);
        for i in 0..k {
            let pi = p[i];
            if pi == 0.0 {
                continue;
            }
            let row = self.trans.row(i);
            for j in 0..k {
                out[j] += pi * row[j];
            }
        }
    }

    /// Draws a state path and observations from the model (single
    /// categorical feature or full product model).
    pub fn sample<R: Rng + ?Sized>(&self, len: usize, rng: &mut R) -> Result<(Vec<usize>, Observations)> {
        let k = self.n_states();
        let mut states = Vec::with_capacity(len);
        let cards = self.emission.cardinalities();
        let d = self.emission.real_dim();
        let mut cat = Vec::with_capacity(len * cards.len());
        let mut real = Vec::with_capacity(len * d);
        let mut s = draw(&self.pi, rng);
        for t in 0..len {
            if t > 0 {
                s = draw(self.trans.row(s), rng);
            }
            states.push(s);
            for m in &self.emission.categorical {
                cat.push(draw(m.row(s), rng));
            }
            if let Some(g) = &self.emission.gaussian {
                for j in 0..d {
                    let z: f64 = rng.sample(rand_distr::StandardNormal);
                    real.push(g.means[(s, j)] + g.variances[(s, j)].sqrt() * z);
                }
            }
        }
        debug_assert!(states.iter().all(|&x| x < k));
        Ok((states, Observations::new(len, cards, cat, d, real)?))
    }
}

/// Draws an index from unnormalized nonnegative weights.
pub(crate) fn draw<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    // u landed on the upper boundary through rounding
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

/// Filtered state distributions `P(s_t | x_1..x_t)` and the total
/// log-likelihood of the sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct StatePosteriorSeq {
    pub probs: Matrix,
    pub loglik: f64,
    /// Log of each step's normalizer, `log P(x_t | x_1..x_{t-1})`.
    pub step_logliks: Vec<f64>,
}

impl StatePosteriorSeq {
    pub fn len(&self) -> usize {
        self.probs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.rows() == 0
    }
}

pub fn forward_filter(params: &HmmParams, obs: &Observations) -> Result<StatePosteriorSeq> {
    params.check_observations(obs)?;
    let k = params.n_states();
    let n = obs.len();
    let mut probs = Matrix::zeros(n, k);
    let mut e = vec![0.0; k];
    let mut pred = vec![0.0; k];
    let mut step_logliks = Vec::with_capacity(n);
    let mut loglik = 0.0;
    for t in 0..n {
        let shift = params.emission.likelihoods(obs, t, &mut e);
        if t == 0 {
            pred.copy_from_slice(&params.pi);
        } else {
            params.advance(probs.row(t - 1), &mut pred);
        }
        let row = probs.row_mut(t);
        for j in 0..k {
            row[j] = pred[j] * e[j];
        }
        let z = normalize(row);
        if !(z > 0.0 && z.is_finite()) {
            return Err(Error::DegenerateLikelihood { step: t });
        }
        let step = z.ln() + shift;
        step_logliks.push(step);
        loglik += step;
    }
    Ok(StatePosteriorSeq { probs, loglik, step_logliks })
}

/// Samples a full state path from `P(s_1..s_T | x, params)` given the
/// filtered distributions of the same observations.
pub fn backward_sample<R: Rng + ?Sized>(post: &StatePosteriorSeq, params: &HmmParams, rng: &mut R) -> Vec<usize> {
    let n = post.len();
    let k = params.n_states();
    let mut path = vec![0; n];
    if n == 0 {
        return path;
    }
    path[n - 1] = draw(post.probs.row(n - 1), rng);
    let mut w = vec![0.0; k];
    for t in (0..n - 1).rev() {
        let next = path[t + 1];
        let row = post.probs.row(t);
        for i in 0..k {
            w[i] = row[i] * params.trans[(i, next)];
        }
        path[t] = draw(&w, rng);
    }
    path
}

/// Exact forward-backward marginals `P(s_t | x_1..x_T)`.
pub fn smoothing_marginals(params: &HmmParams, obs: &Observations) -> Result<Matrix> {
    let post = forward_filter(params, obs)?;
    let k = params.n_states();
    let n = obs.len();
    let mut out = post.probs.clone();
    let mut beta = vec![1.0; k];
    let mut e = vec![0.0; k];
    let mut tmp = vec![0.0; k];
    for t in (0..n).rev() {
        if t + 1 < n {
            params.emission.likelihoods(obs, t + 1, &mut e);
            for j in 0..k {
                tmp[j] = e[j] * beta[j];
            }
            for i in 0..k {
                beta[i] = params.trans.row(i).iter().zip(&tmp).map(|(a, b)| a * b).sum();
            }
            if !(normalize(&mut beta) > 0.0) {
                return Err(Error::DegenerateLikelihood { step: t + 1 });
            }
        }
        let row = out.row_mut(t);
        for i in 0..k {
            row[i] *= beta[i];
        }
        if !(normalize(row) > 0.0) {
            return Err(Error::DegenerateLikelihood { step: t });
        }
    }
    Ok(out)
}

/// Mean per-symbol predictive log-likelihood, `loglik / T`.
pub fn predictive_loglik(params: &HmmParams, obs: &Observations) -> Result<f64> {
    let post = forward_filter(params, obs)?;
    Ok(post.loglik / obs.len() as f64)
}

/// Mean of `log P(x^f_{t+1} | x_1..x_t)` over `t = 0..T-2` for one
/// categorical feature `f`; the same prediction pairs a recurrent model is
/// scored on.
pub fn predictive_feature_loglik(params: &HmmParams, obs: &Observations, feature: usize) -> Result<f64> {
    let (sum, count) = predictive_feature_loglik_sum(params, obs, feature)?;
    Ok(sum / count as f64)
}

pub fn predictive_feature_loglik_sum(params: &HmmParams, obs: &Observations, feature: usize) -> Result<(f64, usize)> {
    let m = params
        .emission
        .categorical
        .get(feature)
        .ok_or_else(|| invalid(format!("no categorical feature {feature}")))?;
    if obs.len() < 2 {
        return Err(Error::InsufficientData("need at least two observations".into()));
    }
    let post = forward_filter(params, obs)?;
    let k = params.n_states();
    let mut pred = vec![0.0; k];
    let mut sum = 0.0;
    for t in 0..obs.len() - 1 {
        params.advance(post.probs.row(t), &mut pred);
        let x = obs.cat(t + 1)[feature];
        let p: f64 = (0..k).map(|s| pred[s] * m[(s, x)]).sum();
        if !(p > 0.0) {
            return Err(Error::DegenerateLikelihood { step: t + 1 });
        }
        sum += p.ln();
    }
    Ok((sum, obs.len() - 1))
}

/// Versioned on-disk form of a trained HMM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HmmCheckpoint {
    pub version: u32,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "V")]
    pub v: Vec<usize>,
    #[serde(rename = "D")]
    pub d: usize,
    pub pi: Vec<f64>,
    #[serde(rename = "T_mat")]
    pub t_mat: Matrix,
    pub emission_kind: String,
    pub emission_params: EmissionModel,
    pub seed: u64,
    pub config: GibbsConfig,
}

impl HmmCheckpoint {
    pub fn new(params: &HmmParams, config: &GibbsConfig) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            k: params.n_states(),
            v: params.emission.cardinalities(),
            d: params.emission.real_dim(),
            pi: params.pi.clone(),
            t_mat: params.trans.clone(),
            emission_kind: params.emission.kind().to_string(),
            emission_params: params.emission.clone(),
            seed: config.seed,
            config: config.clone(),
        }
    }

    pub fn into_params(self) -> Result<(HmmParams, GibbsConfig)> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::UnsupportedVersion { found: self.version, expected: CHECKPOINT_VERSION });
        }
        let p = HmmParams::new(self.pi, self.t_mat, self.emission_params)?;
        if p.n_states() != self.k || p.emission.cardinalities() != self.v || p.emission.real_dim() != self.d {
            return Err(shape("checkpoint header disagrees with its parameters"));
        }
        Ok((p, self.config))
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    pub(crate) fn random_model(k: usize, v: usize, rng: &mut ChaCha8Rng) -> HmmParams {
        let mut row = |n: usize| {
            let mut r: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 0.05).collect();
            normalize(&mut r);
            r
        };
        let pi = row(k);
        let trans = Matrix::from_rows(&(0..k).map(|_| row(k)).collect::<Vec<_>>()).unwrap();
        let emis = Matrix::from_rows(&(0..k).map(|_| row(v)).collect::<Vec<_>>()).unwrap();
        HmmParams::new(pi, trans, EmissionModel::categorical(emis)).unwrap()
    }

    /// Sum over every state path, in plain probability space.
    fn enumerate_paths(params: &HmmParams, obs: &[usize]) -> (f64, Matrix) {
        let k = params.n_states();
        let n = obs.len();
        let e = &params.emission.categorical[0];
        let mut total = 0.0;
        let mut marg = Matrix::zeros(n, k);
        let mut path = vec![0usize; n];
        let count = k.pow(n as u32);
        for code in 0..count {
            let mut c = code;
            for s in path.iter_mut() {
                *s = c % k;
                c /= k;
            }
            let mut p = params.pi[path[0]] * e[(path[0], obs[0])];
            for t in 1..n {
                p *= params.trans[(path[t - 1], path[t])] * e[(path[t], obs[t])];
            }
            total += p;
            for t in 0..n {
                marg[(t, path[t])] += p;
            }
        }
        for t in 0..n {
            for s in 0..k {
                marg[(t, s)] /= total;
            }
        }
        (total, marg)
    }

    fn obs(ids: &[usize], v: usize) -> Observations {
        Observations::categorical(ids.to_vec(), v).unwrap()
    }

    #[test]
    fn single_state_filter() {
        let e = Matrix::from_rows(&[vec![0.2, 0.3, 0.5]]).unwrap();
        let p = HmmParams::new(vec![1.0], Matrix::identity(1), EmissionModel::categorical(e)).unwrap();
        let x = [0, 2, 2, 1];
        let post = forward_filter(&p, &obs(&x, 3)).unwrap();
        assert!(post.probs.as_slice().iter().all(|&v| v == 1.0));
        let expected: f64 = [0.2f64, 0.5, 0.5, 0.3].iter().map(|v| v.ln()).sum();
        assert!((post.loglik - expected).abs() < 1e-14);
    }

    #[test]
    fn absorbing_start_stays_put() {
        let e = Matrix::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let p = HmmParams::new(vec![1.0, 0.0], Matrix::identity(2), EmissionModel::categorical(e)).unwrap();
        let post = forward_filter(&p, &obs(&[0, 1, 1, 0], 2)).unwrap();
        for t in 0..4 {
            assert_eq!(post.probs.row(t), &[1.0, 0.0]);
        }
    }

    #[test]
    fn loglik_matches_path_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = random_model(3, 4, &mut rng);
        let x: Vec<usize> = (0..8).map(|_| rng.random_range(0..4)).collect();
        let (total, marg) = enumerate_paths(&p, &x);
        let post = forward_filter(&p, &obs(&x, 4)).unwrap();
        assert!(((post.loglik - total.ln()) / total.ln()).abs() < 1e-10);
        assert!((predictive_loglik(&p, &obs(&x, 4)).unwrap() - total.ln() / 8.0).abs() < 1e-10);

        let x6 = &x[..6];
        let (_, marg6) = enumerate_paths(&p, x6);
        let sm = smoothing_marginals(&p, &obs(x6, 4)).unwrap();
        for (a, b) in sm.as_slice().iter().zip(marg6.as_slice()) {
            assert!((a - b).abs() < 1e-10);
        }
        // last row of smoothing equals last filtered row
        assert!(marg.row(7).iter().zip(post.probs.row(7)).all(|(a, b)| (a - b).abs() < 1e-10));
    }

    #[test]
    fn zero_likelihood_is_trapped() {
        let e = Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap();
        let p = HmmParams::new(vec![1.0], Matrix::identity(1), EmissionModel::categorical(e)).unwrap();
        let r = forward_filter(&p, &obs(&[0, 0, 1], 2));
        assert!(matches!(r, Err(Error::DegenerateLikelihood { step: 2 })));
    }

    fn deterministic_model() -> HmmParams {
        // state 0 emits 0, state 1 emits 1; transitions alternate
        let trans = Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let e = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        HmmParams::new(vec![1.0, 0.0], trans, EmissionModel::categorical(e)).unwrap()
    }

    #[test]
    fn deterministic_posterior() {
        let p = deterministic_model();
        let o = obs(&[0, 1, 0, 1, 0], 2);
        let post = forward_filter(&p, &o).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            assert_eq!(backward_sample(&post, &p, &mut rng), vec![0, 1, 0, 1, 0]);
        }
        let sm = smoothing_marginals(&p, &o).unwrap();
        for t in 0..5 {
            assert_eq!(sm[(t, t % 2)], 1.0);
        }
    }

    #[test]
    fn single_state_path_is_zeros() {
        let e = Matrix::from_rows(&[vec![0.5, 0.5]]).unwrap();
        let p = HmmParams::new(vec![1.0], Matrix::identity(1), EmissionModel::categorical(e)).unwrap();
        let o = obs(&[0, 1, 1], 2);
        let post = forward_filter(&p, &o).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(backward_sample(&post, &p, &mut rng), vec![0, 0, 0]);
        assert!(smoothing_marginals(&p, &o).unwrap().as_slice().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn uniform_single_state_predictive() {
        let v = 5;
        let e = Matrix::filled(1, v, 1.0 / v as f64);
        let p = HmmParams::new(vec![1.0], Matrix::identity(1), EmissionModel::categorical(e)).unwrap();
        let ll = predictive_loglik(&p, &obs(&[0, 4, 2, 2, 1, 3], v)).unwrap();
        assert!((ll + (v as f64).ln()).abs() < 1e-14);
    }

    #[test]
    fn feature_predictive_matches_chain_rule() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = random_model(3, 4, &mut rng);
        let x: Vec<usize> = (0..8).map(|_| rng.random_range(0..4)).collect();
        // single-feature model: P(x_{t+1} | x_<=t) = Z(x_1..x_{t+1}) / Z(x_1..x_t)
        let mut expected = 0.0;
        for t in 1..8 {
            expected += enumerate_paths(&p, &x[..=t]).0.ln() - enumerate_paths(&p, &x[..t]).0.ln();
        }
        expected /= 7.0;
        let got = predictive_feature_loglik(&p, &obs(&x, 4), 0).unwrap();
        assert!((got - expected).abs() < 1e-10);
    }

    #[test]
    fn gaussian_filter_matches_direct_density() {
        let means = Matrix::from_rows(&[vec![0.0], vec![3.0]]).unwrap();
        let vars = Matrix::from_rows(&[vec![1.0], vec![0.5]]).unwrap();
        let trans = Matrix::from_rows(&[vec![0.9, 0.1], vec![0.2, 0.8]]).unwrap();
        let p = HmmParams::new(
            vec![0.5, 0.5],
            trans,
            EmissionModel { categorical: vec![], gaussian: Some(DiagGaussian { means, variances: vars }) },
        )
        .unwrap();
        let y = [0.1, 2.5, 3.2];
        let o = Observations::new(3, vec![], vec![], 1, y.to_vec()).unwrap();
        let dens = |m: f64, v: f64, x: f64| (-(x - m) * (x - m) / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt();
        let mut total = 0.0;
        for code in 0..8usize {
            let s = [code & 1, (code >> 1) & 1, (code >> 2) & 1];
            let mut pr = 0.5 * dens([0.0, 3.0][s[0]], [1.0, 0.5][s[0]], y[0]);
            for t in 1..3 {
                pr *= p.trans[(s[t - 1], s[t])] * dens([0.0, 3.0][s[t]], [1.0, 0.5][s[t]], y[t]);
            }
            total += pr;
        }
        let post = forward_filter(&p, &o).unwrap();
        assert!((post.loglik - total.ln()).abs() < 1e-12);
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = random_model(2, 3, &mut rng);
        let cfg = GibbsConfig::default();
        let json = serde_json::to_string(&HmmCheckpoint::new(&p, &cfg)).unwrap();
        assert!(json.starts_with("{\"version\":1,\"K\":2,\"V\":[3],\"D\":0,\"pi\""));
        let back: HmmCheckpoint = serde_json::from_str(&json).unwrap();
        let (p2, _) = back.into_params().unwrap();
        assert_eq!(p, p2);

        let mut bad: HmmCheckpoint = serde_json::from_str(&json).unwrap();
        bad.version = 9;
        assert!(matches!(bad.into_params(), Err(Error::UnsupportedVersion { found: 9, .. })));
    }
}
