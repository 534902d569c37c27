//! Gibbs training: forward-filtering backward-sampling of the state paths
//! followed by conjugate draws of every parameter block.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};

use super::{backward_sample, forward_filter, DiagGaussian, EmissionModel, HmmParams};
use crate::corpus::Observations;
use crate::error::{invalid, shape, Error, Result};
use crate::matrix::Matrix;

/// Normal-Inverse-Gamma hyperparameters for Gaussian emissions. Missing
/// `m0` / `b0` default to the per-dimension data mean and variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GaussianPrior {
    pub m0: Option<Vec<f64>>,
    pub k0: f64,
    pub a0: f64,
    pub b0: Option<Vec<f64>>,
}

impl Default for GaussianPrior {
    fn default() -> Self {
        Self { m0: None, k0: 1.0, a0: 2.0, b0: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GibbsConfig {
    /// Dirichlet hyperparameter shared by initial, transition and
    /// categorical emission priors.
    pub alpha: f64,
    pub n_iters: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub gaussian_prior: GaussianPrior,
}

impl Default for GibbsConfig {
    fn default() -> Self {
        Self { alpha: 1.0, n_iters: 100, burn_in: 50, seed: 0, gaussian_prior: GaussianPrior::default() }
    }
}

impl GibbsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(invalid(format!("gibbs.alpha must be > 0, got {}", self.alpha)));
        }
        if self.n_iters <= self.burn_in {
            return Err(invalid(format!(
                "gibbs.n_iters ({}) must exceed gibbs.burn_in ({})",
                self.n_iters, self.burn_in
            )));
        }
        let p = &self.gaussian_prior;
        if !(p.k0 > 0.0 && p.a0 > 0.0) {
            return Err(invalid("gaussian prior k0 and a0 must be > 0"));
        }
        if p.b0.as_ref().is_some_and(|b| b.iter().any(|&x| !(x > 0.0))) {
            return Err(invalid("gaussian prior b0 must be > 0"));
        }
        Ok(())
    }
}

/// Draws one Dirichlet vector by normalizing independent Gamma draws.
pub fn sample_dirichlet<R: Rng + ?Sized>(alpha: &[f64], rng: &mut R) -> Vec<f64> {
    let mut out: Vec<f64> = alpha
        .iter()
        .map(|&a| {
            let g = Gamma::new(a, 1.0).expect("Dirichlet parameters are positive").sample(rng);
            g.max(f64::MIN_POSITIVE)
        })
        .collect();
    let s: f64 = out.iter().sum();
    out.iter_mut().for_each(|x| *x /= s);
    out
}

/// Row `i` of the result is drawn from `Dirichlet(n_i1 + alpha, ..., n_iK + alpha)`.
pub fn sample_transitions<R: Rng + ?Sized>(counts: &Matrix, alpha: f64, rng: &mut R) -> Matrix {
    let mut out = Matrix::zeros(counts.rows(), counts.cols());
    let mut conc = vec![0.0; counts.cols()];
    for i in 0..counts.rows() {
        for (c, &n) in conc.iter_mut().zip(counts.row(i)) {
            *c = n + alpha;
        }
        out.row_mut(i).copy_from_slice(&sample_dirichlet(&conc, rng));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianStats {
    pub n: Vec<f64>,
    pub sum: Matrix,
    pub sumsq: Matrix,
}

/// Per-state sufficient statistics of the emissions under a state path.
#[derive(Debug, Clone, PartialEq)]
pub struct EmissionStats {
    /// One `K x V_f` count matrix per categorical feature.
    pub counts: Vec<Matrix>,
    pub gaussian: Option<GaussianStats>,
}

impl EmissionStats {
    pub fn zeros(k: usize, cardinalities: &[usize], real_dim: usize) -> Self {
        Self {
            counts: cardinalities.iter().map(|&v| Matrix::zeros(k, v)).collect(),
            gaussian: (real_dim > 0).then(|| GaussianStats {
                n: vec![0.0; k],
                sum: Matrix::zeros(k, real_dim),
                sumsq: Matrix::zeros(k, real_dim),
            }),
        }
    }

    pub fn accumulate(&mut self, obs: &Observations, path: &[usize]) {
        for (t, &s) in path.iter().enumerate() {
            for (f, &x) in obs.cat(t).iter().enumerate() {
                self.counts[f][(s, x)] += 1.0;
            }
            if let Some(g) = self.gaussian.as_mut() {
                g.n[s] += 1.0;
                for (d, &y) in obs.real_row(t).iter().enumerate() {
                    g.sum[(s, d)] += y;
                    g.sumsq[(s, d)] += y * y;
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmissionPrior {
    pub alpha: f64,
    pub m0: Vec<f64>,
    pub k0: f64,
    pub a0: f64,
    pub b0: Vec<f64>,
}

impl EmissionPrior {
    pub fn categorical(alpha: f64) -> Self {
        Self { alpha, m0: vec![], k0: 1.0, a0: 2.0, b0: vec![] }
    }
}

/// Categorical rows ~ `Dirichlet(count + alpha)`; each Gaussian (mean,
/// variance) pair ~ the Normal-Inverse-Gamma posterior.
pub fn sample_emissions<R: Rng + ?Sized>(stats: &EmissionStats, prior: &EmissionPrior, rng: &mut R) -> EmissionModel {
    let categorical = stats.counts.iter().map(|c| sample_transitions(c, prior.alpha, rng)).collect();
    let gaussian = stats.gaussian.as_ref().map(|g| {
        let k = g.n.len();
        let d = g.sum.cols();
        let mut means = Matrix::zeros(k, d);
        let mut variances = Matrix::zeros(k, d);
        for s in 0..k {
            let n = g.n[s];
            for j in 0..d {
                let (m0, b0) = (prior.m0[j], prior.b0[j]);
                let (kn, mn, an, bn) = if n > 0.0 {
                    let xbar = g.sum[(s, j)] / n;
                    let ss = (g.sumsq[(s, j)] - n * xbar * xbar).max(0.0);
                    let kn = prior.k0 + n;
                    let mn = (prior.k0 * m0 + n * xbar) / kn;
                    let bn = b0 + 0.5 * ss + prior.k0 * n * (xbar - m0).powi(2) / (2.0 * kn);
                    (kn, mn, prior.a0 + 0.5 * n, bn)
                } else {
                    (prior.k0, m0, prior.a0, b0)
                };
                let precision = Gamma::new(an, 1.0 / bn).expect("positive NIG shape").sample(rng);
                let var = (1.0 / precision).clamp(1e-12, 1e12);
                let mean = Normal::new(mn, (var / kn).sqrt()).expect("finite NIG mean").sample(rng);
                means[(s, j)] = mean;
                variances[(s, j)] = var;
            }
        }
        DiagGaussian { means, variances }
    });
    EmissionModel { categorical, gaussian }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GibbsOutput {
    /// Parameter sample from the final sweep.
    pub params: HmmParams,
    /// Total data log-likelihood under the parameters used for each sweep's
    /// state draw.
    pub trace: Vec<f64>,
}

impl GibbsOutput {
    /// Mean of the trace after burn-in.
    pub fn post_burn_in_loglik(&self, burn_in: usize) -> f64 {
        let tail = &self.trace[burn_in.min(self.trace.len())..];
        tail.iter().sum::<f64>() / tail.len().max(1) as f64
    }
}

/// Gibbs sampler over one or more observation streams sharing a model.
///
/// States start as i.i.d. uniform draws; parameters are drawn from those
/// states, then every sweep resamples all paths by FFBS and redraws the
/// initial distribution, transitions and emissions. Deterministic given the
/// seed.
pub fn gibbs_train(seqs: &[Observations], k: usize, config: &GibbsConfig) -> Result<GibbsOutput> {
    config.validate()?;
    if k == 0 {
        return Err(invalid("HMM needs at least one state"));
    }
    let first = seqs.iter().find(|s| !s.is_empty()).ok_or(Error::EmptyInput)?;
    let cards = first.cardinalities().to_vec();
    let d = first.real_dim();
    if seqs.iter().any(|s| s.cardinalities() != cards.as_slice() || s.real_dim() != d) {
        return Err(shape("all streams must share feature layout"));
    }
    let total: usize = seqs.iter().map(Observations::len).sum();
    if total < k {
        return Err(Error::InsufficientData(format!("{total} observations for {k} states")));
    }
    let prior = emission_prior(seqs, d, config);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut paths: Vec<Vec<usize>> =
        seqs.iter().map(|s| (0..s.len()).map(|_| rng.random_range(0..k)).collect()).collect();
    let mut params = draw_params(seqs, &paths, k, &cards, d, config.alpha, &prior, &mut rng);
    let mut trace = Vec::with_capacity(config.n_iters);
    for sweep in 0..config.n_iters {
        let mut loglik = 0.0;
        for (seq, path) in seqs.iter().zip(paths.iter_mut()) {
            if seq.is_empty() {
                continue;
            }
            let post = forward_filter(&params, seq)?;
            loglik += post.loglik;
            *path = backward_sample(&post, &params, &mut rng);
        }
        params = draw_params(seqs, &paths, k, &cards, d, config.alpha, &prior, &mut rng);
        log::debug!("gibbs sweep {sweep}: loglik {loglik:.3}");
        trace.push(loglik);
    }
    Ok(GibbsOutput { params, trace })
}

fn emission_prior(seqs: &[Observations], d: usize, config: &GibbsConfig) -> EmissionPrior {
    let gp = &config.gaussian_prior;
    let mut mean = vec![0.0; d];
    let mut var = vec![0.0; d];
    if d > 0 {
        let n: f64 = seqs.iter().map(|s| s.len() as f64).sum();
        for s in seqs {
            for t in 0..s.len() {
                for (m, &y) in mean.iter_mut().zip(s.real_row(t)) {
                    *m += y / n;
                }
            }
        }
        for s in seqs {
            for t in 0..s.len() {
                for j in 0..d {
                    var[j] += (s.real_row(t)[j] - mean[j]).powi(2) / n;
                }
            }
        }
        var.iter_mut().filter(|v| !(**v > 0.0)).for_each(|v| *v = 1.0);
    }
    EmissionPrior {
        alpha: config.alpha,
        m0: gp.m0.clone().unwrap_or(mean),
        k0: gp.k0,
        a0: gp.a0,
        b0: gp.b0.clone().unwrap_or(var),
    }
}

#[allow(clippy::too_many_arguments)]
fn draw_params<R: Rng + ?Sized>(
    seqs: &[Observations],
    paths: &[Vec<usize>],
    k: usize,
    cards: &[usize],
    d: usize,
    alpha: f64,
    prior: &EmissionPrior,
    rng: &mut R,
) -> HmmParams {
    let mut start = vec![alpha; k];
    let mut counts = Matrix::zeros(k, k);
    let mut stats = EmissionStats::zeros(k, cards, d);
    for (seq, path) in seqs.iter().zip(paths) {
        if let Some(&s0) = path.first() {
            start[s0] += 1.0;
        }
        for w in path.windows(2) {
            counts[(w[0], w[1])] += 1.0;
        }
        stats.accumulate(seq, path);
    }
    let pi = sample_dirichlet(&start, rng);
    let trans = sample_transitions(&counts, alpha, rng);
    let emission = sample_emissions(&stats, prior, rng);
    HmmParams { pi, trans, emission }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dirichlet_rows_are_simplex_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let v = sample_dirichlet(&[0.5, 1.0, 3.0, 0.1], &mut rng);
            assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(v.iter().all(|&x| x > 0.0));
        }
    }

    #[test]
    fn single_state_transition_row_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = sample_transitions(&Matrix::from_rows(&[vec![7.0]]).unwrap(), 1.0, &mut rng);
        assert_eq!(m[(0, 0)], 1.0);
    }

    #[test]
    fn prior_only_transition_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let k = 3;
        let counts = Matrix::zeros(k, k);
        let mut mean = Matrix::zeros(k, k);
        let draws = 10_000;
        for _ in 0..draws {
            let m = sample_transitions(&counts, 1.0, &mut rng);
            for (a, b) in mean.as_mut_slice().iter_mut().zip(m.as_slice()) {
                *a += b / draws as f64;
            }
        }
        assert!(mean.as_slice().iter().all(|&x| (x - 1.0 / k as f64).abs() < 0.02));
    }

    #[test]
    fn gaussian_posterior_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let normal = Normal::new(2.0, 1.0).unwrap();
        let xs: Vec<f64> = (0..1000).map(|_| normal.sample(&mut rng)).collect();
        let o = Observations::new(1000, vec![], vec![], 1, xs.clone()).unwrap();
        let mut stats = EmissionStats::zeros(1, &[], 1);
        stats.accumulate(&o, &vec![0; 1000]);
        let m = xs.iter().sum::<f64>() / 1000.0;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 1000.0;
        let prior = EmissionPrior { alpha: 1.0, m0: vec![m], k0: 1.0, a0: 2.0, b0: vec![v] };
        let draws = 2000;
        let (mut mu, mut var) = (0.0, 0.0);
        for _ in 0..draws {
            let e = sample_emissions(&stats, &prior, &mut rng);
            let g = e.gaussian.unwrap();
            mu += g.means[(0, 0)] / draws as f64;
            var += g.variances[(0, 0)] / draws as f64;
        }
        assert!((mu - 2.0).abs() < 0.1, "posterior mean {mu}");
        assert!((var - 1.0).abs() < 0.15, "posterior variance {var}");
    }

    #[test]
    fn config_validation() {
        assert!(GibbsConfig { alpha: 0.0, ..Default::default() }.validate().is_err());
        assert!(GibbsConfig { n_iters: 10, burn_in: 10, ..Default::default() }.validate().is_err());
        assert!(GibbsConfig::default().validate().is_ok());
        let parsed: std::result::Result<GibbsConfig, _> = serde_json::from_str(r#"{"alpah": 1.0}"#);
        assert!(parsed.is_err());
    }

    #[test]
    fn gibbs_is_reproducible() {
        let ids: Vec<usize> = (0..300).map(|i| (i * 7 + i / 3) % 4).collect();
        let o = Observations::categorical(ids, 4).unwrap();
        let cfg = GibbsConfig { n_iters: 20, burn_in: 5, seed: 17, ..Default::default() };
        let a = gibbs_train(std::slice::from_ref(&o), 3, &cfg).unwrap();
        let b = gibbs_train(std::slice::from_ref(&o), 3, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.params.validate().is_ok());
        assert_eq!(a.trace.len(), 20);
    }

    #[test]
    fn single_state_recovers_unigram_frequencies() {
        let text = "aaabaaabcaab".repeat(400);
        let ids: Vec<usize> = text.bytes().map(|b| (b - b'a') as usize).collect();
        let n = ids.len() as f64;
        let freq: Vec<f64> = (0..3).map(|v| ids.iter().filter(|&&x| x == v).count() as f64 / n).collect();
        let o = Observations::categorical(ids, 3).unwrap();
        let cfg = GibbsConfig { n_iters: 5, burn_in: 0, seed: 3, ..Default::default() };
        let out = gibbs_train(&[o], 1, &cfg).unwrap();
        let e = &out.params.emission.categorical[0];
        for v in 0..3 {
            assert!((e[(0, v)] - freq[v]).abs() < 0.01);
        }
    }
}
