//! Diagonal-covariance Gaussian mixtures trained by EM from a k-means start.

use std::f64::consts::PI;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmModel {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub vars: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GmmTrainConfig {
    pub max_iter: usize,
    /// Stop once the relative log-likelihood gain falls below this.
    pub rel_tol: f64,
    pub var_floor: f64,
    pub kmeans_iter: usize,
}

impl Default for GmmTrainConfig {
    fn default() -> Self {
        GmmTrainConfig {
            max_iter: 100,
            rel_tol: 1e-5,
            var_floor: 1e-4,
            kmeans_iter: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmmTrainReport {
    /// Total data log-likelihood before each M-step and after the last.
    pub log_likelihood: Vec<f64>,
    pub iterations: usize,
}

/// Rows per accumulation block. Blocks are reduced in index order, so the
/// result does not depend on how rayon schedules them.
const BLOCK: usize = 256;

impl GmmModel {
    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    /// Per-component constants for evaluating densities with the given
    /// means and variances (callers may pass shifted parameters).
    pub(crate) fn prepare(&self, means: &[Vec<f64>], vars: &[Vec<f64>]) -> Prepared {
        let inv_vars = vars.iter().map(|v| v.iter().map(|x| 1.0 / x).collect()).collect();
        let log_consts = self
            .weights
            .iter()
            .zip(vars)
            .map(|(&w, v)| {
                if w <= 0.0 {
                    f64::NEG_INFINITY
                } else {
                    w.ln() - 0.5 * v.iter().map(|x| (2.0 * PI * x).ln()).sum::<f64>()
                }
            })
            .collect();
        Prepared {
            means: means.to_vec(),
            inv_vars,
            log_consts,
        }
    }

    fn prepared(&self) -> Prepared {
        self.prepare(&self.means, &self.vars)
    }

    pub fn log_likelihood(&self, data: &[Vec<f64>]) -> f64 {
        let k = self.components();
        let prep = self.prepared();
        data.par_chunks(BLOCK)
            .map(|chunk| {
                let mut buf = vec![0.0; k];
                chunk
                    .iter()
                    .map(|x| {
                        prep.joint_log_densities(x, &mut buf);
                        log_sum_exp(&buf)
                    })
                    .sum::<f64>()
            })
            .collect::<Vec<f64>>()
            .iter()
            .sum()
    }

    /// Component posteriors of one vector.
    pub fn posteriors(&self, x: &[f64]) -> Vec<f64> {
        let mut buf = vec![0.0; self.components()];
        self.prepared().joint_log_densities(x, &mut buf);
        normalize_log(&mut buf);
        buf
    }
}

/// Diagonal Gaussians with cached inverse variances and log constants.
pub(crate) struct Prepared {
    means: Vec<Vec<f64>>,
    inv_vars: Vec<Vec<f64>>,
    log_consts: Vec<f64>,
}

impl Prepared {
    /// `log w_k + log N(x; mu_k, diag var_k)` per component.
    pub(crate) fn joint_log_densities(&self, x: &[f64], out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate() {
            let c = self.log_consts[k];
            if c == f64::NEG_INFINITY {
                *o = c;
                continue;
            }
            let q: f64 = x
                .iter()
                .zip(&self.means[k])
                .zip(&self.inv_vars[k])
                .map(|((xi, m), iv)| (xi - m) * (xi - m) * iv)
                .sum();
            *o = c - 0.5 * q;
        }
    }
}

pub(crate) fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Turns log weights into normalized probabilities in place.
pub(crate) fn normalize_log(v: &mut [f64]) {
    let lse = log_sum_exp(v);
    v.iter_mut().for_each(|x| *x = (*x - lse).exp());
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k-means++ seeding followed by Lloyd iterations. Returns centres and
/// hard assignments.
fn kmeans(data: &[Vec<f64>], k: usize, iters: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = vec![data[rng.random_range(0..data.len())].clone()];
    let mut d2: Vec<f64> = data.iter().map(|x| sq_dist(x, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut pick = data.len() - 1;
            for (i, d) in d2.iter().enumerate() {
                if r < *d {
                    pick = i;
                    break;
                }
                r -= d;
            }
            pick
        } else {
            rng.random_range(0..data.len())
        };
        centers.push(data[next].clone());
        let c = centers.last().unwrap();
        for (d, x) in d2.iter_mut().zip(data) {
            *d = d.min(sq_dist(x, c));
        }
    }
    let mut assign = vec![0usize; data.len()];
    for _ in 0..iters.max(1) {
        assign = data
            .par_iter()
            .map(|x| {
                (0..k)
                    .min_by(|&a, &b| sq_dist(x, &centers[a]).total_cmp(&sq_dist(x, &centers[b])))
                    .unwrap()
            })
            .collect();
        let dim = data[0].len();
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (x, &a) in data.iter().zip(&assign) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(x) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
    }
    (centers, assign)
}

/// Sufficient statistics of one block: `(N_k, sum gamma x, sum gamma x^2)`.
struct Stats {
    n: Vec<f64>,
    sx: Vec<Vec<f64>>,
    sxx: Vec<Vec<f64>>,
    loglik: f64,
}

impl Stats {
    fn zeros(k: usize, dim: usize) -> Self {
        Stats {
            n: vec![0.0; k],
            sx: vec![vec![0.0; dim]; k],
            sxx: vec![vec![0.0; dim]; k],
            loglik: 0.0,
        }
    }

    fn add(&mut self, other: &Stats) {
        for k in 0..self.n.len() {
            self.n[k] += other.n[k];
            for d in 0..self.sx[k].len() {
                self.sx[k][d] += other.sx[k][d];
                self.sxx[k][d] += other.sxx[k][d];
            }
        }
        self.loglik += other.loglik;
    }
}

fn e_step(model: &GmmModel, data: &[Vec<f64>]) -> Stats {
    let (k, dim) = (model.components(), model.dim());
    let prep = model.prepared();
    let blocks: Vec<Stats> = data
        .par_chunks(BLOCK)
        .map(|chunk| {
            let mut st = Stats::zeros(k, dim);
            let mut buf = vec![0.0; k];
            for x in chunk {
                prep.joint_log_densities(x, &mut buf);
                st.loglik += log_sum_exp(&buf);
                normalize_log(&mut buf);
                for c in 0..k {
                    let g = buf[c];
                    if g == 0.0 {
                        continue;
                    }
                    st.n[c] += g;
                    for d in 0..dim {
                        st.sx[c][d] += g * x[d];
                        st.sxx[c][d] += g * x[d] * x[d];
                    }
                }
            }
            st
        })
        .collect();
    let mut total = Stats::zeros(k, dim);
    for b in &blocks {
        total.add(b);
    }
    total
}

fn m_step(model: &mut GmmModel, st: &Stats, n: f64, floor: f64) {
    for c in 0..model.components() {
        if st.n[c] <= 0.0 {
            model.weights[c] = 0.0;
            continue;
        }
        model.weights[c] = st.n[c] / n;
        for d in 0..model.dim() {
            let m = st.sx[c][d] / st.n[c];
            let v = st.sxx[c][d] / st.n[c] - m * m;
            model.means[c][d] = m;
            model.vars[c][d] = v.max(floor);
        }
    }
}

pub fn gmm_train(data: &[Vec<f64>], k: usize, seed: u64) -> Result<GmmModel> {
    gmm_train_with(data, k, seed, &GmmTrainConfig::default()).map(|(m, _)| m)
}

pub fn gmm_train_with(
    data: &[Vec<f64>],
    k: usize,
    seed: u64,
    config: &GmmTrainConfig,
) -> Result<(GmmModel, GmmTrainReport)> {
    if k == 0 || data.len() < k {
        return Err(Error::TooShort {
            needed: k.max(1),
            found: data.len(),
        });
    }
    let dim = data[0].len();
    if let Some(x) = data.iter().find(|x| x.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: x.len(),
        });
    }
    if data.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("GMM training data".into()));
    }
    if data.len() < 10 * k {
        warn!("training a {k}-component GMM on only {} vectors", data.len());
    }
    let (centers, assign) = kmeans(data, k, config.kmeans_iter, seed);
    // initial parameters from the hard k-means partition
    let mut model = GmmModel {
        weights: vec![0.0; k],
        means: centers,
        vars: vec![vec![0.0; dim]; k],
    };
    let mut init = Stats::zeros(k, dim);
    for (x, &a) in data.iter().zip(&assign) {
        init.n[a] += 1.0;
        for d in 0..dim {
            init.sx[a][d] += x[d];
            init.sxx[a][d] += x[d] * x[d];
        }
    }
    m_step(&mut model, &init, data.len() as f64, config.var_floor);

    let n = data.len() as f64;
    let mut history = Vec::new();
    let mut iterations = 0;
    loop {
        let st = e_step(&model, data);
        history.push(st.loglik);
        if let [.., prev, last] = history[..] {
            if (last - prev).abs() <= config.rel_tol * prev.abs().max(1e-300) {
                break;
            }
        }
        if iterations == config.max_iter {
            break;
        }
        m_step(&mut model, &st, n, config.var_floor);
        iterations += 1;
    }
    Ok((
        model,
        GmmTrainReport {
            log_likelihood: history,
            iterations,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn two_blobs(n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 1.0).unwrap();
        (0..n)
            .map(|i| {
                let (mu, sd) = if i % 10 < 3 { ([-3.0, 2.0], [0.5, 1.0]) } else { ([2.0, -1.0], [1.0, 0.7]) };
                (0..2).map(|d| mu[d] + sd[d] * noise.sample(&mut rng)).collect()
            })
            .collect()
    }

    #[test]
    fn recovers_two_component_means() {
        let data = two_blobs(10_000, 1);
        let (m, rep) = gmm_train_with(&data, 2, 7, &GmmTrainConfig::default()).unwrap();
        let mut means = m.means.clone();
        means.sort_by(|a, b| a[0].total_cmp(&b[0]));
        for (got, want) in means.iter().zip([[-3.0, 2.0], [2.0, -1.0]]) {
            for d in 0..2 {
                assert!((got[d] - want[d]).abs() < 0.1, "{got:?}");
            }
        }
        assert!((m.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for w in rep.log_likelihood.windows(2) {
            assert!(w[1] >= w[0] - 1e-9 * w[0].abs(), "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn single_component_is_sample_moments() {
        let data = two_blobs(500, 2);
        let m = gmm_train(&data, 1, 0).unwrap();
        let n = data.len() as f64;
        for d in 0..2 {
            let mean = data.iter().map(|x| x[d]).sum::<f64>() / n;
            let var = data.iter().map(|x| (x[d] - mean).powi(2)).sum::<f64>() / n;
            assert!((m.means[0][d] - mean).abs() < 1e-12);
            assert!((m.vars[0][d] - var).abs() < 1e-10);
        }
        assert_eq!(m.weights, vec![1.0]);
    }

    #[test]
    fn monotone_with_many_components_and_floor() {
        let mut data = two_blobs(2000, 3);
        // a duplicated cluster drives some variances to the floor
        data.extend(std::iter::repeat_n(vec![10.0, 10.0], 50));
        let (m, rep) = gmm_train_with(&data, 8, 5, &GmmTrainConfig::default()).unwrap();
        for w in rep.log_likelihood.windows(2) {
            assert!(w[1] >= w[0] - 1e-9 * w[0].abs());
        }
        assert!(m.vars.iter().flatten().all(|&v| v >= 1e-4));
    }

    #[test]
    fn too_few_vectors_rejected() {
        assert!(gmm_train(&[vec![1.0], vec![2.0]], 3, 0).is_err());
    }

    #[test]
    fn deterministic_per_seed() {
        let data = two_blobs(3000, 4);
        assert_eq!(gmm_train(&data, 4, 9).unwrap(), gmm_train(&data, 4, 9).unwrap());
    }
}
