//! First-order vector Taylor series compensation of log-mel features.
//!
//! Additive noise acts on log-mel energies as `y = x + log(1 + exp(n - x))`.
//! Linearizing at each clean component mean gives the noisy model
//! `mu_y = mu_x + g(mu_x)`, `var_y = J^2 var_x + (1 - J)^2 var_n` with
//! `g(mu) = log(1 + exp(mu_n - mu))` and `J = 1 / (1 + exp(mu_n - mu_x))`.
//! The clean estimate is `x = y - sum_k gamma_k(y) g(mu_x,k)` with
//! posteriors under the noisy model.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::gmm::{normalize_log, GmmModel};
use super::LOG_FLOOR;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VtsConfig {
    /// Frames at each end of the sentence assumed to be noise only.
    pub edge_frames: usize,
    /// Compensation passes; later passes re-estimate the noise mean from
    /// the residual of the edge frames.
    pub iterations: usize,
    /// Also adapt component variances with the Jacobian.
    pub adapt_variance: bool,
}

impl Default for VtsConfig {
    fn default() -> Self {
        VtsConfig {
            edge_frames: 10,
            iterations: 1,
            adapt_variance: true,
        }
    }
}

/// Numerically stable `log(1 + exp(z))`.
fn softplus(z: f64) -> f64 {
    if z > 30.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn edge_indices(n: usize, edge: usize) -> Vec<usize> {
    if 2 * edge >= n {
        (0..n).collect()
    } else {
        (0..edge).chain(n - edge..n).collect()
    }
}

/// Mean and variance of the log-mel vectors in the first and last
/// `edge` frames.
pub fn estimate_noise_mean(log_mel: &[Vec<f64>], edge: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if log_mel.is_empty() || edge == 0 {
        return Err(Error::TooShort {
            needed: 1,
            found: log_mel.len().min(edge),
        });
    }
    let idx = edge_indices(log_mel.len(), edge);
    let dim = log_mel[0].len();
    let n = idx.len() as f64;
    let mut mean = vec![0.0; dim];
    for &t in &idx {
        for (m, v) in mean.iter_mut().zip(&log_mel[t]) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let var = (0..dim)
        .map(|d| idx.iter().map(|&t| (log_mel[t][d] - mean[d]).powi(2)).sum::<f64>() / n)
        .collect();
    Ok((mean, var))
}

/// One compensation pass with a fixed noise mean and no noise variance.
pub fn vts_compensate(noisy: &[Vec<f64>], gmm: &GmmModel, noise_mean: &[f64]) -> Result<Vec<Vec<f64>>> {
    let zeros = vec![0.0; noise_mean.len()];
    let config = VtsConfig {
        iterations: 1,
        ..Default::default()
    };
    vts_compensate_with(noisy, gmm, noise_mean, &zeros, &config)
}

pub fn vts_compensate_with(
    noisy: &[Vec<f64>],
    gmm: &GmmModel,
    noise_mean: &[f64],
    noise_var: &[f64],
    config: &VtsConfig,
) -> Result<Vec<Vec<f64>>> {
    let dim = gmm.dim();
    for v in [noise_mean.len(), noise_var.len()]
        .into_iter()
        .chain(noisy.iter().map(Vec::len))
    {
        if v != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: v });
        }
    }
    if noise_mean.iter().any(|v| v.is_nan()) {
        return Err(Error::NonFinite("noise mean".into()));
    }
    let k = gmm.components();
    let mut mu_n = noise_mean.to_vec();
    let mut out = noisy.to_vec();
    for pass in 0..config.iterations.max(1) {
        if pass > 0 {
            mu_n = residual_noise_mean(noisy, &out, config.edge_frames);
        }
        let mut shift = vec![vec![0.0; dim]; k];
        let mut means_y = gmm.means.clone();
        let mut vars_y = gmm.vars.clone();
        for c in 0..k {
            for d in 0..dim {
                let z = mu_n[d] - gmm.means[c][d];
                shift[c][d] = softplus(z);
                means_y[c][d] += shift[c][d];
                if config.adapt_variance {
                    let j = 1.0 / (1.0 + z.exp());
                    vars_y[c][d] = j * j * gmm.vars[c][d] + (1.0 - j) * (1.0 - j) * noise_var[d];
                    vars_y[c][d] = vars_y[c][d].max(1e-10);
                }
            }
        }
        let prep = gmm.prepare(&means_y, &vars_y);
        let mut post = vec![0.0; k];
        for (x, y) in out.iter_mut().zip(noisy) {
            prep.joint_log_densities(y, &mut post);
            normalize_log(&mut post);
            for d in 0..dim {
                let corr: f64 = (0..k).map(|c| post[c] * shift[c][d]).sum();
                x[d] = y[d] - corr;
            }
        }
    }
    Ok(out)
}

/// `log(exp(y) - exp(x))` averaged over edge frames.
fn residual_noise_mean(noisy: &[Vec<f64>], clean: &[Vec<f64>], edge: usize) -> Vec<f64> {
    let idx = edge_indices(noisy.len(), edge.max(1));
    let dim = noisy[0].len();
    (0..dim)
        .map(|d| {
            idx.iter()
                .map(|&t| {
                    let (y, x) = (noisy[t][d], clean[t][d]);
                    // y >= x always holds after compensation
                    (y + (-(x - y).exp()).ln_1p()).max(LOG_FLOOR.ln())
                })
                .sum::<f64>()
                / idx.len() as f64
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::gmm_train;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn one_component(mu: f64, var: f64) -> GmmModel {
        GmmModel {
            weights: vec![1.0],
            means: vec![vec![mu]],
            vars: vec![vec![var]],
        }
    }

    #[test]
    fn quiet_limit_is_identity() {
        let gmm = one_component(0.0, 1.0);
        let y = vec![vec![0.3], vec![-1.2], vec![4.0]];
        let out = vts_compensate(&y, &gmm, &[f64::NEG_INFINITY]).unwrap();
        for (a, b) in out.iter().zip(&y) {
            assert!((a[0] - b[0]).abs() < 1e-6);
        }
    }

    #[test]
    fn scalar_closed_form_subtracts_log_two() {
        let gmm = one_component(0.0, 1.0);
        let out = vts_compensate(&[vec![1.5]], &gmm, &[0.0]).unwrap();
        assert!((out[0][0] - (1.5 - 2f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let gmm = one_component(0.0, 1.0);
        assert!(vts_compensate(&[vec![1.0, 2.0]], &gmm, &[0.0]).is_err());
    }

    #[test]
    fn reduces_log_mel_error_at_zero_db() {
        // clean log-mel vectors from a known 2-component mixture, noise added
        // in the linear domain with power equal to the average speech power
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let dim = 4;
        let normal = Normal::new(0.0, 1.0).unwrap();
        let clean: Vec<Vec<f64>> = (0..4000)
            .map(|_| {
                let hi = rng.random_bool(0.5);
                (0..dim)
                    .map(|d| if hi { 2.0 + 0.3 * d as f64 } else { -2.0 } + 0.5 * normal.sample(&mut rng))
                    .collect()
            })
            .collect();
        let speech_power: f64 = clean.iter().flatten().map(|v| v.exp()).sum::<f64>() / (clean.len() * dim) as f64;
        let mu_n = speech_power.ln();
        let noisy: Vec<Vec<f64>> = clean
            .iter()
            .map(|x| x.iter().map(|v| (v.exp() + (mu_n + 0.1 * normal.sample(&mut rng)).exp()).ln()).collect())
            .collect();
        let gmm = gmm_train(&clean, 2, 1).unwrap();
        let est = vts_compensate(&noisy, &gmm, &vec![mu_n; dim]).unwrap();
        let mse = |a: &[Vec<f64>]| {
            a.iter().flatten().zip(clean.iter().flatten()).map(|(u, v)| (u - v).powi(2)).sum::<f64>() / (clean.len() * dim) as f64
        };
        let (before, after) = (mse(&noisy), mse(&est));
        assert!(after < before, "{after} vs {before}");
    }

    #[test]
    fn edge_noise_estimate() {
        let frames: Vec<Vec<f64>> = (0..40).map(|t| vec![if !(10..30).contains(&t) { -3.0 } else { 5.0 }]).collect();
        let (m, v) = estimate_noise_mean(&frames, 10).unwrap();
        assert_eq!((m[0], v[0]), (-3.0, 0.0));
    }
}
