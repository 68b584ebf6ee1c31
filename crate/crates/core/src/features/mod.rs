//! Feature extraction: dynamic subband features, the MFCC baseline,
//! per-sentence normalization, and GMM-based VTS compensation of log-mel
//! spectra.

pub mod dump;
mod gmm;
mod mfcc;
mod subband;
mod vts;

pub use gmm::{gmm_train, gmm_train_with, GmmModel, GmmTrainConfig, GmmTrainReport};
pub use mfcc::{concat_center, nearest_frames, MelFrontEnd, MfccConfig};
pub use subband::{
    sentence_omega_stats, subband_dynamics, OmegaFraming, OmegaStats, SubbandExtractor, SubbandFeatureConfig,
};
pub use vts::{estimate_noise_mean, vts_compensate, vts_compensate_with, VtsConfig};

use crate::error::{Error, Result};

/// Floor applied to energies before taking logs.
pub const LOG_FLOOR: f64 = 1e-10;

/// Half-width of the regression window used for deltas.
pub const DELTA_WINDOW: usize = 2;

pub fn floored_log(energy: f64) -> f64 {
    energy.max(LOG_FLOOR).ln()
}

/// `d_t = sum_n n (c_{t+n} - c_{t-n}) / (2 sum_n n^2)` over `n = 1..=2`,
/// with the sequence extended by repeating its first and last values.
pub fn deltas(c: &[f64]) -> Vec<f64> {
    let len = c.len() as i64;
    if len == 0 {
        return Vec::new();
    }
    let at = |t: i64| c[t.clamp(0, len - 1) as usize];
    let denom: f64 = 2.0 * (1..=DELTA_WINDOW).map(|n| (n * n) as f64).sum::<f64>();
    (0..len)
        .map(|t| {
            (1..=DELTA_WINDOW as i64)
                .map(|n| n as f64 * (at(t + n) - at(t - n)))
                .sum::<f64>()
                / denom
        })
        .collect()
}

/// Deltas of each dimension of a frame sequence.
pub fn deltas_frames(frames: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let dim = frames.first().map_or(0, Vec::len);
    let mut out = vec![vec![0.0; dim]; frames.len()];
    let mut track = vec![0.0; frames.len()];
    for d in 0..dim {
        for (t, f) in frames.iter().enumerate() {
            track[t] = f[d];
        }
        for (t, v) in deltas(&track).into_iter().enumerate() {
            out[t][d] = v;
        }
    }
    out
}

/// Per-dimension mean and standard deviation of a sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct CmvnStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Relative variance below which a dimension is treated as constant.
const CONSTANT_TOL: f64 = 1e-20;

impl CmvnStats {
    pub fn fit(frames: &[Vec<f64>]) -> Result<Self> {
        if frames.len() < 2 {
            return Err(Error::TooShort {
                needed: 2,
                found: frames.len(),
            });
        }
        let dim = frames[0].len();
        if let Some(f) = frames.iter().find(|f| f.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: f.len(),
            });
        }
        let n = frames.len() as f64;
        let mut mean = vec![0.0; dim];
        for f in frames {
            for (m, v) in mean.iter_mut().zip(f) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for f in frames {
            for d in 0..dim {
                let e = f[d] - mean[d];
                var[d] += e * e;
            }
        }
        let std = var
            .iter()
            .zip(&mean)
            .map(|(v, m)| {
                let v = v / n;
                if v <= CONSTANT_TOL * (1.0 + m * m) {
                    0.0
                } else {
                    v.sqrt()
                }
            })
            .collect();
        Ok(CmvnStats { mean, std })
    }

    /// Standardizes one vector; constant dimensions map to 0.
    pub fn apply(&self, x: &mut [f64]) {
        for d in 0..x.len() {
            x[d] = if self.std[d] > 0.0 {
                (x[d] - self.mean[d]) / self.std[d]
            } else {
                0.0
            };
        }
    }
}

/// Zero mean and unit variance per dimension across the sentence.
pub fn cmvn(frames: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let stats = CmvnStats::fit(frames)?;
    Ok(frames
        .iter()
        .map(|f| {
            let mut g = f.clone();
            stats.apply(&mut g);
            g
        })
        .collect())
}
