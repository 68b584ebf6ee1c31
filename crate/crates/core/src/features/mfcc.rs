//! MFCC front-end: pre-emphasis, Hamming-windowed frames, power spectrum,
//! triangular mel filters, log, orthonormal DCT-II, and regression deltas.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{deltas_frames, floored_log};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MfccConfig {
    pub sample_rate: u32,
    pub frame_len: usize,
    pub hop: usize,
    pub n_fft: usize,
    pub n_mels: usize,
    pub n_ceps: usize,
    pub preemphasis: f64,
    pub f_low: f64,
    pub f_high: f64,
    /// Frames concatenated around the phone centre.
    pub context_frames: usize,
}

impl Default for MfccConfig {
    fn default() -> Self {
        MfccConfig {
            sample_rate: 16_000,
            frame_len: 400,
            hop: 160,
            n_fft: 512,
            n_mels: 26,
            n_ceps: 13,
            preemphasis: 0.97,
            f_low: 0.0,
            f_high: 8000.0,
            context_frames: 10,
        }
    }
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Precomputed analysis state; cheap to share across threads.
#[derive(Clone)]
pub struct MelFrontEnd {
    pub config: MfccConfig,
    window: Vec<f64>,
    /// `(first bin, weights)` per mel filter.
    filters: Vec<(usize, Vec<f64>)>,
    dct: Vec<Vec<f64>>,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for MelFrontEnd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MelFrontEnd").field("config", &self.config).finish()
    }
}

impl MelFrontEnd {
    pub fn new(config: MfccConfig) -> Result<Self> {
        if config.frame_len == 0 || config.hop == 0 || config.n_fft < config.frame_len {
            return Err(Error::invalid("MFCC frame must be non-empty and fit the FFT"));
        }
        if config.n_ceps > config.n_mels || config.n_mels == 0 {
            return Err(Error::invalid("need 0 < n_ceps <= n_mels"));
        }
        let nyquist = config.sample_rate as f64 / 2.0;
        if !(0.0 <= config.f_low && config.f_low < config.f_high && config.f_high <= nyquist) {
            return Err(Error::invalid("mel range must satisfy 0 <= low < high <= fs/2"));
        }
        let n = config.frame_len;
        let window = (0..n)
            .map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / (n - 1) as f64).cos())
            .collect();
        let n_bins = config.n_fft / 2 + 1;
        let bin_hz = config.sample_rate as f64 / config.n_fft as f64;
        let (mlo, mhi) = (hz_to_mel(config.f_low), hz_to_mel(config.f_high));
        let edges: Vec<f64> = (0..config.n_mels + 2)
            .map(|i| mel_to_hz(mlo + (mhi - mlo) * i as f64 / (config.n_mels + 1) as f64))
            .collect();
        let filters = (0..config.n_mels)
            .map(|m| {
                let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
                let weights: Vec<(usize, f64)> = (0..n_bins)
                    .filter_map(|k| {
                        let f = k as f64 * bin_hz;
                        let w = if f > lo && f <= mid {
                            (f - lo) / (mid - lo)
                        } else if f > mid && f < hi {
                            (hi - f) / (hi - mid)
                        } else {
                            0.0
                        };
                        (w > 0.0).then_some((k, w))
                    })
                    .collect();
                let first = weights.first().map_or(0, |w| w.0);
                (first, weights.into_iter().map(|w| w.1).collect())
            })
            .collect();
        let nm = config.n_mels as f64;
        let dct = (0..config.n_ceps)
            .map(|i| {
                let scale = if i == 0 { (1.0 / nm).sqrt() } else { (2.0 / nm).sqrt() };
                (0..config.n_mels)
                    .map(|j| scale * (PI * i as f64 * (j as f64 + 0.5) / nm).cos())
                    .collect()
            })
            .collect();
        let fft = FftPlanner::new().plan_fft_forward(config.n_fft);
        Ok(MelFrontEnd {
            config,
            window,
            filters,
            dct,
            fft,
        })
    }

    /// `floor((L - frame_len) / hop) + 1`, or 0 when shorter than a frame.
    pub fn frame_count(&self, len: usize) -> usize {
        if len < self.config.frame_len {
            0
        } else {
            (len - self.config.frame_len) / self.config.hop + 1
        }
    }

    /// Centre of frame `t` in samples.
    pub fn frame_center(&self, t: usize) -> f64 {
        (t * self.config.hop) as f64 + (self.config.frame_len as f64 - 1.0) / 2.0
    }

    /// Log mel energies per frame.
    pub fn log_mel(&self, samples: &[f64]) -> Result<Vec<Vec<f64>>> {
        let n_frames = self.frame_count(samples.len());
        if n_frames == 0 {
            return Err(Error::TooShort {
                needed: self.config.frame_len,
                found: samples.len(),
            });
        }
        let a = self.config.preemphasis;
        let emph: Vec<f64> = (0..samples.len())
            .map(|i| samples[i] - if i > 0 { a * samples[i - 1] } else { 0.0 })
            .collect();
        let mut buf = vec![Complex::new(0.0, 0.0); self.config.n_fft];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        let mut power = vec![0.0; self.config.n_fft / 2 + 1];
        let mut out = Vec::with_capacity(n_frames);
        for t in 0..n_frames {
            let start = t * self.config.hop;
            buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
            for (i, w) in self.window.iter().enumerate() {
                buf[i].re = emph[start + i] * w;
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for (p, c) in power.iter_mut().zip(&buf) {
                *p = c.norm_sqr();
            }
            out.push(
                self.filters
                    .iter()
                    .map(|(first, w)| floored_log(w.iter().zip(&power[*first..]).map(|(a, b)| a * b).sum()))
                    .collect(),
            );
        }
        Ok(out)
    }

    /// Cepstra of log-mel frames.
    pub fn cepstra(&self, log_mel: &[Vec<f64>]) -> Vec<Vec<f64>> {
        log_mel
            .iter()
            .map(|m| self.dct.iter().map(|row| row.iter().zip(m).map(|(a, b)| a * b).sum()).collect())
            .collect()
    }

    /// Cepstra with deltas and delta-deltas appended (39 dimensions by
    /// default).
    pub fn dynamic_cepstra(&self, log_mel: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let c = self.cepstra(log_mel);
        let d1 = deltas_frames(&c);
        let d2 = deltas_frames(&d1);
        c.into_iter()
            .zip(d1)
            .zip(d2)
            .map(|((mut a, b), d)| {
                a.extend(b);
                a.extend(d);
                a
            })
            .collect()
    }

    /// Full per-frame MFCC sequence of a waveform.
    pub fn mfcc_sequence(&self, samples: &[f64]) -> Result<Vec<Vec<f64>>> {
        Ok(self.dynamic_cepstra(&self.log_mel(samples)?))
    }
}

/// Indices of the `count` frames whose centres are nearest `center`, in time
/// order. Ties go to the earlier frame.
pub fn nearest_frames(fe: &MelFrontEnd, n_frames: usize, center: usize, count: usize) -> Result<Vec<usize>> {
    if n_frames < count {
        return Err(Error::TooShort {
            needed: count,
            found: n_frames,
        });
    }
    let c = center as f64;
    let mut idx: Vec<usize> = (0..n_frames).collect();
    idx.sort_by(|&a, &b| {
        let (da, db) = ((fe.frame_center(a) - c).abs(), (fe.frame_center(b) - c).abs());
        da.total_cmp(&db).then(a.cmp(&b))
    });
    idx.truncate(count);
    idx.sort_unstable();
    Ok(idx)
}

/// Concatenates the frames nearest the phone centre into one vector.
pub fn concat_center(fe: &MelFrontEnd, frames: &[Vec<f64>], center: usize) -> Result<Vec<f64>> {
    let idx = nearest_frames(fe, frames.len(), center, fe.config.context_frames)?;
    Ok(idx.into_iter().flat_map(|t| frames[t].iter().copied()).collect())
}
