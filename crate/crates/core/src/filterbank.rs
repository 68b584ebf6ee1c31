//! S-channel maximally decimated cosine-modulated filter bank.
//!
//! Channel `s` (1-based) has taps
//! `g_s[k] = g[k] cos((2s-1)(2k-S-1)pi / 4S) / sqrt(S)`, `k = 1..2S`, with
//! the sine prototype `g[k] = sqrt(2) sin(pi (k - 0.5) / 2S)`. The bank is a
//! lapped orthogonal transform: analysis followed by synthesis is the
//! identity and subband energy equals signal energy.
//!
//! Boundary convention: the input is zero-padded to a multiple of `S` and
//! every output index whose filter support touches the padded signal is
//! kept. This amounts to `S` zeros on each side, `len/S + 1` coefficients
//! per channel, and exact reconstruction over the original support.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CmfbBank {
    channels: usize,
    /// `filters[s][k - 1] = g_{s+1}[k]`.
    filters: Vec<Vec<f64>>,
}

/// Decimated subband components of one waveform.
#[derive(Debug, Clone, PartialEq)]
pub struct SubbandSet {
    pub components: Vec<Vec<f64>>,
    pub origin: String,
    /// Length of the analyzed signal before padding.
    pub signal_len: usize,
}

impl SubbandSet {
    pub fn channels(&self) -> usize {
        self.components.len()
    }

    pub fn energy(&self) -> f64 {
        self.components.iter().flatten().map(|v| v * v).sum()
    }
}

/// Designs the bank from the closed-form taps.
pub fn design_cmfb(channels: usize) -> Result<CmfbBank> {
    if channels == 0 {
        return Err(Error::invalid("filter bank needs at least one channel"));
    }
    let s_f = channels as f64;
    let filters = (1..=channels)
        .map(|s| {
            (1..=2 * channels)
                .map(|k| {
                    let k = k as f64;
                    let proto = 2f64.sqrt() * (PI * (k - 0.5) / (2.0 * s_f)).sin();
                    let arg = (2.0 * s as f64 - 1.0) / (4.0 * s_f) * (2.0 * k - s_f - 1.0) * PI;
                    proto * arg.cos() / s_f.sqrt()
                })
                .collect()
        })
        .collect();
    Ok(CmfbBank { channels, filters })
}

impl CmfbBank {
    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Taps of channel `s` (0-based), `2S` values.
    pub fn filter(&self, s: usize) -> &[f64] {
        &self.filters[s]
    }

    /// Number of coefficients per channel for a signal of `len` samples.
    pub fn coefficients_for(&self, len: usize) -> usize {
        len.max(1).div_ceil(self.channels) + 1
    }

    /// Largest deviation of `sum_k g_s[k] g_s'[k - mS]` from `delta(s,s') delta(m)`
    /// over all channel pairs and shifts.
    pub fn orthogonality_residual(&self) -> f64 {
        let n = self.channels;
        let mut worst = 0.0f64;
        for a in 0..n {
            for b in 0..n {
                for shift in [-1i64, 0, 1] {
                    let mut acc = 0.0;
                    for k in 0..2 * n as i64 {
                        let j = k - shift * n as i64;
                        if (0..2 * n as i64).contains(&j) {
                            acc += self.filters[a][k as usize] * self.filters[b][j as usize];
                        }
                    }
                    let target = if a == b && shift == 0 { 1.0 } else { 0.0 };
                    worst = worst.max((acc - target).abs());
                }
            }
        }
        worst
    }

    fn analyze_channel(&self, x: &[f64], s: usize, n_coef: usize) -> Vec<f64> {
        let n = self.channels;
        let g = &self.filters[s];
        (0..n_coef)
            .map(|m| {
                // output index n = m + 1 reads x[nS - k] for k = 1..2S
                let base = (m + 1) * n;
                let mut acc = 0.0;
                for (k, tap) in g.iter().enumerate() {
                    let Some(i) = base.checked_sub(k + 1) else { break };
                    if let Some(v) = x.get(i) {
                        acc += v * tap;
                    }
                }
                acc
            })
            .collect()
    }

    /// `x^s[n] = sum_k x[k] g_s[nS - k]` under the padding convention.
    pub fn analyze(&self, x: &[f64]) -> SubbandSet {
        self.analyze_named(x, "")
    }

    pub fn analyze_named(&self, x: &[f64], origin: &str) -> SubbandSet {
        let n_coef = self.coefficients_for(x.len());
        let components = (0..self.channels)
            .map(|s| self.analyze_channel(x, s, n_coef))
            .collect();
        SubbandSet {
            components,
            origin: origin.to_string(),
            signal_len: x.len(),
        }
    }

    /// Same as [`analyze`](Self::analyze) with channels computed in parallel.
    pub fn analyze_par(&self, x: &[f64]) -> SubbandSet {
        let n_coef = self.coefficients_for(x.len());
        let components = (0..self.channels)
            .into_par_iter()
            .map(|s| self.analyze_channel(x, s, n_coef))
            .collect();
        SubbandSet {
            components,
            origin: String::new(),
            signal_len: x.len(),
        }
    }

    /// Transpose of the analysis operator, restricted to the original support.
    pub fn synthesize(&self, sb: &SubbandSet) -> Result<Vec<f64>> {
        let n = self.channels;
        if sb.channels() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: sb.channels(),
            });
        }
        let n_coef = self.coefficients_for(sb.signal_len);
        if sb.components.iter().any(|c| c.len() != n_coef) {
            return Err(Error::invalid("subband component length does not match the signal length"));
        }
        let mut out = vec![0.0; sb.signal_len];
        for (s, comp) in sb.components.iter().enumerate() {
            let g = &self.filters[s];
            for (m, &c) in comp.iter().enumerate() {
                if c == 0.0 {
                    continue;
                }
                let base = (m + 1) * n;
                for (k, tap) in g.iter().enumerate() {
                    let Some(i) = base.checked_sub(k + 1) else { break };
                    if let Some(o) = out.get_mut(i) {
                        *o += c * tap;
                    }
                }
            }
        }
        Ok(out)
    }
}
