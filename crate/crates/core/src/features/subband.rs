//! Dynamic subband features `Omega^s = [omega, d omega, dd omega]` where
//! `omega_t = log |x^{t,s}|^2` over `T` frames of a subband component.

use serde::{Deserialize, Serialize};

use crate::corpus::{extract_centered, window_len, SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::filterbank::{design_cmfb, CmfbBank};
use crate::kernels::SubbandFeature;

use super::{deltas, floored_log};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SubbandFeatureConfig {
    pub channels: usize,
    /// Rectangular window around the phone centre for the waveform part.
    pub wave_ms: f64,
    /// Window whose subband components are framed for `Omega`.
    pub omega_ms: f64,
    pub frames: usize,
    pub frame_ms: f64,
    pub hop_ms: f64,
    /// Standardize `Omega` with per-sentence statistics.
    pub standardize: bool,
    /// Scale `Omega` by `1/sqrt(3T)` so standardized vectors have roughly
    /// unit norm inside `K_p`.
    pub unit_omega: bool,
}

impl Default for SubbandFeatureConfig {
    fn default() -> Self {
        SubbandFeatureConfig {
            channels: 16,
            wave_ms: 100.0,
            omega_ms: 160.0,
            frames: 10,
            frame_ms: 25.0,
            hop_ms: 15.0,
            standardize: true,
            unit_omega: true,
        }
    }
}

/// Frame geometry in subband samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OmegaFraming {
    pub frame_len: usize,
    pub hop: usize,
    pub frames: usize,
}

impl OmegaFraming {
    /// Durations converted at the decimated rate `fs / S`, rounded down.
    pub fn for_config(cfg: &SubbandFeatureConfig) -> Result<Self> {
        if cfg.channels == 0 || cfg.frames == 0 {
            return Err(Error::invalid("channels and frames must be positive"));
        }
        let rate = SAMPLE_RATE as f64 / cfg.channels as f64;
        let frame_len = (cfg.frame_ms * rate / 1000.0).floor() as usize;
        let hop = (cfg.hop_ms * rate / 1000.0).floor() as usize;
        if frame_len == 0 || hop == 0 {
            return Err(Error::invalid(format!(
                "{} ms frames with {} ms hop are empty at {} channels",
                cfg.frame_ms, cfg.hop_ms, cfg.channels
            )));
        }
        Ok(OmegaFraming {
            frame_len,
            hop,
            frames: cfg.frames,
        })
    }

    /// Subband samples covered by `frames` frames.
    pub fn span(&self) -> usize {
        self.frame_len + (self.frames - 1) * self.hop
    }
}

fn frame_log_energies(xs: &[f64], start: usize, framing: &OmegaFraming, count: usize) -> Vec<f64> {
    (0..count)
        .map(|t| {
            let a = start + t * framing.hop;
            floored_log(xs[a..a + framing.frame_len].iter().map(|v| v * v).sum())
        })
        .collect()
}

/// `[omega, delta, delta2]` of length `3T` from the centred `T` frames of
/// one subband component.
pub fn subband_dynamics(xs: &[f64], framing: &OmegaFraming) -> Result<Vec<f64>> {
    let span = framing.span();
    if xs.len() < span {
        return Err(Error::TooShort {
            needed: span,
            found: xs.len(),
        });
    }
    let start = (xs.len() - span) / 2;
    let omega = frame_log_energies(xs, start, framing, framing.frames);
    let d1 = deltas(&omega);
    let d2 = deltas(&d1);
    let mut out = omega;
    out.extend(d1);
    out.extend(d2);
    Ok(out)
}

/// Mean and standard deviation of the `omega`, delta and delta-delta
/// trajectories of every subband over a whole sentence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmegaStats {
    /// `stats[s][part] = (mean, std)`, `std = 0` for constant tracks.
    pub stats: Vec<[(f64, f64); 3]>,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
    let std = if var <= 1e-20 * (1.0 + m * m) { 0.0 } else { var.sqrt() };
    (m, std)
}

/// Frames every subband trajectory of the full sentence with the `Omega`
/// geometry and collects per-track statistics.
pub fn sentence_omega_stats(bank: &CmfbBank, samples: &[f64], framing: &OmegaFraming) -> Result<OmegaStats> {
    let sb = bank.analyze(samples);
    let stats = sb
        .components
        .iter()
        .map(|xs| {
            if xs.len() < framing.frame_len + framing.hop {
                return Err(Error::TooShort {
                    needed: (framing.frame_len + framing.hop) * bank.channels(),
                    found: samples.len(),
                });
            }
            let count = (xs.len() - framing.frame_len) / framing.hop + 1;
            let omega = frame_log_energies(xs, 0, framing, count);
            let d1 = deltas(&omega);
            let d2 = deltas(&d1);
            Ok([mean_std(&omega), mean_std(&d1), mean_std(&d2)])
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(OmegaStats { stats })
}

impl OmegaStats {
    /// Standardizes the three parts of one subband's `Omega` in place.
    pub fn apply(&self, subband: usize, omega: &mut [f64]) {
        let t = omega.len() / 3;
        for (part, chunk) in omega.chunks_mut(t).enumerate() {
            let (m, s) = self.stats[subband][part];
            for v in chunk {
                *v = if s > 0.0 { (*v - m) / s } else { 0.0 };
            }
        }
    }
}

/// Turns phone-centred windows of a sentence into per-subband kernel inputs.
#[derive(Debug, Clone)]
pub struct SubbandExtractor {
    pub config: SubbandFeatureConfig,
    bank: CmfbBank,
    framing: OmegaFraming,
}

impl SubbandExtractor {
    pub fn new(config: SubbandFeatureConfig) -> Result<Self> {
        let bank = design_cmfb(config.channels)?;
        let framing = OmegaFraming::for_config(&config)?;
        let available = bank.coefficients_for(window_len(config.omega_ms));
        if available < framing.span() {
            return Err(Error::TooShort {
                needed: framing.span() * config.channels,
                found: window_len(config.omega_ms),
            });
        }
        Ok(SubbandExtractor { config, bank, framing })
    }

    pub fn bank(&self) -> &CmfbBank {
        &self.bank
    }

    pub fn framing(&self) -> &OmegaFraming {
        &self.framing
    }

    pub fn sentence_stats(&self, samples: &[f64]) -> Result<Option<OmegaStats>> {
        if !self.config.standardize {
            return Ok(None);
        }
        sentence_omega_stats(&self.bank, samples, &self.framing).map(Some)
    }

    /// Features of the phone centred at `center`, one per subband.
    pub fn features(&self, samples: &[f64], center: usize, stats: Option<&OmegaStats>) -> Result<Vec<SubbandFeature>> {
        let wave = extract_centered(samples, center, window_len(self.config.wave_ms));
        let wide = extract_centered(samples, center, window_len(self.config.omega_ms));
        let wave_sb = self.bank.analyze(&wave);
        let wide_sb = self.bank.analyze(&wide);
        let scale = if self.config.unit_omega {
            1.0 / ((3 * self.framing.frames) as f64).sqrt()
        } else {
            1.0
        };
        wave_sb
            .components
            .iter()
            .zip(&wide_sb.components)
            .enumerate()
            .map(|(s, (w, xs))| {
                let mut omega = subband_dynamics(xs, &self.framing)?;
                if let Some(st) = stats {
                    st.apply(s, &mut omega);
                }
                omega.iter_mut().for_each(|v| *v *= scale);
                Ok(SubbandFeature::new(w, omega))
            })
            .collect()
    }

    /// Features of every phone centre of one sentence.
    pub fn sentence_features(&self, samples: &[f64], centers: &[usize]) -> Result<Vec<Vec<SubbandFeature>>> {
        let stats = self.sentence_stats(samples)?;
        centers
            .iter()
            .map(|&c| self.features(samples, c, stats.as_ref()))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::LOG_FLOOR;
    use proptest::prelude::*;

    fn framing16() -> OmegaFraming {
        OmegaFraming::for_config(&SubbandFeatureConfig::default()).unwrap()
    }

    #[test]
    fn default_geometry() {
        let f = framing16();
        assert_eq!((f.frame_len, f.hop, f.span()), (25, 15, 160));
        // a 160 ms window gives 161 subband samples at 16 channels
        assert!(SubbandExtractor::new(SubbandFeatureConfig::default()).is_ok());
        for s in [1, 4, 8, 32] {
            let cfg = SubbandFeatureConfig {
                channels: s,
                ..Default::default()
            };
            assert!(SubbandExtractor::new(cfg).is_ok(), "S = {s}");
        }
    }

    #[test]
    fn constant_energy_has_zero_dynamics() {
        let xs = vec![0.3; 161];
        let om = subband_dynamics(&xs, &framing16()).unwrap();
        assert_eq!(om.len(), 30);
        assert!(om[10..].iter().all(|&v| v.abs() < 1e-12));
    }

    #[test]
    fn silent_subband_is_floored() {
        let om = subband_dynamics(&[0.0; 161], &framing16()).unwrap();
        assert!(om[..10].iter().all(|&v| v == LOG_FLOOR.ln()));
        assert!(om.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn exponential_ramp_gives_unit_slope() {
        // non-overlapping frames, each a single sample with energy e^t
        let framing = OmegaFraming {
            frame_len: 1,
            hop: 1,
            frames: 10,
        };
        let xs: Vec<f64> = (1..=10).map(|t| (t as f64 / 2.0).exp()).collect();
        let om = subband_dynamics(&xs, &framing).unwrap();
        for t in 0..10 {
            assert!((om[t] - (t + 1) as f64).abs() < 1e-12);
        }
        for t in 2..8 {
            assert!((om[10 + t] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn too_short_names_length() {
        match subband_dynamics(&[1.0; 100], &framing16()) {
            Err(Error::TooShort { needed, found }) => assert_eq!((needed, found), (160, 100)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn sentence_stats_standardize_tracks() {
        let ex = SubbandExtractor::new(SubbandFeatureConfig::default()).unwrap();
        let samples: Vec<f64> = (0..16000).map(|i| ((i as f64) * 0.05).sin() * (1.0 + (i as f64 / 3000.0).sin())).collect();
        let stats = ex.sentence_stats(&samples).unwrap().unwrap();
        assert_eq!(stats.stats.len(), 16);
        let feats = ex.sentence_features(&samples, &[4000, 8000, 12000]).unwrap();
        assert_eq!(feats.len(), 3);
        assert!(feats.iter().all(|f| f.len() == 16 && f.iter().all(|s| s.omega.len() == 30)));
        assert!(feats.iter().flatten().flat_map(|s| &s.omega).all(|v| v.is_finite()));
    }

    proptest! {
        #[test]
        fn sign_flip_invariant(xs in prop::collection::vec(-1.0f64..1.0, 161..200)) {
            let neg: Vec<f64> = xs.iter().map(|v| -v).collect();
            prop_assert_eq!(subband_dynamics(&xs, &framing16()).unwrap(), subband_dynamics(&neg, &framing16()).unwrap());
        }
    }
}
