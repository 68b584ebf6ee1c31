//! Desk-scale synthetic corpus.
//!
//! Every class is a source-filter template: a pulse train at a class pitch
//! drives one damped resonance (a formant) inside each of `n_bands` equal
//! frequency bands, under a class-specific temporal envelope. Inside band
//! `b` the formant of class `c` sits at slot `perm_b(c)` of `K` evenly
//! spaced slots, so any single band separates all classes. `margin` scales
//! the slot spread around the band centre: 1 uses 80% of the band width,
//! smaller values push formants of different classes together.
//!
//! Utterances are `edge_ms` of silence, then 5-15 phone instances
//! separated by silent gaps, then `edge_ms` of silence. A faint white
//! background covers the whole utterance, as in real recordings.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

use super::{write_wav, ClassMap, PhoneSegment, Utterance, SAMPLE_RATE};

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub n_classes: usize,
    pub n_utterances: usize,
    pub phones_per_utterance: (usize, usize),
    pub phone_ms: (f64, f64),
    pub gap_ms: (f64, f64),
    pub edge_ms: f64,
    pub n_bands: usize,
    /// Formant bandwidth in Hz.
    pub bandwidth_hz: f64,
    /// 0 gives exact templates; 1 gives the full amplitude, pitch, phase
    /// and duration jitter.
    pub jitter: f64,
    /// Class separation knob in (0, 1].
    pub margin: f64,
    /// Seeds the class templates, shared by all splits.
    pub template_seed: u64,
    /// Formant level drop per band, in dB, imitating the spectral tilt of
    /// voiced speech.
    pub tilt_db: f64,
    /// Level of a white background relative to the mean phone power, in
    /// dB; `None` leaves gaps and edges digitally silent.
    pub background_db: Option<f64>,
    /// Level of white aspiration noise inside each phone relative to its
    /// voiced part, in dB.
    pub aspiration_db: Option<f64>,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_classes: 8,
            n_utterances: 40,
            phones_per_utterance: (5, 15),
            phone_ms: (80.0, 160.0),
            gap_ms: (0.0, 20.0),
            edge_ms: 150.0,
            n_bands: 4,
            bandwidth_hz: 120.0,
            jitter: 1.0,
            margin: 1.0,
            template_seed: 0x5eed,
            tilt_db: 0.0,
            background_db: Some(-40.0),
            aspiration_db: None,
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Envelope {
    Flat,
    Rising,
    Falling,
    Bump,
}

impl Envelope {
    fn gain(self, tau: f64) -> f64 {
        match self {
            Envelope::Flat => 1.0,
            Envelope::Rising => 0.3 + 0.7 * tau,
            Envelope::Falling => 1.0 - 0.7 * tau,
            Envelope::Bump => 0.3 + 0.7 * (PI * tau).sin(),
        }
    }
}

#[derive(Debug, Clone)]
struct ClassTemplate {
    /// (frequency Hz, relative amplitude)
    formants: Vec<(f64, f64)>,
    f0: f64,
    level: f64,
    envelope: Envelope,
}

fn templates(spec: &SynthSpec) -> Vec<ClassTemplate> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.template_seed);
    let k = spec.n_classes;
    let band_width = SAMPLE_RATE as f64 / 2.0 / spec.n_bands as f64;
    let perms: Vec<Vec<usize>> = (0..spec.n_bands)
        .map(|_| {
            let mut p: Vec<usize> = (0..k).collect();
            p.shuffle(&mut rng);
            p
        })
        .collect();
    let envelopes = [Envelope::Flat, Envelope::Rising, Envelope::Falling, Envelope::Bump];
    (0..k)
        .map(|c| {
            let formants = (0..spec.n_bands)
                .map(|b| {
                    let slot = (perms[b][c] as f64 + 0.5) / k as f64 - 0.5;
                    let pos = 0.5 + spec.margin * 0.8 * slot;
                    let freq = band_width * (b as f64 + pos);
                    let amp = rng.random_range(0.5..1.5) * 10f64.powf(-spec.tilt_db * b as f64 / 20.0);
                    (freq, amp)
                })
                .collect();
            ClassTemplate {
                formants,
                f0: rng.random_range(100.0..180.0),
                level: rng.random_range(0.6..1.4),
                envelope: envelopes[c % envelopes.len()],
            }
        })
        .collect()
}

/// Pulse train through one two-pole resonator per formant.
fn render_phone(t: &ClassTemplate, len: usize, spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let fs = SAMPLE_RATE as f64;
    let j = spec.jitter;
    let mut u = || -> f64 { rng.random_range(-1.0..1.0) };
    let f0 = t.f0 * (1.0 + 0.1 * j * u());
    let period = fs / f0;
    let offset = (0.5 + 0.5 * j * u()) * period;
    let mut pulses = vec![0.0; len];
    let mut p = offset;
    while (p as usize) < len {
        pulses[p as usize] = 1.0;
        p += period;
    }
    let r = (-PI * spec.bandwidth_hz / fs).exp();
    let mut out = vec![0.0; len];
    for &(freq, amp) in &t.formants {
        let a = amp * (1.0 + 0.3 * j * u());
        let phi = PI * j * u();
        let theta = 2.0 * PI * freq / fs;
        let (a1, a2) = (2.0 * r * theta.cos(), -r * r);
        let (b0, b1) = (phi.sin(), r * (theta - phi).sin());
        let (mut y1, mut y2, mut x1) = (0.0, 0.0, 0.0);
        for n in 0..len {
            let y = a1 * y1 + a2 * y2 + b0 * pulses[n] + b1 * x1;
            out[n] += a * y;
            y2 = y1;
            y1 = y;
            x1 = pulses[n];
        }
    }
    let level = t.level * (1.0 + 0.3 * j * u());
    if let Some(db) = spec.aspiration_db {
        let rms = (out.iter().map(|v| v * v).sum::<f64>() / len as f64).sqrt();
        let sd = rms * 10f64.powf(db / 20.0);
        for v in out.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut *rng);
            *v += sd * z;
        }
    }
    let ramp = (0.005 * fs) as usize;
    for (n, v) in out.iter_mut().enumerate() {
        let tau = n as f64 / len as f64;
        let fade = if n < ramp {
            0.5 - 0.5 * (PI * n as f64 / ramp as f64).cos()
        } else if len - n <= ramp {
            0.5 - 0.5 * (PI * (len - n) as f64 / ramp as f64).cos()
        } else {
            1.0
        };
        *v *= t.envelope.gain(tau) * fade;
    }
    let rms = (out.iter().map(|v| v * v).sum::<f64>() / len as f64).sqrt();
    if rms > 0.0 {
        out.iter_mut().for_each(|v| *v *= level / rms);
    }
    out
}

fn ms_to_samples(ms: f64) -> usize {
    (ms * SAMPLE_RATE as f64 / 1000.0).round() as usize
}

/// Class map naming the synthetic classes `c0..c{K-1}`.
pub fn synthetic_class_map(n_classes: usize) -> ClassMap {
    let names: Vec<String> = (0..n_classes).map(|c| format!("c{c}")).collect();
    ClassMap::from_names(&names)
}

/// Generates `spec.n_utterances` utterances. Identical `(spec, seed)` give
/// identical output; templates depend only on `spec.template_seed`.
pub fn make_synthetic_corpus(spec: &SynthSpec, seed: u64) -> Result<Vec<Utterance>> {
    if spec.n_classes < 2 {
        return Err(Error::invalid("synthetic corpus needs at least two classes"));
    }
    if spec.n_bands == 0 || !(spec.margin > 0.0 && spec.margin <= 1.0) {
        return Err(Error::invalid("n_bands must be positive and margin in (0, 1]"));
    }
    let (lo, hi) = spec.phones_per_utterance;
    if lo == 0 || lo > hi {
        return Err(Error::invalid("phones_per_utterance must be a non-empty range"));
    }
    let templates = templates(spec);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let j = spec.jitter;
    let mid_phone = 0.5 * (spec.phone_ms.0 + spec.phone_ms.1);
    let mid_gap = 0.5 * (spec.gap_ms.0 + spec.gap_ms.1);
    let edge = ms_to_samples(spec.edge_ms);
    let mut utterances = Vec::with_capacity(spec.n_utterances);
    for i in 0..spec.n_utterances {
        let n_phones = rng.random_range(lo..=hi);
        let mut samples = vec![0.0; edge];
        let mut phones = Vec::with_capacity(n_phones);
        for p in 0..n_phones {
            if p > 0 {
                let gap = mid_gap + j * rng.random_range(-0.5..=0.5) * (spec.gap_ms.1 - spec.gap_ms.0);
                samples.extend(std::iter::repeat_n(0.0, ms_to_samples(gap)));
            }
            let class_id = rng.random_range(0..spec.n_classes);
            let dur = mid_phone + j * rng.random_range(-0.5..=0.5) * (spec.phone_ms.1 - spec.phone_ms.0);
            let len = ms_to_samples(dur).max(1);
            let wave = render_phone(&templates[class_id], len, spec, &mut rng);
            let start = samples.len();
            samples.extend(wave);
            phones.push(PhoneSegment {
                start,
                end: start + len,
                label: format!("c{class_id}"),
                class_id,
            });
        }
        samples.extend(std::iter::repeat_n(0.0, edge));
        if let Some(db) = spec.background_db {
            let speech: f64 = phones.iter().flat_map(|p| &samples[p.start..p.end]).map(|v| v * v).sum();
            let n: usize = phones.iter().map(|p| p.end - p.start).sum();
            let sd = (speech / n as f64 * 10f64.powf(db / 10.0)).sqrt();
            for v in samples.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v += sd * z;
            }
        }
        let peak = samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if peak > 0.0 {
            samples.iter_mut().for_each(|v| *v *= 0.5 / peak);
        }
        // quantize so in-memory and on-disk corpora agree exactly
        samples
            .iter_mut()
            .for_each(|v| *v = (*v * 32768.0).round().clamp(-32768.0, 32767.0) / 32768.0);
        utterances.push(Utterance {
            id: format!("syn{seed}_{i:04}"),
            samples,
            sample_rate: SAMPLE_RATE,
            phones,
        });
    }
    Ok(utterances)
}

/// Babble: the sum of `talkers` independent synthetic talkers, each a
/// concatenation of utterances, trimmed to `seconds` and peak-normalized.
pub fn make_babble(spec: &SynthSpec, talkers: usize, seconds: f64, seed: u64) -> Result<Vec<f64>> {
    if talkers == 0 || !(seconds > 0.0) {
        return Err(Error::invalid("babble needs at least one talker and a positive duration"));
    }
    let len = (seconds * SAMPLE_RATE as f64).round() as usize;
    let mut mix = vec![0.0; len];
    for t in 0..talkers {
        let mut track = Vec::with_capacity(len);
        let mut round = 0u64;
        while track.len() < len {
            let one = SynthSpec {
                n_utterances: 4,
                ..spec.clone()
            };
            let talker_seed = seed.wrapping_mul(1000).wrapping_add(100 * t as u64 + round);
            for u in make_synthetic_corpus(&one, talker_seed)? {
                track.extend(u.samples);
            }
            round += 1;
        }
        for (m, v) in mix.iter_mut().zip(&track) {
            *m += v;
        }
    }
    let peak = mix.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        mix.iter_mut().for_each(|v| *v *= 0.9 / peak);
    }
    Ok(mix)
}

/// Writes utterances as `<id>.wav` + `<id>.phn` pairs under `dir`.
pub fn write_corpus(dir: &Path, utterances: &[Utterance]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for u in utterances {
        write_wav(&dir.join(format!("{}.wav", u.id)), &u.samples)?;
        let mut text = String::new();
        for p in &u.phones {
            text.push_str(&format!("{} {} {}\n", p.start, p.end, p.label));
        }
        let phn = dir.join(format!("{}.phn", u.id));
        fs::write(&phn, text).map_err(|e| Error::io(&phn, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_single_class() {
        let spec = SynthSpec {
            n_classes: 1,
            ..Default::default()
        };
        assert!(make_synthetic_corpus(&spec, 0).is_err());
    }

    #[test]
    fn zero_jitter_gives_pure_templates() {
        let spec = SynthSpec {
            n_classes: 2,
            n_utterances: 6,
            jitter: 0.0,
            background_db: None,
            ..Default::default()
        };
        let corpus = make_synthetic_corpus(&spec, 3).unwrap();
        let mut seen: [Option<Vec<f64>>; 2] = [None, None];
        for u in &corpus {
            // peak normalization differs per utterance, so compare shapes
            for p in &u.phones {
                let w = &u.samples[p.start..p.end];
                let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
                let shape: Vec<f64> = w.iter().map(|v| v / norm).collect();
                match &seen[p.class_id] {
                    None => seen[p.class_id] = Some(shape),
                    Some(s) => {
                        assert_eq!(s.len(), shape.len());
                        let dot: f64 = s.iter().zip(&shape).map(|(a, b)| a * b).sum();
                        assert!(dot > 0.9999, "dot {dot}");
                    }
                }
            }
        }
    }

    #[test]
    fn deterministic_and_valid() {
        let spec = SynthSpec {
            n_utterances: 5,
            background_db: None,
            ..Default::default()
        };
        let a = make_synthetic_corpus(&spec, 11).unwrap();
        let b = make_synthetic_corpus(&spec, 11).unwrap();
        assert_eq!(a, b);
        for u in &a {
            u.validate().unwrap();
            assert!((5..=15).contains(&u.phones.len()));
            assert!(u.samples[..2000].iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn class_counts_near_uniform() {
        let spec = SynthSpec {
            n_utterances: 150,
            ..Default::default()
        };
        let corpus = make_synthetic_corpus(&spec, 5).unwrap();
        let mut counts = vec![0usize; 8];
        for p in corpus.iter().flat_map(|u| &u.phones) {
            counts[p.class_id] += 1;
        }
        let total: usize = counts.iter().sum();
        assert!(total >= 1000, "{total}");
        let uniform = total as f64 / 8.0;
        for c in counts {
            assert!((c as f64 - uniform).abs() <= 0.2 * uniform, "{c} vs {uniform}");
        }
    }
}
