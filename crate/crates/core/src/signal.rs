//! Sentence-level corruption: unit-energy normalization, additive noise at a
//! prescribed SNR, reverberation by RIR convolution, spectral coloration of
//! an RIR, and a coarse noise-variance estimate.

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{Arc, Mutex, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::corpus::{read_wav, SAMPLE_RATE};
use crate::error::{Error, Result};

/// A point on the SNR axis. `Quiet` means no additive noise at all.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SnrRepr", into = "SnrRepr")]
pub enum Snr {
    Quiet,
    Db(f64),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum SnrRepr {
    Num(f64),
    Str(String),
}

impl TryFrom<SnrRepr> for Snr {
    type Error = Error;
    fn try_from(r: SnrRepr) -> Result<Self> {
        match r {
            SnrRepr::Num(v) => Ok(Snr::Db(v)),
            SnrRepr::Str(s) => s.parse(),
        }
    }
}

impl From<Snr> for SnrRepr {
    fn from(s: Snr) -> Self {
        match s {
            Snr::Quiet => SnrRepr::Str("quiet".into()),
            Snr::Db(v) => SnrRepr::Num(v),
        }
    }
}

impl FromStr for Snr {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("quiet") || s.eq_ignore_ascii_case("inf") {
            return Ok(Snr::Quiet);
        }
        s.trim_end_matches("dB")
            .trim()
            .parse::<f64>()
            .map(Snr::Db)
            .map_err(|_| Error::invalid(format!("bad SNR '{s}'")))
    }
}

impl fmt::Display for Snr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Snr::Quiet => write!(f, "quiet"),
            Snr::Db(v) => write!(f, "{v}"),
        }
    }
}

impl Snr {
    /// Sort key placing quiet first, then decreasing SNR.
    pub fn order_key(&self) -> f64 {
        match self {
            Snr::Quiet => f64::NEG_INFINITY,
            Snr::Db(v) => -v,
        }
    }
}

/// Written as `white`, `pink` or `file:<path>` in configs.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum NoiseKind {
    White,
    Pink,
    /// Recorded noise, mono 16 kHz PCM.
    File(PathBuf),
}

impl FromStr for NoiseKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "white" => Ok(NoiseKind::White),
            "pink" => Ok(NoiseKind::Pink),
            other => match other.strip_prefix("file:") {
                Some(p) => Ok(NoiseKind::File(PathBuf::from(p))),
                None => Err(Error::invalid(format!("unknown noise kind '{other}'"))),
            },
        }
    }
}

impl TryFrom<String> for NoiseKind {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<NoiseKind> for String {
    fn from(k: NoiseKind) -> String {
        k.to_string()
    }
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoiseKind::White => write!(f, "white"),
            NoiseKind::Pink => write!(f, "pink"),
            NoiseKind::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

impl NoiseKind {
    /// Short name used in result tables.
    pub fn name(&self) -> String {
        match self {
            NoiseKind::White => "white".into(),
            NoiseKind::Pink => "pink".into(),
            NoiseKind::File(p) => p
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("file")
                .to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub seed: u64,
    /// Tile recordings shorter than the sentence (from a random offset).
    #[serde(default = "default_true")]
    pub tile: bool,
}

fn default_true() -> bool {
    true
}

impl NoiseSpec {
    pub fn new(kind: NoiseKind, seed: u64) -> Self {
        NoiseSpec { kind, seed, tile: true }
    }
}

pub fn mean_square(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
}

/// `x / sqrt(mean(x^2))`.
pub fn normalize_unit_energy(x: &[f64]) -> Result<Vec<f64>> {
    let ms = mean_square(x);
    if ms <= 0.0 || !ms.is_finite() {
        return Err(Error::SilentSignal);
    }
    let g = ms.sqrt().recip();
    Ok(x.iter().map(|v| v * g).collect())
}

fn recordings() -> &'static Mutex<HashMap<PathBuf, Arc<Vec<f64>>>> {
    static CACHE: OnceLock<Mutex<HashMap<PathBuf, Arc<Vec<f64>>>>> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

fn load_recording(path: &Path) -> Result<Arc<Vec<f64>>> {
    if let Some(r) = recordings().lock().unwrap().get(path) {
        return Ok(r.clone());
    }
    let samples = Arc::new(read_wav(path)?);
    if samples.is_empty() {
        return Err(Error::invalid(format!("{}: empty noise recording", path.display())));
    }
    recordings()
        .lock()
        .unwrap()
        .insert(path.to_path_buf(), samples.clone());
    Ok(samples)
}

fn white(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn rescale_unit(mut x: Vec<f64>) -> Vec<f64> {
    let ms = mean_square(&x);
    if ms > 0.0 {
        let g = ms.sqrt().recip();
        x.iter_mut().for_each(|v| *v *= g);
    }
    x
}

/// White noise shaped by `1/sqrt(f)` in the DFT domain (DC gain copied from
/// the first bin), giving a -3 dB/octave PSD.
fn pink(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let w = white(n, rng);
    if n < 2 {
        return w;
    }
    let mut planner = FftPlanner::<f64>::new();
    let mut buf: Vec<Complex64> = w.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut buf);
    for (k, b) in buf.iter_mut().enumerate() {
        let bin = k.min(n - k).max(1);
        *b *= (bin as f64).sqrt().recip();
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    buf.iter().map(|c| c.re).collect()
}

/// Noise of length `n` rescaled to unit mean square. Recordings are cropped
/// at a seeded offset, tiled when shorter than `n`.
pub fn gen_noise(kind: &NoiseKind, n: usize, seed: u64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::invalid("noise length must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw = match kind {
        NoiseKind::White => white(n, &mut rng),
        NoiseKind::Pink => pink(n, &mut rng),
        NoiseKind::File(path) => {
            let rec = load_recording(path)?;
            let offset = rng.random_range(0..rec.len());
            (0..n).map(|i| rec[(offset + i) % rec.len()]).collect()
        }
    };
    Ok(rescale_unit(raw))
}

/// Adds noise to the whole sentence so that `mean(clean^2) / mean(noise^2)`
/// equals `snr_db`. Returns `(noisy, scaled_noise)`.
pub fn mix_at_snr_parts(clean: &[f64], noise: &NoiseSpec, snr_db: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if clean.is_empty() {
        return Err(Error::invalid("cannot mix noise into an empty signal"));
    }
    if let NoiseKind::File(path) = &noise.kind {
        if !noise.tile {
            let rec = load_recording(path)?;
            if rec.len() < clean.len() {
                return Err(Error::TooShort {
                    needed: clean.len(),
                    found: rec.len(),
                });
            }
        }
    }
    let n = gen_noise(&noise.kind, clean.len(), noise.seed)?;
    let target = mean_square(clean) * 10f64.powf(-snr_db / 10.0);
    let g = (target / mean_square(&n)).sqrt();
    let scaled: Vec<f64> = n.iter().map(|v| v * g).collect();
    let noisy = clean.iter().zip(&scaled).map(|(c, v)| c + v).collect();
    Ok((noisy, scaled))
}

pub fn mix_at_snr(clean: &[f64], noise: &NoiseSpec, snr_db: f64) -> Result<Vec<f64>> {
    mix_at_snr_parts(clean, noise, snr_db).map(|(noisy, _)| noisy)
}

/// Room impulse response, peak-normalized so that the largest |tap| is 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rir {
    pub name: String,
    pub taps: Vec<f64>,
}

/// The two bundled synthetic responses: `Primary` plays the measured test
/// filter, `Proxy` the approximation from another source position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RirVariant {
    Primary,
    Proxy,
}

impl Rir {
    pub fn new(name: impl Into<String>, taps: Vec<f64>) -> Result<Self> {
        if taps.is_empty() {
            return Err(Error::invalid("empty impulse response"));
        }
        if taps.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFinite("impulse response tap".into()));
        }
        let peak = taps.iter().fold(0.0f64, |m, t| m.max(t.abs()));
        if peak == 0.0 {
            return Err(Error::invalid("all-zero impulse response"));
        }
        Ok(Rir {
            name: name.into(),
            taps: taps.into_iter().map(|t| t / peak).collect(),
        })
    }

    /// Loads taps from a PCM file or from a text file with one float per line.
    pub fn load(path: &Path) -> Result<Self> {
        let name = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("rir")
            .to_string();
        let is_wav = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("wav"));
        let taps = if is_wav {
            read_wav(path)?
        } else {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            text.lines()
                .enumerate()
                .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
                .map(|(i, l)| {
                    l.trim().parse::<f64>().map_err(|_| Error::Parse {
                        path: path.to_path_buf(),
                        line: i + 1,
                        msg: "expected a float".into(),
                    })
                })
                .collect::<Result<Vec<f64>>>()?
        };
        Rir::new(name, taps)
    }

    /// Exponentially decaying response with `T60 = 0.2 s`: direct path, three
    /// early reflections specific to the variant, then a diffuse noise tail.
    pub fn synthetic(variant: RirVariant) -> Self {
        let t60 = 0.2;
        let fs = SAMPLE_RATE as f64;
        let len = (1.5 * t60 * fs) as usize;
        let decay = 3.0 * 10f64.ln() / t60;
        let (name, seed, early): (&str, u64, [(f64, f64); 3]) = match variant {
            RirVariant::Primary => ("rir_primary", 17, [(3.1, 0.62), (5.7, -0.48), (8.9, 0.37)]),
            RirVariant::Proxy => ("rir_proxy", 29, [(2.3, 0.55), (7.4, 0.41), (11.2, -0.33)]),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let onset = (0.004 * fs) as usize;
        let mut taps: Vec<f64> = (0..len)
            .map(|n| {
                if n < onset {
                    return 0.0;
                }
                let t = n as f64 / fs;
                0.25 * (-decay * t).exp() * rng.sample::<f64, _>(StandardNormal)
            })
            .collect();
        taps[0] = 1.0;
        for (ms, g) in early {
            taps[(ms * fs / 1000.0) as usize] += g;
        }
        Rir::new(name, taps).expect("synthetic response is valid")
    }
}

fn fft_convolve(a: &[f64], b: &[f64], out_len: usize) -> Vec<f64> {
    let n = (a.len() + b.len() - 1).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut fa: Vec<Complex64> = a.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fa.resize(n, Complex64::default());
    let mut fb: Vec<Complex64> = b.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fb.resize(n, Complex64::default());
    fwd.process(&mut fa);
    fwd.process(&mut fb);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x *= y;
    }
    inv.process(&mut fa);
    let scale = 1.0 / n as f64;
    fa.iter().take(out_len).map(|c| c.re * scale).collect()
}

/// Linear convolution truncated to `len(x)`: `y[n] = sum_k r[k] x[n-k]`,
/// so the direct path stays aligned with the input.
pub fn convolve_rir(x: &[f64], r: &Rir) -> Result<Vec<f64>> {
    if r.taps.is_empty() {
        return Err(Error::invalid("empty impulse response"));
    }
    if x.is_empty() {
        return Ok(Vec::new());
    }
    if r.taps.len() <= 64 || x.len() <= 64 {
        let mut y = vec![0.0; x.len()];
        for (n, out) in y.iter_mut().enumerate() {
            let kmax = n.min(r.taps.len() - 1);
            *out = (0..=kmax).map(|k| r.taps[k] * x[n - k]).sum();
        }
        return Ok(y);
    }
    Ok(fft_convolve(x, &r.taps, x.len()))
}

/// DFT size used by [`spectral_coloration`]: 8192 bins, or the next power of
/// two above the filter length when it is longer.
pub fn coloration_grid(len: usize) -> usize {
    8192usize.max(len.next_power_of_two())
}

/// `20 log10(geometric mean / arithmetic mean)` of the magnitude response
/// over every bin of the [`coloration_grid`] DFT. Zero for a flat response,
/// negative otherwise, `-inf` when a bin is exactly zero.
pub fn spectral_coloration(r: &Rir) -> Result<f64> {
    if r.taps.is_empty() || r.taps.iter().all(|&t| t == 0.0) {
        return Err(Error::invalid("coloration of a zero filter"));
    }
    let n = coloration_grid(r.taps.len());
    let mut buf: Vec<Complex64> = r.taps.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    buf.resize(n, Complex64::default());
    FftPlanner::<f64>::new().plan_fft_forward(n).process(&mut buf);
    let mags: Vec<f64> = buf.iter().map(|c| c.norm()).collect();
    Ok(coloration_from_magnitudes(&mags))
}

pub(crate) fn coloration_from_magnitudes(mags: &[f64]) -> f64 {
    let n = mags.len() as f64;
    let mean = mags.iter().sum::<f64>() / n;
    if mags.iter().any(|&m| m == 0.0) {
        return f64::NEG_INFINITY;
    }
    let log_geo = mags.iter().map(|m| m.ln()).sum::<f64>() / n;
    20.0 * (log_geo - mean.ln()) / 10f64.ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseVarianceMethod {
    /// Percentile of per-frame mean squares (25 ms frames, 10 ms hop).
    FramePercentile { percentile: f64 },
    /// The caller already knows the noise variance.
    Known(f64),
}

impl Default for NoiseVarianceMethod {
    fn default() -> Self {
        NoiseVarianceMethod::FramePercentile { percentile: 10.0 }
    }
}

/// Noise mean square per sample, tracked as a low percentile of frame
/// energies so speech pauses dominate the estimate.
pub fn estimate_noise_variance(noisy: &[f64], method: NoiseVarianceMethod) -> Result<f64> {
    let percentile = match method {
        NoiseVarianceMethod::Known(v) => {
            if !(v >= 0.0) {
                return Err(Error::invalid("known noise variance must be nonnegative"));
            }
            return Ok(v);
        }
        NoiseVarianceMethod::FramePercentile { percentile } => percentile,
    };
    let frame = crate::corpus::window_len(25.0);
    let hop = crate::corpus::window_len(10.0);
    if noisy.len() < frame {
        return Err(Error::TooShort {
            needed: frame,
            found: noisy.len(),
        });
    }
    let n_frames = (noisy.len() - frame) / hop + 1;
    let mut energies: Vec<f64> = (0..n_frames)
        .map(|t| mean_square(&noisy[t * hop..t * hop + frame]))
        .collect();
    energies.sort_by(f64::total_cmp);
    let idx = ((percentile.clamp(0.0, 100.0) / 100.0) * (n_frames - 1) as f64).round() as usize;
    Ok(energies[idx])
}

/// Sentence-level corruption applied before feature extraction: the clean
/// sentence is scaled to unit energy per sample, noise is added at the
/// requested SNR and the noisy sentence is convolved with the RIR.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Corruption {
    pub noise: Option<(NoiseKind, f64)>,
    pub rir: Option<Rir>,
}

impl Corruption {
    pub fn clean() -> Self {
        Corruption::default()
    }

    pub fn noisy(kind: NoiseKind, snr: Snr) -> Self {
        Corruption {
            noise: match snr {
                Snr::Quiet => None,
                Snr::Db(db) => Some((kind, db)),
            },
            rir: None,
        }
    }

    pub fn with_rir(mut self, rir: Option<Rir>) -> Self {
        self.rir = rir;
        self
    }

    /// Short stable description used in manifests and cache keys.
    pub fn describe(&self) -> String {
        let noise = match &self.noise {
            None => "quiet".to_string(),
            Some((k, db)) => format!("{}@{db}dB", k.name()),
        };
        match &self.rir {
            None => noise,
            Some(r) => format!("{noise}+{}", r.name),
        }
    }

    /// Applies the corruption; `seed` selects the noise realization.
    /// All-zero sentences pass through unscaled.
    pub fn apply(&self, samples: &[f64], seed: u64) -> Result<Vec<f64>> {
        let mut x = match normalize_unit_energy(samples) {
            Ok(x) => x,
            Err(Error::SilentSignal) => samples.to_vec(),
            Err(e) => return Err(e),
        };
        if let Some((kind, db)) = &self.noise {
            if mean_square(&x) > 0.0 {
                x = mix_at_snr(&x, &NoiseSpec::new(kind.clone(), seed), *db)?;
            }
        }
        if let Some(r) = &self.rir {
            x = convolve_rir(&x, r)?;
        }
        Ok(x)
    }
}

/// Per-sentence seed derived from a run seed and the sentence id (FNV-1a).
pub fn sentence_seed(base: u64, id: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ base;
    for b in id.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_normalizes_to_one() {
        assert_eq!(normalize_unit_energy(&[0.5; 10]).unwrap(), vec![1.0; 10]);
        assert!(matches!(normalize_unit_energy(&[0.0; 4]), Err(Error::SilentSignal)));
    }

    proptest! {
        #[test]
        fn normalization_unit_and_odd(x in prop::collection::vec(-1.0f64..1.0, 1..200)) {
            prop_assume!(mean_square(&x) > 1e-12);
            let y = normalize_unit_energy(&x).unwrap();
            prop_assert!((mean_square(&y) - 1.0).abs() < 1e-12);
            let neg: Vec<f64> = x.iter().map(|v| -v).collect();
            let yn = normalize_unit_energy(&neg).unwrap();
            for (a, b) in y.iter().zip(&yn) {
                prop_assert_eq!(*a, -*b);
            }
        }

        #[test]
        fn achieved_snr_is_exact(snr in -10.0f64..30.0, seed in 0u64..1000) {
            let clean = normalize_unit_energy(&gen_noise(&NoiseKind::Pink, 4000, seed + 1).unwrap()).unwrap();
            let (_, n) = mix_at_snr_parts(&clean, &NoiseSpec::new(NoiseKind::White, seed), snr).unwrap();
            let achieved = 10.0 * (mean_square(&clean) / mean_square(&n)).log10();
            prop_assert!((achieved - snr).abs() < 1e-9);
        }
    }

    #[test]
    fn mixing_levels_and_determinism() {
        let clean = vec![1.0; 5000];
        for (snr, ms) in [(0.0, 1.0), (20.0, 0.01)] {
            let (_, n) = mix_at_snr_parts(&clean, &NoiseSpec::new(NoiseKind::White, 3), snr).unwrap();
            assert!((mean_square(&n) - ms).abs() < 1e-12);
        }
        let spec = NoiseSpec::new(NoiseKind::White, 9);
        assert_eq!(mix_at_snr(&clean, &spec, 5.0).unwrap(), mix_at_snr(&clean, &spec, 5.0).unwrap());
    }

    #[test]
    fn white_noise_moments() {
        let x = gen_noise(&NoiseKind::White, 1_000_000, 1).unwrap();
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        assert!(mean.abs() < 0.01);
        assert!((mean_square(&x) - 1.0).abs() < 0.01);
        assert_eq!(gen_noise(&NoiseKind::Pink, 1, 0).unwrap().len(), 1);
        assert!(gen_noise(&NoiseKind::White, 1, 0).unwrap()[0].is_finite());
        assert!("brown".parse::<NoiseKind>().is_err());
    }

    #[test]
    fn noise_unit_mean_square_for_long_sequences() {
        for kind in [NoiseKind::White, NoiseKind::Pink] {
            let x = gen_noise(&kind, 1 << 16, 4).unwrap();
            assert!((mean_square(&x) - 1.0).abs() < 1e-3);
        }
    }

    /// Least-squares slope of the periodogram in dB per octave, computed by
    /// direct DFT-free averaging over a Welch-style split.
    #[test]
    fn pink_slope_three_db_per_octave() {
        let n = 1 << 16;
        let x = gen_noise(&NoiseKind::Pink, n, 21).unwrap();
        let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        FftPlanner::<f64>::new().plan_fft_forward(n).process(&mut buf);
        let fs = SAMPLE_RATE as f64;
        let (mut sx, mut sy, mut sxx, mut sxy, mut m) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (k, c) in buf.iter().enumerate().take(n / 2) {
            let f = k as f64 * fs / n as f64;
            if !(10.0..=4000.0).contains(&f) {
                continue;
            }
            let lx = f.log2();
            let ly = 10.0 * c.norm_sqr().log10();
            sx += lx;
            sy += ly;
            sxx += lx * lx;
            sxy += lx * ly;
            m += 1.0;
        }
        let slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
        assert!((slope + 3.0).abs() < 0.5, "slope {slope}");
    }

    #[test]
    fn convolution_identity_and_delay() {
        let x: Vec<f64> = (0..100).map(|i| (i as f64 * 0.37).sin()).collect();
        let id = Rir::new("id", vec![1.0]).unwrap();
        assert_eq!(convolve_rir(&x, &id).unwrap(), x);
        let mut taps = vec![0.0; 4];
        taps.push(1.0);
        let delay = Rir::new("d", taps).unwrap();
        let y = convolve_rir(&x, &delay).unwrap();
        assert_eq!(&y[..4], &[0.0; 4]);
        assert_eq!(&y[4..], &x[..96]);
    }

    #[test]
    fn fft_and_direct_convolution_agree() {
        let x = gen_noise(&NoiseKind::White, 3000, 2).unwrap();
        let r = Rir::synthetic(RirVariant::Primary);
        let fast = convolve_rir(&x, &r).unwrap();
        let direct: Vec<f64> = (0..x.len())
            .map(|n| (0..=n.min(r.taps.len() - 1)).map(|k| r.taps[k] * x[n - k]).sum())
            .collect();
        for (a, b) in fast.iter().zip(&direct) {
            assert!((a - b).abs() < 1e-10);
        }
        let doubled: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let y2 = convolve_rir(&doubled, &r).unwrap();
        for (a, b) in fast.iter().zip(&y2) {
            assert!((2.0 * a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn convolution_commutes_with_delay() {
        let x = gen_noise(&NoiseKind::White, 500, 8).unwrap();
        let r = Rir::new("r", vec![1.0, 0.5, -0.25, 0.1]).unwrap();
        let d = 7;
        let mut shifted = vec![0.0; d];
        shifted.extend_from_slice(&x[..x.len() - d]);
        let a = convolve_rir(&shifted, &r).unwrap();
        let b = convolve_rir(&x, &r).unwrap();
        for n in d..x.len() {
            assert!((a[n] - b[n - d]).abs() < 1e-12);
        }
    }

    #[test]
    fn coloration_flat_and_negative() {
        let id = Rir::new("id", vec![1.0]).unwrap();
        assert!(spectral_coloration(&id).unwrap().abs() < 1e-12);
        for v in [RirVariant::Primary, RirVariant::Proxy] {
            assert!(spectral_coloration(&Rir::synthetic(v)).unwrap() < 0.0);
        }
        assert!(Rir::new("z", vec![0.0, 0.0]).is_err());
        assert!(Rir::new("e", vec![]).is_err());
    }

    #[test]
    fn coloration_matches_direct_dft() {
        let r = Rir::new("two", vec![1.0, 0.9]).unwrap();
        let n = coloration_grid(2);
        let mags: Vec<f64> = (0..n)
            .map(|k| {
                let w = -2.0 * std::f64::consts::PI * k as f64 / n as f64;
                let (mut re, mut im) = (0.0, 0.0);
                for (t, tap) in r.taps.iter().enumerate() {
                    re += tap * (w * t as f64).cos();
                    im += tap * (w * t as f64).sin();
                }
                (re * re + im * im).sqrt()
            })
            .collect();
        let mean = mags.iter().sum::<f64>() / n as f64;
        let geo = (mags.iter().map(|m| m.ln()).sum::<f64>() / n as f64).exp();
        let oracle = 20.0 * (geo / mean).log10();
        let got = spectral_coloration(&r).unwrap();
        assert!((got - oracle).abs() < 1e-9, "{got} vs {oracle}");
    }

    #[test]
    fn synthetic_rirs_decay_and_differ() {
        let a = Rir::synthetic(RirVariant::Primary);
        let b = Rir::synthetic(RirVariant::Proxy);
        assert_ne!(a.taps, b.taps);
        assert_eq!(a.taps.iter().fold(0.0f64, |m, t| m.max(t.abs())), 1.0);
        // energy in the last 60 ms is tiny compared with the first 60 ms
        let k = (0.06 * SAMPLE_RATE as f64) as usize;
        let head = mean_square(&a.taps[..k]);
        let tail = mean_square(&a.taps[a.taps.len() - k..]);
        assert!(tail < 1e-4 * head);
    }

    #[test]
    fn noise_variance_estimates() {
        let x = gen_noise(&NoiseKind::White, 48_000, 3).unwrap();
        let est = estimate_noise_variance(&x, NoiseVarianceMethod::default()).unwrap();
        assert!((0.5..=1.5).contains(&est), "{est}");
        assert_eq!(estimate_noise_variance(&x, NoiseVarianceMethod::Known(0.125)).unwrap(), 0.125);
        assert!(estimate_noise_variance(&x[..100], NoiseVarianceMethod::default()).is_err());
    }

    #[test]
    fn snr_parsing() {
        assert_eq!("quiet".parse::<Snr>().unwrap(), Snr::Quiet);
        assert_eq!("-6".parse::<Snr>().unwrap(), Snr::Db(-6.0));
        let v: Vec<Snr> = serde_json::from_str(r#"["quiet", 12, -6]"#).unwrap();
        assert_eq!(v, vec![Snr::Quiet, Snr::Db(12.0), Snr::Db(-6.0)]);
    }

    #[test]
    fn corruption_normalizes_then_mixes() {
        let x: Vec<f64> = (0..4000).map(|i| 3.0 * (i as f64 * 0.01).sin()).collect();
        let clean = Corruption::clean().apply(&x, 1).unwrap();
        assert!((mean_square(&clean) - 1.0).abs() < 1e-12);
        let noisy = Corruption::noisy(NoiseKind::White, Snr::Db(0.0)).apply(&x, 1).unwrap();
        let noise: Vec<f64> = noisy.iter().zip(&clean).map(|(a, b)| a - b).collect();
        assert!((mean_square(&noise) - 1.0).abs() < 1e-9);
        assert_eq!(Corruption::noisy(NoiseKind::White, Snr::Quiet), Corruption::clean());
        assert_eq!(Corruption::clean().apply(&[0.0; 10], 0).unwrap(), vec![0.0; 10]);
        assert_ne!(sentence_seed(1, "a"), sentence_seed(1, "b"));
        assert_eq!(
            Corruption::noisy(NoiseKind::Pink, Snr::Db(6.0))
                .with_rir(Some(Rir::synthetic(RirVariant::Primary)))
                .describe(),
            format!("pink@6dB+{}", Rir::synthetic(RirVariant::Primary).name)
        );
    }
}
