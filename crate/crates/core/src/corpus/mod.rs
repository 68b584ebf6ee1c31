//! Corpus ingestion: utterances with phone alignments, label folding,
//! fixed-length segment extraction and development-subset sampling.
//!
//! On disk a corpus split is a directory of `<id>.wav` files (mono 16-bit
//! PCM, 16 kHz) with matching `<id>.phn` alignments holding one
//! `start end label` triple per line in sample units, `end` exclusive.

mod classmap;
pub mod synth;
mod wav;

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use classmap::{ClassMap, Fold};
pub use synth::{make_babble, make_synthetic_corpus, synthetic_class_map, write_corpus, SynthSpec};
pub use wav::{read_wav, write_wav};

use crate::error::{Error, Result};

pub const SAMPLE_RATE: u32 = 16_000;

#[derive(Debug, Clone, PartialEq)]
pub struct PhoneSegment {
    pub start: usize,
    /// Exclusive.
    pub end: usize,
    pub label: String,
    pub class_id: usize,
}

impl PhoneSegment {
    /// Centre sample, `floor((start + end) / 2)`.
    pub fn center(&self) -> usize {
        (self.start + self.end) / 2
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub samples: Vec<f64>,
    pub sample_rate: u32,
    pub phones: Vec<PhoneSegment>,
}

impl Utterance {
    /// Checks the sample rate and that phones are sorted, non-overlapping and
    /// inside the waveform.
    pub fn validate(&self) -> Result<()> {
        if self.sample_rate != SAMPLE_RATE {
            return Err(Error::AudioFormat {
                path: PathBuf::from(&self.id),
                found: format!("{} Hz", self.sample_rate),
            });
        }
        validate_segments(&self.phones, self.samples.len())
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Train/dev/test partition of utterance ids.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitSpec {
    pub train: Vec<String>,
    pub dev: Vec<String>,
    pub test: Vec<String>,
    pub dev_subset_fraction: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(train: Vec<String>, dev: Vec<String>, test: Vec<String>, seed: u64) -> Result<Self> {
        let spec = SplitSpec {
            train,
            dev,
            test,
            dev_subset_fraction: 1.0 / 8.0,
            seed,
        };
        spec.check_disjoint()?;
        Ok(spec)
    }

    fn check_disjoint(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for id in self.train.iter().chain(&self.dev).chain(&self.test) {
            if !seen.insert(id.as_str()) {
                return Err(Error::invalid(format!("utterance '{id}' appears in more than one split")));
            }
        }
        Ok(())
    }
}

/// Result of ingesting a directory: every file either yields an utterance or
/// an error, nothing is dropped silently.
#[derive(Debug, Default)]
pub struct LoadReport {
    pub utterances: Vec<Utterance>,
    pub errors: Vec<Error>,
}

/// Parses an alignment file body into raw `(start, end, label)` triples.
pub fn parse_alignment(text: &str, path: &Path) -> Result<Vec<(usize, usize, String)>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parse_err = |msg: &str| Error::Parse {
            path: path.to_path_buf(),
            line: lineno + 1,
            msg: msg.to_string(),
        };
        let mut fields = line.split_whitespace();
        let start = fields
            .next()
            .and_then(|s| s.parse::<usize>().ok())
            .ok_or_else(|| parse_err("bad start sample"))?;
        let end = fields
            .next()
            .and_then(|s| s.parse::<usize>().ok())
            .ok_or_else(|| parse_err("bad end sample"))?;
        let label = fields.next().ok_or_else(|| parse_err("missing label"))?;
        if fields.next().is_some() {
            return Err(parse_err("expected 'start end label'"));
        }
        out.push((start, end, label.to_string()));
    }
    Ok(out)
}

/// Checks ordering, overlap and bounds of folded segments.
pub fn validate_segments(phones: &[PhoneSegment], n_samples: usize) -> Result<()> {
    for p in phones {
        if p.start >= p.end {
            return Err(Error::Alignment(format!(
                "empty segment '{}' [{}, {})",
                p.label, p.start, p.end
            )));
        }
        if p.end > n_samples {
            return Err(Error::Alignment(format!(
                "segment '{}' [{}, {}) exceeds {} samples",
                p.label, p.start, p.end, n_samples
            )));
        }
    }
    for w in phones.windows(2) {
        if w[1].start < w[0].end {
            return Err(Error::Alignment(format!(
                "overlapping segments '{}' [{}, {}) and '{}' [{}, {})",
                w[0].label, w[0].start, w[0].end, w[1].label, w[1].start, w[1].end
            )));
        }
    }
    Ok(())
}

/// Folds raw segments through the class map, dropping segments that map to
/// nothing (the glottal stop in the TIMIT map).
pub fn fold_segments(raw: Vec<(usize, usize, String)>, class_map: &ClassMap) -> Result<Vec<PhoneSegment>> {
    let mut phones = Vec::with_capacity(raw.len());
    for (start, end, label) in raw {
        match class_map.fold(&label) {
            Some(Fold::Class(class_id)) => phones.push(PhoneSegment {
                start,
                end,
                label,
                class_id,
            }),
            Some(Fold::Drop) => {}
            None => return Err(Error::UnknownLabel(label)),
        }
    }
    Ok(phones)
}

fn load_one(wav_path: &Path, alignment_dir: &Path, class_map: &ClassMap) -> Result<Utterance> {
    let id = wav_path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or_default()
        .to_string();
    let phn = alignment_dir.join(format!("{id}.phn"));
    if !phn.exists() {
        return Err(Error::MissingAlignment {
            path: wav_path.to_path_buf(),
        });
    }
    let samples = read_wav(wav_path)?;
    let text = fs::read_to_string(&phn).map_err(|e| Error::io(&phn, e))?;
    let raw = parse_alignment(&text, &phn)?;
    // overlap and bounds are checked on the raw alignment so dropped labels
    // cannot hide an inconsistent file
    let mut sorted = raw.clone();
    sorted.sort_by_key(|r| r.0);
    let raw_segments: Vec<PhoneSegment> = sorted
        .iter()
        .map(|(s, e, l)| PhoneSegment {
            start: *s,
            end: *e,
            label: l.clone(),
            class_id: 0,
        })
        .collect();
    validate_segments(&raw_segments, samples.len()).map_err(|e| match e {
        Error::Alignment(msg) => Error::Alignment(format!("{}: {msg}", phn.display())),
        other => other,
    })?;
    let phones = fold_segments(sorted, class_map)?;
    Ok(Utterance {
        id,
        samples,
        sample_rate: SAMPLE_RATE,
        phones,
    })
}

/// Loads every `*.wav` in `audio_dir`, pairing it with `<stem>.phn` in
/// `alignment_dir`. Utterances come back sorted by id.
pub fn load_corpus(audio_dir: &Path, alignment_dir: &Path, class_map: &ClassMap) -> Result<LoadReport> {
    let entries = fs::read_dir(audio_dir).map_err(|e| Error::io(audio_dir, e))?;
    let mut wavs = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(audio_dir, e))?;
        let path = entry.path();
        let is_wav = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("wav"));
        if is_wav {
            wavs.push(path);
        }
    }
    wavs.sort();
    let results: Vec<Result<Utterance>> = wavs
        .par_iter()
        .map(|p| load_one(p, alignment_dir, class_map))
        .collect();
    let mut report = LoadReport::default();
    for r in results {
        match r {
            Ok(u) => report.utterances.push(u),
            Err(e) => report.errors.push(e),
        }
    }
    report.utterances.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(report)
}

/// Number of samples in a window of `window_ms` at 16 kHz.
pub fn window_len(window_ms: f64) -> usize {
    (window_ms * SAMPLE_RATE as f64 / 1000.0).round() as usize
}

/// Cuts a window of `window_ms` centred on the phone, zero-padding outside
/// the utterance.
pub fn extract_segment(u: &Utterance, p: &PhoneSegment, window_ms: f64) -> Vec<f64> {
    extract_centered(&u.samples, p.center(), window_len(window_ms))
}

/// `len` samples with `center` at offset `len / 2`.
pub fn extract_centered(samples: &[f64], center: usize, len: usize) -> Vec<f64> {
    let start = center as i64 - (len / 2) as i64;
    (0..len as i64)
        .map(|i| {
            let k = start + i;
            if k >= 0 && (k as usize) < samples.len() {
                samples[k as usize]
            } else {
                0.0
            }
        })
        .collect()
}

/// Uniform sample without replacement of `round(fraction * n)` items,
/// returned in their original order.
pub fn sample_dev_subset<T: Clone>(items: &[T], fraction: f64, seed: u64) -> Result<Vec<T>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::invalid(format!("dev subset fraction {fraction} outside (0, 1]")));
    }
    let n = items.len();
    let k = ((fraction * n as f64).round() as usize).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = index::sample(&mut rng, n, k).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| items[i].clone()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn utt(samples: Vec<f64>, phones: Vec<PhoneSegment>) -> Utterance {
        Utterance {
            id: "u".into(),
            samples,
            sample_rate: SAMPLE_RATE,
            phones,
        }
    }

    fn seg(start: usize, end: usize) -> PhoneSegment {
        PhoneSegment {
            start,
            end,
            label: "aa".into(),
            class_id: 0,
        }
    }

    #[test]
    fn segment_centred_in_long_utterance() {
        let samples: Vec<f64> = (0..20_000).map(|i| i as f64).collect();
        let u = utt(samples, vec![]);
        let x = extract_segment(&u, &seg(7900, 8100), 100.0);
        assert_eq!(x.len(), 1600);
        assert_eq!(x[0], 7200.0);
        assert_eq!(x[1599], 8799.0);
    }

    #[test]
    fn segment_at_start_is_zero_padded() {
        let u = utt(vec![1.0; 5000], vec![]);
        let x = extract_segment(&u, &seg(0, 200), 100.0);
        assert_eq!(x.len(), 1600);
        assert!(x[..700].iter().all(|&v| v == 0.0));
        assert!(x[700..].iter().all(|&v| v == 1.0));
    }

    #[test]
    fn short_window_on_constant_signal() {
        let u = utt(vec![1.0; 5000], vec![]);
        let x = extract_segment(&u, &seg(2000, 3000), 25.0);
        assert_eq!(x, vec![1.0; 400]);
    }

    #[test]
    fn dev_subset_sizes_and_determinism() {
        let items: Vec<usize> = (0..1152).collect();
        let a = sample_dev_subset(&items, 1.0 / 8.0, 7).unwrap();
        let b = sample_dev_subset(&items, 1.0 / 8.0, 7).unwrap();
        assert_eq!(a.len(), 144);
        assert_eq!(a, b);
        assert_eq!(sample_dev_subset(&items, 1.0, 3).unwrap(), items);
        assert!(sample_dev_subset::<usize>(&[], 0.5, 1).unwrap().is_empty());
        assert!(sample_dev_subset(&items, 0.0, 1).is_err());
    }

    #[test]
    fn dev_subset_inclusion_is_binomial() {
        let n = 40;
        let items: Vec<usize> = (0..n).collect();
        let fraction = 0.25;
        let seeds = 1000;
        let mut counts = vec![0usize; n];
        for seed in 0..seeds {
            for i in sample_dev_subset(&items, fraction, seed).unwrap() {
                counts[i] += 1;
            }
        }
        let p = fraction;
        let sd = (seeds as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - seeds as f64 * p).abs() <= 3.0 * sd + 1.0, "count {c}");
        }
    }

    #[test]
    fn overlapping_segments_are_reported() {
        let err = validate_segments(&[seg(0, 100), seg(50, 150)], 200).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[0, 100)") && msg.contains("[50, 150)"), "{msg}");
    }

    #[test]
    fn alignment_parse_errors_carry_line_numbers() {
        let err = parse_alignment("0 10 aa\n10 x bb\n", Path::new("f.phn")).unwrap_err();
        assert!(err.to_string().contains("f.phn:2"));
    }

    #[test]
    fn glottal_stop_dropped() {
        let map = ClassMap::timit_48();
        let phones = fold_segments(vec![(0, 1600, "q".into()), (1600, 3200, "aa".into())], &map).unwrap();
        assert_eq!(phones.len(), 1);
        assert_eq!(phones[0].label, "aa");
    }

    #[test]
    fn unknown_label_named_in_error() {
        let map = ClassMap::timit_48();
        let err = fold_segments(vec![(0, 10, "zz".into())], &map).unwrap_err();
        assert!(err.to_string().contains("zz"));
    }
}
