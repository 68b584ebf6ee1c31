//! Subband ensembles: one `K_Omega` SVM per subband and binary problem,
//! combined by majority voting or by a per-problem linear meta-level SVM
//! (stacked generalization).

use std::fmt::Write as _;

use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Utterance;
use crate::error::{Error, Result};
use crate::features::SubbandExtractor;
use crate::kernels::{Kernel, KernelKind, KernelParams, SubbandFeature};
use crate::multiclass::{build_pairwise, decode, train_pairwise, CodingMatrix, Loss};
use crate::signal::{sentence_seed, Corruption, NoiseKind, Rir, Snr};
use crate::svm::io::{read_binary_model, read_linear_model, write_binary_model, write_linear_model, Reader};
use crate::svm::{decision, train_linear, BinarySvmModel, LinearSvmModel, SvmParams};

/// Kernel inputs of one phone instance, one entry per subband.
pub type SubbandInstance = Vec<SubbandFeature>;

/// Labelled instances extracted from sentences.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct InstanceSet {
    pub instances: Vec<SubbandInstance>,
    pub labels: Vec<usize>,
}

impl InstanceSet {
    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn extend(&mut self, other: InstanceSet) {
        self.instances.extend(other.instances);
        self.labels.extend(other.labels);
    }
}

/// Replaces subband `s` of every extracted instance by Gaussian noise, so
/// that it carries no class information.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseSubband {
    pub subband: usize,
    pub seed: u64,
}

/// Extracts subband instances for every phone of every sentence after
/// applying `corruption`.
pub fn extract_instances(
    extractor: &SubbandExtractor,
    sentences: &[Utterance],
    corruption: &Corruption,
    seed: u64,
    noise_subband: Option<NoiseSubband>,
) -> Result<InstanceSet> {
    let per_sentence: Vec<InstanceSet> = sentences
        .par_iter()
        .map(|u| {
            let samples = corruption.apply(&u.samples, sentence_seed(seed, &u.id))?;
            let centers: Vec<usize> = u.phones.iter().map(|p| p.center()).collect();
            let mut instances = extractor.sentence_features(&samples, &centers)?;
            if let Some(ns) = noise_subband {
                let mut rng = ChaCha8Rng::seed_from_u64(sentence_seed(ns.seed, &u.id));
                for inst in &mut instances {
                    let f = inst
                        .get_mut(ns.subband)
                        .ok_or_else(|| Error::invalid(format!("no subband {}", ns.subband)))?;
                    let wave: Vec<f64> = (0..f.unit_wave.len().max(1))
                        .map(|_| StandardNormal.sample(&mut rng))
                        .collect();
                    let scale = 1.0 / (f.omega.len() as f64).sqrt();
                    let omega = (0..f.omega.len())
                        .map(|_| {
                            let z: f64 = StandardNormal.sample(&mut rng);
                            scale * z
                        })
                        .collect();
                    *f = SubbandFeature::new(&wave, omega);
                }
            }
            Ok(InstanceSet {
                instances,
                labels: u.phones.iter().map(|p| p.class_id).collect(),
            })
        })
        .collect::<Result<_>>()?;
    let mut out = InstanceSet::default();
    for s in per_sentence {
        out.extend(s);
    }
    Ok(out)
}

/// Per-problem combination of the subband scores.
#[derive(Debug, Clone, PartialEq)]
pub enum MetaModel {
    /// Too few development instances: majority voting for this problem.
    Fallback,
    Linear(LinearSvmModel),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    Majority,
    Stacked,
}

/// Base-level models trained on clean data.
#[derive(Debug, Clone, PartialEq)]
pub struct SubbandEnsemble {
    pub coding: CodingMatrix,
    pub kernel: KernelParams,
    pub channels: usize,
    /// `models[n][s]`: problem `n`, subband `s`.
    pub models: Vec<Vec<BinarySvmModel>>,
    /// `store[s][i]`: subband `s` of training instance `i`.
    pub store: Vec<Vec<SubbandFeature>>,
    pub train_labels: Vec<usize>,
    /// One meta model per problem once stacked training has run.
    pub meta: Option<Vec<MetaModel>>,
}

/// Checks every class `0..classes` occurs; lists the missing ones.
pub fn check_classes(labels: &[usize], names: &[String]) -> Result<()> {
    let missing: Vec<String> = names
        .iter()
        .enumerate()
        .filter(|(c, _)| !labels.contains(c))
        .map(|(_, n)| n.clone())
        .collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(Error::MissingClasses(missing))
    }
}

/// Trains `S` models for each pairwise problem.
pub fn train_base(
    train: &InstanceSet,
    class_names: &[String],
    theta: u32,
    params: &SvmParams,
) -> Result<SubbandEnsemble> {
    check_classes(&train.labels, class_names)?;
    let coding = build_pairwise(class_names.len())?;
    let channels = train.instances.first().map_or(0, Vec::len);
    if channels == 0 {
        return Err(Error::invalid("training instances have no subbands"));
    }
    if let Some(i) = train.instances.iter().find(|i| i.len() != channels) {
        return Err(Error::DimensionMismatch {
            expected: channels,
            found: i.len(),
        });
    }
    let kernel = KernelParams::new(KernelKind::Omega, theta)?;
    let store: Vec<Vec<SubbandFeature>> = (0..channels)
        .map(|s| train.instances.iter().map(|inst| inst[s].clone()).collect())
        .collect();
    let mut models: Vec<Vec<BinarySvmModel>> = vec![Vec::with_capacity(channels); coding.columns()];
    for (s, column) in store.iter().enumerate() {
        let trained = train_pairwise(column, &train.labels, &coding, kernel, params)?;
        for (n, m) in trained.into_iter().enumerate() {
            models[n].push(m);
        }
        info!("subband {}/{channels}: trained {} binary models", s + 1, coding.columns());
    }
    Ok(SubbandEnsemble {
        coding,
        kernel,
        channels,
        models,
        store,
        train_labels: train.labels.clone(),
        meta: None,
    })
}

impl SubbandEnsemble {
    /// `f[n][s]`: score of base model `s` of problem `n` on `x`.
    pub fn base_scores(&self, x: &SubbandInstance) -> Result<Vec<Vec<f64>>> {
        if x.len() != self.channels {
            return Err(Error::DimensionMismatch {
                expected: self.channels,
                found: x.len(),
            });
        }
        let mut f = vec![vec![0.0; self.channels]; self.models.len()];
        let mut row = vec![0.0; self.train_labels.len()];
        for s in 0..self.channels {
            for (r, sv) in row.iter_mut().zip(&self.store[s]) {
                *r = self.kernel.eval(&x[s], sv)?;
            }
            for (n, fm) in f.iter_mut().enumerate() {
                fm[s] = self.models[n][s].score_from_row(&row);
            }
        }
        Ok(f)
    }

    /// Base scores of many instances, in parallel.
    pub fn base_scores_all(&self, xs: &[SubbandInstance]) -> Result<Vec<Vec<Vec<f64>>>> {
        xs.par_iter().map(|x| self.base_scores(x)).collect()
    }

    /// Meta-level score of every problem from base scores.
    pub fn problem_scores(&self, f: &[Vec<f64>], aggregation: Aggregation) -> Result<Vec<f64>> {
        match aggregation {
            Aggregation::Majority => Ok(f.iter().map(|fs| majority_vote(fs)).collect()),
            Aggregation::Stacked => {
                let meta = self
                    .meta
                    .as_ref()
                    .ok_or_else(|| Error::invalid("stacked aggregation needs a trained meta level"))?;
                Ok(f.iter().zip(meta).map(|(fs, m)| stacked_score(m, fs)).collect())
            }
        }
    }

    pub fn classify(&self, x: &SubbandInstance, aggregation: Aggregation) -> Result<usize> {
        let h = self.problem_scores(&self.base_scores(x)?, aggregation)?;
        decode(&h, &self.coding, Loss::Hinge)
    }
}

/// `h = sum_s sgn(f^s)` with `sgn(0) = +1`.
pub fn majority_vote(f: &[f64]) -> f64 {
    f.iter().map(|&v| decision(v) as f64).sum()
}

/// `<w, f> + v`, or the majority vote for fallback problems.
pub fn stacked_score(meta: &MetaModel, f: &[f64]) -> f64 {
    match meta {
        MetaModel::Fallback => majority_vote(f),
        MetaModel::Linear(m) => m.score(f),
    }
}

/// Exact majority-vote error for `S` independent channels with error rate
/// `p`, and the bound `(4p(1-p))^{S/2} / 2`.
pub fn ensemble_error_analytic(p: f64, s: usize) -> Result<(f64, f64)> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid(format!("error probability {p} outside [0, 1]")));
    }
    if s == 0 {
        return Err(Error::invalid("ensemble needs at least one channel"));
    }
    let mut pe = 0.0;
    for k in s.div_ceil(2)..=s {
        pe += binomial(s, k) * p.powi(k as i32) * (1.0 - p).powi((s - k) as i32);
    }
    let bound = 0.5 * (4.0 * p * (1.0 - p)).powf(s as f64 / 2.0);
    Ok((pe, bound))
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Clean,
    MultistyleAnechoic,
    MultistyleReverbMatched,
    MultistyleReverbMismatched,
    Matched,
}

/// Corruptions applied to the development data for meta-level training.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    /// Test-time RIR; used by the matched-reverberation kind.
    pub rir: Option<Rir>,
    /// Proxy RIR for the mismatched kind.
    pub proxy_rir: Option<Rir>,
    /// Test condition, used by the matched kind.
    pub matched: Option<Corruption>,
}

impl ScenarioSpec {
    pub fn new(kind: ScenarioKind) -> Self {
        ScenarioSpec {
            kind,
            rir: None,
            proxy_rir: None,
            matched: None,
        }
    }

    /// Copies of the development set used for training; multi-style kinds
    /// mix clean and white-noise 0 dB data one to one.
    pub fn copies(&self) -> Result<Vec<Corruption>> {
        let need = |r: &Option<Rir>, what: &str| {
            r.clone()
                .ok_or_else(|| Error::Config(format!("scenario {:?} needs a {what}", self.kind)))
        };
        let multistyle = |rir: Option<Rir>| {
            vec![
                Corruption::clean().with_rir(rir.clone()),
                Corruption::noisy(NoiseKind::White, Snr::Db(0.0)).with_rir(rir),
            ]
        };
        Ok(match self.kind {
            ScenarioKind::Clean => vec![Corruption::clean()],
            ScenarioKind::MultistyleAnechoic => multistyle(None),
            ScenarioKind::MultistyleReverbMatched => multistyle(Some(need(&self.rir, "test RIR")?)),
            ScenarioKind::MultistyleReverbMismatched => multistyle(Some(need(&self.proxy_rir, "proxy RIR")?)),
            ScenarioKind::Matched => vec![self
                .matched
                .clone()
                .ok_or_else(|| Error::Config("matched scenario needs the test corruption".into()))?],
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetaParams {
    pub svm: SvmParams,
    /// Divide each subband score by its standard deviation over the
    /// training set before the linear SVM (folded into `w` afterwards).
    pub standardize_inputs: bool,
}

impl Default for MetaParams {
    fn default() -> Self {
        MetaParams {
            svm: SvmParams::default(),
            standardize_inputs: false,
        }
    }
}

/// Base-score vectors of the (corrupted) development data.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaTrainingSet {
    /// `scores[j][n][s]`.
    pub scores: Vec<Vec<Vec<f64>>>,
    pub labels: Vec<usize>,
}

pub fn meta_training_set(
    ens: &SubbandEnsemble,
    extractor: &SubbandExtractor,
    dev: &[Utterance],
    scenario: &ScenarioSpec,
    seed: u64,
    noise_subband: Option<NoiseSubband>,
) -> Result<MetaTrainingSet> {
    let mut set = MetaTrainingSet {
        scores: Vec::new(),
        labels: Vec::new(),
    };
    for (k, corruption) in scenario.copies()?.iter().enumerate() {
        let inst = extract_instances(extractor, dev, corruption, seed.wrapping_add(k as u64), noise_subband)?;
        set.scores.extend(ens.base_scores_all(&inst.instances)?);
        set.labels.extend(inst.labels);
    }
    Ok(set)
}

/// Outcome of meta-level training.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedReport {
    /// Problems that fell back to majority voting.
    pub fallbacks: Vec<(usize, usize)>,
    pub dev_instances: usize,
}

/// Trains one linear SVM per problem on the base scores of the problem's
/// two classes.
pub fn train_stacked_from_scores(
    ens: &mut SubbandEnsemble,
    set: &MetaTrainingSet,
    params: &MetaParams,
) -> Result<StackedReport> {
    let metas: Vec<MetaModel> = ens
        .coding
        .pairs()
        .par_iter()
        .enumerate()
        .map(|(n, &(p, q))| {
            let mut pts = Vec::new();
            let mut y = Vec::new();
            for (f, &l) in set.scores.iter().zip(&set.labels) {
                if l == p || l == q {
                    pts.push(f[n].clone());
                    y.push(if l == p { 1i8 } else { -1 });
                }
            }
            if !(y.contains(&1) && y.contains(&-1)) {
                return Ok(MetaModel::Fallback);
            }
            let scale = if params.standardize_inputs {
                input_scales(&pts)
            } else {
                vec![1.0; pts[0].len()]
            };
            for pt in &mut pts {
                pt.iter_mut().zip(&scale).for_each(|(v, g)| *v *= g);
            }
            let mut m = train_linear(&pts, &y, &params.svm)?;
            m.w.iter_mut().zip(&scale).for_each(|(w, g)| *w *= g);
            Ok(MetaModel::Linear(m))
        })
        .collect::<Result<_>>()?;
    let fallbacks: Vec<(usize, usize)> = metas
        .iter()
        .zip(ens.coding.pairs())
        .filter(|(m, _)| matches!(m, MetaModel::Fallback))
        .map(|(_, &pq)| pq)
        .collect();
    if !fallbacks.is_empty() {
        warn!("{} binary problems fall back to majority voting", fallbacks.len());
    }
    ens.meta = Some(metas);
    Ok(StackedReport {
        fallbacks,
        dev_instances: set.labels.len(),
    })
}

fn input_scales(pts: &[Vec<f64>]) -> Vec<f64> {
    let n = pts.len() as f64;
    (0..pts[0].len())
        .map(|s| {
            let m = pts.iter().map(|p| p[s]).sum::<f64>() / n;
            let v = pts.iter().map(|p| (p[s] - m).powi(2)).sum::<f64>() / n;
            if v > 0.0 {
                v.sqrt().recip()
            } else {
                1.0
            }
        })
        .collect()
}

/// Corrupts the development subset per scenario and trains the meta level.
pub fn train_stacked(
    ens: &mut SubbandEnsemble,
    extractor: &SubbandExtractor,
    dev: &[Utterance],
    scenario: &ScenarioSpec,
    params: &MetaParams,
    seed: u64,
    noise_subband: Option<NoiseSubband>,
) -> Result<StackedReport> {
    let set = meta_training_set(ens, extractor, dev, scenario, seed, noise_subband)?;
    train_stacked_from_scores(ens, &set, params)
}

/// Per-subband mean and population standard deviation of the meta-level
/// weights across problems (fallback problems excluded).
pub fn weight_report(ens: &SubbandEnsemble) -> Result<Vec<(f64, f64)>> {
    let meta = ens
        .meta
        .as_ref()
        .ok_or_else(|| Error::invalid("weight report needs a trained meta level"))?;
    let ws: Vec<&Vec<f64>> = meta
        .iter()
        .filter_map(|m| match m {
            MetaModel::Linear(l) => Some(&l.w),
            MetaModel::Fallback => None,
        })
        .collect();
    Ok(weight_stats(&ws, ens.channels, |w| w))
}

/// Mean and standard deviation of `|w|` per subband.
pub fn abs_weight_report(ens: &SubbandEnsemble) -> Result<Vec<(f64, f64)>> {
    let meta = ens
        .meta
        .as_ref()
        .ok_or_else(|| Error::invalid("weight report needs a trained meta level"))?;
    let ws: Vec<&Vec<f64>> = meta
        .iter()
        .filter_map(|m| match m {
            MetaModel::Linear(l) => Some(&l.w),
            MetaModel::Fallback => None,
        })
        .collect();
    Ok(weight_stats(&ws, ens.channels, f64::abs))
}

pub fn weight_stats(ws: &[&Vec<f64>], channels: usize, f: impl Fn(f64) -> f64) -> Vec<(f64, f64)> {
    (0..channels)
        .map(|s| {
            if ws.is_empty() {
                return (0.0, 0.0);
            }
            let n = ws.len() as f64;
            let mean = ws.iter().map(|w| f(w[s])).sum::<f64>() / n;
            let var = ws.iter().map(|w| (f(w[s]) - mean).powi(2)).sum::<f64>() / n;
            (mean, var.sqrt())
        })
        .collect()
}

/// CSV with header `subband,mean,std`, subbands numbered from 1.
pub fn weight_report_csv(rows: &[(f64, f64)]) -> String {
    let mut out = String::from("subband,mean,std\n");
    for (s, (m, sd)) in rows.iter().enumerate() {
        writeln!(out, "{},{m:.9},{sd:.9}", s + 1).unwrap();
    }
    out
}

const ENSEMBLE_MAGIC: &[u8; 4] = b"SENS";

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64s(out: &mut Vec<u8>, v: &[f64]) {
    put_u64(out, v.len() as u64);
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

fn get_f64s(r: &mut Reader<'_>) -> Result<Vec<f64>> {
    let n = r.len()?;
    (0..n).map(|_| r.f64()).collect()
}

impl SubbandEnsemble {
    /// Binary bundle: header, training store (f64), labels, base models,
    /// then the meta level as a tagged list of linear models.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(ENSEMBLE_MAGIC);
        out.extend_from_slice(&crate::svm::io::FORMAT_VERSION.to_le_bytes());
        put_u64(&mut out, self.channels as u64);
        put_u64(&mut out, self.coding.classes() as u64);
        out.extend_from_slice(&self.kernel.theta.to_le_bytes());
        put_u64(&mut out, self.train_labels.len() as u64);
        for &l in &self.train_labels {
            put_u64(&mut out, l as u64);
        }
        for column in &self.store {
            for f in column {
                put_f64s(&mut out, &f.unit_wave);
                put_f64s(&mut out, &f.omega);
            }
        }
        for row in &self.models {
            for m in row {
                write_binary_model(&mut out, m);
            }
        }
        match &self.meta {
            None => out.push(0),
            Some(metas) => {
                out.push(1);
                for m in metas {
                    match m {
                        MetaModel::Fallback => out.push(0),
                        MetaModel::Linear(l) => {
                            out.push(1);
                            write_linear_model(&mut out, l);
                        }
                    }
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.expect_magic(ENSEMBLE_MAGIC)?;
        let channels = r.len()?;
        let classes = r.len()?;
        let theta = r.u32()?;
        let kernel = KernelParams::new(KernelKind::Omega, theta)?;
        let coding = build_pairwise(classes)?;
        let n = r.len()?;
        let train_labels = (0..n).map(|_| r.len()).collect::<Result<Vec<_>>>()?;
        let mut store = Vec::with_capacity(channels);
        for _ in 0..channels {
            let mut column = Vec::with_capacity(n);
            for _ in 0..n {
                let unit_wave = get_f64s(&mut r)?;
                let omega = get_f64s(&mut r)?;
                column.push(SubbandFeature { unit_wave, omega });
            }
            store.push(column);
        }
        let mut models = Vec::with_capacity(coding.columns());
        for _ in 0..coding.columns() {
            models.push((0..channels).map(|_| read_binary_model(&mut r)).collect::<Result<Vec<_>>>()?);
        }
        let meta = match r.u8()? {
            0 => None,
            1 => Some(
                (0..coding.columns())
                    .map(|_| match r.u8()? {
                        0 => Ok(MetaModel::Fallback),
                        1 => Ok(MetaModel::Linear(read_linear_model(&mut r)?)),
                        t => Err(Error::Format(format!("bad meta tag {t}"))),
                    })
                    .collect::<Result<Vec<_>>>()?,
            ),
            t => return Err(Error::Format(format!("bad meta flag {t}"))),
        };
        if !r.is_empty() {
            return Err(Error::Format("trailing bytes after ensemble".into()));
        }
        Ok(SubbandEnsemble {
            coding,
            kernel,
            channels,
            models,
            store,
            train_labels,
            meta,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelParams;
    use rand::Rng;

    #[test]
    fn majority_vote_counts() {
        assert_eq!(majority_vote(&[1.0; 16]), 16.0);
        let mut f = vec![0.5; 9];
        f.extend(vec![-0.5; 7]);
        assert_eq!(majority_vote(&f), 2.0);
        let neg: Vec<f64> = f.iter().map(|v| -v).collect();
        assert_eq!(majority_vote(&neg), -2.0);
        assert_eq!(majority_vote(&[0.0, -1.0]), 0.0);
    }

    /// Sum over all 2^S error patterns with at least ceil(S/2) errors.
    fn enumerate_pe(p: f64, s: usize) -> f64 {
        (0u32..1 << s)
            .filter(|m| m.count_ones() as usize >= s.div_ceil(2))
            .map(|m| p.powi(m.count_ones() as i32) * (1.0 - p).powi((s - m.count_ones() as usize) as i32))
            .sum()
    }

    #[test]
    fn analytic_error_matches_enumeration() {
        let (pe, _) = ensemble_error_analytic(0.1, 3).unwrap();
        assert!((pe - 0.028).abs() < 1e-15);
        for s in 1..=12 {
            for p in [0.05, 0.2, 0.45, 0.7] {
                let (pe, _) = ensemble_error_analytic(p, s).unwrap();
                assert!((pe - enumerate_pe(p, s)).abs() < 1e-12);
            }
            assert_eq!(ensemble_error_analytic(0.5, s).unwrap().1, 0.5);
            assert_eq!(ensemble_error_analytic(0.0, s).unwrap().0, 0.0);
        }
        assert!(ensemble_error_analytic(1.5, 3).is_err());
    }

    fn meta_of(ws: &[Vec<f64>]) -> Vec<MetaModel> {
        ws.iter()
            .map(|w| MetaModel::Linear(LinearSvmModel { w: w.clone(), v: 0.0 }))
            .collect()
    }

    #[test]
    fn stacked_score_special_weights() {
        let f = [0.3, -1.2, 2.0];
        let ones = MetaModel::Linear(LinearSvmModel { w: vec![1.0; 3], v: 0.0 });
        assert!((stacked_score(&ones, &f) - 1.1).abs() < 1e-15);
        let hot = MetaModel::Linear(LinearSvmModel { w: vec![0.0, 1.0, 0.0], v: 0.5 });
        assert_eq!(stacked_score(&hot, &f), -1.2 + 0.5);
        assert_eq!(stacked_score(&MetaModel::Fallback, &f), 1.0);
    }

    fn toy_ensemble(meta: Option<Vec<MetaModel>>) -> SubbandEnsemble {
        SubbandEnsemble {
            coding: build_pairwise(2).unwrap(),
            kernel: KernelParams::new(KernelKind::Omega, 6).unwrap(),
            channels: 2,
            models: vec![vec![
                BinarySvmModel::constant(0.1, KernelParams::linear(), 1.0),
                BinarySvmModel::constant(-0.2, KernelParams::linear(), 1.0),
            ]],
            store: vec![vec![], vec![]],
            train_labels: vec![],
            meta,
        }
    }

    #[test]
    fn weight_report_statistics() {
        let mut ens = toy_ensemble(None);
        assert!(weight_report(&ens).is_err());
        ens.meta = Some(meta_of(&[vec![0.0, 1.0], vec![2.0, 1.0]]));
        let rows = weight_report(&ens).unwrap();
        assert_eq!(rows, vec![(1.0, 1.0), (1.0, 0.0)]);
        let csv = weight_report_csv(&rows);
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.starts_with("subband,mean,std\n1,1.000000000,1.000000000"));
    }

    #[test]
    fn silent_subband_scores_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut set = InstanceSet::default();
        for i in 0..12 {
            let class = i % 2;
            let inst: SubbandInstance = (0..2)
                .map(|_| {
                    let w: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0) + class as f64).collect();
                    SubbandFeature::new(&w, vec![0.1 * class as f64, 0.2])
                })
                .collect();
            set.instances.push(inst);
            set.labels.push(class);
        }
        let names = vec!["a".to_string(), "b".to_string()];
        let ens = train_base(&set, &names, 2, &SvmParams::default()).unwrap();
        let silent = vec![SubbandFeature::new(&[0.0; 6], vec![0.0, 0.0]); 2];
        let f = ens.base_scores(&silent).unwrap();
        for s in 0..2 {
            assert_eq!(f[0][s], ens.models[0][s].bias);
        }
        // per-subband scores equal the single-model evaluation
        let x = &set.instances[3];
        let f = ens.base_scores(x).unwrap();
        for s in 0..2 {
            let direct = ens.models[0][s].score(&ens.store[s], &x[s]).unwrap();
            assert!((f[0][s] - direct).abs() < 1e-12);
        }
        // bundle round trip keeps every score bit-exact
        let mut ens = ens;
        ens.meta = Some(meta_of(&[vec![0.5, 2.0]]));
        let back = SubbandEnsemble::from_bytes(&ens.to_bytes()).unwrap();
        assert_eq!(back, ens);
        assert!(train_base(&set, &["a".into(), "b".into(), "zz".into()], 2, &SvmParams::default()).is_err());
    }

    #[test]
    fn scenario_copies() {
        assert_eq!(ScenarioSpec::new(ScenarioKind::Clean).copies().unwrap().len(), 1);
        let ms = ScenarioSpec::new(ScenarioKind::MultistyleAnechoic).copies().unwrap();
        assert_eq!(ms.len(), 2);
        assert_eq!(ms[1].noise, Some((NoiseKind::White, 0.0)));
        assert!(ScenarioSpec::new(ScenarioKind::MultistyleReverbMatched).copies().is_err());
        assert!(ScenarioSpec::new(ScenarioKind::Matched).copies().is_err());
    }

    #[test]
    fn fallback_when_class_missing_in_dev() {
        let mut ens = toy_ensemble(None);
        let set = MetaTrainingSet {
            scores: vec![vec![vec![1.0, 2.0]]; 3],
            labels: vec![0, 0, 0],
        };
        let rep = train_stacked_from_scores(&mut ens, &set, &MetaParams::default()).unwrap();
        assert_eq!(rep.fallbacks, vec![(0, 1)]);
        assert_eq!(ens.problem_scores(&[vec![0.4, -0.1]], Aggregation::Stacked).unwrap(), vec![0.0]);
    }
}
