//! Experiment orchestration: corpus loading, cached model training, SNR
//! sweeps over noise kinds and scenarios, and the output files of a run.
//!
//! A run directory holds `results.csv`, `plot_*.dat`, `weights/*.csv`,
//! `confusion/*.csv`, and `manifest.json`. The manifest records the fully
//! resolved configuration, the code version, the corpus digests, every
//! model with its cache key and status, meta-level fallbacks, and warnings.
//! Passing a manifest back as the configuration repeats the run.

pub mod cache;
pub mod config;
pub mod report;

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::corpus::{
    load_corpus, make_synthetic_corpus, sample_dev_subset, synthetic_class_map, ClassMap, SynthSpec, Utterance,
};
use crate::ensemble::{
    extract_instances, train_base, train_stacked, weight_report, weight_report_csv, Aggregation, ScenarioKind,
    ScenarioSpec, SubbandEnsemble,
};
use crate::error::{Error, Result};
use crate::features::SubbandExtractor;
use crate::fusion::{fuse_scores, ScoreScale};
use crate::mfcc_frontend::{extract_vectors, train_mfcc_classifier, MfccClassifier, MfccScenario, MfccScenarioKind};
use crate::multiclass::{decode, Loss};
use crate::signal::{sentence_seed, Corruption, Rir, Snr};
use crate::svm::io::FORMAT_VERSION;

pub use cache::{CacheStatus, ModelCache, CACHE_VERSION};
pub use config::{CorpusConfig, DirectoryCorpus, ExperimentConfig, FrontEnd, ScenarioConfig, SyntheticCorpus};
pub use report::{compute_error, emit_plot_data, plot_data, ResultRow, ResultTable};

pub const MANIFEST_FORMAT: u32 = 1;

pub fn code_version() -> String {
    format!(
        "{} {} (model format {FORMAT_VERSION}, cache format {CACHE_VERSION})",
        env!("CARGO_PKG_NAME"),
        env!("CARGO_PKG_VERSION")
    )
}

/// Seed for one stage of a run.
fn stage_seed(seed: u64, stage: &str) -> u64 {
    sentence_seed(seed, stage)
}

pub struct Splits {
    pub train: Vec<Utterance>,
    pub dev: Vec<Utterance>,
    pub test: Vec<Utterance>,
    pub class_map: ClassMap,
}

fn load_dir(dir: &Path, class_map: &ClassMap) -> Result<Vec<Utterance>> {
    if !dir.is_dir() {
        return Err(Error::Config(format!("corpus directory {} not found", dir.display())));
    }
    let mut report = load_corpus(dir, dir, class_map)?;
    if let Some(e) = report.errors.pop() {
        return Err(e);
    }
    if report.utterances.is_empty() {
        return Err(Error::Config(format!("no utterances in {}", dir.display())));
    }
    Ok(report.utterances)
}

pub fn load_splits(config: &ExperimentConfig) -> Result<Splits> {
    match (&config.corpus.synthetic, &config.corpus.directory) {
        (Some(s), _) => {
            let split = |n: usize, offset: u64| {
                make_synthetic_corpus(
                    &SynthSpec {
                        n_utterances: n,
                        ..s.spec.clone()
                    },
                    s.seed.wrapping_add(offset),
                )
            };
            Ok(Splits {
                train: split(s.train, 0)?,
                dev: split(s.dev, 1)?,
                test: split(s.test, 2)?,
                class_map: synthetic_class_map(s.spec.n_classes),
            })
        }
        (None, Some(d)) => {
            let class_map = match &d.class_map {
                Some(p) => ClassMap::load(p)?,
                None => ClassMap::timit_48(),
            };
            let dev_all = load_dir(&d.dev_dir, &class_map)?;
            Ok(Splits {
                train: load_dir(&d.train_dir, &class_map)?,
                dev: sample_dev_subset(&dev_all, d.dev_subset_fraction, stage_seed(config.seed, "dev-subset"))?,
                test: load_dir(&d.test_dir, &class_map)?,
                class_map,
            })
        }
        (None, None) => Err(Error::Config("no corpus configured".into())),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub utterances: usize,
    pub phones: usize,
    pub digest: String,
}

fn summarize(us: &[Utterance]) -> SplitSummary {
    SplitSummary {
        utterances: us.len(),
        phones: us.iter().map(|u| u.phones.len()).sum(),
        digest: cache::corpus_digest(us),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRecord {
    pub role: String,
    pub key: String,
    pub cache: CacheStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FallbackRecord {
    pub model: String,
    /// Class-name pairs of problems that use majority voting.
    pub problems: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: u32,
    pub code_version: String,
    pub config: ExperimentConfig,
    pub cache_dir: PathBuf,
    pub corpus: BTreeMap<String, SplitSummary>,
    pub models: Vec<ModelRecord>,
    pub fallbacks: Vec<FallbackRecord>,
    pub warnings: Vec<String>,
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }
}

/// Reads a TOML configuration, or the configuration stored in a manifest
/// (`.json`).
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    if path.extension().and_then(|e| e.to_str()) == Some("json") {
        let m = Manifest::load(path)?;
        m.config.validate()?;
        Ok(m.config)
    } else {
        ExperimentConfig::load(path)
    }
}

/// Per-problem score scales fitted on clean development data.
#[derive(Debug, Clone)]
struct Scaled<T> {
    model: T,
    scale: ScoreScale,
}

/// Loaded corpus, cache and shared extractors for one configuration.
pub struct Session {
    pub config: ExperimentConfig,
    pub splits: Splits,
    pub extractor: SubbandExtractor,
    cache: ModelCache,
    rir: Rir,
    proxy_rir: Rir,
    digests: BTreeMap<String, SplitSummary>,
    base: Option<(SubbandEnsemble, String)>,
    pub models: Vec<ModelRecord>,
    pub fallbacks: Vec<FallbackRecord>,
    pub warnings: Vec<String>,
}

impl Session {
    pub fn open(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let splits = load_splits(config)?;
        let mut digests = BTreeMap::new();
        digests.insert("train".to_string(), summarize(&splits.train));
        digests.insert("dev".to_string(), summarize(&splits.dev));
        digests.insert("test".to_string(), summarize(&splits.test));
        Ok(Session {
            extractor: SubbandExtractor::new(config.subband.clone())?,
            cache: ModelCache::open(config.cache_path())?,
            rir: config::resolve_rir(&config.rir.primary)?,
            proxy_rir: config::resolve_rir(&config.rir.proxy)?,
            config: config.clone(),
            splits,
            digests,
            base: None,
            models: Vec::new(),
            fallbacks: Vec::new(),
            warnings: Vec::new(),
        })
    }

    pub fn class_names(&self) -> Vec<String> {
        self.splits.class_map.class_names().to_vec()
    }

    fn record(&mut self, role: String, key: &str, status: CacheStatus) {
        if let CacheStatus::Recomputed { reason } = &status {
            self.warnings.push(format!("{role}: recomputed ({reason})"));
        }
        info!("{role}: {status:?}");
        self.models.push(ModelRecord {
            role,
            key: key.to_string(),
            cache: status,
        });
    }

    /// Base-level subband ensemble, trained on clean training data.
    pub fn base(&mut self) -> Result<(SubbandEnsemble, String)> {
        if let Some(b) = &self.base {
            return Ok(b.clone());
        }
        let cfg = &self.config;
        let key = cache::cache_key(&json!({
            "model": "subband-base",
            "train": self.digests["train"].digest,
            "classes": self.class_names(),
            "features": cfg.subband,
            "theta": cfg.theta,
            "svm": cfg.svm,
        }));
        let names = self.class_names();
        let (ens, status) = self.cache.get_or_compute(
            &key,
            |e: &SubbandEnsemble| Ok(e.to_bytes()),
            SubbandEnsemble::from_bytes,
            || {
                let seed = stage_seed(cfg.seed, "base");
                let set = extract_instances(&self.extractor, &self.splits.train, &Corruption::clean(), seed, None)?;
                info!("training base ensemble on {} instances", set.len());
                train_base(&set, &names, cfg.theta, &cfg.svm)
            },
        )?;
        self.record("subband-base".into(), &key, status);
        self.base = Some((ens.clone(), key.clone()));
        Ok((ens, key))
    }

    fn scenario_spec(&self, kind: ScenarioKind, matched: Option<&Corruption>) -> ScenarioSpec {
        ScenarioSpec {
            kind,
            rir: Some(self.rir.clone()),
            proxy_rir: Some(self.proxy_rir.clone()),
            matched: matched.cloned(),
        }
    }

    /// Stacked ensemble for `kind`; `matched` is the test corruption for
    /// the matched kind.
    pub fn stacked(&mut self, kind: ScenarioKind, matched: Option<&Corruption>) -> Result<SubbandEnsemble> {
        let (base, base_key) = self.base()?;
        let spec = self.scenario_spec(kind, matched);
        let copies: Vec<serde_json::Value> = spec.copies()?.iter().map(cache::corruption_key).collect();
        let cfg = &self.config;
        let seed = stage_seed(cfg.seed, "meta");
        let key = cache::cache_key(&json!({
            "model": "subband-stacked",
            "base": base_key,
            "dev": self.digests["dev"].digest,
            "copies": copies,
            "meta": cfg.meta,
            "seed": seed,
        }));
        let (ens, status) = self.cache.get_or_compute(
            &key,
            |e: &SubbandEnsemble| Ok(e.to_bytes()),
            SubbandEnsemble::from_bytes,
            || {
                let mut ens = base;
                train_stacked(&mut ens, &self.extractor, &self.splits.dev, &spec, &cfg.meta, seed, None)?;
                Ok(ens)
            },
        )?;
        let role = format!("subband-stacked {}", describe_kind(&spec.copies()?));
        let names = self.class_names();
        let fallbacks: Vec<(String, String)> = match &ens.meta {
            Some(metas) => metas
                .iter()
                .zip(ens.coding.pairs())
                .filter(|(m, _)| matches!(m, crate::ensemble::MetaModel::Fallback))
                .map(|(_, &(p, q))| (names[p].clone(), names[q].clone()))
                .collect(),
            None => Vec::new(),
        };
        if !fallbacks.is_empty() {
            self.fallbacks.push(FallbackRecord {
                model: role.clone(),
                problems: fallbacks,
            });
        }
        self.record(role, &key, status);
        Ok(ens)
    }

    fn mfcc_scenario(&self, kind: MfccScenarioKind, matched: Option<&Corruption>) -> MfccScenario {
        MfccScenario {
            kind,
            rir: Some(self.rir.clone()),
            proxy_rir: Some(self.proxy_rir.clone()),
            matched: matched.cloned(),
        }
    }

    pub fn mfcc(&mut self, kind: MfccScenarioKind, matched: Option<&Corruption>) -> Result<MfccClassifier> {
        let scenario = self.mfcc_scenario(kind, matched);
        let training = scenario.training_corruption()?;
        let params = self.config.mfcc_params();
        let seed = stage_seed(self.config.seed, "mfcc");
        let key = cache::cache_key(&json!({
            "model": "mfcc",
            "train": self.digests["train"].digest,
            "classes": self.class_names(),
            "training": cache::corruption_key(&training),
            "vts": scenario.uses_vts(),
            "params": params,
            "seed": seed,
        }));
        let names = self.class_names();
        let (clf, status) = self.cache.get_or_compute(
            &key,
            MfccClassifier::to_bytes,
            MfccClassifier::from_bytes,
            || train_mfcc_classifier(&self.splits.train, &names, &scenario, &params, seed),
        )?;
        self.record(format!("mfcc {kind:?} trained on {}", training.describe()), &key, status);
        Ok(clf)
    }

    fn subband_scale(&self, ens: &SubbandEnsemble) -> Result<ScoreScale> {
        let dev = extract_instances(
            &self.extractor,
            &self.splits.dev,
            &Corruption::clean(),
            stage_seed(self.config.seed, "scale"),
            None,
        )?;
        let scores = dev
            .instances
            .par_iter()
            .map(|x| ens.problem_scores(&ens.base_scores(x)?, Aggregation::Stacked))
            .collect::<Result<Vec<_>>>()?;
        ScoreScale::for_mode(self.config.fusion.normalization, &scores)
    }

    fn mfcc_scale(&self, clf: &MfccClassifier) -> Result<ScoreScale> {
        let (xs, _) = extract_vectors(
            clf.front_end(),
            &clf.params,
            &self.splits.dev,
            &Corruption::clean(),
            stage_seed(self.config.seed, "scale"),
            clf.gmm.as_ref(),
        )?;
        let scores = xs.par_iter().map(|x| clf.scores(x)).collect::<Result<Vec<_>>>()?;
        ScoreScale::for_mode(self.config.fusion.normalization, &scores)
    }
}

fn describe_kind(copies: &[Corruption]) -> String {
    copies.iter().map(Corruption::describe).collect::<Vec<_>>().join("+")
}

/// Models used at one grid point.
struct PointModels<'a> {
    base: Option<&'a SubbandEnsemble>,
    stacked: Option<&'a Scaled<SubbandEnsemble>>,
    mfcc: Option<&'a Scaled<MfccClassifier>>,
}

/// Predictions of every requested front-end for every test phone.
struct Predictions {
    truths: Vec<usize>,
    by_front_end: BTreeMap<FrontEnd, Vec<usize>>,
}

fn evaluate(session: &Session, models: &PointModels<'_>, corruption: &Corruption) -> Result<Predictions> {
    let cfg = &session.config;
    let seed = stage_seed(cfg.seed, "test");
    let fes = &cfg.front_ends;
    let per_utt: Vec<Vec<(usize, Vec<usize>)>> = session
        .splits
        .test
        .par_iter()
        .map(|u| {
            let x = corruption.apply(&u.samples, sentence_seed(seed, &u.id))?;
            let centers: Vec<usize> = u.phones.iter().map(|p| p.center()).collect();
            let sub = match models.base {
                Some(_) => Some(session.extractor.sentence_features(&x, &centers)?),
                None => None,
            };
            let mf = match models.mfcc {
                Some(m) => Some(m.model.test_vectors(&x, &centers)?),
                None => None,
            };
            let lambda = if fes.contains(&FrontEnd::Fused) {
                cfg.fusion.lambda_for(&x)?
            } else {
                0.0
            };
            u.phones
                .iter()
                .enumerate()
                .map(|(k, p)| {
                    let f = match (models.base, &sub) {
                        (Some(b), Some(inst)) => Some(b.base_scores(&inst[k])?),
                        _ => None,
                    };
                    let fm = match (models.mfcc, &mf) {
                        (Some(m), Some(v)) => Some(m.model.scores(&v[k])?),
                        _ => None,
                    };
                    let mut preds = Vec::with_capacity(fes.len());
                    for fe in fes {
                        let scores = match fe {
                            FrontEnd::Mfcc => fm.clone().ok_or_else(missing)?,
                            FrontEnd::Majority => {
                                let b = models.base.ok_or_else(missing)?;
                                b.problem_scores(f.as_ref().ok_or_else(missing)?, Aggregation::Majority)?
                            }
                            FrontEnd::Subband | FrontEnd::Fused => {
                                let s = models.stacked.ok_or_else(missing)?;
                                let h = s.model.problem_scores(f.as_ref().ok_or_else(missing)?, Aggregation::Stacked)?;
                                if *fe == FrontEnd::Subband {
                                    h
                                } else {
                                    let m = models.mfcc.ok_or_else(missing)?;
                                    let fm = fm.as_ref().ok_or_else(missing)?;
                                    fuse_scores(&m.scale.apply(fm)?, &s.scale.apply(&h)?, lambda)?
                                }
                            }
                        };
                        let coding = match models.base {
                            Some(b) => &b.coding,
                            None => &models.mfcc.ok_or_else(missing)?.model.coding,
                        };
                        preds.push(decode(&scores, coding, Loss::Hinge)?);
                    }
                    Ok((p.class_id, preds))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let mut out = Predictions {
        truths: Vec::new(),
        by_front_end: fes.iter().map(|&fe| (fe, Vec::new())).collect(),
    };
    for (truth, preds) in per_utt.into_iter().flatten() {
        out.truths.push(truth);
        for (fe, p) in fes.iter().zip(preds) {
            out.by_front_end.get_mut(fe).expect("front-end present").push(p);
        }
    }
    Ok(out)
}

fn missing() -> Error {
    Error::invalid("front-end requested without its model")
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub table: ResultTable,
    pub manifest: Manifest,
}

fn write_file(dir: &Path, rel: &str, text: &str, outputs: &mut Vec<String>) -> Result<()> {
    let path = dir.join(rel);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    outputs.push(rel.to_string());
    Ok(())
}

fn snr_tag(snr: Snr) -> String {
    match snr {
        Snr::Quiet => "quiet".into(),
        Snr::Db(v) => format!("{v}dB"),
    }
}

/// Runs every (scenario, noise, SNR) point of the configuration and writes
/// the run directory.
pub fn run_sweep(config: &ExperimentConfig) -> Result<SweepOutcome> {
    let mut session = Session::open(config)?;
    let cfg = session.config.clone();
    let out_dir = cfg.output_dir.clone();
    fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
    let names = session.class_names();
    let mut outputs = Vec::new();
    let mut table = ResultTable::default();

    let base = if cfg.needs(FrontEnd::needs_base) {
        Some(session.base()?.0)
    } else {
        None
    };
    for sc in &cfg.scenarios {
        let test_rir = sc.reverberant.then(|| session.rir.clone());
        let mut stacked_fixed = None;
        if cfg.needs(FrontEnd::needs_meta) && sc.subband != ScenarioKind::Matched {
            let ens = session.stacked(sc.subband, None)?;
            write_file(
                &out_dir,
                &format!("weights/weights_{}.csv", sc.name),
                &weight_report_csv(&weight_report(&ens)?),
                &mut outputs,
            )?;
            let scale = session.subband_scale(&ens)?;
            stacked_fixed = Some(Scaled { model: ens, scale });
        }
        let mut mfcc_fixed = None;
        if cfg.needs(FrontEnd::needs_mfcc) && sc.mfcc != MfccScenarioKind::Matched {
            let clf = session.mfcc(sc.mfcc, None)?;
            let scale = session.mfcc_scale(&clf)?;
            mfcc_fixed = Some(Scaled { model: clf, scale });
        }
        // quiet points are identical across noise kinds
        let mut done: HashMap<String, BTreeMap<FrontEnd, f64>> = HashMap::new();
        for noise in &cfg.noise {
            for snr in cfg.snr_points() {
                let corruption = Corruption::noisy(noise.clone(), snr).with_rir(test_rir.clone());
                let tag = format!("{}_{}_{}", sc.name, noise.name(), snr_tag(snr));
                let point_key = corruption.describe();
                let errors = match done.get(&point_key) {
                    Some(e) => e.clone(),
                    None => {
                        let stacked_point = match (&stacked_fixed, cfg.needs(FrontEnd::needs_meta)) {
                            (None, true) => {
                                let ens = session.stacked(sc.subband, Some(&corruption))?;
                                write_file(
                                    &out_dir,
                                    &format!("weights/weights_{tag}.csv"),
                                    &weight_report_csv(&weight_report(&ens)?),
                                    &mut outputs,
                                )?;
                                let scale = session.subband_scale(&ens)?;
                                Some(Scaled { model: ens, scale })
                            }
                            _ => None,
                        };
                        let mfcc_point = match (&mfcc_fixed, cfg.needs(FrontEnd::needs_mfcc)) {
                            (None, true) => {
                                let clf = session.mfcc(sc.mfcc, Some(&corruption))?;
                                let scale = session.mfcc_scale(&clf)?;
                                Some(Scaled { model: clf, scale })
                            }
                            _ => None,
                        };
                        let models = PointModels {
                            base: base.as_ref(),
                            stacked: stacked_fixed.as_ref().or(stacked_point.as_ref()),
                            mfcc: mfcc_fixed.as_ref().or(mfcc_point.as_ref()),
                        };
                        let preds = evaluate(&session, &models, &corruption)?;
                        let mut errors = BTreeMap::new();
                        for (&fe, p) in &preds.by_front_end {
                            errors.insert(fe, compute_error(p, &preds.truths, &session.splits.class_map)?);
                            let m = report::confusion_matrix(p, &preds.truths, names.len())?;
                            write_file(
                                &out_dir,
                                &format!("confusion/confusion_{}_{}.csv", fe.name(), tag),
                                &report::confusion_csv(&m, &names),
                                &mut outputs,
                            )?;
                        }
                        info!("{tag}: {errors:?}");
                        done.insert(point_key, errors.clone());
                        errors
                    }
                };
                for (fe, err) in errors {
                    table.push(ResultRow {
                        front_end: fe,
                        scenario: sc.name.clone(),
                        noise: noise.name(),
                        snr,
                        error_pct: err,
                        n_test: session.splits.test_phones(),
                        seed: cfg.seed,
                    })?;
                }
            }
        }
    }
    table.sort();
    write_file(&out_dir, "results.csv", &table.to_csv(), &mut outputs)?;
    for (name, text) in plot_data(&table)? {
        write_file(&out_dir, &name, &text, &mut outputs)?;
    }
    outputs.push("manifest.json".into());
    outputs.sort();
    outputs.dedup();
    let manifest = Manifest {
        format: MANIFEST_FORMAT,
        code_version: code_version(),
        config: cfg.clone(),
        cache_dir: cfg.cache_path(),
        corpus: session.digests.clone(),
        models: session.models.clone(),
        fallbacks: session.fallbacks.clone(),
        warnings: session.warnings.clone(),
        outputs,
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Format(e.to_string()))?;
    let path = out_dir.join("manifest.json");
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(SweepOutcome { table, manifest })
}

impl Splits {
    pub fn test_phones(&self) -> usize {
        self.test.iter().map(|u| u.phones.len()).sum()
    }
}
