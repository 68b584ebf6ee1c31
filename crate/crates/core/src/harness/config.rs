//! Experiment configuration.
//!
//! A run is described by one TOML file. Every key has a default, unknown
//! keys are rejected, and `validate` runs before any work starts. Example:
//!
//! ```toml
//! output_dir = "runs/white"
//! seed = 1
//! front_ends = ["mfcc", "subband", "fused"]
//! noise = ["white", "pink", "file:noise/babble.wav"]
//! snr_grid = ["quiet", 18, 12, 6, 0, -6]
//! theta = 6
//!
//! [svm]
//! c = 1.0
//!
//! [subband]
//! channels = 16
//! frames = 10
//!
//! [corpus.synthetic]
//! train = 150
//! dev = 20
//! test = 150
//!
//! [[scenarios]]
//! name = "anechoic"
//! subband = "multistyle_anechoic"
//! mfcc = "anechoic_vts"
//! ```

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::SynthSpec;
use crate::ensemble::{MetaParams, ScenarioKind};
use crate::error::{Error, Result};
use crate::features::{GmmTrainConfig, MelFrontEnd, MfccConfig, SubbandExtractor, SubbandFeatureConfig, VtsConfig};
use crate::fusion::FusionParams;
use crate::mfcc_frontend::{MfccParams, MfccScenarioKind};
use crate::signal::{NoiseKind, Rir, RirVariant, Snr};
use crate::svm::SvmParams;

/// Classifier whose errors are reported. `Majority` is the subband
/// ensemble with majority voting, `Subband` the stacked ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrontEnd {
    Mfcc,
    Subband,
    Majority,
    Fused,
}

impl FrontEnd {
    pub const ALL: [FrontEnd; 4] = [FrontEnd::Mfcc, FrontEnd::Subband, FrontEnd::Majority, FrontEnd::Fused];

    pub fn name(self) -> &'static str {
        match self {
            FrontEnd::Mfcc => "mfcc",
            FrontEnd::Subband => "subband",
            FrontEnd::Majority => "majority",
            FrontEnd::Fused => "fused",
        }
    }

    pub fn needs_base(self) -> bool {
        self != FrontEnd::Mfcc
    }

    pub fn needs_meta(self) -> bool {
        matches!(self, FrontEnd::Subband | FrontEnd::Fused)
    }

    pub fn needs_mfcc(self) -> bool {
        matches!(self, FrontEnd::Mfcc | FrontEnd::Fused)
    }
}

impl FromStr for FrontEnd {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        FrontEnd::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown front-end '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticCorpus {
    pub spec: SynthSpec,
    pub train: usize,
    pub dev: usize,
    pub test: usize,
    /// Train, dev and test use `seed`, `seed + 1` and `seed + 2`.
    pub seed: u64,
}

impl Default for SyntheticCorpus {
    fn default() -> Self {
        SyntheticCorpus {
            spec: SynthSpec::default(),
            train: 40,
            dev: 10,
            test: 20,
            seed: 1,
        }
    }
}

/// Directories of `<id>.wav` + `<id>.phn` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DirectoryCorpus {
    pub train_dir: PathBuf,
    pub dev_dir: PathBuf,
    pub test_dir: PathBuf,
    /// Fold table; the bundled 48-class TIMIT map when absent.
    pub class_map: Option<PathBuf>,
    #[serde(default = "default_dev_fraction")]
    pub dev_subset_fraction: f64,
}

fn default_dev_fraction() -> f64 {
    1.0 / 8.0
}

/// Exactly one of the two sources must be given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusConfig {
    pub synthetic: Option<SyntheticCorpus>,
    pub directory: Option<DirectoryCorpus>,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            synthetic: Some(SyntheticCorpus::default()),
            directory: None,
        }
    }
}

/// Impulse responses: `synthetic:primary`, `synthetic:proxy`, or a path
/// to a PCM or text file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RirConfig {
    /// Applied to the test data of reverberant scenarios.
    pub primary: String,
    /// Stand-in used by the mismatched scenarios.
    pub proxy: String,
}

impl Default for RirConfig {
    fn default() -> Self {
        RirConfig {
            primary: "synthetic:primary".into(),
            proxy: "synthetic:proxy".into(),
        }
    }
}

pub fn resolve_rir(reference: &str) -> Result<Rir> {
    match reference {
        "synthetic:primary" => Ok(Rir::synthetic(RirVariant::Primary)),
        "synthetic:proxy" => Ok(Rir::synthetic(RirVariant::Proxy)),
        path => Rir::load(Path::new(path)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    /// Meta-level training of the subband ensemble.
    #[serde(default = "default_subband_scenario")]
    pub subband: ScenarioKind,
    #[serde(default = "default_mfcc_scenario")]
    pub mfcc: MfccScenarioKind,
    /// Convolve the test data with the primary RIR.
    #[serde(default)]
    pub reverberant: bool,
}

fn default_subband_scenario() -> ScenarioKind {
    ScenarioKind::MultistyleAnechoic
}

fn default_mfcc_scenario() -> MfccScenarioKind {
    MfccScenarioKind::AnechoicVts
}

impl ScenarioConfig {
    pub fn anechoic() -> Self {
        ScenarioConfig {
            name: "anechoic".into(),
            subband: default_subband_scenario(),
            mfcc: default_mfcc_scenario(),
            reverberant: false,
        }
    }
}

/// Cepstral front-end settings; kernel degree and SVM settings are shared
/// with the subband front-end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MfccSection {
    pub features: MfccConfig,
    pub gmm_components: usize,
    pub gmm: GmmTrainConfig,
    pub vts: VtsConfig,
    pub unit_scale: bool,
    pub compensate_training: bool,
}

impl Default for MfccSection {
    fn default() -> Self {
        let p = MfccParams::default();
        MfccSection {
            features: p.mfcc,
            gmm_components: p.gmm_components,
            gmm: p.gmm,
            vts: p.vts,
            unit_scale: p.unit_scale,
            compensate_training: p.compensate_training,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub output_dir: PathBuf,
    /// Defaults to `<output_dir>/cache`.
    pub cache_dir: Option<PathBuf>,
    pub seed: u64,
    pub front_ends: Vec<FrontEnd>,
    pub noise: Vec<NoiseKind>,
    /// An empty grid evaluates quiet only.
    pub snr_grid: Vec<Snr>,
    /// Polynomial degree of every kernel.
    pub theta: u32,
    pub svm: SvmParams,
    pub subband: SubbandFeatureConfig,
    pub mfcc: MfccSection,
    pub meta: MetaParams,
    pub fusion: FusionParams,
    pub rir: RirConfig,
    pub corpus: CorpusConfig,
    pub scenarios: Vec<ScenarioConfig>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            output_dir: PathBuf::from("runs/default"),
            cache_dir: None,
            seed: 1,
            front_ends: vec![FrontEnd::Mfcc, FrontEnd::Subband, FrontEnd::Fused],
            noise: vec![NoiseKind::White],
            snr_grid: vec![
                Snr::Quiet,
                Snr::Db(18.0),
                Snr::Db(12.0),
                Snr::Db(6.0),
                Snr::Db(0.0),
                Snr::Db(-6.0),
            ],
            theta: 6,
            svm: SvmParams::default(),
            subband: SubbandFeatureConfig::default(),
            mfcc: MfccSection::default(),
            meta: MetaParams::default(),
            fusion: FusionParams::default(),
            rir: RirConfig::default(),
            corpus: CorpusConfig::default(),
            scenarios: vec![ScenarioConfig::anechoic()],
        }
    }
}

fn valid_name(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn cache_path(&self) -> PathBuf {
        self.cache_dir.clone().unwrap_or_else(|| self.output_dir.join("cache"))
    }

    /// Grid points in evaluation order; quiet alone for an empty grid.
    pub fn snr_points(&self) -> Vec<Snr> {
        if self.snr_grid.is_empty() {
            vec![Snr::Quiet]
        } else {
            self.snr_grid.clone()
        }
    }

    pub fn mfcc_params(&self) -> MfccParams {
        MfccParams {
            mfcc: self.mfcc.features.clone(),
            theta: self.theta,
            svm: self.svm,
            gmm_components: self.mfcc.gmm_components,
            gmm: self.mfcc.gmm,
            vts: self.mfcc.vts,
            unit_scale: self.mfcc.unit_scale,
            compensate_training: self.mfcc.compensate_training,
        }
    }

    pub fn needs(&self, f: impl Fn(FrontEnd) -> bool) -> bool {
        self.front_ends.iter().any(|&fe| f(fe))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.front_ends.is_empty() {
            return bad("front_ends is empty".into());
        }
        if self.front_ends.iter().collect::<HashSet<_>>().len() != self.front_ends.len() {
            return bad("front_ends has duplicates".into());
        }
        if self.noise.is_empty() {
            return bad("noise is empty".into());
        }
        for n in &self.noise {
            if let NoiseKind::File(p) = n {
                if !p.is_file() {
                    return bad(format!("noise file {} does not exist", p.display()));
                }
            }
        }
        let mut seen = Vec::new();
        for s in &self.snr_grid {
            if let Snr::Db(v) = s {
                if !v.is_finite() {
                    return bad(format!("SNR {v} is not finite"));
                }
            }
            if seen.contains(s) {
                return bad(format!("SNR {s} listed twice"));
            }
            seen.push(*s);
        }
        if self.theta == 0 {
            return bad("theta must be at least 1".into());
        }
        if !(self.svm.c > 0.0 && self.svm.c.is_finite()) || !(self.meta.svm.c > 0.0) {
            return bad("SVM C must be positive".into());
        }
        if !(self.svm.tol > 0.0) {
            return bad("SVM tolerance must be positive".into());
        }
        SubbandExtractor::new(self.subband.clone()).map_err(|e| Error::Config(format!("subband: {e}")))?;
        MelFrontEnd::new(self.mfcc.features.clone()).map_err(|e| Error::Config(format!("mfcc: {e}")))?;
        if self.mfcc.gmm_components == 0 {
            return bad("mfcc.gmm_components must be positive".into());
        }
        self.fusion.validate()?;
        match (&self.corpus.synthetic, &self.corpus.directory) {
            (Some(s), None) => {
                if s.train == 0 || s.dev == 0 || s.test == 0 {
                    return bad("synthetic corpus needs non-empty train, dev and test splits".into());
                }
            }
            (None, Some(d)) => {
                if !(d.dev_subset_fraction > 0.0 && d.dev_subset_fraction <= 1.0) {
                    return bad("dev_subset_fraction must lie in (0, 1]".into());
                }
            }
            _ => return bad("exactly one of corpus.synthetic and corpus.directory must be set".into()),
        }
        if self.scenarios.is_empty() {
            return bad("no scenarios".into());
        }
        let mut names = HashSet::new();
        for s in &self.scenarios {
            if !valid_name(&s.name) {
                return bad(format!("scenario name '{}' must be non-empty ASCII letters, digits, '-' or '_'", s.name));
            }
            if !names.insert(s.name.as_str()) {
                return bad(format!("scenario '{}' listed twice", s.name));
            }
        }
        Ok(())
    }
}
