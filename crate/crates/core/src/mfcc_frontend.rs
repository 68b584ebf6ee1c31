//! Cepstral baseline: 390-dimensional MFCC context vectors, polynomial
//! kernel SVMs and pairwise decoding, with VTS compensation at test time.

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Utterance;
use crate::ensemble::check_classes;
use crate::error::{Error, Result};
use crate::features::{
    concat_center, estimate_noise_mean, gmm_train_with, vts_compensate_with, CmvnStats, GmmModel, GmmTrainConfig,
    MelFrontEnd, MfccConfig, VtsConfig,
};
use crate::kernels::{Kernel, KernelKind, KernelParams};
use crate::multiclass::{build_pairwise, decode, train_pairwise, CodingMatrix, Loss};
use crate::signal::{sentence_seed, Corruption, Rir};
use crate::svm::io::{read_binary_model, write_binary_model, Reader};
use crate::svm::{BinarySvmModel, SvmParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MfccScenarioKind {
    /// Clean training, VTS on test data.
    AnechoicVts,
    /// Training convolved with the test RIR, VTS on test data.
    ReverbMatchedVts,
    /// Training convolved with a proxy RIR, VTS on test data.
    ReverbMismatchedVts,
    /// Training corrupted exactly like the test data, no VTS.
    Matched,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MfccScenario {
    pub kind: MfccScenarioKind,
    pub rir: Option<Rir>,
    pub proxy_rir: Option<Rir>,
    pub matched: Option<Corruption>,
}

impl MfccScenario {
    pub fn new(kind: MfccScenarioKind) -> Self {
        MfccScenario {
            kind,
            rir: None,
            proxy_rir: None,
            matched: None,
        }
    }

    pub fn anechoic() -> Self {
        MfccScenario::new(MfccScenarioKind::AnechoicVts)
    }

    pub fn matched(test: Corruption) -> Self {
        MfccScenario {
            matched: Some(test),
            ..MfccScenario::new(MfccScenarioKind::Matched)
        }
    }

    pub fn uses_vts(&self) -> bool {
        self.kind != MfccScenarioKind::Matched
    }

    /// Corruption applied to the training audio.
    pub fn training_corruption(&self) -> Result<Corruption> {
        let need = |r: &Option<Rir>, what: &str| {
            r.clone()
                .ok_or_else(|| Error::Config(format!("scenario {:?} needs a {what}", self.kind)))
        };
        Ok(match self.kind {
            MfccScenarioKind::AnechoicVts => Corruption::clean(),
            MfccScenarioKind::ReverbMatchedVts => Corruption::clean().with_rir(Some(need(&self.rir, "test RIR")?)),
            MfccScenarioKind::ReverbMismatchedVts => {
                Corruption::clean().with_rir(Some(need(&self.proxy_rir, "proxy RIR")?))
            }
            MfccScenarioKind::Matched => self
                .matched
                .clone()
                .ok_or_else(|| Error::Config("matched scenario needs the test corruption".into()))?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MfccParams {
    pub mfcc: MfccConfig,
    pub theta: u32,
    pub svm: SvmParams,
    pub gmm_components: usize,
    pub gmm: GmmTrainConfig,
    pub vts: VtsConfig,
    /// Divide context vectors by the square root of their dimension so
    /// CMVN-standardized inputs have roughly unit norm.
    pub unit_scale: bool,
    /// Also pass training sentences through VTS so training and test
    /// vectors see the same compensation.
    pub compensate_training: bool,
}

impl Default for MfccParams {
    fn default() -> Self {
        MfccParams {
            mfcc: MfccConfig::default(),
            theta: 6,
            svm: SvmParams::default(),
            gmm_components: 64,
            gmm: GmmTrainConfig::default(),
            vts: VtsConfig::default(),
            unit_scale: true,
            compensate_training: false,
        }
    }
}

/// Trained cepstral classifier.
#[derive(Debug, Clone)]
pub struct MfccClassifier {
    pub params: MfccParams,
    pub coding: CodingMatrix,
    pub kernel: KernelParams,
    /// Clean log-mel model for VTS; absent in matched mode.
    pub gmm: Option<GmmModel>,
    pub store: Vec<Vec<f64>>,
    pub train_labels: Vec<usize>,
    pub models: Vec<BinarySvmModel>,
    front: MelFrontEnd,
}

impl PartialEq for MfccClassifier {
    fn eq(&self, other: &Self) -> bool {
        self.params == other.params
            && self.coding == other.coding
            && self.kernel == other.kernel
            && self.gmm == other.gmm
            && self.store == other.store
            && self.train_labels == other.train_labels
            && self.models == other.models
    }
}

/// Context vectors of every phone of one (already corrupted) sentence.
pub fn sentence_vectors(
    front: &MelFrontEnd,
    params: &MfccParams,
    samples: &[f64],
    centers: &[usize],
    gmm: Option<&GmmModel>,
) -> Result<Vec<Vec<f64>>> {
    let mut log_mel = front.log_mel(samples)?;
    if let Some(gmm) = gmm {
        let (mean, var) = estimate_noise_mean(&log_mel, params.vts.edge_frames)?;
        log_mel = vts_compensate_with(&log_mel, gmm, &mean, &var, &params.vts)?;
    }
    let mut frames = front.dynamic_cepstra(&log_mel);
    let stats = CmvnStats::fit(&frames)?;
    frames.iter_mut().for_each(|f| stats.apply(f));
    centers
        .iter()
        .map(|&c| {
            let mut v = concat_center(front, &frames, c)?;
            if params.unit_scale {
                let g = (v.len() as f64).sqrt().recip();
                v.iter_mut().for_each(|x| *x *= g);
            }
            Ok(v)
        })
        .collect()
}

/// Context vectors for all phones of `sentences` after `corruption`.
pub fn extract_vectors(
    front: &MelFrontEnd,
    params: &MfccParams,
    sentences: &[Utterance],
    corruption: &Corruption,
    seed: u64,
    gmm: Option<&GmmModel>,
) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
    let per: Vec<(Vec<Vec<f64>>, Vec<usize>)> = sentences
        .par_iter()
        .map(|u| {
            let samples = corruption.apply(&u.samples, sentence_seed(seed, &u.id))?;
            let centers: Vec<usize> = u.phones.iter().map(|p| p.center()).collect();
            let v = sentence_vectors(front, params, &samples, &centers, gmm)?;
            Ok((v, u.phones.iter().map(|p| p.class_id).collect()))
        })
        .collect::<Result<_>>()?;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (v, l) in per {
        xs.extend(v);
        ys.extend(l);
    }
    Ok((xs, ys))
}

/// Trains the GMM on training log-mel frames, then the pairwise SVMs on
/// the training vectors.
pub fn train_mfcc_classifier(
    train: &[Utterance],
    class_names: &[String],
    scenario: &MfccScenario,
    params: &MfccParams,
    seed: u64,
) -> Result<MfccClassifier> {
    let front = MelFrontEnd::new(params.mfcc.clone())?;
    let corruption = scenario.training_corruption()?;
    let gmm = if scenario.uses_vts() {
        let frames: Vec<Vec<f64>> = train
            .par_iter()
            .map(|u| front.log_mel(&corruption.apply(&u.samples, sentence_seed(seed, &u.id))?))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .collect();
        let (gmm, report) = gmm_train_with(&frames, params.gmm_components, seed, &params.gmm)?;
        info!(
            "VTS model: {} components on {} frames, {} EM iterations",
            params.gmm_components,
            frames.len(),
            report.iterations
        );
        Some(gmm)
    } else {
        None
    };
    let compensate = if params.compensate_training { gmm.as_ref() } else { None };
    let (store, labels) = extract_vectors(&front, params, train, &corruption, seed, compensate)?;
    check_classes(&labels, class_names)?;
    let coding = build_pairwise(class_names.len())?;
    let kernel = KernelParams::new(KernelKind::Poly, params.theta)?;
    let models = train_pairwise(&store, &labels, &coding, kernel, &params.svm)?;
    info!("trained {} cepstral binary models on {} vectors", models.len(), store.len());
    Ok(MfccClassifier {
        params: params.clone(),
        coding,
        kernel,
        gmm,
        store,
        train_labels: labels,
        models,
        front,
    })
}

impl MfccClassifier {
    pub fn front_end(&self) -> &MelFrontEnd {
        &self.front
    }

    /// Context vectors of a corrupted test sentence, VTS-compensated when
    /// the scenario uses it.
    pub fn test_vectors(&self, samples: &[f64], centers: &[usize]) -> Result<Vec<Vec<f64>>> {
        sentence_vectors(&self.front, &self.params, samples, centers, self.gmm.as_ref())
    }

    /// Scores of all binary problems for one context vector.
    pub fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        let row = self
            .store
            .iter()
            .map(|s| self.kernel.eval(x, s.as_slice()))
            .collect::<Result<Vec<f64>>>()?;
        Ok(self.models.iter().map(|m| m.score_from_row(&row)).collect())
    }

    pub fn classify_vector(&self, x: &[f64]) -> Result<usize> {
        decode(&self.scores(x)?, &self.coding, Loss::Hinge)
    }

    /// Predicted class of every phone of a corrupted sentence.
    pub fn classify_sentence(&self, samples: &[f64], centers: &[usize]) -> Result<Vec<usize>> {
        self.test_vectors(samples, centers)?
            .iter()
            .map(|x| self.classify_vector(x))
            .collect()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(b"MFCL");
        out.extend_from_slice(&crate::svm::io::FORMAT_VERSION.to_le_bytes());
        let header = serde_json::to_vec(&self.params).map_err(|e| Error::Format(e.to_string()))?;
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&(self.coding.classes() as u64).to_le_bytes());
        out.extend_from_slice(&(self.store.len() as u64).to_le_bytes());
        let dim = self.store.first().map_or(0, Vec::len);
        out.extend_from_slice(&(dim as u64).to_le_bytes());
        for (x, &l) in self.store.iter().zip(&self.train_labels) {
            out.extend_from_slice(&(l as u64).to_le_bytes());
            for v in x {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        for m in &self.models {
            write_binary_model(&mut out, m);
        }
        match &self.gmm {
            None => out.push(0),
            Some(g) => {
                out.push(1);
                out.extend_from_slice(&(g.components() as u64).to_le_bytes());
                out.extend_from_slice(&(g.dim() as u64).to_le_bytes());
                for k in 0..g.components() {
                    out.extend_from_slice(&g.weights[k].to_le_bytes());
                    for v in g.means[k].iter().chain(&g.vars[k]) {
                        out.extend_from_slice(&v.to_le_bytes());
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.expect_magic(b"MFCL")?;
        let hlen = r.len()?;
        let params: MfccParams = serde_json::from_slice(r.take(hlen)?).map_err(|e| Error::Format(e.to_string()))?;
        let coding = build_pairwise(r.len()?)?;
        let n = r.len()?;
        let dim = r.len()?;
        let mut store = Vec::with_capacity(n);
        let mut train_labels = Vec::with_capacity(n);
        for _ in 0..n {
            train_labels.push(r.len()?);
            store.push((0..dim).map(|_| r.f64()).collect::<Result<Vec<_>>>()?);
        }
        let models = (0..coding.columns())
            .map(|_| read_binary_model(&mut r))
            .collect::<Result<Vec<_>>>()?;
        let gmm = match r.u8()? {
            0 => None,
            1 => {
                let k = r.len()?;
                let d = r.len()?;
                let mut g = GmmModel {
                    weights: Vec::with_capacity(k),
                    means: Vec::with_capacity(k),
                    vars: Vec::with_capacity(k),
                };
                for _ in 0..k {
                    g.weights.push(r.f64()?);
                    g.means.push((0..d).map(|_| r.f64()).collect::<Result<_>>()?);
                    g.vars.push((0..d).map(|_| r.f64()).collect::<Result<_>>()?);
                }
                Some(g)
            }
            t => return Err(Error::Format(format!("bad GMM flag {t}"))),
        };
        if !r.is_empty() {
            return Err(Error::Format("trailing bytes after cepstral model".into()));
        }
        let kernel = KernelParams::new(KernelKind::Poly, params.theta)?;
        let front = MelFrontEnd::new(params.mfcc.clone())?;
        Ok(MfccClassifier {
            params,
            coding,
            kernel,
            gmm,
            store,
            train_labels,
            models,
            front,
        })
    }
}
