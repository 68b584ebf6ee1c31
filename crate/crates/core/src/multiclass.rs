//! Pairwise error-correcting output codes.
//!
//! Column `n` of the coding matrix pairs classes `(i, j)`, `i < j`, with
//! `+1` on the lower index. Columns are ordered lexicographically by pair.
//! Decoding picks `argmin_m sum_n chi(w_mn f_n)`. Terms with `w_mn = 0`
//! add `chi(0)` to every row equally (each row has `M - 1` nonzeros), so
//! they are skipped. Ties go to the lowest class index.

use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{Kernel, KernelParams};
use crate::svm::{train_dual, train_on_gram, BinarySvmModel, DenseGram, SvmParams};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodingMatrix {
    classes: usize,
    pairs: Vec<(usize, usize)>,
}

pub fn build_pairwise(classes: usize) -> Result<CodingMatrix> {
    if classes < 2 {
        return Err(Error::invalid("pairwise coding needs at least two classes"));
    }
    let pairs = (0..classes)
        .flat_map(|i| (i + 1..classes).map(move |j| (i, j)))
        .collect();
    Ok(CodingMatrix { classes, pairs })
}

impl CodingMatrix {
    /// Arbitrary column order, for permutation checks. Every column must be
    /// a distinct `(positive, negative)` pair.
    pub fn from_pairs(classes: usize, pairs: Vec<(usize, usize)>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for &(p, q) in &pairs {
            if p >= classes || q >= classes || p == q {
                return Err(Error::invalid(format!("bad column ({p}, {q})")));
            }
            if !seen.insert((p.min(q), p.max(q))) {
                return Err(Error::invalid(format!("duplicate column ({p}, {q})")));
            }
        }
        Ok(CodingMatrix { classes, pairs })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn columns(&self) -> usize {
        self.pairs.len()
    }

    /// `(positive class, negative class)` of column `n`.
    pub fn pair(&self, n: usize) -> (usize, usize) {
        self.pairs[n]
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn entry(&self, m: usize, n: usize) -> i8 {
        let (p, q) = self.pairs[n];
        if m == p {
            1
        } else if m == q {
            -1
        } else {
            0
        }
    }

    /// Binary label of class `m` in column `n`, if it takes part.
    pub fn label(&self, n: usize, class: usize) -> Option<i8> {
        match self.entry(class, n) {
            0 => None,
            v => Some(v),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Loss {
    #[default]
    Hinge,
    Hamming,
    Exp,
    Linear,
}

impl Loss {
    pub fn chi(self, z: f64) -> f64 {
        match self {
            Loss::Hinge => (1.0 - z).max(0.0),
            Loss::Hamming => {
                if z >= 0.0 {
                    0.0
                } else {
                    1.0
                }
            }
            Loss::Exp => (-z).exp(),
            Loss::Linear => -z,
        }
    }
}

impl FromStr for Loss {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hinge" => Ok(Loss::Hinge),
            "hamming" => Ok(Loss::Hamming),
            "exp" | "exponential" => Ok(Loss::Exp),
            "linear" => Ok(Loss::Linear),
            other => Err(Error::invalid(format!("unknown loss '{other}'"))),
        }
    }
}

/// Per-class losses `sum_n chi(w_mn f_n)` over nonzero entries.
pub fn class_losses(scores: &[f64], w: &CodingMatrix, loss: Loss) -> Result<Vec<f64>> {
    if scores.len() != w.columns() {
        return Err(Error::DimensionMismatch {
            expected: w.columns(),
            found: scores.len(),
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFinite("NaN binary score".into()));
    }
    let mut losses = vec![0.0; w.classes()];
    for (&(p, q), &f) in w.pairs().iter().zip(scores) {
        losses[p] += loss.chi(f);
        losses[q] += loss.chi(-f);
    }
    Ok(losses)
}

pub fn decode(scores: &[f64], w: &CodingMatrix, loss: Loss) -> Result<usize> {
    let losses = class_losses(scores, w, loss)?;
    let mut best = 0;
    for (m, &l) in losses.iter().enumerate() {
        if l < losses[best] {
            best = m;
        }
    }
    Ok(best)
}

/// Trains one binary SVM per column of `coding` on the instances of its two
/// classes. Support indices refer to positions in `samples`. A single Gram
/// matrix over all samples is shared when it fits in `params.cache_bytes`.
pub fn train_pairwise<S: Sync>(
    samples: &[S],
    labels: &[usize],
    coding: &CodingMatrix,
    kernel: KernelParams,
    params: &SvmParams,
) -> Result<Vec<BinarySvmModel>>
where
    KernelParams: Kernel<S>,
{
    if samples.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: samples.len(),
            found: labels.len(),
        });
    }
    let members: Vec<Vec<usize>> = (0..coding.classes())
        .map(|c| (0..labels.len()).filter(|&i| labels[i] == c).collect())
        .collect();
    let problem = |&(p, q): &(usize, usize)| -> (Vec<usize>, Vec<i8>) {
        let idx: Vec<usize> = members[p].iter().chain(&members[q]).copied().collect();
        let y = idx.iter().map(|&i| if labels[i] == p { 1 } else { -1 }).collect();
        (idx, y)
    };
    let n = samples.len();
    if n.saturating_mul(n).saturating_mul(8) <= params.cache_bytes {
        let gram = DenseGram::compute(samples, &kernel)?;
        coding
            .pairs()
            .par_iter()
            .map(|pq| {
                let (idx, y) = problem(pq);
                let mut sub = gram.subset(&idx);
                train_on_gram(&mut sub, &y, kernel, params, &|t| idx[t]).map(|(m, _)| m)
            })
            .collect()
    } else {
        coding
            .pairs()
            .iter()
            .map(|pq| {
                let (idx, y) = problem(pq);
                let local: Vec<&S> = idx.iter().map(|&i| &samples[i]).collect();
                let mut m = train_dual::<&S>(&local, &y, kernel, params)?;
                m.support.iter_mut().for_each(|s| *s = idx[*s]);
                Ok(m)
            })
            .collect()
    }
}
