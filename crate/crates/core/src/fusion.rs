//! Convex combination of cepstral and subband classifier scores.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{estimate_noise_variance, NoiseVarianceMethod};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    /// `lambda` in [0, 1]; 0 is cepstral only, 1 is subband only.
    Fixed(f64),
    /// `lambda_emp` of the estimated noise variance.
    Empirical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreNormalization {
    Raw,
    /// Divide each problem's scores by their median magnitude on the
    /// development data.
    DevMedian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionParams {
    pub mode: FusionMode,
    pub eta: f64,
    pub zeta: f64,
    pub sigma0_sq: f64,
    pub noise_variance: NoiseVarianceMethod,
    pub normalization: ScoreNormalization,
}

impl Default for FusionParams {
    fn default() -> Self {
        FusionParams {
            mode: FusionMode::Empirical,
            eta: 0.2,
            zeta: 0.5,
            sigma0_sq: 0.03,
            noise_variance: NoiseVarianceMethod::default(),
            normalization: ScoreNormalization::DevMedian,
        }
    }
}

impl FusionParams {
    pub fn validate(&self) -> Result<()> {
        if let FusionMode::Fixed(l) = self.mode {
            if !(0.0..=1.0).contains(&l) {
                return Err(Error::Config(format!("fusion lambda {l} outside [0, 1]")));
            }
        }
        if !(self.sigma0_sq > 0.0) {
            return Err(Error::Config("sigma0_sq must be positive".into()));
        }
        Ok(())
    }

    /// `eta + zeta / (1 + sigma0^2 / sigma^2)`.
    pub fn lambda_emp(&self, sigma_sq: f64) -> Result<f64> {
        if !(sigma_sq >= 0.0) {
            return Err(Error::invalid(format!("noise variance {sigma_sq} must be nonnegative")));
        }
        // sigma_sq = 0 gives an infinite ratio and lambda = eta
        Ok(self.eta + self.zeta / (1.0 + self.sigma0_sq / sigma_sq))
    }

    /// Combination weight for one (already corrupted) test sentence.
    pub fn lambda_for(&self, noisy: &[f64]) -> Result<f64> {
        match self.mode {
            FusionMode::Fixed(l) => Ok(l),
            FusionMode::Empirical => self.lambda_emp(estimate_noise_variance(noisy, self.noise_variance)?),
        }
    }
}

/// `lambda_emp` with the default constants.
pub fn lambda_emp(sigma_sq: f64) -> Result<f64> {
    FusionParams::default().lambda_emp(sigma_sq)
}

/// `(1 - lambda) f_mfcc + lambda f_subband`, per problem.
pub fn fuse_scores(f_mfcc: &[f64], f_subband: &[f64], lambda: f64) -> Result<Vec<f64>> {
    if f_mfcc.len() != f_subband.len() {
        return Err(Error::DimensionMismatch {
            expected: f_mfcc.len(),
            found: f_subband.len(),
        });
    }
    Ok(f_mfcc
        .iter()
        .zip(f_subband)
        .map(|(m, s)| (1.0 - lambda) * m + lambda * s)
        .collect())
}

/// Per-problem divisors making score scales of different front-ends
/// comparable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreScale {
    pub divisors: Vec<f64>,
}

impl ScoreScale {
    pub fn identity(problems: usize) -> Self {
        ScoreScale {
            divisors: vec![1.0; problems],
        }
    }

    /// Median `|score|` per problem over `scores[instance][problem]`;
    /// problems whose median is zero keep a divisor of one.
    pub fn fit(scores: &[Vec<f64>]) -> Result<Self> {
        let problems = scores
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::invalid("no development scores to fit the score scale"))?;
        let mut divisors = Vec::with_capacity(problems);
        let mut column = Vec::with_capacity(scores.len());
        for n in 0..problems {
            column.clear();
            for s in scores {
                if s.len() != problems {
                    return Err(Error::DimensionMismatch {
                        expected: problems,
                        found: s.len(),
                    });
                }
                column.push(s[n].abs());
            }
            column.sort_by(f64::total_cmp);
            let m = column.len();
            let med = if m % 2 == 1 {
                column[m / 2]
            } else {
                0.5 * (column[m / 2 - 1] + column[m / 2])
            };
            divisors.push(if med > 0.0 && med.is_finite() { med } else { 1.0 });
        }
        Ok(ScoreScale { divisors })
    }

    pub fn for_mode(mode: ScoreNormalization, scores: &[Vec<f64>]) -> Result<Self> {
        match mode {
            ScoreNormalization::Raw => Ok(ScoreScale::identity(scores.first().map_or(0, Vec::len))),
            ScoreNormalization::DevMedian => ScoreScale::fit(scores),
        }
    }

    pub fn apply(&self, scores: &[f64]) -> Result<Vec<f64>> {
        if scores.len() != self.divisors.len() {
            return Err(Error::DimensionMismatch {
                expected: self.divisors.len(),
                found: scores.len(),
            });
        }
        Ok(scores.iter().zip(&self.divisors).map(|(s, d)| s / d).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::multiclass::{build_pairwise, decode, Loss};
    use proptest::prelude::*;

    #[test]
    fn lambda_emp_values() {
        assert_eq!(lambda_emp(0.03).unwrap(), 0.45);
        assert_eq!(lambda_emp(0.0).unwrap(), 0.2);
        assert!((lambda_emp(1e12).unwrap() - 0.7).abs() < 1e-12);
        assert_eq!(lambda_emp(f64::INFINITY).unwrap(), 0.7);
        assert!(lambda_emp(-1e-3).is_err());
        assert!(lambda_emp(f64::NAN).is_err());
    }

    #[test]
    fn lambda_emp_monotone() {
        let grid: Vec<f64> = (0..100).map(|i| 1e-4 * 1.15f64.powi(i)).collect();
        let ls: Vec<f64> = grid.iter().map(|&s| lambda_emp(s).unwrap()).collect();
        assert!(ls.windows(2).all(|w| w[0] <= w[1]));
        assert!(ls.iter().all(|l| (0.2..=0.7).contains(l)));
    }

    #[test]
    fn fixed_lambda_endpoints() {
        let code = build_pairwise(4).unwrap();
        let fm = vec![1.0, -0.5, 0.3, 2.0, -1.0, 0.1];
        let fs = vec![-1.0, 0.5, -0.2, -1.0, 1.5, -0.7];
        let d = |f: &[f64]| decode(f, &code, Loss::Hinge).unwrap();
        assert_eq!(d(&fuse_scores(&fm, &fs, 0.0).unwrap()), d(&fm));
        assert_eq!(d(&fuse_scores(&fm, &fs, 1.0).unwrap()), d(&fs));
        let half = fuse_scores(&fm, &fs, 0.5).unwrap();
        for ((h, a), b) in half.iter().zip(&fm).zip(&fs) {
            assert_eq!(*h, (a + b) / 2.0);
        }
        assert!(fuse_scores(&fm, &fs[..3], 0.5).is_err());
    }

    #[test]
    fn median_scale() {
        let scores = vec![vec![1.0, 0.0], vec![-3.0, 0.0], vec![2.0, 0.0], vec![-10.0, 0.0]];
        let s = ScoreScale::fit(&scores).unwrap();
        assert_eq!(s.divisors, vec![2.5, 1.0]);
        assert_eq!(s.apply(&[5.0, 3.0]).unwrap(), vec![2.0, 3.0]);
        assert!(ScoreScale::fit(&[]).is_err());
    }

    #[test]
    fn empirical_lambda_from_signal() {
        let p = FusionParams::default();
        let silent = vec![0.0; 4000];
        assert_eq!(p.lambda_for(&silent).unwrap(), 0.2);
        let fixed = FusionParams {
            mode: FusionMode::Fixed(0.5),
            ..p
        };
        assert_eq!(fixed.lambda_for(&silent).unwrap(), 0.5);
        assert!(FusionParams { mode: FusionMode::Fixed(1.5), ..p }.validate().is_err());
    }

    proptest! {
        #[test]
        fn affine_in_lambda(fm in prop::collection::vec(-3.0f64..3.0, 6), fs in prop::collection::vec(-3.0f64..3.0, 6), l in 0.0f64..1.0) {
            let f = fuse_scores(&fm, &fs, l).unwrap();
            let f0 = fuse_scores(&fm, &fs, 0.0).unwrap();
            let f1 = fuse_scores(&fm, &fs, 1.0).unwrap();
            for n in 0..6 {
                prop_assert!((f[n] - ((1.0 - l) * f0[n] + l * f1[n])).abs() < 1e-12);
            }
        }

        /// When the two score vectors differ in one problem, each decoded
        /// class occupies one contiguous run of lambdas.
        #[test]
        fn single_problem_change_has_contiguous_segments(fm in prop::collection::vec(-3.0f64..3.0, 6), k in 0usize..6, v in -3.0f64..3.0) {
            let code = build_pairwise(4).unwrap();
            let mut fs = fm.clone();
            fs[k] = v;
            let labels: Vec<usize> = (0..=200)
                .map(|i| decode(&fuse_scores(&fm, &fs, i as f64 / 200.0).unwrap(), &code, Loss::Hinge).unwrap())
                .collect();
            let mut seen = Vec::new();
            for w in labels.windows(2) {
                if w[0] != w[1] {
                    prop_assert!(!seen.contains(&w[1]));
                    seen.push(w[0]);
                }
            }
        }
    }
}
