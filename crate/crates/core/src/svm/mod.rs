//! Binary kernel SVMs (dual, soft margin) and the linear meta-level SVM.

mod gram;
pub mod io;
pub mod smo;

use serde::{Deserialize, Serialize};

pub use gram::{CachedGram, DenseGram, KernelMatrix, SubGram};
pub use smo::{dual_objective, SolverParams, Solution};

use crate::error::{Error, Result};
use crate::kernels::{dot, Kernel, KernelParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmParams {
    /// Box constraint.
    pub c: f64,
    /// KKT tolerance of the SMO stopping rule.
    pub tol: f64,
    pub max_iter: usize,
    /// Gram matrices up to this size are precomputed, larger problems use
    /// an LRU row cache of this size.
    pub cache_bytes: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            c: 1.0,
            tol: 1e-3,
            max_iter: 10_000_000,
            cache_bytes: 256 << 20,
        }
    }
}

impl SvmParams {
    fn solver(&self) -> SolverParams {
        SolverParams {
            c: self.c,
            tol: self.tol,
            max_iter: self.max_iter,
        }
    }
}

/// `h(x) = sum_i alpha_i y_i K(x, x_i) + b` over the support set. Support
/// vectors are referenced by index into the training sample store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinarySvmModel {
    pub support: Vec<usize>,
    pub alphas: Vec<f64>,
    pub labels: Vec<i8>,
    pub bias: f64,
    pub kernel: KernelParams,
    pub c: f64,
}

impl BinarySvmModel {
    /// Model with no support vectors: every score is the bias.
    pub fn constant(bias: f64, kernel: KernelParams, c: f64) -> Self {
        BinarySvmModel {
            support: Vec::new(),
            alphas: Vec::new(),
            labels: Vec::new(),
            bias,
            kernel,
            c,
        }
    }

    fn from_solution(sol: &Solution, y: &[f64], index_map: &dyn Fn(usize) -> usize, kernel: KernelParams, c: f64) -> Self {
        let mut model = BinarySvmModel::constant(sol.bias, kernel, c);
        for (t, &a) in sol.alpha.iter().enumerate() {
            if a > 0.0 {
                model.support.push(index_map(t));
                model.alphas.push(a);
                model.labels.push(if y[t] > 0.0 { 1 } else { -1 });
            }
        }
        model
    }

    /// Checks `0 <= alpha <= C` and `sum alpha_i y_i = 0`.
    pub fn check_feasible(&self, tol: f64) -> Result<()> {
        if self.alphas.iter().any(|&a| !(a > 0.0 && a <= self.c)) {
            return Err(Error::Format("alpha outside (0, C]".into()));
        }
        let balance: f64 = self
            .alphas
            .iter()
            .zip(&self.labels)
            .map(|(a, &y)| a * y as f64)
            .sum();
        if balance.abs() > tol {
            return Err(Error::Format(format!("sum alpha_i y_i = {balance}")));
        }
        Ok(())
    }

    /// `alpha_i y_i` per support vector.
    pub fn coefficients(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.support
            .iter()
            .zip(self.alphas.iter().zip(&self.labels))
            .map(|(&i, (a, &y))| (i, a * y as f64))
    }

    /// Score of `x` against the training store the support indices refer to.
    pub fn score<S>(&self, store: &[S], x: &S) -> Result<f64>
    where
        KernelParams: Kernel<S>,
    {
        let mut h = self.bias;
        for (i, coef) in self.coefficients() {
            let sv = store
                .get(i)
                .ok_or_else(|| Error::Format(format!("support index {i} outside the store")))?;
            h += coef * self.kernel.eval(x, sv)?;
        }
        Ok(h)
    }

    /// Score from a precomputed row `row[i] = K(x, store[i])`.
    pub fn score_from_row(&self, row: &[f64]) -> f64 {
        self.coefficients().fold(self.bias, |h, (i, coef)| h + coef * row[i])
    }
}

/// Decision from a score, with `sign(0) = +1`.
pub fn decision(score: f64) -> i8 {
    if score >= 0.0 {
        1
    } else {
        -1
    }
}

fn labels_to_f64(labels: &[i8]) -> Result<Vec<f64>> {
    labels
        .iter()
        .map(|&l| match l {
            1 => Ok(1.0),
            -1 => Ok(-1.0),
            other => Err(Error::invalid(format!("label {other} is not +1/-1"))),
        })
        .collect()
}

/// Trains on an arbitrary kernel matrix. `index_map` translates local row
/// indices into indices of the sample store recorded in the model.
pub fn train_on_gram(
    gram: &mut dyn KernelMatrix,
    labels: &[i8],
    kernel: KernelParams,
    params: &SvmParams,
    index_map: &dyn Fn(usize) -> usize,
) -> Result<(BinarySvmModel, Solution)> {
    let y = labels_to_f64(labels)?;
    let sol = smo::solve(gram, &y, &params.solver())?;
    let model = BinarySvmModel::from_solution(&sol, &y, index_map, kernel, params.c);
    Ok((model, sol))
}

/// Trains a binary SVM on `samples` with labels in {+1, -1}. Support
/// indices refer to positions in `samples`.
pub fn train_dual<S: Sync>(
    samples: &[S],
    labels: &[i8],
    kernel: KernelParams,
    params: &SvmParams,
) -> Result<BinarySvmModel>
where
    KernelParams: Kernel<S>,
{
    train_dual_solution(samples, labels, kernel, params).map(|(m, _)| m)
}

/// As [`train_dual`], also returning the raw solver output.
pub fn train_dual_solution<S: Sync>(
    samples: &[S],
    labels: &[i8],
    kernel: KernelParams,
    params: &SvmParams,
) -> Result<(BinarySvmModel, Solution)>
where
    KernelParams: Kernel<S>,
{
    if samples.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: samples.len(),
            found: labels.len(),
        });
    }
    let n = samples.len();
    let identity = |i: usize| i;
    if n.saturating_mul(n).saturating_mul(8) <= params.cache_bytes {
        let mut gram = DenseGram::compute(samples, &kernel)?;
        train_on_gram(&mut gram, labels, kernel, params, &identity)
    } else {
        let rows = params.cache_bytes / (8 * n.max(1));
        let mut gram = CachedGram::new(samples, &kernel, rows)?;
        train_on_gram(&mut gram, labels, kernel, params, &identity)
    }
}

/// Meta-level linear SVM: `h(f) = <w, f> + v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSvmModel {
    pub w: Vec<f64>,
    pub v: f64,
}

impl LinearSvmModel {
    pub fn score(&self, f: &[f64]) -> f64 {
        dot(&self.w, f) + self.v
    }
}

/// Trains the dual with a linear kernel and materializes
/// `w = sum_j beta_j y_j f_j`. Also returns the dual model.
pub fn train_linear_with_dual(
    points: &[Vec<f64>],
    labels: &[i8],
    params: &SvmParams,
) -> Result<(LinearSvmModel, BinarySvmModel)> {
    let dim = points.first().map_or(0, |p| p.len());
    if let Some(p) = points.iter().find(|p| p.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: p.len(),
        });
    }
    let dual = train_dual(points, labels, KernelParams::linear(), params)?;
    let mut w = vec![0.0; dim];
    for (i, coef) in dual.coefficients() {
        for (wk, xk) in w.iter_mut().zip(&points[i]) {
            *wk += coef * xk;
        }
    }
    if w.iter().any(|v| !v.is_finite()) || !dual.bias.is_finite() {
        return Err(Error::NonFinite("linear SVM weights".into()));
    }
    Ok((LinearSvmModel { w, v: dual.bias }, dual))
}

pub fn train_linear(points: &[Vec<f64>], labels: &[i8], params: &SvmParams) -> Result<LinearSvmModel> {
    train_linear_with_dual(points, labels, params).map(|(m, _)| m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelKind;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn poly(theta: u32) -> KernelParams {
        KernelParams::new(KernelKind::Poly, theta).unwrap()
    }

    #[test]
    fn two_point_closed_form() {
        // x1 = (1, 0), x2 = (-1, 0): hard margin solution w = (1, 0), b = 0,
        // alpha_1 = alpha_2 = |w|^2 / 2 = 0.5
        let x = vec![vec![1.0, 0.0], vec![-1.0, 0.0]];
        let params = SvmParams {
            c: 1e6,
            tol: 1e-9,
            ..Default::default()
        };
        let m = train_dual(&x, &[1, -1], KernelParams::linear(), &params).unwrap();
        assert_eq!(m.support.len(), 2);
        assert!((m.alphas[0] - 0.5).abs() < 1e-9 && (m.alphas[1] - 0.5).abs() < 1e-9);
        assert!(m.bias.abs() < 1e-9);
        // boundary bisects the pair
        assert!(m.score(&x, &vec![0.0, 3.0]).unwrap().abs() < 1e-9);
        assert!((m.score(&x, &x[0]).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn xor_with_quadratic_kernel() {
        let x = vec![vec![1.0, 1.0], vec![-1.0, -1.0], vec![1.0, -1.0], vec![-1.0, 1.0]];
        let y = [1, 1, -1, -1];
        let m = train_dual(&x, &y, poly(2), &SvmParams::default()).unwrap();
        for (xi, &yi) in x.iter().zip(&y) {
            assert_eq!(decision(m.score(&x, xi).unwrap()), yi);
        }
    }

    #[test]
    fn single_class_rejected() {
        let x = vec![vec![1.0], vec![2.0]];
        assert!(matches!(
            train_dual(&x, &[1, 1], KernelParams::linear(), &SvmParams::default()),
            Err(Error::SingleClass)
        ));
    }

    #[test]
    fn non_finite_kernel_rejected() {
        let x = vec![vec![1e200], vec![-1e200]];
        assert!(train_dual(&x, &[1, -1], poly(6), &SvmParams::default()).is_err());
    }

    fn random_problem(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<i8>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let y = x
            .iter()
            .enumerate()
            .map(|(i, p)| if i < 2 { [1, -1][i] } else if p[0] + 0.3 * p[1] > 0.0 { 1 } else { -1 })
            .collect();
        (x, y)
    }

    #[test]
    fn feasibility_and_margin_conditions() {
        for seed in 0..10 {
            let (x, y) = random_problem(30, seed);
            let m = train_dual(&x, &y, poly(3), &SvmParams::default()).unwrap();
            m.check_feasible(1e-8).unwrap();
            for (k, &i) in m.support.iter().enumerate() {
                if m.alphas[k] < m.c * (1.0 - 1e-9) {
                    let s = m.score(&x, &x[i]).unwrap();
                    assert!((s.abs() - 1.0).abs() < 1e-2, "free SV score {s}");
                }
            }
        }
    }

    #[test]
    fn duplicated_data_same_decision_function() {
        let (x, y) = random_problem(20, 3);
        let params = SvmParams {
            c: 10.0,
            tol: 1e-6,
            ..Default::default()
        };
        let m1 = train_dual(&x, &y, poly(2), &params).unwrap();
        let x2: Vec<Vec<f64>> = x.iter().chain(&x).cloned().collect();
        let y2: Vec<i8> = y.iter().chain(&y).copied().collect();
        let m2 = train_dual(
            &x2,
            &y2,
            poly(2),
            &SvmParams {
                c: 5.0,
                ..params
            },
        )
        .unwrap();
        // duplicating every point with C/2 is the same optimization problem
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..50 {
            let p: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (a, b) = (m1.score(&x, &p).unwrap(), m2.score(&x2, &p).unwrap());
            assert!((a - b).abs() < 1e-3, "{a} vs {b}");
        }
    }

    #[test]
    fn label_flip_negates_scores() {
        let (x, y) = random_problem(25, 8);
        let params = SvmParams {
            tol: 1e-8,
            ..Default::default()
        };
        let m = train_dual(&x, &y, poly(2), &params).unwrap();
        let flipped: Vec<i8> = y.iter().map(|v| -v).collect();
        let mf = train_dual(&x, &flipped, poly(2), &params).unwrap();
        for p in &x {
            let (a, b) = (m.score(&x, p).unwrap(), mf.score(&x, p).unwrap());
            assert!((a + b).abs() < 1e-6);
        }
    }

    #[test]
    fn lru_cache_matches_dense() {
        let (x, y) = random_problem(40, 4);
        let dense = train_dual(&x, &y, poly(3), &SvmParams::default()).unwrap();
        let cached = train_dual(
            &x,
            &y,
            poly(3),
            &SvmParams {
                cache_bytes: 8 * 40 * 5,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(dense, cached);
    }

    #[test]
    fn empty_support_scores_bias() {
        let m = BinarySvmModel::constant(0.25, KernelParams::linear(), 1.0);
        assert_eq!(m.score::<Vec<f64>>(&[], &vec![1.0]).unwrap(), 0.25);
        assert_eq!(decision(0.0), 1);
    }

    #[test]
    fn linear_one_dimensional_sign() {
        let pts = vec![vec![-1.0], vec![1.0]];
        let m = train_linear(&pts, &[-1, 1], &SvmParams::default()).unwrap();
        assert!(m.w[0] > 0.0);
    }

    #[test]
    fn materialized_weights_match_dual() {
        let (x, y) = random_problem(30, 6);
        let (lin, dual) = train_linear_with_dual(&x, &y, &SvmParams::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let p: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            assert!((lin.score(&p) - dual.score(&x, &p).unwrap()).abs() < 1e-8);
        }
    }

    #[test]
    fn noise_coordinate_down_weighted() {
        let mut wins = 0;
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut pts = Vec::new();
            let mut y = Vec::new();
            for i in 0..40 {
                let label: i8 = if i % 2 == 0 { 1 } else { -1 };
                let signal = label as f64 * rng.random_range(0.5..1.5);
                pts.push(vec![signal, rng.random_range(-1.0..1.0)]);
                y.push(label);
            }
            let m = train_linear(&pts, &y, &SvmParams::default()).unwrap();
            if m.w[1].abs() < m.w[0].abs() {
                wins += 1;
            }
        }
        assert_eq!(wins, 20);
    }
}
