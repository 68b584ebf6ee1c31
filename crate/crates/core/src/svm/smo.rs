//! Dual soft-margin SVM by sequential minimal optimization.
//!
//! Solves `min_a 1/2 a^T Q a - e^T a` s.t. `y^T a = 0`, `0 <= a_i <= C`,
//! with `Q_ij = y_i y_j K_ij`. Each step picks the maximal violating pair
//! and solves the two-variable subproblem in closed form.

use log::warn;

use crate::error::{Error, Result};

use super::gram::KernelMatrix;

const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverParams {
    pub c: f64,
    /// KKT violation tolerance.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams {
            c: 1.0,
            tol: 1e-3,
            max_iter: 10_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub alpha: Vec<f64>,
    pub bias: f64,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Dual objective `1/2 a^T Q a - sum a` for a given `alpha`.
pub fn dual_objective(gram: &mut dyn KernelMatrix, y: &[f64], alpha: &[f64]) -> f64 {
    let n = gram.size();
    let mut row = vec![0.0; n];
    let mut quad = 0.0;
    for i in 0..n {
        if alpha[i] == 0.0 {
            continue;
        }
        gram.row_into(i, &mut row);
        let s: f64 = (0..n).map(|j| alpha[j] * y[j] * row[j]).sum();
        quad += alpha[i] * y[i] * s;
    }
    0.5 * quad - alpha.iter().sum::<f64>()
}

pub fn solve(gram: &mut dyn KernelMatrix, y: &[f64], params: &SolverParams) -> Result<Solution> {
    let n = gram.size();
    if y.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: y.len(),
        });
    }
    if !(params.c > 0.0) || !(params.tol > 0.0) {
        return Err(Error::invalid("C and tol must be positive"));
    }
    if !(y.iter().any(|&v| v > 0.0) && y.iter().any(|&v| v < 0.0)) {
        return Err(Error::SingleClass);
    }
    let c = params.c;
    let mut alpha = vec![0.0; n];
    // gradient of the objective, starts at -e for alpha = 0
    let mut grad = vec![-1.0; n];
    let mut row_i = vec![0.0; n];
    let mut row_j = vec![0.0; n];
    let mut iterations = 0;
    let mut converged = false;

    let in_up = |a: f64, yt: f64| (yt > 0.0 && a < c) || (yt < 0.0 && a > 0.0);
    let in_low = |a: f64, yt: f64| (yt > 0.0 && a > 0.0) || (yt < 0.0 && a < c);

    while iterations < params.max_iter {
        let mut gmax = f64::NEG_INFINITY;
        let mut gmin = f64::INFINITY;
        let (mut i, mut j) = (usize::MAX, usize::MAX);
        for t in 0..n {
            let v = -y[t] * grad[t];
            if in_up(alpha[t], y[t]) && v > gmax {
                gmax = v;
                i = t;
            }
            if in_low(alpha[t], y[t]) && v < gmin {
                gmin = v;
                j = t;
            }
        }
        if i == usize::MAX || j == usize::MAX || gmax - gmin < params.tol {
            converged = true;
            break;
        }
        iterations += 1;

        gram.row_into(i, &mut row_i);
        gram.row_into(j, &mut row_j);
        if !row_i[j].is_finite() || !row_i[i].is_finite() || !row_j[j].is_finite() {
            return Err(Error::NonFinite("kernel value".into()));
        }
        let (kii, kjj, kij) = (row_i[i], row_j[j], row_i[j]);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let (mut ai, mut aj) = (old_i, old_j);
        if y[i] != y[j] {
            let quad = (kii + kjj - 2.0 * kij).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = ai - aj;
            ai += delta;
            aj += delta;
            if diff > 0.0 {
                if aj < 0.0 {
                    aj = 0.0;
                    ai = diff;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = -diff;
            }
            if diff > 0.0 {
                if ai > c {
                    ai = c;
                    aj = c - diff;
                }
            } else if aj > c {
                aj = c;
                ai = c + diff;
            }
        } else {
            let quad = (kii + kjj - 2.0 * kij).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = ai + aj;
            ai -= delta;
            aj += delta;
            if sum > c {
                if ai > c {
                    ai = c;
                    aj = sum - c;
                }
            } else if aj < 0.0 {
                aj = 0.0;
                ai = sum;
            }
            if sum > c {
                if aj > c {
                    aj = c;
                    ai = sum - c;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = sum;
            }
        }
        alpha[i] = ai;
        alpha[j] = aj;
        let (di, dj) = (ai - old_i, aj - old_j);
        for t in 0..n {
            // Q_ti = y_t y_i K_ti
            grad[t] += y[t] * (y[i] * row_i[t] * di + y[j] * row_j[t] * dj);
        }
    }
    if !converged {
        warn!("SMO stopped after {iterations} iterations without reaching tol {}", params.tol);
    }

    let bias = -threshold(&alpha, &grad, y, c);
    let objective = 0.5 * alpha.iter().zip(&grad).map(|(a, g)| a * (g - 1.0)).sum::<f64>();
    Ok(Solution {
        alpha,
        bias,
        objective,
        iterations,
        converged,
    })
}

/// `rho` such that the decision function is `sum a_i y_i K(x, x_i) - rho`:
/// the mean of `y_i G_i` over free variables, else the midpoint of the
/// feasible interval.
fn threshold(alpha: &[f64], grad: &[f64], y: &[f64], c: f64) -> f64 {
    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    let mut sum_free = 0.0;
    let mut n_free = 0usize;
    for t in 0..alpha.len() {
        let yg = y[t] * grad[t];
        let at_upper = alpha[t] >= c;
        let at_lower = alpha[t] <= 0.0;
        if at_upper {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if at_lower {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    if n_free > 0 {
        sum_free / n_free as f64
    } else {
        (ub + lb) / 2.0
    }
}
