use std::collections::{HashMap, VecDeque};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::Kernel;

/// Row access to a symmetric kernel matrix.
pub trait KernelMatrix {
    fn size(&self) -> usize;
    fn diag(&self, i: usize) -> f64;
    /// Writes row `i` into `out` (length `size()`).
    fn row_into(&mut self, i: usize, out: &mut [f64]);
}

/// Fully materialized Gram matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseGram {
    n: usize,
    values: Vec<f64>,
}

impl DenseGram {
    /// Evaluates all pairs, rows in parallel. Each entry is computed once
    /// and mirrored so the matrix is exactly symmetric.
    pub fn compute<S: Sync, K: Kernel<S>>(samples: &[S], kernel: &K) -> Result<Self> {
        let n = samples.len();
        let upper: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                (i..n)
                    .map(|j| kernel.eval(&samples[i], &samples[j]))
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<_>>()?;
        let mut values = vec![0.0; n * n];
        for (i, row) in upper.iter().enumerate() {
            for (off, &v) in row.iter().enumerate() {
                let j = i + off;
                values[i * n + j] = v;
                values[j * n + i] = v;
            }
        }
        Self::from_values(n, values)
    }

    pub fn from_values(n: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                found: values.len(),
            });
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("Gram entry {v}")));
        }
        Ok(DenseGram { n, values })
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    pub fn size(&self) -> usize {
        self.n
    }

    /// View restricted to `indices` (in that order).
    pub fn subset<'a>(&'a self, indices: &'a [usize]) -> SubGram<'a> {
        SubGram { full: self, indices }
    }
}

impl KernelMatrix for DenseGram {
    fn size(&self) -> usize {
        self.n
    }

    fn diag(&self, i: usize) -> f64 {
        self.get(i, i)
    }

    fn row_into(&mut self, i: usize, out: &mut [f64]) {
        out.copy_from_slice(self.row(i));
    }
}

/// Principal submatrix of a [`DenseGram`].
pub struct SubGram<'a> {
    full: &'a DenseGram,
    indices: &'a [usize],
}

impl KernelMatrix for SubGram<'_> {
    fn size(&self) -> usize {
        self.indices.len()
    }

    fn diag(&self, i: usize) -> f64 {
        let g = self.indices[i];
        self.full.get(g, g)
    }

    fn row_into(&mut self, i: usize, out: &mut [f64]) {
        let row = self.full.row(self.indices[i]);
        for (o, &j) in out.iter_mut().zip(self.indices) {
            *o = row[j];
        }
    }
}

/// Kernel rows computed on demand and kept in a least-recently-used cache.
pub struct CachedGram<'a, S, K> {
    samples: &'a [S],
    kernel: &'a K,
    diag: Vec<f64>,
    capacity: usize,
    rows: HashMap<usize, Vec<f64>>,
    order: VecDeque<usize>,
}

impl<'a, S: Sync, K: Kernel<S>> CachedGram<'a, S, K> {
    pub fn new(samples: &'a [S], kernel: &'a K, capacity_rows: usize) -> Result<Self> {
        let diag = samples
            .iter()
            .map(|s| kernel.eval(s, s))
            .collect::<Result<Vec<f64>>>()?;
        if diag.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("kernel diagonal".into()));
        }
        Ok(CachedGram {
            samples,
            kernel,
            diag,
            capacity: capacity_rows.max(2),
            rows: HashMap::new(),
            order: VecDeque::new(),
        })
    }

    fn touch(&mut self, i: usize) {
        if let Some(pos) = self.order.iter().position(|&r| r == i) {
            self.order.remove(pos);
        }
        self.order.push_back(i);
    }
}

impl<S: Sync, K: Kernel<S>> KernelMatrix for CachedGram<'_, S, K> {
    fn size(&self) -> usize {
        self.samples.len()
    }

    fn diag(&self, i: usize) -> f64 {
        self.diag[i]
    }

    fn row_into(&mut self, i: usize, out: &mut [f64]) {
        if !self.rows.contains_key(&i) {
            if self.rows.len() >= self.capacity {
                if let Some(old) = self.order.pop_front() {
                    self.rows.remove(&old);
                }
            }
            let a = &self.samples[i];
            // a kernel error here means the diagonal pass already failed or
            // the kernel is inconsistent; store NaN so the solver rejects it
            let row: Vec<f64> = self
                .samples
                .par_iter()
                .map(|b| self.kernel.eval(a, b).unwrap_or(f64::NAN))
                .collect();
            self.rows.insert(i, row);
        }
        self.touch(i);
        out.copy_from_slice(&self.rows[&i]);
    }
}
