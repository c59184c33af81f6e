//! Sparse Laplacian operators built from a [`Graph`].
//!
//! Every operator stores its diagonal separately from the off-diagonal
//! pattern, which is shared with the adjacency. That makes the shift
//! `L~ = L^ - (lambda_max / 2) I` an entrywise update of the diagonal only.

use std::sync::atomic::{AtomicUsize, Ordering};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::Graph;

/// Iteration cap for the largest-eigenvalue estimate.
pub const POWER_ITERATION_CAP: usize = 1000;
/// Successive Rayleigh quotients closer than this count as converged.
pub const POWER_ITERATION_TOL: f64 = 1e-9;
/// Multiplicative safety inflation applied to a converged estimate.
pub const POWER_ITERATION_INFLATE: f64 = 1.0 + 1e-9;

/// Row blocks below this many entries are applied on the calling thread.
const PARALLEL_MIN_WORK: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LaplacianKind {
    /// `L = I - D^{-1/2} A D^{-1/2}`.
    Normalized,
    /// `L^ = I - D^^{-1/2} (A + I) D^^{-1/2}`.
    Augmented,
    /// `L~ = L^ - (lambda_max / 2) I`.
    ScaledNormalized,
    /// `2 L / lambda_max - I`, the Chebyshev domain.
    ChebyshevRescaled,
}

/// How the largest eigenvalue of `L^` is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LambdaMaxMode {
    /// Power iteration on `L^`.
    Exact,
    /// The constant upper bound 2.
    Bound2,
}

/// A symmetric sparse operator. Applications are counted so callers can
/// audit how many matrix-vector products an algorithm performed.
#[derive(Debug)]
pub struct LaplacianOperator {
    kind: LaplacianKind,
    n: usize,
    diag: Vec<f64>,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    off_values: Vec<f64>,
    lambda_max_hint: f64,
    estimate_fell_back: bool,
    matvecs: AtomicUsize,
}

impl Clone for LaplacianOperator {
    fn clone(&self) -> Self {
        LaplacianOperator {
            kind: self.kind,
            n: self.n,
            diag: self.diag.clone(),
            row_offsets: self.row_offsets.clone(),
            col_indices: self.col_indices.clone(),
            off_values: self.off_values.clone(),
            lambda_max_hint: self.lambda_max_hint,
            estimate_fell_back: self.estimate_fell_back,
            matvecs: AtomicUsize::new(0),
        }
    }
}

/// Off-diagonal values `-w_ij / sqrt(d_i d_j)`, zero where either degree is zero.
fn symmetric_normalized_offdiag(g: &Graph, degree: &[f64]) -> Vec<f64> {
    let mut values = Vec::with_capacity(g.values().len());
    for i in 0..g.n() {
        for (j, w) in g.neighbors(i) {
            let dd = degree[i] * degree[j];
            values.push(if dd > 0.0 { -w / dd.sqrt() } else { 0.0 });
        }
    }
    values
}

/// Normalized Laplacian. Isolated vertices get `L_ii = 1` so the spectrum
/// stays inside `[0, 2]`.
pub fn normalized_laplacian(g: &Graph) -> LaplacianOperator {
    let degree: Vec<f64> = (0..g.n()).map(|i| g.degree(i)).collect();
    let off = symmetric_normalized_offdiag(g, &degree);
    LaplacianOperator::from_parts(LaplacianKind::Normalized, g, vec![1.0; g.n()], off, 2.0, false)
}

fn augmented_parts(g: &Graph) -> (Vec<f64>, Vec<f64>) {
    let degree: Vec<f64> = (0..g.n()).map(|i| g.degree(i) + 1.0).collect();
    let off = symmetric_normalized_offdiag(g, &degree);
    let diag = degree.iter().map(|&d| 1.0 - 1.0 / d).collect();
    (diag, off)
}

/// Augmented normalized Laplacian of `A + I`. The hint is the largest
/// eigenvalue per `mode`.
pub fn augmented_laplacian(g: &Graph, mode: LambdaMaxMode) -> LaplacianOperator {
    let (diag, off) = augmented_parts(g);
    let mut op = LaplacianOperator::from_parts(LaplacianKind::Augmented, g, diag, off, 2.0, false);
    if mode == LambdaMaxMode::Exact {
        let est = op.estimate_lambda_max();
        op.lambda_max_hint = est.value;
        op.estimate_fell_back = !est.converged;
    }
    op
}

/// Scaled-normalized Laplacian `L^ - (lambda_max / 2) I`.
///
/// In [`LambdaMaxMode::Exact`] a power iteration that fails to converge
/// falls back to the bound 2 and sets [`LaplacianOperator::lambda_max_fell_back`].
pub fn scaled_normalized_laplacian(g: &Graph, mode: LambdaMaxMode) -> LaplacianOperator {
    let aug = augmented_laplacian(g, mode);
    let shift = aug.lambda_max_hint / 2.0;
    let diag = aug.diag.iter().map(|&d| d - shift).collect();
    LaplacianOperator {
        kind: LaplacianKind::ScaledNormalized,
        diag,
        matvecs: AtomicUsize::new(0),
        ..aug
    }
}

/// `2 L / lambda_max - I` for Chebyshev filtering; `lambda_max` of the
/// normalized Laplacian is bounded by 2.
pub fn chebyshev_rescaled_laplacian(g: &Graph, lambda_max: f64) -> Result<LaplacianOperator> {
    if !(lambda_max.is_finite() && lambda_max > 0.0) {
        return Err(Error::invalid(format!(
            "lambda_max must be positive, got {lambda_max}"
        )));
    }
    let l = normalized_laplacian(g);
    let s = 2.0 / lambda_max;
    Ok(LaplacianOperator {
        kind: LaplacianKind::ChebyshevRescaled,
        diag: l.diag.iter().map(|&d| s * d - 1.0).collect(),
        off_values: l.off_values.iter().map(|&v| s * v).collect(),
        lambda_max_hint: lambda_max,
        ..l
    })
}

/// Result of a largest-eigenvalue estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaMaxEstimate {
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl LaplacianOperator {
    fn from_parts(
        kind: LaplacianKind,
        g: &Graph,
        diag: Vec<f64>,
        off_values: Vec<f64>,
        lambda_max_hint: f64,
        estimate_fell_back: bool,
    ) -> Self {
        LaplacianOperator {
            kind,
            n: g.n(),
            diag,
            row_offsets: g.row_offsets().to_vec(),
            col_indices: g.col_indices().to_vec(),
            off_values,
            lambda_max_hint,
            estimate_fell_back,
            matvecs: AtomicUsize::new(0),
        }
    }

    /// Builds an operator from a dense symmetric matrix. Only meant for
    /// small test fixtures.
    pub fn from_dense(kind: LaplacianKind, m: ArrayView2<f64>, lambda_max_hint: f64) -> Result<Self> {
        let n = m.nrows();
        if m.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: m.ncols(),
            });
        }
        let mut row_offsets = vec![0];
        let mut col_indices = Vec::new();
        let mut off_values = Vec::new();
        let mut diag = Vec::with_capacity(n);
        for i in 0..n {
            diag.push(m[[i, i]]);
            for j in 0..n {
                if i != j && m[[i, j]] != 0.0 {
                    col_indices.push(j);
                    off_values.push(m[[i, j]]);
                }
            }
            row_offsets.push(col_indices.len());
        }
        Ok(LaplacianOperator {
            kind,
            n,
            diag,
            row_offsets,
            col_indices,
            off_values,
            lambda_max_hint,
            estimate_fell_back: false,
            matvecs: AtomicUsize::new(0),
        })
    }

    pub fn kind(&self) -> LaplacianKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.n + self.off_values.len()
    }

    /// Upper bound on the largest eigenvalue of the underlying `L^` (or
    /// `L` for the normalized and Chebyshev kinds).
    pub fn lambda_max_hint(&self) -> f64 {
        self.lambda_max_hint
    }

    /// True when the exact estimate did not converge and the bound 2 was used.
    pub fn lambda_max_fell_back(&self) -> bool {
        self.estimate_fell_back
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diag
    }

    /// Number of operator applications (vector or block) so far.
    pub fn matvec_count(&self) -> usize {
        self.matvecs.load(Ordering::Relaxed)
    }

    pub fn reset_matvec_count(&self) {
        self.matvecs.store(0, Ordering::Relaxed);
    }

    pub(crate) fn set_matvec_count(&self, count: usize) {
        self.matvecs.store(count, Ordering::Relaxed);
    }

    #[inline]
    fn row_dot(&self, i: usize, x: &ArrayView1<f64>) -> f64 {
        let mut acc = self.diag[i] * x[i];
        for k in self.row_offsets[i]..self.row_offsets[i + 1] {
            acc += self.off_values[k] * x[self.col_indices[k]];
        }
        acc
    }

    /// `y = op * x`.
    pub fn spmv(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: x.len(),
            });
        }
        let mut y = Array1::zeros(self.n);
        self.spmv_into(&x, &mut y);
        Ok(y)
    }

    pub(crate) fn spmv_into(&self, x: &ArrayView1<f64>, y: &mut Array1<f64>) {
        debug_assert_eq!(x.len(), self.n);
        self.matvecs.fetch_add(1, Ordering::Relaxed);
        let work = self.nnz();
        match y.as_slice_mut() {
            Some(out) if work >= PARALLEL_MIN_WORK => {
                out.par_iter_mut()
                    .enumerate()
                    .with_min_len(1024)
                    .for_each(|(i, yi)| *yi = self.row_dot(i, x));
            }
            _ => {
                for i in 0..self.n {
                    y[i] = self.row_dot(i, x);
                }
            }
        }
    }

    /// `Y = op * X` for an `n x f` block, counted as one application.
    /// Each output row is summed in a fixed order, so the result does not
    /// depend on the thread count.
    pub fn apply_block(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.nrows() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: x.nrows(),
            });
        }
        self.matvecs.fetch_add(1, Ordering::Relaxed);
        let f = x.ncols();
        let mut y = Array2::zeros((self.n, f));
        let row = |i: usize, mut out: ndarray::ArrayViewMut1<f64>| {
            out.scaled_add(self.diag[i], &x.row(i));
            for k in self.row_offsets[i]..self.row_offsets[i + 1] {
                out.scaled_add(self.off_values[k], &x.row(self.col_indices[k]));
            }
        };
        if self.nnz() * f.max(1) >= PARALLEL_MIN_WORK {
            y.axis_iter_mut(Axis(0))
                .into_par_iter()
                .enumerate()
                .with_min_len(64)
                .for_each(|(i, out)| row(i, out));
        } else {
            for (i, out) in y.axis_iter_mut(Axis(0)).enumerate() {
                row(i, out);
            }
        }
        Ok(y)
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut m = Array2::zeros((self.n, self.n));
        for i in 0..self.n {
            m[[i, i]] = self.diag[i];
            for k in self.row_offsets[i]..self.row_offsets[i + 1] {
                m[[i, self.col_indices[k]]] = self.off_values[k];
            }
        }
        m
    }

    /// Power iteration for the dominant eigenvalue (the largest one for a
    /// positive semidefinite operator). Uses a fixed-seed start vector and
    /// does not touch the matvec counter.
    pub fn estimate_lambda_max(&self) -> LambdaMaxEstimate {
        if self.n == 0 {
            return LambdaMaxEstimate {
                value: 0.0,
                iterations: 0,
                converged: true,
            };
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_1a4d);
        let mut v = Array1::from_shape_fn(self.n, |_| rng.random::<f64>() + 0.5);
        let norm = v.dot(&v).sqrt();
        v /= norm;
        let mut w = Array1::zeros(self.n);
        let mut previous = f64::NAN;
        for it in 1..=POWER_ITERATION_CAP {
            for i in 0..self.n {
                w[i] = self.row_dot(i, &v.view());
            }
            let rayleigh = v.dot(&w);
            let wnorm = w.dot(&w).sqrt();
            if wnorm == 0.0 {
                return LambdaMaxEstimate {
                    value: 0.0,
                    iterations: it,
                    converged: true,
                };
            }
            if (rayleigh - previous).abs() < POWER_ITERATION_TOL {
                return LambdaMaxEstimate {
                    value: (rayleigh * POWER_ITERATION_INFLATE).min(2.0),
                    iterations: it,
                    converged: true,
                };
            }
            previous = rayleigh;
            v.assign(&w);
            v /= wnorm;
        }
        LambdaMaxEstimate {
            value: 2.0,
            iterations: POWER_ITERATION_CAP,
            converged: false,
        }
    }

    /// Heap bytes held by the operator.
    pub fn heap_bytes(&self) -> usize {
        (self.diag.len() + self.off_values.len()) * std::mem::size_of::<f64>()
            + (self.row_offsets.len() + self.col_indices.len()) * std::mem::size_of::<usize>()
    }
}
