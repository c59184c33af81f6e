//! Matrix-free application of feedback-looped and Chebyshev filters.
//!
//! The feedback-looped recursion is
//!
//! ```text
//! x(0) = x
//! x(t) = -sum_{j=1..p} psi_j L^j x(t-1) + sum_{j=0..q} phi_j L^j x
//! ```
//!
//! The feedforward term is computed once (q operator applications), and
//! every iteration costs p applications, so a run of `t` iterations performs
//! exactly `t p + q` products with the operator.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::design::FilterCoefficients;
use crate::error::{Error, Result};
use crate::laplacian::{LaplacianKind, LaplacianOperator};

pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_T_MAX: usize = 50;

/// Stopping rule and safety checks for [`apply_feedback_looped`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeedbackOptions {
    pub t_max: usize,
    /// Stop once `|x(t) - x(t-1)|_inf <= tol`.
    pub tol: f64,
    /// Before iterating, check that the feedback operator is a contraction
    /// on this graph (spectral radius below 1), not just on the design grid.
    pub strict_stability: bool,
}

impl Default for FeedbackOptions {
    fn default() -> Self {
        FeedbackOptions {
            t_max: DEFAULT_T_MAX,
            tol: DEFAULT_TOL,
            strict_stability: false,
        }
    }
}

/// Outcome of a feedback-looped filtering run.
#[derive(Debug, Clone)]
pub struct FeedbackRun {
    pub signal: Array2<f64>,
    pub iterations: usize,
    /// `|x(t) - x(t-1)|_inf` at the last iteration.
    pub final_delta: f64,
    /// Successive differences per iteration, infinity norm.
    pub deltas_inf: Vec<f64>,
    /// Successive differences per iteration, Euclidean (Frobenius) norm.
    pub deltas_l2: Vec<f64>,
}

/// `sum_j coeffs[j] L^j` applied matrix-free; `coeffs[0]` is the constant term.
#[derive(Debug, Clone)]
pub struct PolynomialOperator<'a> {
    op: &'a LaplacianOperator,
    coeffs: Vec<f64>,
}

impl<'a> PolynomialOperator<'a> {
    pub fn new(op: &'a LaplacianOperator, coeffs: Vec<f64>) -> Self {
        PolynomialOperator { op, coeffs }
    }

    /// `P = -sum_{j>=1} psi_j L^j`.
    pub fn feedback(op: &'a LaplacianOperator, c: &FilterCoefficients) -> Self {
        let mut coeffs = vec![0.0];
        coeffs.extend(c.psi.iter().map(|v| -v));
        Self::new(op, coeffs)
    }

    /// `Q = sum_{j>=0} phi_j L^j`.
    pub fn feedforward(op: &'a LaplacianOperator, c: &FilterCoefficients) -> Self {
        Self::new(op, c.phi.clone())
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn operator(&self) -> &LaplacianOperator {
        self.op
    }

    /// Applies the polynomial to an `n x f` block with `degree()` operator
    /// applications.
    pub fn apply(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        let mut acc = x.to_owned() * self.coeffs.first().copied().unwrap_or(0.0);
        let mut power = x.to_owned();
        for &c in self.coeffs.iter().skip(1) {
            power = self.op.apply_block(power.view())?;
            acc.scaled_add(c, &power);
        }
        Ok(acc)
    }

    pub fn apply_vec(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        let col = x.insert_axis(Axis(1));
        Ok(self.apply(col)?.remove_axis(Axis(1)))
    }

    /// Scalar evaluation at `lambda`.
    pub fn eval(&self, lambda: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * lambda + c)
    }

    /// Dominant eigenvalue magnitude by power iteration. The operator is
    /// symmetric, so this is its spectral radius. Counts toward the
    /// underlying operator's matvec counter.
    pub fn spectral_radius(&self, iterations: usize) -> Result<f64> {
        let n = self.op.n();
        if n == 0 {
            return Ok(0.0);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0xfeed_bac4);
        let mut v = Array1::from_shape_fn(n, |_| rng.random::<f64>() - 0.5);
        // |P v| <= rho for unit v, and it approaches rho as v aligns with
        // the dominant eigenvector.
        let mut estimate = 0.0f64;
        for _ in 0..iterations {
            let norm = v.dot(&v).sqrt();
            if norm == 0.0 {
                return Ok(estimate);
            }
            v /= norm;
            let w = self.apply_vec(v.view())?;
            estimate = estimate.max(w.dot(&w).sqrt());
            v = w;
        }
        Ok(estimate)
    }
}

fn max_abs(a: &Array2<f64>) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn frobenius(a: &Array2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Runs the feedback-looped recursion on an `n x f` signal block.
pub fn apply_feedback_looped(
    op: &LaplacianOperator,
    c: &FilterCoefficients,
    x: ArrayView2<f64>,
    options: FeedbackOptions,
) -> Result<FeedbackRun> {
    if options.t_max < 1 {
        return Err(Error::invalid("t_max must be at least 1"));
    }
    if x.nrows() != op.n() {
        return Err(Error::DimensionMismatch {
            expected: op.n(),
            got: x.nrows(),
        });
    }
    let feedback = PolynomialOperator::feedback(op, c);
    let feedforward = PolynomialOperator::feedforward(op, c);
    if options.strict_stability {
        let before = op.matvec_count();
        let radius = feedback.spectral_radius(200)?;
        op.set_matvec_count(before);
        if radius >= 1.0 {
            return Err(Error::Unstable { radius });
        }
    }

    let q_term = feedforward.apply(x)?;
    let mut current = x.to_owned();
    let mut run = FeedbackRun {
        signal: Array2::zeros(x.dim()),
        iterations: 0,
        final_delta: f64::INFINITY,
        deltas_inf: Vec::new(),
        deltas_l2: Vec::new(),
    };
    for t in 1..=options.t_max {
        let mut next = feedback.apply(current.view())?;
        next += &q_term;
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged { iteration: t });
        }
        let diff = &next - &current;
        let delta = max_abs(&diff);
        run.deltas_inf.push(delta);
        run.deltas_l2.push(frobenius(&diff));
        run.iterations = t;
        run.final_delta = delta;
        current = next;
        if delta <= options.tol {
            break;
        }
    }
    run.signal = current;
    Ok(run)
}

/// Single-signal convenience wrapper around [`apply_feedback_looped`].
pub fn apply_feedback_looped_vec(
    op: &LaplacianOperator,
    c: &FilterCoefficients,
    x: ArrayView1<f64>,
    options: FeedbackOptions,
) -> Result<(Array1<f64>, usize, f64)> {
    let run = apply_feedback_looped(op, c, x.insert_axis(Axis(1)), options)?;
    Ok((run.signal.remove_axis(Axis(1)), run.iterations, run.final_delta))
}

/// Exposes `P` as a matrix-free map and returns `Q X` materialised.
pub fn apply_operator_form<'a>(
    op: &'a LaplacianOperator,
    c: &FilterCoefficients,
    x: ArrayView2<f64>,
) -> Result<(PolynomialOperator<'a>, Array2<f64>)> {
    let q = PolynomialOperator::feedforward(op, c).apply(x)?;
    Ok((PolynomialOperator::feedback(op, c), q))
}

/// Upper bound on `|x(0) - x*|_2 / |x|_2` when the operator spectrum lies in
/// the design grid hull: `max_grid |1 - h(lambda)|`.
pub fn initial_error_bound(c: &FilterCoefficients) -> Result<f64> {
    let mut bound = 0.0f64;
    for l in c.grid() {
        bound = bound.max((1.0 - c.frequency_response(l)?).abs());
    }
    Ok(bound)
}

/// Smallest `T >= 1` with `gamma^T C0 <= tol`, where `C0` is
/// [`initial_error_bound`] and `tol` is relative to `|x|_2`.
pub fn required_iterations(c: &FilterCoefficients, tol: f64) -> Result<usize> {
    if !(c.gamma >= 0.0 && c.gamma < 1.0) {
        return Err(Error::invalid(format!(
            "convergence needs gamma in [0, 1), got {}",
            c.gamma
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::invalid("tol must be positive"));
    }
    let mut err = initial_error_bound(c)?;
    let mut t = 0;
    while err > tol {
        err *= c.gamma;
        t += 1;
    }
    Ok(t.max(1))
}

/// Chebyshev expansion coefficients `theta_0..theta_{k-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChebyshevCoefficients {
    pub theta: Vec<f64>,
}

impl ChebyshevCoefficients {
    pub fn new(theta: Vec<f64>) -> Result<Self> {
        if theta.is_empty() {
            return Err(Error::invalid("Chebyshev order k must be at least 1"));
        }
        Ok(ChebyshevCoefficients { theta })
    }

    pub fn k(&self) -> usize {
        self.theta.len()
    }

    /// `sum_j theta_j T_j(lambda)` by the three-term recurrence.
    pub fn response(&self, lambda: f64) -> f64 {
        let (mut prev, mut cur) = (1.0, lambda);
        let mut acc = self.theta[0];
        for (j, &t) in self.theta.iter().enumerate().skip(1) {
            if j > 1 {
                let next = 2.0 * lambda * cur - prev;
                prev = cur;
                cur = next;
            }
            acc += t * cur;
        }
        acc
    }
}

/// Chebyshev basis blocks `T_0(L) X .. T_{k-1}(L) X`, `k - 1` applications.
pub fn chebyshev_basis(op: &LaplacianOperator, k: usize, x: ArrayView2<f64>) -> Result<Vec<Array2<f64>>> {
    if op.kind() != LaplacianKind::ChebyshevRescaled {
        return Err(Error::invalid(
            "Chebyshev filtering needs the rescaled operator 2L/lambda_max - I",
        ));
    }
    let mut basis = Vec::with_capacity(k);
    if k == 0 {
        return Ok(basis);
    }
    basis.push(x.to_owned());
    if k > 1 {
        basis.push(op.apply_block(x)?);
    }
    for j in 2..k {
        let mut next = op.apply_block(basis[j - 1].view())? * 2.0;
        next -= &basis[j - 2];
        basis.push(next);
    }
    Ok(basis)
}

/// `sum_j theta_j T_j(L) x` with `k - 1` operator applications.
pub fn apply_chebyshev(op: &LaplacianOperator, c: &ChebyshevCoefficients, x: ArrayView2<f64>) -> Result<Array2<f64>> {
    let basis = chebyshev_basis(op, c.k(), x)?;
    let mut out = Array2::zeros(x.dim());
    for (t, b) in c.theta.iter().zip(basis.iter()) {
        out.scaled_add(*t, b);
    }
    Ok(out)
}
