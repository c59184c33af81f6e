//! Coefficient design for feedback-looped filters.
//!
//! The desired response is an ideal high-pass filter over a uniform
//! frequency grid. Coefficients are fitted by minimising the linearised
//! error `|h + diag(h) alpha psi - beta phi|_2` subject to the stability
//! constraint `|alpha psi|_inf <= gamma`.
//!
//! `phi` is unconstrained, so it is eliminated by projecting onto the
//! orthogonal complement of `range(beta)`. What remains is a strictly convex
//! quadratic program in `p` variables with `2 n_grid` half-space
//! constraints, solved exactly with a primal active-set method.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, Axis};

use crate::error::{Error, Result};
use crate::linalg::{least_squares, solve_square, HouseholderQr};

pub const DEFAULT_GRID_SIZE: usize = 128;
pub const DEFAULT_GRID_MAX: f64 = 2.0;
/// Smallest denominator magnitude [`FilterCoefficients::frequency_response`] accepts.
pub const POLE_GUARD: f64 = 1e-12;

/// Sampled target response for the design.
#[derive(Debug, Clone, PartialEq)]
pub struct DesiredResponse {
    /// Uniform samples of `[0, grid_max]`, endpoints included.
    pub grid: Vec<f64>,
    /// 1 where `grid[i] >= lambda_cut`, else 0.
    pub binary: Vec<f64>,
    /// Values the filter should reproduce on the grid.
    pub target: Vec<f64>,
    pub lambda_cut: f64,
    pub eta: f64,
}

fn uniform_grid(n_grid: usize, grid_max: f64) -> Vec<f64> {
    let step = grid_max / (n_grid - 1) as f64;
    (0..n_grid)
        .map(|i| if i + 1 == n_grid { grid_max } else { i as f64 * step })
        .collect()
}

impl DesiredResponse {
    /// Ideal high-pass target: 1 at and above `lambda_cut = grid_max / 2 - eta`,
    /// 0 below.
    pub fn high_pass(eta: f64, n_grid: usize, grid_max: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::invalid(format!("eta must lie in [0, 1], got {eta}")));
        }
        if !(grid_max.is_finite() && grid_max > 0.0) {
            return Err(Error::invalid(format!("grid_max must be positive, got {grid_max}")));
        }
        if n_grid < 3 {
            return Err(Error::invalid(format!(
                "n_grid = {n_grid} is too small for any design (need at least p + q + 2 >= 3)"
            )));
        }
        let grid = uniform_grid(n_grid, grid_max);
        let lambda_cut = grid_max / 2.0 - eta;
        let binary: Vec<f64> = grid
            .iter()
            .map(|&l| if l >= lambda_cut { 1.0 } else { 0.0 })
            .collect();
        Ok(DesiredResponse {
            target: binary.clone(),
            grid,
            binary,
            lambda_cut,
            eta,
        })
    }

    /// Target `h(lambda) = lambda` on the grid, with no cut-off binarisation.
    /// Used for the ablation that drops the cut-off technique.
    pub fn unbinarized(eta: f64, n_grid: usize, grid_max: f64) -> Result<Self> {
        let mut resp = Self::high_pass(eta, n_grid, grid_max)?;
        resp.target = resp.grid.clone();
        Ok(resp)
    }

    /// Arbitrary target sampled on the uniform grid.
    pub fn with_target(eta: f64, grid_max: f64, target: Vec<f64>) -> Result<Self> {
        let mut resp = Self::high_pass(eta, target.len(), grid_max)?;
        if target.iter().any(|t| !t.is_finite()) {
            return Err(Error::invalid("target response must be finite"));
        }
        resp.target = target;
        Ok(resp)
    }

    pub fn n_grid(&self) -> usize {
        self.grid.len()
    }

    pub fn grid_max(&self) -> f64 {
        *self.grid.last().unwrap_or(&0.0)
    }
}

/// Vandermonde-structured design matrices over the grid frequencies.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrices {
    /// `alpha[i][j-1] = lambda_i^j` for `j = 1..=p`.
    pub alpha: Array2<f64>,
    /// `beta[i][j] = lambda_i^j` for `j = 0..=q`.
    pub beta: Array2<f64>,
}

pub fn build_design_matrices(grid: &[f64], p: usize, q: usize) -> DesignMatrices {
    let n = grid.len();
    let mut alpha = Array2::zeros((n, p));
    let mut beta = Array2::zeros((n, q + 1));
    for (i, &l) in grid.iter().enumerate() {
        let mut power = 1.0;
        beta[[i, 0]] = 1.0;
        for j in 1..=p.max(q) {
            power *= l;
            if j <= p {
                alpha[[i, j - 1]] = power;
            }
            if j <= q {
                beta[[i, j]] = power;
            }
        }
    }
    DesignMatrices { alpha, beta }
}

/// Designed feedback (`psi`) and feedforward (`phi`) coefficients together
/// with the design settings that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterCoefficients {
    /// `psi_1..psi_p`.
    pub psi: Vec<f64>,
    /// `phi_0..phi_q`.
    pub phi: Vec<f64>,
    pub gamma: f64,
    pub eta: f64,
    /// Linearised residual `|h + diag(h) alpha psi - beta phi|_2`.
    pub residual: f64,
    /// `gamma - |alpha psi|_inf` over the design grid.
    pub stability_margin: f64,
    pub n_grid: usize,
    pub grid_max: f64,
    /// False when the solver hit its iteration cap.
    pub converged: bool,
}

/// Knobs for [`design_coefficients_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub max_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_iterations: 20_000,
        }
    }
}

impl FilterCoefficients {
    /// Filter with explicit coefficients and no design metadata beyond the
    /// default grid. `gamma` is taken as the achieved `|alpha psi|_inf`,
    /// clamped into `(0, 1)` when possible.
    pub fn from_raw(psi: Vec<f64>, phi: Vec<f64>) -> Result<Self> {
        if psi.is_empty() {
            return Err(Error::invalid("p must be at least 1"));
        }
        if phi.is_empty() {
            return Err(Error::invalid("phi needs at least the constant term"));
        }
        if psi.iter().chain(phi.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("coefficients must be finite"));
        }
        let mut c = FilterCoefficients {
            psi,
            phi,
            gamma: 0.0,
            eta: 0.5,
            residual: f64::NAN,
            stability_margin: 0.0,
            n_grid: DEFAULT_GRID_SIZE,
            grid_max: DEFAULT_GRID_MAX,
            converged: true,
        };
        let bound = c.grid_feedback_bound();
        c.gamma = bound;
        c.stability_margin = 0.0;
        Ok(c)
    }

    pub fn p(&self) -> usize {
        self.psi.len()
    }

    pub fn q(&self) -> usize {
        self.phi.len() - 1
    }

    pub fn grid(&self) -> Vec<f64> {
        uniform_grid(self.n_grid, self.grid_max)
    }

    pub fn design_matrices(&self) -> DesignMatrices {
        build_design_matrices(&self.grid(), self.p(), self.q())
    }

    /// `|alpha psi|_inf` on the recorded design grid.
    pub fn grid_feedback_bound(&self) -> f64 {
        let alpha = self.design_matrices().alpha;
        alpha
            .dot(&Array1::from(self.psi.clone()))
            .iter()
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Feedback polynomial `sum_j psi_j lambda^j`.
    pub fn feedback(&self, lambda: f64) -> f64 {
        lambda * horner(&self.psi, lambda)
    }

    /// Feedforward polynomial `sum_j phi_j lambda^j`.
    pub fn feedforward(&self, lambda: f64) -> f64 {
        horner(&self.phi, lambda)
    }

    /// Rational response `sum phi_j l^j / (1 + sum psi_j l^j)`.
    pub fn frequency_response(&self, lambda: f64) -> Result<f64> {
        let denominator = 1.0 + self.feedback(lambda);
        if denominator.abs() < POLE_GUARD || !denominator.is_finite() {
            return Err(Error::PoleProximity {
                lambda,
                denominator,
            });
        }
        Ok(self.feedforward(lambda) / denominator)
    }

    /// Linearised error vector `h + diag(h) alpha psi - beta phi` against `resp`.
    pub fn linearized_error(&self, resp: &DesiredResponse) -> Array1<f64> {
        Array1::from_iter(resp.grid.iter().zip(resp.target.iter()).map(|(&l, &h)| {
            h + h * self.feedback(l) - self.feedforward(l)
        }))
    }

    /// Text form: `key=value` lines with 17 significant digits.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let list = |v: &[f64]| v.iter().map(|x| format!("{x:.16e}")).collect::<Vec<_>>().join(",");
        writeln!(s, "p={}", self.p()).unwrap();
        writeln!(s, "q={}", self.q()).unwrap();
        writeln!(s, "gamma={:.16e}", self.gamma).unwrap();
        writeln!(s, "eta={:.16e}", self.eta).unwrap();
        writeln!(s, "residual={:.16e}", self.residual).unwrap();
        writeln!(s, "psi={}", list(&self.psi)).unwrap();
        writeln!(s, "phi={}", list(&self.phi)).unwrap();
        s
    }

    pub fn from_text(text: &str, source: &Path) -> Result<Self> {
        let mut p = None;
        let mut q = None;
        let mut gamma = None;
        let mut eta = None;
        let mut residual = None;
        let mut psi = None;
        let mut phi = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: String| Error::parse(source, lineno + 1, msg);
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key=value, found {line:?}")))?;
            let value = value.trim();
            let float = |v: &str| v.trim().parse::<f64>().map_err(|e| err(format!("{key}: {e}")));
            let list = |v: &str| -> Result<Vec<f64>> {
                if v.is_empty() {
                    return Ok(Vec::new());
                }
                v.split(',').map(float).collect()
            };
            match key.trim() {
                "p" => p = Some(value.parse::<usize>().map_err(|e| err(format!("p: {e}")))?),
                "q" => q = Some(value.parse::<usize>().map_err(|e| err(format!("q: {e}")))?),
                "gamma" => gamma = Some(float(value)?),
                "eta" => eta = Some(float(value)?),
                "residual" => residual = Some(float(value)?),
                "psi" => psi = Some(list(value)?),
                "phi" => phi = Some(list(value)?),
                other => return Err(err(format!("unknown key {other:?}"))),
            }
        }
        let missing = |k: &str| Error::parse(source, 0, format!("missing key {k:?}"));
        let p = p.ok_or_else(|| missing("p"))?;
        let q = q.ok_or_else(|| missing("q"))?;
        let psi = psi.ok_or_else(|| missing("psi"))?;
        let phi = phi.ok_or_else(|| missing("phi"))?;
        if psi.len() != p || phi.len() != q + 1 {
            return Err(Error::parse(
                source,
                0,
                format!(
                    "coefficient lengths ({}, {}) disagree with p={p}, q={q}",
                    psi.len(),
                    phi.len()
                ),
            ));
        }
        let mut c = FilterCoefficients {
            psi,
            phi,
            gamma: gamma.ok_or_else(|| missing("gamma"))?,
            eta: eta.ok_or_else(|| missing("eta"))?,
            residual: residual.ok_or_else(|| missing("residual"))?,
            stability_margin: 0.0,
            n_grid: DEFAULT_GRID_SIZE,
            grid_max: DEFAULT_GRID_MAX,
            converged: true,
        };
        c.stability_margin = c.gamma - c.grid_feedback_bound();
        Ok(c)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_text(&crate::error::read_input_text(path)?, path)
    }
}

fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

/// Stable coefficient design with the default solver options.
pub fn design_coefficients(resp: &DesiredResponse, p: usize, q: usize, gamma: f64) -> Result<FilterCoefficients> {
    design_coefficients_with(resp, p, q, gamma, SolverOptions::default())
}

pub fn design_coefficients_with(
    resp: &DesiredResponse,
    p: usize,
    q: usize,
    gamma: f64,
    options: SolverOptions,
) -> Result<FilterCoefficients> {
    if p < 1 {
        return Err(Error::invalid("feedback degree p must be at least 1"));
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::invalid(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    let n = resp.n_grid();
    if n < p + q + 2 {
        return Err(Error::invalid(format!(
            "n_grid = {n} is below p + q + 2 = {}; the design is underdetermined",
            p + q + 2
        )));
    }

    let DesignMatrices { alpha, beta } = build_design_matrices(&resp.grid, p, q);
    let target = Array1::from(resp.target.clone());

    // Column scaling so every alpha column has unit max-norm.
    let scale: Vec<f64> = alpha
        .axis_iter(Axis(1))
        .map(|col| {
            let m = col.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if m > 0.0 {
                1.0 / m
            } else {
                1.0
            }
        })
        .collect();
    let mut alpha_s = alpha.clone();
    for (mut col, s) in alpha_s.axis_iter_mut(Axis(1)).zip(scale.iter()) {
        col *= *s;
    }

    // B = diag(h) alpha_s, projected away from range(beta).
    let qr = HouseholderQr::new(beta.view());
    let mut projected_b = Array2::zeros((n, p));
    for j in 0..p {
        let col = &alpha_s.column(j) * &target;
        projected_b.column_mut(j).assign(&qr.residual_projection(col.view()));
    }
    let projected_h = qr.residual_projection(target.view());

    let mut hessian = projected_b.t().dot(&projected_b);
    let linear = projected_b.t().dot(&projected_h);
    let ridge = 1e-12 * hessian.diag().iter().fold(1e-12f64, |m, v| m.max(*v));
    for j in 0..p {
        hessian[[j, j]] += ridge;
    }

    let qp = solve_box_polyhedron_qp(&hessian, &linear, &alpha_s, gamma, options.max_iterations);
    let mut psi: Array1<f64> = qp.x.iter().zip(scale.iter()).map(|(x, s)| x * s).collect();

    // Final feasibility in the original coordinates.
    let feedback_bound = |psi: &Array1<f64>| alpha.dot(psi).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut bound = feedback_bound(&psi);
    // Cancellation in alpha psi can hide a one-ulp shrink, so the margin
    // doubles until the bound moves.
    let mut margin = 4.0 * f64::EPSILON;
    while bound > gamma {
        psi *= (gamma / bound) * (1.0 - margin);
        bound = feedback_bound(&psi);
        margin *= 2.0;
    }

    let fit_phi = |psi: &Array1<f64>| -> (Array1<f64>, f64) {
        let rhs = &target + &(&alpha.dot(psi) * &target);
        let phi = least_squares(beta.view(), rhs.view());
        let residual = (&rhs - &beta.dot(&phi)).mapv(|v| v * v).sum().sqrt();
        (phi, residual)
    };
    let (mut phi, mut residual) = fit_phi(&psi);

    let zero = Array1::zeros(p);
    let (fallback_phi, fallback_residual) = fit_phi(&zero);
    if fallback_residual < residual {
        psi = zero;
        phi = fallback_phi;
        residual = fallback_residual;
        bound = 0.0;
    }

    Ok(FilterCoefficients {
        psi: psi.to_vec(),
        phi: phi.to_vec(),
        gamma,
        eta: resp.eta,
        residual,
        stability_margin: gamma - bound,
        n_grid: n,
        grid_max: resp.grid_max(),
        converged: qp.converged,
    })
}

struct QpSolution {
    x: Array1<f64>,
    converged: bool,
}

/// Primal active-set method for
/// `min 1/2 x^T G x + c^T x  s.t.  -gamma <= A x <= gamma`
/// with `G` positive definite, starting from the feasible point `x = 0`.
fn solve_box_polyhedron_qp(
    g: &Array2<f64>,
    c: &Array1<f64>,
    a: &Array2<f64>,
    gamma: f64,
    max_iterations: usize,
) -> QpSolution {
    let p = c.len();
    let rows = a.nrows();
    // Constraint k < rows is  a_k x <= gamma, k >= rows is -a_k x <= gamma.
    let row = |k: usize| -> (ArrayView1<f64>, f64) {
        if k < rows {
            (a.row(k), 1.0)
        } else {
            (a.row(k - rows), -1.0)
        }
    };
    let usable: Vec<bool> = (0..rows).map(|k| a.row(k).iter().any(|v| *v != 0.0)).collect();
    let scale = c.iter().chain(g.iter()).fold(1.0f64, |m, v| m.max(v.abs()));
    let g_scale = g.iter().fold(f64::MIN_POSITIVE, |m, v| m.max(v.abs()));

    let mut x = Array1::<f64>::zeros(p);
    let mut working: Vec<usize> = Vec::new();
    // Constraints that made the working set singular when added: they are
    // numerically spanned by it and are left to the final rescale.
    let mut dependent = vec![false; 2 * rows];
    let mut at_subspace_minimum = false;
    let mut just_dropped = None;
    let drop_dependent = |working: &mut Vec<usize>, dependent: &mut Vec<bool>| {
        if let Some(k) = working.pop() {
            dependent[k] = true;
        }
    };
    for _ in 0..max_iterations {
        let grad = g.dot(&x) + c;
        let w = working.len();
        let constraint = |r: usize, j: usize| {
            let (ak, sign) = row(working[r]);
            sign * ak[j]
        };
        let (step, multipliers) = if w == p {
            // A full working set pins x; only the multipliers are unknown.
            let at = Array2::from_shape_fn((p, p), |(j, r)| constraint(r, j));
            let Some(mu) = solve_square(at.view(), (-&grad).view()) else {
                drop_dependent(&mut working, &mut dependent);
                continue;
            };
            (Array1::zeros(p), mu)
        } else {
            // Constraint rows are brought to the magnitude of G so the pivot
            // test does not mistake a small G for singularity.
            let mut kkt = Array2::zeros((p + w, p + w));
            kkt.slice_mut(ndarray::s![..p, ..p]).assign(g);
            for r in 0..w {
                for j in 0..p {
                    kkt[[p + r, j]] = g_scale * constraint(r, j);
                    kkt[[j, p + r]] = g_scale * constraint(r, j);
                }
            }
            let mut rhs = Array1::zeros(p + w);
            for j in 0..p {
                rhs[j] = -grad[j];
            }
            let Some(sol) = solve_square(kkt.view(), rhs.view()) else {
                drop_dependent(&mut working, &mut dependent);
                continue;
            };
            (
                sol.slice(ndarray::s![..p]).to_owned(),
                sol.slice(ndarray::s![p..]).mapv(|v| v * g_scale),
            )
        };
        let step_norm = step.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let x_norm = x.iter().fold(1.0f64, |m, v| m.max(v.abs()));

        // Ill-conditioned working sets give noisy steps that do not improve
        // the objective; treat those as stationary.
        let objective = 0.5 * x.dot(&g.dot(&x)) + c.dot(&x);
        let decrease = -(grad.dot(&step) + 0.5 * step.dot(&g.dot(&step)));
        if at_subspace_minimum || step_norm <= 1e-12 * x_norm || decrease <= 1e-10 * (objective.abs() + 1.0) {
            at_subspace_minimum = false;
            let most_negative = multipliers
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(b.1))
                .map(|(i, v)| (i, *v));
            match most_negative {
                Some((i, v)) if v < -1e-12 * scale => {
                    just_dropped = Some(working.remove(i));
                }
                _ => return QpSolution { x, converged: true },
            }
            continue;
        }

        let mut t = 1.0;
        let mut blocking = None;
        for k in 0..2 * rows {
            // Rounding can make the constraint just released block at
            // t = 0, which would cycle.
            if !usable[k % rows] || dependent[k] || just_dropped == Some(k) || working.contains(&k) {
                continue;
            }
            let (ak, sign) = row(k);
            let ad = sign * ak.dot(&step);
            if ad <= 1e-14 * step_norm * ak.iter().fold(0.0f64, |m, v| m.max(v.abs())) {
                continue;
            }
            let slack = gamma - sign * ak.dot(&x);
            let tk = (slack / ad).max(0.0);
            if tk < t {
                t = tk;
                blocking = Some(k);
            }
        }
        x.scaled_add(t, &step);
        just_dropped = None;
        // A full step lands on the minimiser over the current working set.
        match blocking {
            Some(k) => working.push(k),
            None => at_subspace_minimum = true,
        }
    }
    QpSolution { x, converged: false }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    #[test]
    fn cut_off_from_eta() {
        let r = DesiredResponse::high_pass(0.5, 128, 2.0).unwrap();
        assert_eq!(r.lambda_cut, 0.5);
        let r = DesiredResponse::high_pass(1.0, 16, 2.0).unwrap();
        assert_eq!(r.lambda_cut, 0.0);
        assert!(r.binary.iter().all(|&b| b == 1.0));
        let r = DesiredResponse::high_pass(0.0, 5, 2.0).unwrap();
        assert_eq!(r.grid, vec![0.0, 0.5, 1.0, 1.5, 2.0]);
        assert_eq!(r.binary, vec![0.0, 0.0, 1.0, 1.0, 1.0]);
        assert_eq!(r.target, r.binary);
    }

    #[test]
    fn desired_response_rejects_bad_inputs() {
        assert!(DesiredResponse::high_pass(1.5, 128, 2.0).is_err());
        assert!(DesiredResponse::high_pass(0.5, 2, 2.0).is_err());
        assert!(DesiredResponse::high_pass(0.5, 128, 0.0).is_err());
    }

    #[test]
    fn vandermonde_matrices() {
        let m = build_design_matrices(&[0.0, 1.0, 2.0], 2, 1);
        assert_eq!(m.alpha, arr2(&[[0.0, 0.0], [1.0, 1.0], [2.0, 4.0]]));
        assert_eq!(m.beta, arr2(&[[1.0, 0.0], [1.0, 1.0], [1.0, 2.0]]));
    }

    #[test]
    fn frequency_response_by_substitution() {
        let c = FilterCoefficients::from_raw(vec![0.0], vec![1.0]).unwrap();
        for l in [-1.0, 0.0, 0.3, 2.0] {
            assert_eq!(c.frequency_response(l).unwrap(), 1.0);
        }
        let c = FilterCoefficients::from_raw(vec![0.5], vec![0.0, 1.0]).unwrap();
        assert!((c.frequency_response(1.0).unwrap() - 1.0 / 1.5).abs() < 1e-15);
        let c = FilterCoefficients::from_raw(vec![-1.0], vec![1.0]).unwrap();
        assert!(matches!(c.frequency_response(1.0), Err(Error::PoleProximity { .. })));
    }

    #[test]
    fn zero_target_designs_zero_filter() {
        let r = DesiredResponse::with_target(0.5, 2.0, vec![0.0; 32]).unwrap();
        let c = design_coefficients(&r, 3, 2, 0.5).unwrap();
        assert!(c.psi.iter().all(|v| *v == 0.0));
        assert!(c.phi.iter().all(|v| *v == 0.0));
        assert_eq!(c.residual, 0.0);
    }

    #[test]
    fn degree_guard_and_gamma_range() {
        let r = DesiredResponse::high_pass(0.5, 8, 2.0).unwrap();
        assert!(design_coefficients(&r, 5, 3, 0.5).is_err());
        assert!(design_coefficients(&r, 3, 3, 0.5).is_ok());
        assert!(design_coefficients(&r, 1, 0, 0.0).is_err());
        assert!(design_coefficients(&r, 1, 0, 1.0).is_err());
        assert!(design_coefficients(&r, 0, 0, 0.5).is_err());
    }

    #[test]
    fn text_round_trip_is_exact() {
        let r = DesiredResponse::high_pass(0.5, 128, 2.0).unwrap();
        let c = design_coefficients(&r, 5, 3, 0.9).unwrap();
        let back = FilterCoefficients::from_text(&c.to_text(), Path::new("mem")).unwrap();
        assert_eq!(back.psi, c.psi);
        assert_eq!(back.phi, c.phi);
        assert_eq!(back.gamma, c.gamma);
        assert_eq!(back.residual, c.residual);
        assert_eq!(back.stability_margin, c.stability_margin);
    }

    #[test]
    fn text_errors_name_the_line() {
        let err = FilterCoefficients::from_text("p=1\nq=x\n", Path::new("c.txt")).unwrap_err();
        assert!(err.to_string().starts_with("c.txt:2:"), "{err}");
        let err = FilterCoefficients::from_text("p=2\nq=0\ngamma=0.5\neta=0.5\nresidual=0\npsi=1\nphi=1\n", Path::new("c.txt"))
            .unwrap_err();
        assert!(err.to_string().contains("disagree"));
    }
}
