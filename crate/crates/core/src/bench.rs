//! Scaling measurements for feedback-looped filtering on random graphs.

use std::time::Instant;

use ndarray::Array2;
use rand::Rng;
use serde::Serialize;

use crate::alloc_track;
use crate::data::erdos_renyi_edges;
use crate::design::FilterCoefficients;
use crate::engine::{apply_feedback_looped, FeedbackOptions};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::laplacian::{augmented_laplacian, scaled_normalized_laplacian, LambdaMaxMode};
use crate::seed::rng_for;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BenchOperator {
    Augmented,
    ScaledNormalized,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchPoint {
    pub target_edges: usize,
    pub n: usize,
    pub m: usize,
    pub iterations: usize,
    pub matvecs: usize,
    /// Median seconds per filter application.
    pub seconds: f64,
    /// Peak live heap during graph construction and filtering, when the
    /// counting allocator is installed.
    pub peak_bytes: Option<usize>,
    /// Graph, operator and signal buffers, counted analytically.
    pub estimated_bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub points: Vec<BenchPoint>,
    /// Least-squares slope of ln(seconds) against ln(m).
    pub time_slope: f64,
    /// Largest ratio between measured memory and its linear fit in m, in
    /// either direction.
    pub memory_fit_ratio: f64,
    pub memory_source: &'static str,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchOptions {
    pub average_degree: f64,
    /// Fixed iteration count; early stopping is disabled.
    pub iterations: usize,
    pub operator: BenchOperator,
    /// Lower bound on total timed seconds per size; small graphs repeat.
    pub min_seconds: f64,
    pub seed: u64,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            average_degree: 10.0,
            iterations: 20,
            operator: BenchOperator::Augmented,
            min_seconds: 0.3,
            seed: 0,
        }
    }
}

/// Slope of the least-squares line through `(x, y)`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Fits `y = a + b x` and returns the largest of `y / fit` and `fit / y`.
pub fn linear_fit_ratio(x: &[f64], y: &[f64]) -> f64 {
    let b = fit_slope(x, y);
    let n = x.len() as f64;
    let a = y.iter().sum::<f64>() / n - b * x.iter().sum::<f64>() / n;
    x.iter()
        .zip(y)
        .map(|(xi, yi)| {
            let fit = a + b * xi;
            if fit <= 0.0 {
                f64::INFINITY
            } else {
                (yi / fit).max(fit / yi)
            }
        })
        .fold(1.0, f64::max)
}

fn one_point(target_edges: usize, c: &FilterCoefficients, opt: &BenchOptions) -> Result<BenchPoint> {
    let n = ((2.0 * target_edges as f64 / opt.average_degree).round() as usize).max(2);
    let p_edge = (opt.average_degree / (n - 1) as f64).min(1.0);
    let mut rng = rng_for(opt.seed, &format!("bench/{target_edges}"));

    alloc_track::reset_peak();
    let base = alloc_track::current_bytes();
    let edges = erdos_renyi_edges(n, p_edge, &mut rng);
    let graph = Graph::from_edges(n, &edges)?;
    drop(edges);
    let op = match opt.operator {
        BenchOperator::Augmented => augmented_laplacian(&graph, LambdaMaxMode::Exact),
        BenchOperator::ScaledNormalized => scaled_normalized_laplacian(&graph, LambdaMaxMode::Exact),
    };
    let x = Array2::from_shape_simple_fn((n, 1), || rng.random::<f64>() - 0.5);
    let options = FeedbackOptions {
        t_max: opt.iterations,
        tol: f64::NEG_INFINITY,
        strict_stability: false,
    };

    let mut times = Vec::new();
    let mut total = 0.0;
    let mut matvecs = 0;
    let mut iterations = 0;
    while times.is_empty() || (total < opt.min_seconds && times.len() < 50) {
        op.reset_matvec_count();
        let t0 = Instant::now();
        let run = apply_feedback_looped(&op, c, x.view(), options)?;
        let dt = t0.elapsed().as_secs_f64();
        std::hint::black_box(&run.signal);
        times.push(dt);
        total += dt;
        matvecs = op.matvec_count();
        iterations = run.iterations;
    }
    times.sort_by(f64::total_cmp);
    let peak = alloc_track::peak_bytes().saturating_sub(base);
    // Signal buffers alive during the recursion: input, feedforward term,
    // iterate, next iterate, difference and two polynomial workspaces.
    let estimated_bytes = graph.heap_bytes() + op.heap_bytes() + 7 * n * std::mem::size_of::<f64>();
    Ok(BenchPoint {
        target_edges,
        n,
        m: graph.m(),
        iterations,
        matvecs,
        seconds: times[times.len() / 2],
        peak_bytes: alloc_track::installed().then_some(peak),
        estimated_bytes,
    })
}

/// Times filter applications on Erdős–Rényi graphs of fixed average
/// degree, one graph per entry of `edge_counts`.
pub fn bench_filtering(edge_counts: &[usize], c: &FilterCoefficients, opt: &BenchOptions) -> Result<BenchReport> {
    if edge_counts.len() < 2 {
        return Err(Error::invalid("need at least two sizes to fit a slope"));
    }
    if opt.iterations == 0 || !(opt.average_degree > 0.0) {
        return Err(Error::invalid("iterations and average degree must be positive"));
    }
    let mut points = Vec::with_capacity(edge_counts.len());
    for &e in edge_counts {
        points.push(one_point(e, c, opt)?);
    }
    let ln_m: Vec<f64> = points.iter().map(|p| (p.m as f64).ln()).collect();
    let ln_t: Vec<f64> = points.iter().map(|p| p.seconds.ln()).collect();
    let m: Vec<f64> = points.iter().map(|p| p.m as f64).collect();
    let (mem, memory_source): (Vec<f64>, _) = if points.iter().all(|p| p.peak_bytes.is_some()) {
        (points.iter().map(|p| p.peak_bytes.unwrap() as f64).collect(), "allocator")
    } else {
        (points.iter().map(|p| p.estimated_bytes as f64).collect(), "estimate")
    };
    Ok(BenchReport {
        time_slope: fit_slope(&ln_m, &ln_t),
        memory_fit_ratio: linear_fit_ratio(&m, &mem),
        memory_source,
        points,
    })
}
