//! One PASS / FAIL / BLOCKED line per acceptance criterion.
//!
//! `acceptance_summary` runs everything that is runnable offline and fails
//! if any runnable criterion fails. Criteria 5 to 8 need the Cora and
//! Citeseer datasets (see README); without them they print BLOCKED here and
//! the `#[ignore]`d tests at the bottom fail with the missing path.

use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use graph_arma::alloc_track::CountingAlloc;
use graph_arma::bench::{bench_filtering, BenchOptions};
use graph_arma::data::{generate_synthetic, load_citation_dataset, Dataset, FeatureMode, Family, LoadOptions, SyntheticSpec};
use graph_arma::design::{design_coefficients, DesiredResponse, FilterCoefficients};
use graph_arma::engine::{apply_feedback_looped, FeedbackOptions, PolynomialOperator};
use graph_arma::laplacian::{augmented_laplacian, scaled_normalized_laplacian, LambdaMaxMode, LaplacianKind, LaplacianOperator};
use graph_arma::model::{backward, forward, init_params, loss, FilterBank, FilterKind, ModelConfig, ModelParams, Mode};
use graph_arma::seed::rng_for;
use graph_arma::spectral::{eigendecompose, exact_filter_block, symmetric_eigen};
use graph_arma::train::{ablation_grid, order_sweep_grid, run_suite, train, mean_std, TrainConfig};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[global_allocator]
static ALLOC: CountingAlloc = CountingAlloc;

enum Outcome {
    Pass(String),
    Fail(String),
    Blocked(String),
}

fn report(id: usize, name: &str, o: &Outcome) {
    let (tag, detail) = match o {
        Outcome::Pass(d) => ("PASS", d),
        Outcome::Fail(d) => ("FAIL", d),
        Outcome::Blocked(d) => ("BLOCKED", d),
    };
    say(format!("criterion {id} {name}: {tag} ({detail})"));
}

/// Straight to stdout, so the lines show even when the harness captures output.
fn say(line: String) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}");
    let _ = out.flush();
}

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn norm(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn random_block(n: usize, f: usize, seed: u64) -> Array2<f64> {
    let mut rng = rng_for(seed, "signal");
    Array2::from_shape_simple_fn((n, f), || rng.random::<f64>() - 0.5)
}

/// The 20 filters: (p, q) x gamma cycled, four cut-offs.
fn designed_filters() -> Vec<(String, FilterCoefficients)> {
    let combos = [(1, 1, 0.5), (1, 1, 0.9), (3, 2, 0.5), (3, 2, 0.9), (5, 3, 0.5), (5, 3, 0.9)];
    (0..20)
        .map(|i| {
            let (p, q, gamma) = combos[i % combos.len()];
            let eta = 0.3 + 0.1 * (i / combos.len()) as f64;
            let resp = DesiredResponse::high_pass(eta, 128, 2.0).unwrap();
            let c = design_coefficients(&resp, p, q, gamma).unwrap();
            (format!("p={p} q={q} gamma={gamma} eta={eta:.1}"), c)
        })
        .collect()
}

fn test_graphs() -> Vec<graph_arma::graph::Graph> {
    let mut rng = rng_for(2024, "acceptance/graphs");
    (0..50)
        .map(|i| {
            let n = rng.random_range(4..=50);
            let family = match i % 6 {
                0 | 1 => Family::ErdosRenyi { p_edge: rng.random_range(0.05..0.5) },
                2 => Family::Path,
                3 => Family::Cycle,
                4 => Family::Grid,
                _ => Family::Barbell,
            };
            generate_synthetic(&SyntheticSpec::new(family, n, i as u64)).unwrap().graph
        })
        .collect()
}

struct OracleTally {
    compared: usize,
    excluded: usize,
    worst: f64,
    failures: Vec<String>,
}

fn oracle_tally(ops: &[LaplacianOperator], filters: &[(String, FilterCoefficients)]) -> OracleTally {
    let mut t = OracleTally { compared: 0, excluded: 0, worst: 0.0, failures: Vec::new() };
    for (gi, op) in ops.iter().enumerate() {
        let dec = eigendecompose(op).unwrap();
        let x = random_block(op.n(), 2, gi as u64);
        for (label, c) in filters {
            let fb = PolynomialOperator::feedback(op, c);
            let radius = dec.eigenvalues.iter().fold(0.0f64, |a, &l| a.max(fb.eval(l).abs()));
            if radius >= 1.0 - 1e-9 {
                t.excluded += 1;
                continue;
            }
            let exact = exact_filter_block(&dec, |l| c.frequency_response(l).unwrap(), x.view()).unwrap();
            // radius^t <= 1e-13; a fixed tolerance can sit below the rounding
            // noise of high-order feedback polynomials.
            let t_max = ((1e-13f64).ln() / radius.max(1e-3).ln()).ceil() as usize + 10;
            let opts = FeedbackOptions { t_max, tol: f64::NEG_INFINITY, strict_stability: false };
            let err = match apply_feedback_looped(op, c, x.view(), opts) {
                Ok(run) => norm((&run.signal - &exact).iter().copied()) / norm(exact.iter().copied()),
                Err(_) => f64::INFINITY,
            };
            t.compared += 1;
            t.worst = t.worst.max(err);
            if err > 1e-6 {
                t.failures.push(format!("graph {gi} {label}: {err:.2e} (radius {radius:.6})"));
            }
        }
    }
    t
}

fn criterion_1() -> Outcome {
    let filters = designed_filters();
    let graphs = test_graphs();
    let tilde: Vec<_> = graphs.iter().map(|g| scaled_normalized_laplacian(g, LambdaMaxMode::Exact)).collect();
    let hat: Vec<_> = graphs.iter().map(|g| augmented_laplacian(g, LambdaMaxMode::Exact)).collect();
    let a = oracle_tally(&tilde, &filters);
    let b = oracle_tally(&hat, &filters);
    for f in a.failures.iter().chain(&b.failures).take(5) {
        say(format!("  oracle mismatch: {f}"));
    }
    verdict(
        a.failures.is_empty() && b.failures.is_empty() && a.compared > 0,
        format!(
            "scaled operator: {} compared, worst rel err {:.1e}, {} excluded as off-grid unstable; augmented operator: {} compared, worst {:.1e}, {} excluded",
            a.compared, a.worst, a.excluded, b.compared, b.worst, b.excluded
        ),
    )
}

/// Symmetric operator with the given spectrum and a random eigenbasis.
fn operator_with_spectrum(spectrum: &[f64], seed: u64) -> LaplacianOperator {
    let n = spectrum.len();
    let r = random_block(n, n, seed);
    let u = symmetric_eigen((&r + &r.t()).view()).unwrap().eigenvectors;
    let m = u.dot(&Array2::from_diag(&Array1::from_vec(spectrum.to_vec()))).dot(&u.t());
    let m = (&m + &m.t()) * 0.5;
    LaplacianOperator::from_dense(LaplacianKind::Augmented, m.view(), 2.0).unwrap()
}

fn criterion_2() -> Outcome {
    let mut designs = designed_filters();
    for p in 1..=9 {
        for q in 1..=9 {
            for gamma in [0.3, 0.5, 0.9] {
                let resp = DesiredResponse::high_pass(0.5, 128, 2.0).unwrap();
                designs.push((format!("p={p} q={q} gamma={gamma}"), design_coefficients(&resp, p, q, gamma).unwrap()));
            }
        }
    }
    let infeasible: Vec<&String> = designs.iter().filter(|(_, c)| c.grid_feedback_bound() > c.gamma).map(|(l, _)| l).collect();

    let mut worst_ratio = 0.0f64;
    let mut violations = 0;
    for (k, (_, c)) in designs.iter().take(20).enumerate() {
        let grid = c.grid();
        let mut rng = rng_for(k as u64, "acceptance/spectrum");
        let spectrum: Vec<f64> = (0..32).map(|_| grid[rng.random_range(0..grid.len())]).collect();
        let op = operator_with_spectrum(&spectrum, k as u64);
        let x = random_block(32, 1, k as u64);
        let opts = FeedbackOptions { t_max: 60, tol: f64::NEG_INFINITY, strict_stability: false };
        let run = apply_feedback_looped(&op, c, x.view(), opts).unwrap();
        // Below this floor the differences are rounding noise.
        let weight: f64 = c.psi.iter().enumerate().map(|(j, v)| v.abs() * 2f64.powi(j as i32 + 1)).sum();
        let floor = 1e-13 * (1.0 + weight) * norm(x.iter().copied());
        for w in run.deltas_l2.windows(2) {
            if w[0] < floor {
                break;
            }
            let ratio = w[1] / w[0];
            worst_ratio = worst_ratio.max(ratio / c.gamma);
            if ratio > c.gamma * (1.0 + 1e-6) {
                violations += 1;
            }
        }
    }
    verdict(
        infeasible.is_empty() && violations == 0,
        format!(
            "{} of {} designs feasible on the grid; worst contraction ratio / gamma on grid spectra {:.6}",
            designs.len() - infeasible.len(),
            designs.len(),
            worst_ratio
        ),
    )
}

fn gradient_error(cfg: &ModelConfig) -> f64 {
    let spec = SyntheticSpec::new(Family::ErdosRenyi { p_edge: 0.3 }, 16, 11).with_features(FeatureMode::RandomNormal { dim: 3 });
    let ds = generate_synthetic(&spec).unwrap();
    let bank = FilterBank::for_graph(&ds.graph, cfg).unwrap();
    let params = init_params(cfg, ds.feature_dim(), ds.class_count, 5);
    let seed = 77;
    let loss_at = |p: &ModelParams| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tr = forward(cfg, p, &bank, ds.features.view(), Mode::Train(&mut rng)).unwrap();
        loss(&tr, &ds.labels, &ds.train, p, cfg.l2_coeff).unwrap()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tr = forward(cfg, &params, &bank, ds.features.view(), Mode::Train(&mut rng)).unwrap();
    let grads = backward(cfg, &params, &bank, ds.features.view(), &tr, &ds.labels, &ds.train).unwrap();
    let h = 1e-5;
    let mut worst = 0.0f64;
    for ti in 0..params.tensors().len() {
        let (rows, cols) = params.tensors()[ti].dim();
        for r in 0..rows {
            for c in 0..cols {
                let mut plus = params.clone();
                plus.tensors_mut()[ti][[r, c]] += h;
                let mut minus = params.clone();
                minus.tensors_mut()[ti][[r, c]] -= h;
                let fd = (loss_at(&plus) - loss_at(&minus)) / (2.0 * h);
                let an = grads.tensors()[ti][[r, c]];
                if fd.abs() < 1e-8 && an.abs() < 1e-8 {
                    continue;
                }
                worst = worst.max((fd - an).abs() / fd.abs().max(an.abs()));
            }
        }
    }
    worst
}

fn criterion_3() -> Outcome {
    let base = ModelConfig {
        layer_widths: vec![4, 3],
        l2_coeff: 0.01,
        dropout: 0.0,
        ..ModelConfig::dfnet()
    };
    let variants = [
        ("dense feedback", base.clone()),
        ("dense feedback, dropout 0.5", ModelConfig { dropout: 0.5, ..base.clone() }),
        ("chebyshev", ModelConfig { filter: FilterKind::Chebyshev { k: 3 }, dense: false, ..base }),
    ];
    let errs: Vec<(String, f64)> = variants.iter().map(|(l, c)| (l.to_string(), gradient_error(c))).collect();
    let worst = errs.iter().fold(0.0f64, |a, (_, e)| a.max(*e));
    let detail = errs.iter().map(|(l, e)| format!("{l}: {e:.1e}")).collect::<Vec<_>>().join(", ");
    verdict(worst <= 1e-4, format!("max relative error {detail}"))
}

fn criterion_4() -> Outcome {
    let g = generate_synthetic(&SyntheticSpec::new(Family::ErdosRenyi { p_edge: 0.1 }, 200, 3)).unwrap().graph;
    let op = scaled_normalized_laplacian(&g, LambdaMaxMode::Exact);
    let mut count_ok = true;
    for (p, q) in [(1, 1), (3, 2), (5, 3), (9, 4)] {
        let resp = DesiredResponse::high_pass(0.5, 128, 2.0).unwrap();
        let c = design_coefficients(&resp, p, q, 0.9).unwrap();
        for t in [1, 5, 17] {
            op.reset_matvec_count();
            let opts = FeedbackOptions { t_max: t, tol: f64::NEG_INFINITY, strict_stability: false };
            apply_feedback_looped(&op, &c, random_block(200, 1, 1).view(), opts).unwrap();
            count_ok &= op.matvec_count() == t * p + q;
        }
    }
    let resp = DesiredResponse::high_pass(0.5, 128, 2.0).unwrap();
    let c = design_coefficients(&resp, 5, 3, 0.9).unwrap();
    let edges = [10_000, 31_623, 100_000, 316_228, 1_000_000];
    let report = match bench_filtering(&edges, &c, &BenchOptions::default()) {
        Ok(r) => r,
        Err(e) => return Outcome::Fail(format!("bench failed: {e}")),
    };
    for p in &report.points {
        say(format!("  m = {:>8}: {:.4} s per application, {} bytes peak", p.m, p.seconds, p.peak_bytes.unwrap_or(p.estimated_bytes)));
    }
    let slope_ok = (0.8..=1.2).contains(&report.time_slope);
    let mem_ok = report.memory_fit_ratio <= 1.5;
    verdict(
        count_ok && slope_ok && mem_ok,
        format!(
            "matvec count t*p+q exact: {count_ok}; time slope {:.3}; memory within {:.3}x of linear fit ({})",
            report.time_slope, report.memory_fit_ratio, report.memory_source
        ),
    )
}

fn data_root() -> PathBuf {
    std::env::var_os("GRAPH_ARMA_DATA")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data"))
}

fn dataset(name: &str) -> Result<Dataset, String> {
    let dir = data_root().join(name);
    if !dir.is_dir() {
        return Err(format!("dataset not found at {}", dir.display()));
    }
    load_citation_dataset(&dir, LoadOptions::default()).map_err(|e| e.to_string())
}

fn full_training() -> TrainConfig {
    TrainConfig::default()
}

fn criterion_5() -> Outcome {
    let ds = match dataset("cora") {
        Ok(d) => d,
        Err(e) => return Outcome::Blocked(e),
    };
    match train(&ModelConfig::dfnet(), &full_training(), &ds) {
        Ok(runs) => {
            let accs: Vec<f64> = runs.iter().filter_map(|r| r.test_accuracy).collect();
            let (m, s) = mean_std(&accs);
            verdict(accs.len() == 10 && m >= 0.80, format!("mean test accuracy {m:.4} +- {s:.4} over {} runs", accs.len()))
        }
        Err(e) => Outcome::Fail(e.to_string()),
    }
}

fn criterion_6() -> Outcome {
    let ds = match dataset("cora") {
        Ok(d) => d,
        Err(e) => return Outcome::Blocked(e),
    };
    let mut grid = order_sweep_grid(&ModelConfig::dfnet(), &[5], &[3]);
    grid.extend(order_sweep_grid(&ModelConfig::dfnet(), &[1], &[1]));
    grid.extend(order_sweep_grid(&ModelConfig::dfnet(), &[5], &[7]));
    match run_suite(&grid, &full_training(), &ds, 5) {
        Ok(e) => verdict(
            e[0].mean_accuracy >= e[1].mean_accuracy && e[0].mean_accuracy >= e[2].mean_accuracy,
            e.iter().map(|x| format!("{} {:.4}", x.label, x.mean_accuracy)).collect::<Vec<_>>().join(", "),
        ),
        Err(e) => Outcome::Fail(e.to_string()),
    }
}

fn criterion_7() -> Outcome {
    let mut details = Vec::new();
    let mut ok = true;
    for name in ["cora", "citeseer"] {
        let ds = match dataset(name) {
            Ok(d) => d,
            Err(e) => return Outcome::Blocked(e),
        };
        match run_suite(&ablation_grid(&ModelConfig::dfnet()), &full_training(), &ds, 5) {
            Ok(e) => {
                ok &= e[0].mean_accuracy >= e[1].mean_accuracy && e[0].mean_accuracy >= e[2].mean_accuracy;
                details.push(format!(
                    "{name}: {}",
                    e.iter().map(|x| format!("{} {:.4}", x.label, x.mean_accuracy)).collect::<Vec<_>>().join(", ")
                ));
            }
            Err(e) => return Outcome::Fail(e.to_string()),
        }
    }
    verdict(ok, details.join("; "))
}

fn criterion_8() -> Outcome {
    let ds = match dataset("cora") {
        Ok(d) => d,
        Err(e) => return Outcome::Blocked(e),
    };
    let plain = ModelConfig { dense: false, ..ModelConfig::dfnet() };
    let grid = vec![
        ("feedback-looped".to_string(), plain.clone()),
        ("chebyshev".to_string(), ModelConfig { filter: FilterKind::Chebyshev { k: 3 }, ..plain }),
    ];
    match run_suite(&grid, &full_training(), &ds, 5) {
        Ok(e) => verdict(
            e[0].mean_accuracy >= e[1].mean_accuracy,
            format!("feedback-looped {:.4}, chebyshev {:.4}", e[0].mean_accuracy, e[1].mean_accuracy),
        ),
        Err(e) => Outcome::Fail(e.to_string()),
    }
}

type Criterion = (usize, &'static str, fn() -> Outcome);

const CRITERIA: [Criterion; 8] = [
    (1, "oracle equivalence", criterion_1),
    (2, "stability constraint", criterion_2),
    (3, "gradient correctness", criterion_3),
    (4, "complexity conformance", criterion_4),
    (5, "cora end-to-end", criterion_5),
    (6, "polynomial-order trend", criterion_6),
    (7, "ablation direction", criterion_7),
    (8, "chebyshev baseline", criterion_8),
];

#[test]
fn acceptance_summary() {
    let mut failed = Vec::new();
    for (id, name, run) in CRITERIA {
        let start = Instant::now();
        let outcome = run();
        report(id, name, &outcome);
        say(format!("  ({:.1} s)", start.elapsed().as_secs_f64()));
        if matches!(outcome, Outcome::Fail(_)) {
            failed.push(id);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

fn require(id: usize) {
    let (_, name, run) = CRITERIA[id - 1];
    let outcome = run();
    report(id, name, &outcome);
    match outcome {
        Outcome::Pass(_) => {}
        Outcome::Fail(d) | Outcome::Blocked(d) => panic!("criterion {id}: {d}"),
    }
}

#[test]
#[ignore = "needs data/cora; tens of minutes"]
fn cora_end_to_end() {
    require(5);
}

#[test]
#[ignore = "needs data/cora"]
fn cora_order_trend() {
    require(6);
}

#[test]
#[ignore = "needs data/cora and data/citeseer"]
fn ablation_direction() {
    require(7);
}

#[test]
#[ignore = "needs data/cora"]
fn chebyshev_baseline() {
    require(8);
}
