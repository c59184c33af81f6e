//! Filters a random signal on a grid graph with the recursion and checks
//! it against exact filtering in the Laplacian eigenbasis.
//!
//!     cargo run --release --example filter_signal

use graph_arma::data::{generate_synthetic, Family, SyntheticSpec};
use graph_arma::design::{design_coefficients, DesiredResponse};
use graph_arma::engine::{apply_feedback_looped, FeedbackOptions, PolynomialOperator};
use graph_arma::laplacian::{augmented_laplacian, LambdaMaxMode};
use graph_arma::seed::rng_for;
use graph_arma::spectral::{eigendecompose, exact_filter_block};
use ndarray::Array2;
use rand::Rng;

fn main() -> graph_arma::Result<()> {
    let g = generate_synthetic(&SyntheticSpec::new(Family::Grid, 400, 0))?.graph;
    let op = augmented_laplacian(&g, LambdaMaxMode::Exact);
    let c = design_coefficients(&DesiredResponse::high_pass(0.5, 128, 2.0)?, 5, 3, 0.9)?;

    let mut rng = rng_for(0, "signal");
    let x = Array2::from_shape_simple_fn((g.n(), 1), || rng.random::<f64>() - 0.5);

    op.reset_matvec_count();
    let opts = FeedbackOptions { t_max: 1000, tol: 1e-12, ..FeedbackOptions::default() };
    let run = apply_feedback_looped(&op, &c, x.view(), opts)?;
    println!(
        "{} iterations, {} sparse products (t*p + q = {}), last delta {:.2e}",
        run.iterations,
        op.matvec_count(),
        run.iterations * c.p() + c.q(),
        run.final_delta
    );
    for (t, w) in run.deltas_l2.windows(2).enumerate().take(8) {
        println!("  step {:2}: contraction {:.4}", t + 2, w[1] / w[0]);
    }

    // The feedback polynomial must contract on this graph's spectrum too.
    let dec = eigendecompose(&op)?;
    let fb = PolynomialOperator::feedback(&op, &c);
    let radius = dec.eigenvalues.iter().fold(0.0f64, |a, &l| a.max(fb.eval(l).abs()));
    let exact = exact_filter_block(&dec, |l| c.frequency_response(l).unwrap(), x.view())?;
    let err = (&run.signal - &exact).mapv(|v| v * v).sum().sqrt() / exact.mapv(|v| v * v).sum().sqrt();
    println!("spectral radius of P(L) {radius:.4}; relative error vs exact filtering {err:.2e}");
    Ok(())
}
