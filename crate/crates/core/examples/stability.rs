//! The design only guarantees contraction on the [0, 2] grid. On the
//! shifted operator part of the spectrum is negative, where high-order
//! feedback polynomials can exceed 1. This prints the spectral radius of
//! P(L) per family and (p, q), and the strict check that catches it.
//!
//!     cargo run --release --example stability

use graph_arma::data::{generate_synthetic, Family, SyntheticSpec};
use graph_arma::design::{design_coefficients, DesiredResponse};
use graph_arma::engine::{apply_feedback_looped, FeedbackOptions, PolynomialOperator};
use graph_arma::laplacian::{augmented_laplacian, scaled_normalized_laplacian, LambdaMaxMode};
use graph_arma::spectral::eigendecompose;
use ndarray::Array2;

fn main() -> graph_arma::Result<()> {
    let families = [
        ("cycle", Family::Cycle),
        ("grid", Family::Grid),
        ("barbell", Family::Barbell),
        ("er", Family::ErdosRenyi { p_edge: 0.15 }),
    ];
    println!("{:>8} {:>6} {:>12} {:>12}", "graph", "(p,q)", "radius L^", "radius L~");
    for (name, fam) in families {
        let g = generate_synthetic(&SyntheticSpec::new(fam, 40, 1))?.graph;
        let hat = augmented_laplacian(&g, LambdaMaxMode::Exact);
        let tilde = scaled_normalized_laplacian(&g, LambdaMaxMode::Exact);
        for (p, q) in [(1, 1), (3, 2), (5, 3)] {
            let c = design_coefficients(&DesiredResponse::high_pass(0.5, 128, 2.0)?, p, q, 0.9)?;
            let radius = |op| -> graph_arma::Result<f64> {
                let dec = eigendecompose(op)?;
                let fb = PolynomialOperator::feedback(op, &c);
                Ok(dec.eigenvalues.iter().fold(0.0f64, |a, &l| a.max(fb.eval(l).abs())))
            };
            println!("{name:>8} {:>6} {:12.4} {:12.4}", format!("({p},{q})"), radius(&hat)?, radius(&tilde)?);
        }
    }

    let g = generate_synthetic(&SyntheticSpec::new(Family::Cycle, 8, 0))?.graph;
    let op = scaled_normalized_laplacian(&g, LambdaMaxMode::Exact);
    let c = design_coefficients(&DesiredResponse::high_pass(0.5, 128, 2.0)?, 5, 3, 0.9)?;
    let opts = FeedbackOptions { strict_stability: true, ..FeedbackOptions::default() };
    match apply_feedback_looped(&op, &c, Array2::ones((8, 1)).view(), opts) {
        Ok(run) => println!("cycle:8 converged in {} iterations", run.iterations),
        Err(e) => println!("cycle:8 with strict stability: {e}"),
    }
    Ok(())
}
