//! Chebyshev polynomial filtering next to the feedback-looped filter:
//! same signal, same graph, responses compared per eigenvalue.
//!
//!     cargo run --release --example chebyshev

use graph_arma::data::{generate_synthetic, Family, SyntheticSpec};
use graph_arma::design::{design_coefficients, DesiredResponse};
use graph_arma::engine::{apply_chebyshev, apply_feedback_looped, ChebyshevCoefficients, FeedbackOptions};
use graph_arma::laplacian::{augmented_laplacian, chebyshev_rescaled_laplacian, normalized_laplacian, LambdaMaxMode};
use graph_arma::spectral::{eigendecompose, exact_filter_block};
use ndarray::Array2;

fn main() -> graph_arma::Result<()> {
    let g = generate_synthetic(&SyntheticSpec::new(Family::ErdosRenyi { p_edge: 0.1 }, 60, 4))?.graph;
    let x = Array2::from_shape_fn((g.n(), 1), |(i, _)| if i % 3 == 0 { 1.0 } else { -0.5 });

    // Chebyshev on 2L/2 - I = L - I: a degree-3 high-pass, T0 - T1 + T2 ...
    let cheb_op = chebyshev_rescaled_laplacian(&g, 2.0)?;
    let theta = ChebyshevCoefficients::new(vec![0.5, 0.6, 0.0, -0.1])?;
    let y_cheb = apply_chebyshev(&cheb_op, &theta, x.view())?;
    let dec = eigendecompose(&normalized_laplacian(&g))?;
    let exact = exact_filter_block(&dec, |l| theta.response(l - 1.0), x.view())?;
    let err = (&y_cheb - &exact).mapv(|v| v * v).sum().sqrt();
    println!("chebyshev k = {}: {} operator products, |error vs exact| = {err:.2e}", theta.k(), cheb_op.matvec_count());

    let op = augmented_laplacian(&g, LambdaMaxMode::Exact);
    let c = design_coefficients(&DesiredResponse::high_pass(0.5, 128, 2.0)?, 5, 3, 0.9)?;
    let run = apply_feedback_looped(&op, &c, x.view(), FeedbackOptions::default())?;
    println!("feedback-looped (5, 3): {} iterations, {} operator products", run.iterations, op.matvec_count());

    println!("{:>8} {:>12} {:>12}", "lambda", "chebyshev", "rational");
    for l in [0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0] {
        println!("{l:8.2} {:12.4} {:12.4}", theta.response(l - 1.0), c.frequency_response(l)?);
    }
    Ok(())
}
