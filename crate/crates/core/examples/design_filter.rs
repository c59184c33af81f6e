//! Designs a feedback-looped high-pass filter and prints how well its
//! rational response tracks the ideal target on the grid.
//!
//!     cargo run --release --example design_filter -- 5 3 0.9 0.5

use graph_arma::design::{design_coefficients, DesiredResponse};

fn main() -> graph_arma::Result<()> {
    let args: Vec<f64> = std::env::args().skip(1).map(|a| a.parse().expect("numeric argument")).collect();
    let p = args.first().copied().unwrap_or(5.0) as usize;
    let q = args.get(1).copied().unwrap_or(3.0) as usize;
    let gamma = args.get(2).copied().unwrap_or(0.9);
    let eta = args.get(3).copied().unwrap_or(0.5);

    let resp = DesiredResponse::high_pass(eta, 128, 2.0)?;
    let c = design_coefficients(&resp, p, q, gamma)?;
    println!("psi = {:?}", c.psi);
    println!("phi = {:?}", c.phi);
    println!("linearized residual {:.4}, grid bound |alpha psi|_inf = {:.6} <= {gamma}", c.residual, c.grid_feedback_bound());

    println!("{:>8} {:>8} {:>10}", "lambda", "target", "h(lambda)");
    for i in (0..resp.grid.len()).step_by(8) {
        let l = resp.grid[i];
        println!("{l:8.4} {:8.1} {:10.4}", resp.target[i], c.frequency_response(l)?);
    }
    print!("{}", c.to_text());
    Ok(())
}
