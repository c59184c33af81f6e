//! Cost of one filter application against the edge count on fixed-degree
//! random graphs. Pass edge counts to override the default sizes.
//!
//!     cargo run --release --example bench_complexity -- 10000 100000 1000000

use graph_arma::alloc_track::CountingAlloc;
use graph_arma::bench::{bench_filtering, BenchOptions};
use graph_arma::design::{design_coefficients, DesiredResponse};

#[global_allocator]
static ALLOC: CountingAlloc = CountingAlloc;

fn main() -> graph_arma::Result<()> {
    let mut edges: Vec<usize> = std::env::args().skip(1).map(|a| a.parse().expect("edge count")).collect();
    if edges.is_empty() {
        edges = vec![10_000, 31_623, 100_000, 316_228];
    }
    let c = design_coefficients(&DesiredResponse::high_pass(0.5, 128, 2.0)?, 5, 3, 0.9)?;
    let report = bench_filtering(&edges, &c, &BenchOptions::default())?;
    println!("{:>9} {:>9} {:>8} {:>10} {:>12}", "n", "m", "matvecs", "seconds", "peak bytes");
    for p in &report.points {
        println!("{:9} {:9} {:8} {:10.5} {:12}", p.n, p.m, p.matvecs, p.seconds, p.peak_bytes.unwrap_or(p.estimated_bytes));
    }
    println!("log-log time slope {:.3}", report.time_slope);
    println!("memory within {:.3}x of a linear fit ({})", report.memory_fit_ratio, report.memory_source);
    Ok(())
}
