//! Polynomial-order sweep and the scaled-normalization / cut-off ablation,
//! on a small synthetic graph so it finishes in about a minute.
//!
//!     cargo run --release --example sweep_and_ablate

use graph_arma::data::{generate_synthetic, l1_normalize_rows, per_class_split, FeatureMode, Family, SyntheticSpec};
use graph_arma::model::ModelConfig;
use graph_arma::seed::rng_for;
use graph_arma::train::{ablation_grid, order_sweep_grid, run_suite, suite_csv, TrainConfig};

fn main() -> graph_arma::Result<()> {
    let spec = SyntheticSpec::new(Family::PlantedPartition { classes: 3, p_in: 0.06, p_out: 0.006 }, 240, 8)
        .with_features(FeatureMode::Topics { dim: 96, p_topic: 0.08, p_background: 0.03 });
    let mut ds = generate_synthetic(&spec)?;
    l1_normalize_rows(&mut ds.features);
    let split = per_class_split(&ds.labels, 3, 10, 60, 120, &mut rng_for(0, "split"));
    let ds = ds.with_split(split);

    let base = ModelConfig {
        layer_widths: vec![8, 16],
        dropout: 0.5,
        l2_coeff: 5e-4,
        ..ModelConfig::dfnet()
    };
    let tc = TrainConfig { epochs: 60, learning_rate: 0.01, ..TrainConfig::default() };

    let sweep = run_suite(&order_sweep_grid(&base, &[1, 3, 5], &[1, 3, 7]), &tc, &ds, 2)?;
    print!("{}", suite_csv(&sweep));
    let ablation = run_suite(&ablation_grid(&base), &tc, &ds, 2)?;
    print!("{}", suite_csv(&ablation));
    Ok(())
}
