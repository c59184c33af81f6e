//! Trains the densely connected network on a planted-partition graph with
//! bag-of-words style features: 20 labels per class, the rest held out.
//!
//!     cargo run --release --example train_synthetic

use graph_arma::data::{generate_synthetic, l1_normalize_rows, per_class_split, FeatureMode, Family, SyntheticSpec};
use graph_arma::model::ModelConfig;
use graph_arma::seed::rng_for;
use graph_arma::train::{mean_std, train_run, TrainConfig};

fn main() -> graph_arma::Result<()> {
    let classes = 4;
    let spec = SyntheticSpec::new(Family::PlantedPartition { classes, p_in: 0.05, p_out: 0.004 }, 400, 3)
        .with_features(FeatureMode::Topics { dim: 128, p_topic: 0.08, p_background: 0.02 });
    let mut ds = generate_synthetic(&spec)?;
    l1_normalize_rows(&mut ds.features);
    let split = per_class_split(&ds.labels, classes, 20, 100, 200, &mut rng_for(0, "split"));
    let ds = ds.with_split(split);
    println!("{} vertices, {} edges, {} features", ds.n(), ds.graph.m(), ds.feature_dim());

    // Lighter regularization than the citation defaults; see README.
    let cfg = ModelConfig {
        layer_widths: vec![8, 16, 32],
        dropout: 0.5,
        l2_coeff: 5e-4,
        ..ModelConfig::dfnet()
    };
    let tc = TrainConfig { epochs: 100, learning_rate: 0.01, runs: 3, ..TrainConfig::default() };
    let mut accs = Vec::new();
    for run in 0..tc.runs {
        let trained = train_run(&cfg, &tc, &ds, run)?;
        let m = &trained.metrics;
        let last = m.epochs.last().expect("at least one epoch");
        println!(
            "run {run}: train loss {:.3}, val {:.3}, test {:?} ({:.1} s)",
            last.train_loss, last.val_accuracy, m.test_accuracy, m.total_seconds
        );
        accs.extend(m.test_accuracy);
    }
    let (mean, std) = mean_std(&accs);
    println!("test accuracy {mean:.3} +- {std:.3}");
    Ok(())
}
