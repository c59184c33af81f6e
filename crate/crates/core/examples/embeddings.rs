//! Trains briefly, saves a checkpoint, reloads it and exports the hidden
//! representation of every layer.
//!
//!     cargo run --release --example embeddings

use graph_arma::data::{generate_synthetic, FeatureMode, Family, SyntheticSpec};
use graph_arma::model::{load_checkpoint, save_checkpoint, ModelConfig};
use graph_arma::signal::write_signal;
use graph_arma::train::{export_embeddings, train_run, TrainConfig};

fn main() -> graph_arma::Result<()> {
    let spec = SyntheticSpec::new(Family::PlantedPartition { classes: 3, p_in: 0.2, p_out: 0.02 }, 90, 1)
        .with_features(FeatureMode::Topics { dim: 30, p_topic: 0.3, p_background: 0.05 });
    let ds = generate_synthetic(&spec)?;
    let cfg = ModelConfig { layer_widths: vec![4, 8], dropout: 0.2, l2_coeff: 5e-4, ..ModelConfig::dfnet() };
    let trained = train_run(&cfg, &TrainConfig { epochs: 50, learning_rate: 0.01, runs: 1, ..TrainConfig::default() }, &ds, 0)?;
    println!("test accuracy {:?}", trained.metrics.test_accuracy);

    let dir = std::env::temp_dir().join("graph-arma-embeddings");
    std::fs::create_dir_all(&dir)?;
    let ckpt = dir.join("model.ckpt");
    save_checkpoint(&ckpt, &trained.config, &trained.params)?;
    let (cfg, params) = load_checkpoint(&ckpt)?;
    for layer in 0..cfg.layer_widths.len() {
        let emb = export_embeddings(&cfg, &params, &trained.bank, ds.features.view(), layer)?;
        let path = dir.join(format!("embeddings-layer{layer}.txt"));
        write_signal(&emb, &path)?;
        println!("layer {layer}: {:?} -> {}", emb.dim(), path.display());
    }
    Ok(())
}
