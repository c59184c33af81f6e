//! Writes a synthetic dataset in the on-disk citation layout (edge list,
//! features, labels, split id files), loads it back and prints a summary.
//! The same loader reads converted Cora / Citeseer directories.
//!
//!     cargo run --release --example dataset_io [-- path/to/dataset]

use std::path::PathBuf;

use graph_arma::data::{generate_synthetic, load_citation_dataset, write_dataset, FeatureMode, Family, LoadOptions, SyntheticSpec};

fn main() -> graph_arma::Result<()> {
    let dir = match std::env::args().nth(1) {
        Some(p) => PathBuf::from(p),
        None => {
            let spec = SyntheticSpec::new(Family::PlantedPartition { classes: 3, p_in: 0.1, p_out: 0.01 }, 150, 2)
                .with_features(FeatureMode::Topics { dim: 40, p_topic: 0.2, p_background: 0.02 });
            let dir = std::env::temp_dir().join("graph-arma-dataset");
            write_dataset(&generate_synthetic(&spec)?, &dir, false)?;
            println!("wrote {}", dir.display());
            dir
        }
    };
    let ds = load_citation_dataset(&dir, LoadOptions::default())?;
    let count = |m: &[bool]| m.iter().filter(|b| **b).count();
    println!(
        "{} vertices, {} edges, {} features, {} classes; train/val/test = {}/{}/{}",
        ds.n(),
        ds.graph.m(),
        ds.feature_dim(),
        ds.class_count,
        count(&ds.train),
        count(&ds.val),
        count(&ds.test)
    );
    Ok(())
}
