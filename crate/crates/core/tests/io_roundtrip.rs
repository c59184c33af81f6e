use std::fs;

use graph_arma::cli::run;
use graph_arma::data::{generate_synthetic, load_citation_dataset, write_dataset, FeatureMode, Family, LoadOptions, SyntheticSpec};
use graph_arma::model::{checkpoint_from_bytes, checkpoint_to_bytes, init_params, FilterKind, ModelConfig};
use graph_arma::signal::read_signal;
use serde_json::Value;

fn planted() -> graph_arma::data::Dataset {
    let spec = SyntheticSpec::new(
        Family::PlantedPartition {
            classes: 3,
            p_in: 0.2,
            p_out: 0.02,
        },
        60,
        4,
    )
    .with_features(FeatureMode::Topics {
        dim: 30,
        p_topic: 0.3,
        p_background: 0.05,
    });
    generate_synthetic(&spec).unwrap()
}

#[test]
fn dataset_round_trips_in_both_feature_formats() {
    let ds = planted();
    for binary in [false, true] {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&ds, dir.path(), binary).unwrap();
        let back = load_citation_dataset(dir.path(), LoadOptions { feature_norm: false }).unwrap();
        assert_eq!(back.graph, ds.graph);
        assert_eq!(back.features, ds.features);
        assert_eq!(back.labels, ds.labels);
        assert_eq!((back.train, back.val, back.test), (ds.train.clone(), ds.val.clone(), ds.test.clone()));
        assert_eq!(back.class_count, ds.class_count);
    }
}

#[test]
fn overlapping_split_files_are_rejected() {
    let ds = planted();
    let dir = tempfile::tempdir().unwrap();
    write_dataset(&ds, dir.path(), false).unwrap();
    let test_ids = fs::read_to_string(dir.path().join("splits/test.ids")).unwrap();
    let first = test_ids.lines().next().unwrap().to_string();
    let mut train = fs::read_to_string(dir.path().join("splits/train.ids")).unwrap();
    train.push_str(&format!("{first}\n"));
    fs::write(dir.path().join("splits/train.ids"), train).unwrap();
    assert!(load_citation_dataset(dir.path(), LoadOptions::default()).is_err());
}

#[test]
fn checkpoint_round_trips() {
    for filter in [FilterKind::FeedbackLooped, FilterKind::Chebyshev { k: 3 }] {
        let cfg = ModelConfig {
            layer_widths: vec![3, 4],
            filter,
            ..ModelConfig::dfnet()
        };
        let params = init_params(&cfg, 5, 3, 1);
        let bytes = checkpoint_to_bytes(&cfg, &params).unwrap();
        assert_eq!(&bytes[..4], b"DFCK");
        let (cfg2, params2) = checkpoint_from_bytes(&bytes).unwrap();
        assert_eq!(cfg2, cfg);
        assert_eq!(params2, params);
        assert!(checkpoint_from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }
}

fn manifest(dir: &std::path::Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn cli_design_apply_verify() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("design");
    assert_eq!(run(["graph-arma", "design", "--p", "3", "--q", "2", "--out", d.to_str().unwrap()]), 0);
    let m = manifest(&d);
    for key in ["command", "argv", "seed", "version", "git", "config"] {
        assert!(m.get(key).is_some(), "manifest lacks {key}");
    }

    let a = tmp.path().join("apply");
    let coeffs = d.join("coefficients.txt");
    let code = run([
        "graph-arma", "apply", "--graph", "er:40:0.2", "--laplacian", "augmented",
        "--coefficients", coeffs.to_str().unwrap(), "--out", a.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    assert_eq!(read_signal(&a.join("filtered.txt")).unwrap().dim(), (40, 1));

    let v = tmp.path().join("verify");
    let code = run(["graph-arma", "verify", "--graph", "er:40:0.2", "--laplacian", "augmented", "--out", v.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert_eq!(manifest(&v)["config"]["verdict"], "pass");

    // (5, 3) is unstable on the cycle's shifted spectrum; that must surface
    // as a runtime failure, not a pass.
    let code = run(["graph-arma", "verify", "--graph", "cycle:8", "--out", v.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert_eq!(manifest(&v)["config"]["verdict"], "unstable");
}

#[test]
fn cli_rejects_bad_input_before_writing() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("never");
    let o = out.to_str().unwrap();
    assert_eq!(run(["graph-arma", "apply", "--graph", "er:40", "--out", o]), 1);
    assert_eq!(run(["graph-arma", "verify", "--graph", "cycle:8", "--tol=-1", "--out", o]), 1);
    assert_eq!(run(["graph-arma", "bench", "--edges", "1000", "--out", o]), 1);
    let cfg = tmp.path().join("bad.cfg");
    fs::write(&cfg, "[model]\nwidth = 3\n").unwrap();
    assert_eq!(
        run(["graph-arma", "train", "--dataset", "synthetic:planted:60:3:0.2:0.02", "--config", cfg.to_str().unwrap(), "--out", o]),
        1
    );
    assert_eq!(run(["graph-arma", "apply", "--graph", "/nonexistent/edges.tsv", "--out", o]), 1);
    assert!(!out.exists());
}

#[test]
fn cli_train_is_replayable_and_exports_embeddings() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("small.cfg");
    fs::write(&cfg, "[model]\nlayer_widths = 4, 4\ndropout = 0.2\n[train]\nepochs = 4\nruns = 2\n").unwrap();
    let out = tmp.path().join("train");
    let argv = [
        "graph-arma", "train", "--dataset", "synthetic:planted:60:3:0.2:0.02", "--config", cfg.to_str().unwrap(),
        "--seed", "7", "--out", out.to_str().unwrap(),
    ];
    assert_eq!(run(argv), 0);
    let summary = fs::read_to_string(out.join("summary.json")).unwrap();
    let metrics = fs::read_to_string(out.join("metrics.jsonl")).unwrap();
    assert_eq!(metrics.lines().count(), 2 * 4 + 2);

    let m = manifest(&out);
    assert_eq!(m["config"]["model"]["layer_widths"], serde_json::json!([4, 4]));
    let replay: Vec<String> = m["argv"].as_array().unwrap().iter().map(|v| v.as_str().unwrap().to_string()).collect();
    assert_eq!(run(replay), 0);
    assert_eq!(fs::read_to_string(out.join("summary.json")).unwrap(), summary);

    let emb = tmp.path().join("emb");
    let code = run([
        "graph-arma", "export-embeddings", "--checkpoint", out.join("model.ckpt").to_str().unwrap(),
        "--dataset", "synthetic:planted:60:3:0.2:0.02", "--seed", "7", "--layer", "1", "--out", emb.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    assert_eq!(read_signal(&emb.join("embeddings-layer1.txt")).unwrap().dim(), (60, 4));
}
