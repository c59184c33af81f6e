//! Full-graph semi-supervised training and multi-run suites.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::Serialize;

use crate::data::{fractional_split, Dataset};
use crate::error::{Error, Result};
use crate::model::{
    accuracy, apply_unit_norm_constraint, backward, cross_entropy, forward, init_params, FilterBank, ModelConfig,
    ModelParams, Mode,
};
use crate::optim::{Adam, AdamConfig};
use crate::seed::{derive_seed, rng_for};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum SplitMode {
    /// The dataset's own masks.
    Standard,
    /// A fresh stratified split per run with this training fraction.
    Fractional { train_fraction: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub runs: usize,
    pub split: SplitMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        TrainConfig {
            epochs: 200,
            learning_rate: adam.learning_rate,
            beta1: adam.beta1,
            beta2: adam.beta2,
            epsilon: adam.epsilon,
            runs: 10,
            split: SplitMode::Standard,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(format!("learning rate must be >= 0, got {}", self.learning_rate)));
        }
        if self.runs == 0 {
            return Err(Error::invalid("runs must be at least 1"));
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Training-mode (dropout on) loss including the kernel penalty.
    pub train_loss: f64,
    pub train_accuracy: f64,
    /// Evaluation-mode cross-entropy on the validation split.
    pub val_loss: f64,
    pub val_accuracy: f64,
    pub seconds: f64,
    /// Operator applications during this epoch.
    pub matvecs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMetrics {
    pub run: usize,
    pub init_seed: u64,
    pub dropout_seed: u64,
    pub split_seed: Option<u64>,
    pub epochs: Vec<EpochMetrics>,
    /// `None` when the run failed.
    pub test_accuracy: Option<f64>,
    pub failure: Option<String>,
    pub total_seconds: f64,
}

/// A finished run with its parameters and the bank it was trained against.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub config: ModelConfig,
    pub params: ModelParams,
    pub bank: FilterBank,
    pub metrics: RunMetrics,
    /// The dataset split the run used.
    pub train: Vec<bool>,
    pub val: Vec<bool>,
    pub test: Vec<bool>,
}

/// Trains run number `run`. Seeds derive from `model.seed` and the run
/// index. A non-finite loss or activation aborts the run and is reported
/// in `metrics.failure`; invalid inputs are errors.
pub fn train_run(model: &ModelConfig, tc: &TrainConfig, ds: &Dataset, run: usize) -> Result<TrainedModel> {
    model.validate()?;
    tc.validate()?;
    ds.validate()?;
    let bank = FilterBank::for_graph(&ds.graph, model)?;
    train_with_bank(model, tc, ds, run, bank)
}

/// As [`train_run`], with a prebuilt filter bank.
pub fn train_with_bank(model: &ModelConfig, tc: &TrainConfig, ds: &Dataset, run: usize, bank: FilterBank) -> Result<TrainedModel> {
    let (train, val, test, split_seed) = match tc.split {
        SplitMode::Standard => (ds.train.clone(), ds.val.clone(), ds.test.clone(), None),
        SplitMode::Fractional { train_fraction } => {
            let name = format!("split/run{run}");
            let s = fractional_split(&ds.labels, ds.class_count, train_fraction, &mut rng_for(model.seed, &name))?;
            (s.train, s.val, s.test, Some(derive_seed(model.seed, &name)))
        }
    };
    if !train.iter().any(|b| *b) {
        return Err(Error::invalid("training split is empty"));
    }
    let init_seed = derive_seed(model.seed, &format!("init/run{run}"));
    let dropout_name = format!("dropout/run{run}");
    let dropout_seed = derive_seed(model.seed, &dropout_name);
    let mut rng = rng_for(model.seed, &dropout_name);

    let x = ds.features.view();
    let mut params = init_params(model, ds.feature_dim(), ds.class_count, init_seed);
    if model.unit_norm {
        apply_unit_norm_constraint(&mut params);
    }
    let mut adam = Adam::new(tc.adam(), &params);
    let mut metrics = RunMetrics {
        run,
        init_seed,
        dropout_seed,
        split_seed,
        epochs: Vec::with_capacity(tc.epochs),
        test_accuracy: None,
        failure: None,
        total_seconds: 0.0,
    };
    let started = Instant::now();
    let has_val = val.iter().any(|b| *b);

    let outcome: Result<()> = (|| {
        for epoch in 0..tc.epochs {
            let t0 = Instant::now();
            let mv0 = bank.operator().matvec_count();
            let trace = forward(model, &params, &bank, x, Mode::Train(&mut rng))?;
            let train_loss = cross_entropy(&trace.probabilities, &ds.labels, &train)? + model.l2_coeff * params.kernel_sq_norm();
            if !train_loss.is_finite() {
                return Err(Error::Diverged { iteration: epoch });
            }
            let train_accuracy = accuracy(&trace.probabilities, &ds.labels, &train);
            let grads = backward(model, &params, &bank, x, &trace, &ds.labels, &train)?;
            drop(trace);
            adam.step(&mut params, &grads);
            if model.unit_norm {
                apply_unit_norm_constraint(&mut params);
            }
            let (val_loss, val_accuracy) = if has_val {
                let eval = forward(model, &params, &bank, x, Mode::Eval)?;
                (
                    cross_entropy(&eval.probabilities, &ds.labels, &val)?,
                    accuracy(&eval.probabilities, &ds.labels, &val),
                )
            } else {
                (f64::NAN, f64::NAN)
            };
            metrics.epochs.push(EpochMetrics {
                epoch,
                train_loss,
                train_accuracy,
                val_loss,
                val_accuracy,
                seconds: t0.elapsed().as_secs_f64(),
                matvecs: bank.operator().matvec_count() - mv0,
            });
        }
        Ok(())
    })();

    match outcome {
        Ok(()) => {
            let eval = forward(model, &params, &bank, x, Mode::Eval)?;
            metrics.test_accuracy = Some(accuracy(&eval.probabilities, &ds.labels, &test));
        }
        Err(e @ (Error::Diverged { .. } | Error::NonFiniteActivation { .. })) => {
            metrics.failure = Some(e.to_string());
        }
        Err(e) => return Err(e),
    }
    metrics.total_seconds = started.elapsed().as_secs_f64();
    Ok(TrainedModel {
        config: model.clone(),
        params,
        bank,
        metrics,
        train,
        val,
        test,
    })
}

/// `tc.runs` independent runs of one configuration.
pub fn train(model: &ModelConfig, tc: &TrainConfig, ds: &Dataset) -> Result<Vec<RunMetrics>> {
    let runs: Result<Vec<_>> = (0..tc.runs)
        .into_par_iter()
        .map(|r| train_run(model, tc, ds, r).map(|t| t.metrics))
        .collect();
    runs
}

/// Mean and sample standard deviation; a single sample has deviation 0.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteEntry {
    pub label: String,
    pub config: ModelConfig,
    pub runs: Vec<RunMetrics>,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub failures: usize,
}

impl SuiteEntry {
    fn from_runs(label: String, config: ModelConfig, runs: Vec<RunMetrics>) -> Self {
        let accs: Vec<f64> = runs.iter().filter_map(|r| r.test_accuracy).collect();
        let (mean_accuracy, std_accuracy) = mean_std(&accs);
        SuiteEntry {
            failures: runs.len() - accs.len(),
            label,
            config,
            runs,
            mean_accuracy,
            std_accuracy,
        }
    }
}

/// Runs every labelled configuration `runs` times. All runs execute in
/// parallel; failed runs are counted and left out of the aggregates.
pub fn run_suite(grid: &[(String, ModelConfig)], tc: &TrainConfig, ds: &Dataset, runs: usize) -> Result<Vec<SuiteEntry>> {
    if grid.is_empty() {
        return Err(Error::invalid("suite grid is empty"));
    }
    let tc = TrainConfig { runs, ..*tc };
    tc.validate()?;
    let jobs: Vec<(usize, usize)> = (0..grid.len()).flat_map(|c| (0..runs).map(move |r| (c, r))).collect();
    let results: Result<Vec<RunMetrics>> = jobs
        .par_iter()
        .map(|&(c, r)| train_run(&grid[c].1, &tc, ds, r).map(|t| t.metrics))
        .collect();
    let mut results = results?.into_iter();
    Ok(grid
        .iter()
        .map(|(label, cfg)| {
            let runs: Vec<RunMetrics> = results.by_ref().take(runs).collect();
            SuiteEntry::from_runs(label.clone(), cfg.clone(), runs)
        })
        .collect())
}

/// The p/q grid of the polynomial-order sweep.
pub fn order_sweep_grid(base: &ModelConfig, ps: &[usize], qs: &[usize]) -> Vec<(String, ModelConfig)> {
    let mut grid = Vec::new();
    for &p in ps {
        for &q in qs {
            grid.push((format!("p={p},q={q}"), ModelConfig { p, q, ..base.clone() }));
        }
    }
    grid
}

/// Both techniques, cut-off only (filtering on `L^`), and scaled
/// normalization only (linear target).
pub fn ablation_grid(base: &ModelConfig) -> Vec<(String, ModelConfig)> {
    vec![
        (
            "both".into(),
            ModelConfig {
                scaled_normalization: true,
                cut_off: true,
                ..base.clone()
            },
        ),
        (
            "cut-off only".into(),
            ModelConfig {
                scaled_normalization: false,
                cut_off: true,
                ..base.clone()
            },
        ),
        (
            "scaled-normalization only".into(),
            ModelConfig {
                scaled_normalization: true,
                cut_off: false,
                ..base.clone()
            },
        ),
    ]
}

/// Evaluation-mode activations of hidden layer `layer`.
pub fn export_embeddings(config: &ModelConfig, params: &ModelParams, bank: &FilterBank, x: ArrayView2<f64>, layer: usize) -> Result<Array2<f64>> {
    if layer >= config.layer_widths.len() {
        return Err(Error::invalid(format!(
            "layer index {layer} out of range for {} layers",
            config.layer_widths.len()
        )));
    }
    let mut trace = forward(config, params, bank, x, Mode::Eval)?;
    Ok(trace.outputs.swap_remove(layer))
}

#[derive(Serialize)]
struct EpochRecord<'a> {
    kind: &'static str,
    label: &'a str,
    run: usize,
    #[serde(flatten)]
    epoch: &'a EpochMetrics,
}

#[derive(Serialize)]
struct SummaryRecord<'a> {
    kind: &'static str,
    label: &'a str,
    run: usize,
    init_seed: u64,
    dropout_seed: u64,
    split_seed: Option<u64>,
    test_accuracy: Option<f64>,
    failure: &'a Option<String>,
    total_seconds: f64,
}

/// One JSON object per epoch and one summary object per run.
pub fn write_metrics_jsonl(path: &Path, label: &str, runs: &[RunMetrics]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    let json = |e: serde_json::Error| Error::Format(e.to_string());
    for r in runs {
        for e in &r.epochs {
            let rec = EpochRecord {
                kind: "epoch",
                label,
                run: r.run,
                epoch: e,
            };
            writeln!(w, "{}", serde_json::to_string(&rec).map_err(json)?)?;
        }
        let rec = SummaryRecord {
            kind: "summary",
            label,
            run: r.run,
            init_seed: r.init_seed,
            dropout_seed: r.dropout_seed,
            split_seed: r.split_seed,
            test_accuracy: r.test_accuracy,
            failure: &r.failure,
            total_seconds: r.total_seconds,
        };
        writeln!(w, "{}", serde_json::to_string(&rec).map_err(json)?)?;
    }
    w.flush()?;
    Ok(())
}

pub fn suite_csv(entries: &[SuiteEntry]) -> String {
    let mut out = String::from("label,p,q,gamma,eta,runs,failures,mean_accuracy,std_accuracy\n");
    for e in entries {
        let c = &e.config;
        let _ = writeln!(
            out,
            "\"{}\",{},{},{},{},{},{},{:.6},{:.6}",
            e.label.replace('"', "\"\""),
            c.p,
            c.q,
            c.gamma,
            c.eta,
            e.runs.len(),
            e.failures,
            e.mean_accuracy,
            e.std_accuracy
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_sample_has_zero_std() {
        assert_eq!(mean_std(&[0.7]), (0.7, 0.0));
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn sweep_contains_paper_cell() {
        let g = order_sweep_grid(&ModelConfig::dfnet(), &[1, 3, 5, 7, 9], &[1, 3, 5, 7, 9]);
        assert_eq!(g.len(), 25);
        assert!(g.iter().any(|(_, c)| c.p == 5 && c.q == 3));
    }

    #[test]
    fn ablation_without_scaling_uses_augmented_operator() {
        let grid = ablation_grid(&ModelConfig::dfnet());
        let g = crate::graph::Graph::from_edges(3, &[(0, 1, 1.0), (1, 2, 1.0)]).unwrap();
        let bank = FilterBank::for_graph(&g, &grid[1].1).unwrap();
        assert_eq!(bank.operator().kind(), crate::laplacian::LaplacianKind::Augmented);
    }
}
