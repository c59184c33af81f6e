//! The `graph-arma` command line.
//!
//! Exit codes: 0 on success, 1 when flags, config or input files are
//! invalid, 2 when a computation fails (divergence, instability, a failed
//! verification). Every command writes its outputs and a `manifest.json`
//! under `--out`.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command as Process;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::Array2;
use rand::Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::bench::{bench_filtering, BenchOperator, BenchOptions};
use crate::config::{apply_model_section, apply_train_section, ConfigFile};
use crate::data::{generate_synthetic, l1_normalize_rows, load_citation_dataset, Dataset, FeatureMode, Family, LoadOptions, SyntheticSpec};
use crate::design::{design_coefficients, DesiredResponse, FilterCoefficients, DEFAULT_GRID_MAX};
use crate::engine::{apply_feedback_looped, FeedbackOptions, PolynomialOperator};
use crate::error::{Error, Result};
use crate::graph::{load_graph, DuplicatePolicy, Graph};
use crate::laplacian::{augmented_laplacian, scaled_normalized_laplacian, LambdaMaxMode, LaplacianOperator};
use crate::model::{load_checkpoint, save_checkpoint, FilterBank, ModelConfig};
use crate::seed::rng_for;
use crate::signal::{read_signal, write_signal};
use crate::spectral::{eigendecompose, exact_filter_block};
use crate::train::{ablation_grid, export_embeddings, mean_std, order_sweep_grid, run_suite, suite_csv, train_run, write_metrics_jsonl, SuiteEntry, TrainConfig};

#[derive(Parser, Debug)]
#[command(name = "graph-arma", version, about = "Feedback-looped spectral graph filters and graph CNNs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Root seed; every subsystem derives its own stream from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Run directory for outputs.
    #[arg(long)]
    out: Option<PathBuf>,
    /// `key = value` config file; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct DesignFlags {
    #[arg(long, default_value_t = 5)]
    p: usize,
    #[arg(long, default_value_t = 3)]
    q: usize,
    #[arg(long, default_value_t = 0.9)]
    gamma: f64,
    #[arg(long, default_value_t = 0.5)]
    eta: f64,
    #[arg(long, default_value_t = 128)]
    n_grid: usize,
}

#[derive(Args, Debug, Clone)]
struct EngineFlags {
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 50)]
    t_max: usize,
    /// Refuse to run when the feedback operator is not a contraction on
    /// this graph.
    #[arg(long)]
    strict_stability: bool,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum LaplacianChoice {
    /// `L^ - lambda_max / 2`.
    Scaled,
    /// `L^`, the Laplacian of `A + I`.
    Augmented,
}

/// Model overrides shared by the training commands.
#[derive(Args, Debug, Clone)]
struct TrainFlags {
    /// Dataset directory, or `synthetic:<graph>` (see `--graph`).
    #[arg(long)]
    dataset: String,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    q: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    /// Keep raw features instead of row-l1-normalizing them.
    #[arg(long)]
    no_feature_norm: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Design stable filter coefficients.
    Design {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        design: DesignFlags,
    },
    /// Filter a signal on a graph with the feedback-looped recursion.
    Apply {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        design: DesignFlags,
        #[command(flatten)]
        engine: EngineFlags,
        /// Edge-list file or `family:args` (cycle:8, path:8, grid:16,
        /// barbell:20, er:50:0.1, planted:700:7:0.02:0.001).
        #[arg(long)]
        graph: String,
        /// Coefficients file; designed from the flags when absent.
        #[arg(long)]
        coefficients: Option<PathBuf>,
        /// Signal file; a seeded random column when absent.
        #[arg(long)]
        signal: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = LaplacianChoice::Scaled)]
        laplacian: LaplacianChoice,
    },
    /// Compare the recursion against exact spectral filtering.
    Verify {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        design: DesignFlags,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long, default_value_t = 1000)]
        t_max: usize,
        #[arg(long)]
        graph: String,
        #[arg(long, value_enum, default_value_t = LaplacianChoice::Scaled)]
        laplacian: LaplacianChoice,
    },
    /// Time filtering on Erdős–Rényi graphs of growing size.
    Bench {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        design: DesignFlags,
        /// Target edge counts.
        #[arg(long, value_delimiter = ',', default_value = "10000,31623,100000,316228,1000000")]
        edges: Vec<usize>,
        #[arg(long, default_value_t = 10.0)]
        degree: f64,
        #[arg(long, default_value_t = 20)]
        iterations: usize,
        #[arg(long, value_enum, default_value_t = LaplacianChoice::Augmented)]
        laplacian: LaplacianChoice,
    },
    /// Train the spectral CNN and report mean test accuracy.
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        train: TrainFlags,
    },
    /// Sweep the polynomial orders p and q.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        train: TrainFlags,
        #[arg(long, value_delimiter = ',', default_value = "1,3,5,7,9")]
        ps: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "1,3,5,7,9")]
        qs: Vec<usize>,
    },
    /// Compare scaled normalization and the cut-off design, alone and together.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        train: TrainFlags,
    },
    /// Write hidden-layer activations of a trained model.
    ExportEmbeddings {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: String,
        /// Zero-based spectral layer index.
        #[arg(long)]
        layer: usize,
        #[arg(long)]
        no_feature_norm: bool,
    },
}

/// Parses `family:args` graph specs. Returns `None` for plain paths.
pub fn parse_graph_spec(spec: &str) -> Result<Option<Family>> {
    let mut parts = spec.split(':');
    let head = parts.next().unwrap_or_default();
    let rest: Vec<&str> = parts.collect();
    let num = |i: usize| -> Result<f64> {
        rest.get(i)
            .ok_or_else(|| Error::invalid(format!("graph spec `{spec}` is missing field {}", i + 1)))?
            .parse::<f64>()
            .map_err(|_| Error::invalid(format!("graph spec `{spec}`: bad number in field {}", i + 1)))
    };
    let family = match head {
        "cycle" => Family::Cycle,
        "path" => Family::Path,
        "grid" => Family::Grid,
        "barbell" => Family::Barbell,
        "er" => Family::ErdosRenyi { p_edge: num(1)? },
        "planted" => Family::PlantedPartition {
            classes: num(1)? as usize,
            p_in: num(2)?,
            p_out: num(3)?,
        },
        _ if rest.is_empty() => return Ok(None),
        _ => return Err(Error::invalid(format!("unknown graph family `{head}`"))),
    };
    let expected = match family {
        Family::ErdosRenyi { .. } => 2,
        Family::PlantedPartition { .. } => 4,
        _ => 1,
    };
    if rest.len() != expected {
        return Err(Error::invalid(format!("graph spec `{spec}` expects {expected} field(s) after the family")));
    }
    Ok(Some(family))
}

fn synthetic_spec(spec: &str, seed: u64) -> Result<Option<SyntheticSpec>> {
    let Some(family) = parse_graph_spec(spec)? else {
        return Ok(None);
    };
    let n = spec.split(':').nth(1).unwrap_or_default();
    let n: usize = n
        .parse()
        .map_err(|_| Error::invalid(format!("graph spec `{spec}`: bad vertex count `{n}`")))?;
    if n < 2 {
        return Err(Error::invalid("synthetic graphs need at least 2 vertices"));
    }
    Ok(Some(SyntheticSpec::new(family, n, seed)))
}

fn resolve_graph(spec: &str, seed: u64) -> Result<Graph> {
    match synthetic_spec(spec, seed)? {
        Some(s) => Ok(generate_synthetic(&s)?.graph),
        None => load_graph(Path::new(spec), None, DuplicatePolicy::Reject),
    }
}

fn resolve_dataset(spec: &str, seed: u64, feature_norm: bool) -> Result<Dataset> {
    if let Some(rest) = spec.strip_prefix("synthetic:") {
        let mut s = synthetic_spec(rest, seed)?
            .ok_or_else(|| Error::invalid(format!("`{rest}` is not a synthetic graph spec")))?;
        let classes = match s.family {
            Family::PlantedPartition { classes, .. } => classes,
            Family::Grid => 4,
            _ => 2,
        };
        s.features = FeatureMode::Topics {
            dim: 32 * classes,
            p_topic: 0.1,
            p_background: 0.02,
        };
        let mut ds = generate_synthetic(&s)?;
        if feature_norm {
            l1_normalize_rows(&mut ds.features);
        }
        return Ok(ds);
    }
    load_citation_dataset(Path::new(spec), LoadOptions { feature_norm })
}

fn validate_design(d: &DesignFlags) -> Result<()> {
    if d.p == 0 {
        return Err(Error::invalid("--p must be at least 1"));
    }
    if !(d.gamma > 0.0 && d.gamma < 1.0) {
        return Err(Error::invalid(format!("--gamma must lie in (0, 1), got {}", d.gamma)));
    }
    if !(0.0..=1.0).contains(&d.eta) {
        return Err(Error::invalid(format!("--eta must lie in [0, 1], got {}", d.eta)));
    }
    if d.n_grid < d.p + d.q + 2 {
        return Err(Error::invalid(format!("--n-grid must be at least p + q + 2 = {}", d.p + d.q + 2)));
    }
    Ok(())
}

fn validate_engine(tol: f64, t_max: usize) -> Result<()> {
    if !(tol >= 0.0) {
        return Err(Error::invalid(format!("--tol must be >= 0, got {tol}")));
    }
    if t_max == 0 {
        return Err(Error::invalid("--t-max must be at least 1"));
    }
    Ok(())
}

fn design(d: &DesignFlags) -> Result<FilterCoefficients> {
    let resp = DesiredResponse::high_pass(d.eta, d.n_grid, DEFAULT_GRID_MAX)?;
    design_coefficients(&resp, d.p, d.q, d.gamma)
}

fn operator(g: &Graph, choice: LaplacianChoice) -> LaplacianOperator {
    match choice {
        LaplacianChoice::Scaled => scaled_normalized_laplacian(g, LambdaMaxMode::Exact),
        LaplacianChoice::Augmented => augmented_laplacian(g, LambdaMaxMode::Exact),
    }
}

fn git_hash() -> String {
    Process::new("git")
        .args(["rev-parse", "HEAD"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .unwrap_or_else(|| "unknown".into())
}

struct RunDir {
    path: PathBuf,
}

impl RunDir {
    fn create(out: &Option<PathBuf>, command: &str) -> Result<Self> {
        let path = out.clone().unwrap_or_else(|| PathBuf::from("runs").join(command));
        fs::create_dir_all(&path)?;
        Ok(RunDir { path })
    }

    fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    fn manifest(&self, command: &str, argv: &[OsString], seed: u64, config: Value) -> Result<()> {
        let m = json!({
            "command": command,
            "argv": argv.iter().map(|a| a.to_string_lossy().into_owned()).collect::<Vec<_>>(),
            "seed": seed,
            "seed_derivation": "splitmix64(root ^ fnv1a64(name))",
            "version": env!("CARGO_PKG_VERSION"),
            "git": git_hash(),
            "config": config,
        });
        fs::write(self.file("manifest.json"), serde_json::to_string_pretty(&m).expect("json") + "\n")?;
        Ok(())
    }
}

fn to_json<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("serializable")
}

fn coefficients_json(c: &FilterCoefficients) -> Value {
    json!({
        "p": c.p(), "q": c.q(), "gamma": c.gamma, "eta": c.eta,
        "residual": c.residual, "stability_margin": c.stability_margin,
        "converged": c.converged, "psi": c.psi, "phi": c.phi,
    })
}

/// Resolves model and training configuration: defaults, then the config
/// file, then flags.
fn resolve_training(common: &Common, t: &TrainFlags) -> Result<(ModelConfig, TrainConfig)> {
    let mut model = ModelConfig::dfnet();
    let mut tc = TrainConfig::default();
    if let Some(path) = &common.config {
        let cfg = ConfigFile::read(path)?;
        apply_model_section(&cfg, path, &mut model)?;
        apply_train_section(&cfg, path, &mut tc)?;
    }
    model.seed = common.seed;
    if let Some(v) = t.p {
        model.p = v;
    }
    if let Some(v) = t.q {
        model.q = v;
    }
    if let Some(v) = t.gamma {
        model.gamma = v;
    }
    if let Some(v) = t.eta {
        model.eta = v;
    }
    if let Some(v) = t.runs {
        tc.runs = v;
    }
    if let Some(v) = t.epochs {
        tc.epochs = v;
    }
    model.validate()?;
    tc.validate()?;
    Ok((model, tc))
}

fn report_suite(dir: &RunDir, entries: &[SuiteEntry]) -> Result<String> {
    fs::write(dir.file("suite.csv"), suite_csv(entries))?;
    let mut lines = String::new();
    for (i, e) in entries.iter().enumerate() {
        write_metrics_jsonl(&dir.file(&format!("metrics-{i}.jsonl")), &e.label, &e.runs)?;
        let _ = writeln!(
            lines,
            "{:<28} {:.4} ± {:.4}  ({} runs, {} failed)",
            e.label,
            e.mean_accuracy,
            e.std_accuracy,
            e.runs.len(),
            e.failures
        );
    }
    Ok(lines)
}

fn execute(cli: Cli, argv: &[OsString]) -> Result<i32> {
    match cli.command {
        Command::Design { common, design: d } => {
            validate_design(&d)?;
            let c = design(&d)?;
            let dir = RunDir::create(&common.out, "design")?;
            c.write(&dir.file("coefficients.txt"))?;
            dir.manifest("design", argv, common.seed, coefficients_json(&c))?;
            println!("residual          {:.6e}", c.residual);
            println!("stability margin  {:.3e}", c.stability_margin);
            println!("grid |alpha psi|  {:.6}", c.grid_feedback_bound());
            println!("converged         {}", c.converged);
            println!("psi               {:?}", c.psi);
            println!("phi               {:?}", c.phi);
            println!("wrote {}", dir.file("coefficients.txt").display());
            Ok(0)
        }
        Command::Apply {
            common,
            design: d,
            engine,
            graph,
            coefficients,
            signal,
            laplacian,
        } => {
            validate_design(&d)?;
            validate_engine(engine.tol, engine.t_max)?;
            parse_graph_spec(&graph)?;
            let g = resolve_graph(&graph, common.seed)?;
            let c = match &coefficients {
                Some(path) => FilterCoefficients::read(path)?,
                None => design(&d)?,
            };
            let x = match &signal {
                Some(path) => read_signal(path)?,
                None => {
                    let mut rng = rng_for(common.seed, "signal");
                    Array2::from_shape_simple_fn((g.n(), 1), || rng.random::<f64>() - 0.5)
                }
            };
            let op = operator(&g, laplacian);
            let run = apply_feedback_looped(
                &op,
                &c,
                x.view(),
                FeedbackOptions {
                    t_max: engine.t_max,
                    tol: engine.tol,
                    strict_stability: engine.strict_stability,
                },
            )?;
            let dir = RunDir::create(&common.out, "apply")?;
            write_signal(&run.signal, &dir.file("filtered.txt"))?;
            dir.manifest(
                "apply",
                argv,
                common.seed,
                json!({"graph": graph, "coefficients": coefficients_json(&c), "tol": engine.tol, "t_max": engine.t_max,
                       "iterations": run.iterations, "final_delta": run.final_delta, "matvecs": op.matvec_count()}),
            )?;
            println!("n = {}, m = {}", g.n(), g.m());
            println!("iterations {}  final delta {:.3e}  matvecs {}", run.iterations, run.final_delta, op.matvec_count());
            println!("wrote {}", dir.file("filtered.txt").display());
            if run.final_delta > engine.tol {
                println!("tolerance not reached within {} iterations", engine.t_max);
                if run.deltas_inf.last() > run.deltas_inf.first() {
                    println!("successive differences are growing: the feedback operator is not a contraction here");
                    return Ok(2);
                }
            }
            Ok(0)
        }
        Command::Verify {
            common,
            design: d,
            tol,
            t_max,
            graph,
            laplacian,
        } => {
            validate_design(&d)?;
            validate_engine(tol, t_max)?;
            parse_graph_spec(&graph)?;
            let g = resolve_graph(&graph, common.seed)?;
            let c = design(&d)?;
            let op = operator(&g, laplacian);
            let dec = eigendecompose(&op)?;
            let feedback = PolynomialOperator::feedback(&op, &c);
            let radius = dec.eigenvalues.iter().map(|&l| feedback.eval(l).abs()).fold(0.0, f64::max);
            let mut rng = rng_for(common.seed, "signal");
            let x = Array2::from_shape_simple_fn((g.n(), 1), || rng.random::<f64>() - 0.5);
            let dir = RunDir::create(&common.out, "verify")?;
            let mut record = json!({"graph": graph, "n": g.n(), "m": g.m(), "coefficients": coefficients_json(&c),
                                    "spectral_radius_of_feedback": radius});
            println!("n = {}, m = {}, spectrum [{:.4}, {:.4}]", g.n(), g.m(), dec.eigenvalues[0], dec.eigenvalues[g.n() - 1]);
            println!("max |P(lambda)| over the spectrum: {radius:.6}");
            if radius >= 1.0 {
                println!("contraction fails off the design grid; the recursion has no fixed point to match");
                record["verdict"] = json!("unstable");
                dir.manifest("verify", argv, common.seed, record)?;
                return Ok(2);
            }
            let exact = exact_filter_block(&dec, |l| c.frequency_response(l).unwrap_or(f64::NAN), x.view())?;
            let run = apply_feedback_looped(&op, &c, x.view(), FeedbackOptions { t_max, tol, strict_stability: false })?;
            let diff = &run.signal - &exact;
            let err = diff.iter().map(|v| v * v).sum::<f64>().sqrt() / exact.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
            println!("iterations {}  relative l2 error {err:.3e}", run.iterations);
            let pass = err <= 1e-6;
            record["relative_error"] = json!(err);
            record["iterations"] = json!(run.iterations);
            record["verdict"] = json!(if pass { "pass" } else { "fail" });
            dir.manifest("verify", argv, common.seed, record)?;
            println!("{}", if pass { "PASS" } else { "FAIL" });
            Ok(if pass { 0 } else { 2 })
        }
        Command::Bench {
            common,
            design: d,
            edges,
            degree,
            iterations,
            laplacian,
        } => {
            validate_design(&d)?;
            if edges.len() < 2 || edges.contains(&0) {
                return Err(Error::invalid("--edges needs at least two positive sizes"));
            }
            if iterations == 0 || !(degree > 0.0) {
                return Err(Error::invalid("--iterations and --degree must be positive"));
            }
            let c = design(&d)?;
            let opts = BenchOptions {
                average_degree: degree,
                iterations,
                operator: match laplacian {
                    LaplacianChoice::Scaled => BenchOperator::ScaledNormalized,
                    LaplacianChoice::Augmented => BenchOperator::Augmented,
                },
                seed: common.seed,
                ..BenchOptions::default()
            };
            let dir = RunDir::create(&common.out, "bench")?;
            let report = bench_filtering(&edges, &c, &opts)?;
            let mut csv = String::from("n,m,iterations,matvecs,seconds,peak_bytes,estimated_bytes\n");
            println!("{:>9} {:>9} {:>8} {:>10} {:>12}", "n", "m", "matvecs", "seconds", "bytes");
            for p in &report.points {
                let bytes = p.peak_bytes.unwrap_or(p.estimated_bytes);
                println!("{:>9} {:>9} {:>8} {:>10.5} {:>12}", p.n, p.m, p.matvecs, p.seconds, bytes);
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{:e},{},{}",
                    p.n,
                    p.m,
                    p.iterations,
                    p.matvecs,
                    p.seconds,
                    p.peak_bytes.map_or(String::new(), |b| b.to_string()),
                    p.estimated_bytes
                );
            }
            println!("time slope (log-log) {:.3}", report.time_slope);
            println!("memory vs linear fit {:.3}x ({})", report.memory_fit_ratio, report.memory_source);
            fs::write(dir.file("bench.csv"), csv)?;
            dir.manifest("bench", argv, common.seed, to_json(&report))?;
            Ok(0)
        }
        Command::Train { common, train } => {
            let (model, tc) = resolve_training(&common, &train)?;
            let ds = resolve_dataset(&train.dataset, common.seed, !train.no_feature_norm)?;
            let dir = RunDir::create(&common.out, "train")?;
            let mut runs = Vec::new();
            for r in 0..tc.runs {
                let trained = train_run(&model, &tc, &ds, r)?;
                if r == 0 {
                    save_checkpoint(&dir.file("model.ckpt"), &model, &trained.params)?;
                }
                match (trained.metrics.test_accuracy, &trained.metrics.failure) {
                    (Some(a), _) => println!("run {r}: test accuracy {a:.4} ({:.1}s)", trained.metrics.total_seconds),
                    (None, Some(f)) => println!("run {r}: failed: {f}"),
                    _ => {}
                }
                runs.push(trained.metrics);
            }
            write_metrics_jsonl(&dir.file("metrics.jsonl"), "train", &runs)?;
            let accs: Vec<f64> = runs.iter().filter_map(|r| r.test_accuracy).collect();
            let (mean, std) = mean_std(&accs);
            let summary = json!({"mean_accuracy": mean, "std_accuracy": std, "runs": runs.len(),
                                 "failures": runs.len() - accs.len()});
            fs::write(dir.file("summary.json"), summary.to_string() + "\n")?;
            dir.manifest("train", argv, common.seed, json!({"model": to_json(&model), "train": to_json(&tc), "dataset": train.dataset}))?;
            println!("test accuracy {mean:.4} ± {std:.4} over {} runs ({} failed)", runs.len(), runs.len() - accs.len());
            Ok(if accs.is_empty() { 2 } else { 0 })
        }
        Command::Sweep { common, train, ps, qs } => {
            let (model, tc) = resolve_training(&common, &train)?;
            if ps.is_empty() || qs.is_empty() || ps.contains(&0) {
                return Err(Error::invalid("--ps and --qs must be non-empty, with p >= 1"));
            }
            let ds = resolve_dataset(&train.dataset, common.seed, !train.no_feature_norm)?;
            let dir = RunDir::create(&common.out, "sweep")?;
            let entries = run_suite(&order_sweep_grid(&model, &ps, &qs), &tc, &ds, tc.runs)?;
            print!("{}", report_suite(&dir, &entries)?);
            dir.manifest("sweep", argv, common.seed, json!({"model": to_json(&model), "train": to_json(&tc), "ps": ps, "qs": qs}))?;
            Ok(0)
        }
        Command::Ablate { common, train } => {
            let (model, tc) = resolve_training(&common, &train)?;
            let ds = resolve_dataset(&train.dataset, common.seed, !train.no_feature_norm)?;
            let dir = RunDir::create(&common.out, "ablate")?;
            let entries = run_suite(&ablation_grid(&model), &tc, &ds, tc.runs)?;
            print!("{}", report_suite(&dir, &entries)?);
            dir.manifest("ablate", argv, common.seed, json!({"model": to_json(&model), "train": to_json(&tc)}))?;
            Ok(0)
        }
        Command::ExportEmbeddings {
            common,
            checkpoint,
            dataset,
            layer,
            no_feature_norm,
        } => {
            let (model, params) = load_checkpoint(&checkpoint)?;
            if layer >= model.layer_widths.len() {
                return Err(Error::invalid(format!(
                    "--layer {layer} out of range for {} layers",
                    model.layer_widths.len()
                )));
            }
            let ds = resolve_dataset(&dataset, common.seed, !no_feature_norm)?;
            let bank = FilterBank::for_graph(&ds.graph, &model)?;
            let emb = export_embeddings(&model, &params, &bank, ds.features.view(), layer)?;
            let dir = RunDir::create(&common.out, "embeddings")?;
            let path = dir.file(&format!("embeddings-layer{layer}.txt"));
            write_signal(&emb, &path)?;
            dir.manifest("export-embeddings", argv, common.seed, json!({"checkpoint": checkpoint, "layer": layer, "dataset": dataset}))?;
            println!("wrote {} ({} x {})", path.display(), emb.nrows(), emb.ncols());
            Ok(0)
        }
    }
}

/// Parses `argv`, runs the command and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli, &argv) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                1
            } else {
                2
            }
        }
    }
}
