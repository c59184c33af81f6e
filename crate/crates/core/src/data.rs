//! Node-classification datasets: the on-disk citation format and synthetic
//! generators.
//!
//! A dataset directory holds
//!
//! ```text
//! edges.tsv                 i<TAB>j[<TAB>w]
//! features.txt|features.bin dense signal file, one row per vertex
//! labels.txt                vertex<TAB>class
//! splits/train.ids          one vertex id per line (also val.ids, test.ids)
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::graph::{load_graph, write_edge_list, DuplicatePolicy, Edge, Graph};
use crate::seed::rng_for;
use crate::signal::{read_signal, write_signal};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub graph: Graph,
    pub features: Array2<f64>,
    /// Class per vertex, `-1` when unlabeled.
    pub labels: Vec<i64>,
    pub train: Vec<bool>,
    pub val: Vec<bool>,
    pub test: Vec<bool>,
    pub class_count: usize,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.graph.n()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    /// Checks shapes, label ranges and split disjointness.
    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if self.features.nrows() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: self.features.nrows(),
            });
        }
        for v in [&self.labels.len(), &self.train.len(), &self.val.len(), &self.test.len()] {
            if *v != n {
                return Err(Error::DimensionMismatch { expected: n, got: *v });
            }
        }
        for i in 0..n {
            let hits = [self.train[i], self.val[i], self.test[i]].iter().filter(|b| **b).count();
            if hits > 1 {
                return Err(Error::Format(format!("vertex {i} appears in more than one split")));
            }
            let l = self.labels[i];
            if l >= self.class_count as i64 || l < -1 {
                return Err(Error::Format(format!("vertex {i} has class {l} outside 0..{}", self.class_count)));
            }
            if hits == 1 && l < 0 {
                return Err(Error::Format(format!("vertex {i} is in a split but unlabeled")));
            }
        }
        Ok(())
    }

    pub fn indices(mask: &[bool]) -> Vec<usize> {
        mask.iter().enumerate().filter(|(_, b)| **b).map(|(i, _)| i).collect()
    }

    /// Fraction of vertices in the training split.
    pub fn labeled_fraction(&self) -> f64 {
        self.train.iter().filter(|b| **b).count() as f64 / self.n().max(1) as f64
    }

    /// Replaces the splits.
    pub fn with_split(mut self, split: Split) -> Self {
        self.train = split.train;
        self.val = split.val;
        self.test = split.test;
        self
    }
}

/// Scales every row to unit l1 norm; all-zero rows stay zero.
pub fn l1_normalize_rows(x: &mut Array2<f64>) {
    for mut row in x.rows_mut() {
        let s: f64 = row.iter().map(|v| v.abs()).sum();
        if s > 0.0 {
            row.mapv_inplace(|v| v / s);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadOptions {
    /// Row-l1-normalize the features after loading.
    pub feature_norm: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions { feature_norm: true }
    }
}

fn read_id_file(path: &Path, n: usize) -> Result<Vec<bool>> {
    let text = crate::error::read_input_text(path)?;
    let mut mask = vec![false; n];
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let id: usize = line
            .parse()
            .map_err(|_| Error::parse(path, lineno + 1, format!("bad vertex id `{line}`")))?;
        if id >= n {
            return Err(Error::parse(path, lineno + 1, format!("vertex {id} out of range for n = {n}")));
        }
        if mask[id] {
            return Err(Error::parse(path, lineno + 1, format!("vertex {id} listed twice")));
        }
        mask[id] = true;
    }
    Ok(mask)
}

fn read_labels(path: &Path, n: usize) -> Result<Vec<i64>> {
    let text = crate::error::read_input_text(path)?;
    let mut labels = vec![-1i64; n];
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(Error::parse(path, lineno + 1, "expected `vertex<TAB>class`"));
        }
        let v: usize = fields[0]
            .parse()
            .map_err(|_| Error::parse(path, lineno + 1, format!("bad vertex id `{}`", fields[0])))?;
        let c: i64 = fields[1]
            .parse()
            .map_err(|_| Error::parse(path, lineno + 1, format!("bad class `{}`", fields[1])))?;
        if v >= n {
            return Err(Error::parse(path, lineno + 1, format!("vertex {v} out of range for n = {n}")));
        }
        if c < -1 {
            return Err(Error::parse(path, lineno + 1, format!("unknown class id {c}")));
        }
        labels[v] = c;
    }
    Ok(labels)
}

fn features_path(dir: &Path) -> Result<PathBuf> {
    for name in ["features.bin", "features.txt"] {
        let p = dir.join(name);
        if p.exists() {
            return Ok(p);
        }
    }
    Err(Error::Format(format!("{}: no features.txt or features.bin", dir.display())))
}

/// Loads a dataset directory. The vertex count comes from the feature rows.
/// Repeated citation pairs in `edges.tsv` are collapsed to one edge.
pub fn load_citation_dataset(dir: &Path, options: LoadOptions) -> Result<Dataset> {
    let mut features = read_signal(&features_path(dir)?)?;
    let n = features.nrows();
    let graph = load_graph(&dir.join("edges.tsv"), Some(n), DuplicatePolicy::KeepFirst)?;
    let labels = read_labels(&dir.join("labels.txt"), n)?;
    let splits = dir.join("splits");
    let train = read_id_file(&splits.join("train.ids"), n)?;
    let val = read_id_file(&splits.join("val.ids"), n)?;
    let test = read_id_file(&splits.join("test.ids"), n)?;
    let class_count = labels.iter().copied().max().map_or(0, |m| (m + 1).max(0) as usize);
    if options.feature_norm {
        l1_normalize_rows(&mut features);
    }
    let ds = Dataset {
        graph,
        features,
        labels,
        train,
        val,
        test,
        class_count,
    };
    ds.validate().map_err(|e| Error::Format(format!("{}: {e}", dir.display())))?;
    Ok(ds)
}

fn write_ids(path: &Path, mask: &[bool]) -> Result<()> {
    let mut out = String::new();
    for i in Dataset::indices(mask) {
        let _ = writeln!(out, "{i}");
    }
    fs::write(path, out)?;
    Ok(())
}

/// Writes the directory layout read by [`load_citation_dataset`]. Features
/// go to `features.txt`, or `features.bin` when `binary` is set.
pub fn write_dataset(ds: &Dataset, dir: &Path, binary: bool) -> Result<()> {
    ds.validate()?;
    fs::create_dir_all(dir.join("splits"))?;
    write_edge_list(&ds.graph, &dir.join("edges.tsv"))?;
    let feat = dir.join(if binary { "features.bin" } else { "features.txt" });
    write_signal(&ds.features, &feat)?;
    let mut labels = String::new();
    for (i, l) in ds.labels.iter().enumerate() {
        if *l >= 0 {
            let _ = writeln!(labels, "{i}\t{l}");
        }
    }
    fs::write(dir.join("labels.txt"), labels)?;
    write_ids(&dir.join("splits/train.ids"), &ds.train)?;
    write_ids(&dir.join("splits/val.ids"), &ds.val)?;
    write_ids(&dir.join("splits/test.ids"), &ds.test)?;
    Ok(())
}

/// Train/validation/test masks.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Vec<bool>,
    pub val: Vec<bool>,
    pub test: Vec<bool>,
}

fn split_from_order(n: usize, train: &[usize], rest: &[usize], n_val: usize, n_test: usize) -> Split {
    let mut s = Split {
        train: vec![false; n],
        val: vec![false; n],
        test: vec![false; n],
    };
    for &i in train {
        s.train[i] = true;
    }
    for &i in rest.iter().take(n_val) {
        s.val[i] = true;
    }
    for &i in rest.iter().skip(n_val).take(n_test) {
        s.test[i] = true;
    }
    s
}

/// `per_class` random training vertices from every class, then `n_val`
/// validation and `n_test` test vertices from the remaining labeled ones.
pub fn per_class_split(labels: &[i64], class_count: usize, per_class: usize, n_val: usize, n_test: usize, rng: &mut ChaCha8Rng) -> Split {
    let mut train = Vec::new();
    let mut rest = Vec::new();
    for c in 0..class_count as i64 {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        members.shuffle(rng);
        let k = per_class.min(members.len());
        train.extend_from_slice(&members[..k]);
        rest.extend_from_slice(&members[k..]);
    }
    rest.shuffle(rng);
    split_from_order(labels.len(), &train, &rest, n_val, n_test)
}

/// A random `train_fraction` of the labeled vertices for training (stratified
/// by class), then up to 500 validation and 1000 test vertices.
pub fn fractional_split(labels: &[i64], class_count: usize, train_fraction: f64, rng: &mut ChaCha8Rng) -> Result<Split> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::invalid(format!("train fraction must lie in (0, 1), got {train_fraction}")));
    }
    let mut train = Vec::new();
    let mut rest = Vec::new();
    for c in 0..class_count as i64 {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        members.shuffle(rng);
        let k = ((members.len() as f64 * train_fraction).round() as usize).clamp(1.min(members.len()), members.len());
        train.extend_from_slice(&members[..k]);
        rest.extend_from_slice(&members[k..]);
    }
    rest.shuffle(rng);
    Ok(split_from_order(labels.len(), &train, &rest, 500, 1000))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    Path,
    Cycle,
    /// Near-square grid, row-major, `round(sqrt(n))` columns.
    Grid,
    ErdosRenyi { p_edge: f64 },
    /// Two cliques of `n / 2` and `n - n / 2` vertices joined by one edge.
    Barbell,
    /// `classes` equal blocks, edge probability `p_in` within a block and
    /// `p_out` across.
    PlantedPartition { classes: usize, p_in: f64, p_out: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FeatureMode {
    /// Identity features.
    OneHot,
    /// `dim` independent standard normal columns.
    RandomNormal { dim: usize },
    /// Sparse binary bag-of-words: `dim` words split into one topic block
    /// per class; a vertex switches on words of its own topic with
    /// probability `p_topic` and any other word with `p_background`.
    Topics { dim: usize, p_topic: f64, p_background: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub family: Family,
    pub n: usize,
    pub seed: u64,
    pub features: FeatureMode,
}

impl SyntheticSpec {
    pub fn new(family: Family, n: usize, seed: u64) -> Self {
        SyntheticSpec {
            family,
            n,
            seed,
            features: FeatureMode::OneHot,
        }
    }

    pub fn with_features(mut self, features: FeatureMode) -> Self {
        self.features = features;
        self
    }
}

/// Erdős–Rényi edges by geometric skipping, `O(n + m)` expected time.
pub fn erdos_renyi_edges(n: usize, p: f64, rng: &mut impl Rng) -> Vec<Edge> {
    let mut edges = Vec::new();
    if n < 2 || p <= 0.0 {
        return edges;
    }
    if p >= 1.0 {
        for i in 0..n {
            for j in (i + 1)..n {
                edges.push((i, j, 1.0));
            }
        }
        return edges;
    }
    let log_q = (1.0 - p).ln();
    // Walk the strict lower triangle (v, w) with w < v.
    let (mut v, mut w) = (1usize, -1i64);
    loop {
        let r: f64 = rng.random();
        w += 1 + ((1.0 - r).ln() / log_q).floor() as i64;
        while v < n && w >= v as i64 {
            w -= v as i64;
            v += 1;
        }
        if v >= n {
            break;
        }
        edges.push((w as usize, v, 1.0));
    }
    edges
}

fn family_graph(spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> Result<(Vec<Edge>, Vec<i64>, usize)> {
    let n = spec.n;
    let halves = |n: usize| (0..n).map(|i| i64::from(i >= n / 2)).collect::<Vec<_>>();
    Ok(match spec.family {
        Family::Path => ((1..n).map(|i| (i - 1, i, 1.0)).collect(), halves(n), 2),
        Family::Cycle => {
            let mut e: Vec<Edge> = (1..n).map(|i| (i - 1, i, 1.0)).collect();
            if n > 2 {
                e.push((n - 1, 0, 1.0));
            }
            (e, halves(n), 2)
        }
        Family::Grid => {
            let cols = ((n as f64).sqrt().round() as usize).max(1);
            let rows = n.div_ceil(cols);
            let mut e = Vec::new();
            let mut labels = Vec::with_capacity(n);
            for i in 0..n {
                let (r, c) = (i / cols, i % cols);
                if c + 1 < cols && i + 1 < n {
                    e.push((i, i + 1, 1.0));
                }
                if i + cols < n {
                    e.push((i, i + cols, 1.0));
                }
                labels.push(i64::from(r >= rows.div_ceil(2)) * 2 + i64::from(c >= cols.div_ceil(2)));
            }
            let classes = if rows > 1 && cols > 1 { 4 } else { 2 };
            if classes == 2 {
                labels = halves(n);
            }
            (e, labels, classes)
        }
        Family::ErdosRenyi { p_edge } => {
            if !(p_edge > 0.0 && p_edge <= 1.0) {
                return Err(Error::invalid(format!("p_edge must lie in (0, 1], got {p_edge}")));
            }
            (erdos_renyi_edges(n, p_edge, rng), halves(n), 2)
        }
        Family::Barbell => {
            let a = n / 2;
            let mut e = Vec::new();
            for (lo, hi) in [(0, a), (a, n)] {
                for i in lo..hi {
                    for j in (i + 1)..hi {
                        e.push((i, j, 1.0));
                    }
                }
            }
            if a > 0 && a < n {
                e.push((a - 1, a, 1.0));
            }
            (e, halves(n), 2)
        }
        Family::PlantedPartition { classes, p_in, p_out } => {
            if classes == 0 || classes > n {
                return Err(Error::invalid(format!("cannot plant {classes} blocks in {n} vertices")));
            }
            for p in [p_in, p_out] {
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::invalid(format!("edge probability {p} outside [0, 1]")));
                }
            }
            let labels: Vec<i64> = (0..n).map(|i| (i * classes / n) as i64).collect();
            let mut e = Vec::new();
            for i in 0..n {
                for j in (i + 1)..n {
                    let p = if labels[i] == labels[j] { p_in } else { p_out };
                    if rng.random::<f64>() < p {
                        e.push((i, j, 1.0));
                    }
                }
            }
            (e, labels, classes)
        }
    })
}

fn synthetic_features(mode: FeatureMode, labels: &[i64], classes: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let n = labels.len();
    match mode {
        FeatureMode::OneHot => Array2::eye(n),
        FeatureMode::RandomNormal { dim } => Array2::from_shape_simple_fn((n, dim), || StandardNormal.sample(rng)),
        FeatureMode::Topics { dim, p_topic, p_background } => {
            let block = (dim / classes.max(1)).max(1);
            Array2::from_shape_fn((n, dim), |(i, w)| {
                let own = (w / block) as i64 == labels[i];
                let p = if own { p_topic } else { p_background };
                f64::from(u8::from(rng.random::<f64>() < p))
            })
        }
    }
}

/// Builds a synthetic dataset. The split puts 20% of each class (at least
/// one vertex) in training, and halves the rest between validation and test.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    if spec.n < 2 {
        return Err(Error::invalid("synthetic graphs need n >= 2"));
    }
    let mut rng = rng_for(spec.seed, "synthetic");
    let (edges, labels, class_count) = family_graph(spec, &mut rng)?;
    let graph = Graph::from_edges(spec.n, &edges)?;
    let features = synthetic_features(spec.features, &labels, class_count, &mut rng);
    let mut train = Vec::new();
    let mut rest = Vec::new();
    for c in 0..class_count as i64 {
        let mut members: Vec<usize> = (0..spec.n).filter(|&i| labels[i] == c).collect();
        members.shuffle(&mut rng);
        let k = (members.len() / 5).max(1).min(members.len());
        train.extend_from_slice(&members[..k]);
        rest.extend_from_slice(&members[k..]);
    }
    rest.shuffle(&mut rng);
    let n_val = rest.len() / 2;
    let split = split_from_order(spec.n, &train, &rest, n_val, rest.len() - n_val);
    Ok(Dataset {
        graph,
        features,
        labels,
        train: split.train,
        val: split.val,
        test: split.test,
        class_count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn cycle_four() {
        let ds = generate_synthetic(&SyntheticSpec::new(Family::Cycle, 4, 0)).unwrap();
        assert_eq!(ds.graph.m(), 4);
        ds.validate().unwrap();
    }

    #[test]
    fn erdos_renyi_is_deterministic() {
        let spec = SyntheticSpec::new(Family::ErdosRenyi { p_edge: 0.5 }, 10, 7);
        let a = generate_synthetic(&spec).unwrap();
        let b = generate_synthetic(&spec).unwrap();
        assert_eq!(a.graph, b.graph);
    }

    #[test]
    fn skipping_sampler_matches_density() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 2000;
        let p = 0.01;
        let edges = erdos_renyi_edges(n, p, &mut rng);
        let expected = p * (n * (n - 1) / 2) as f64;
        assert!((edges.len() as f64 - expected).abs() < 5.0 * expected.sqrt());
        assert!(Graph::from_edges(n, &edges).is_ok());
    }

    #[test]
    fn barbell_components() {
        let ds = generate_synthetic(&SyntheticSpec::new(Family::Barbell, 20, 0)).unwrap();
        assert_eq!(ds.graph.m(), 2 * 45 + 1);
        for i in 0..10 {
            assert_eq!(ds.labels[i], 0);
            assert_eq!(ds.labels[i + 10], 1);
        }
        // Only the bridge crosses between the cliques.
        let crossing = ds.graph.edges().iter().filter(|(i, j, _)| ds.labels[*i] != ds.labels[*j]).count();
        assert_eq!(crossing, 1);
    }

    #[test]
    fn grid_quadrants() {
        let ds = generate_synthetic(&SyntheticSpec::new(Family::Grid, 16, 0)).unwrap();
        assert_eq!(ds.graph.m(), 24);
        assert_eq!(ds.class_count, 4);
        assert_eq!(&ds.labels[..4], &[0, 0, 1, 1]);
        assert_eq!(&ds.labels[12..], &[2, 2, 3, 3]);
    }

    #[test]
    fn split_helpers_are_disjoint() {
        let labels: Vec<i64> = (0..300).map(|i| i % 3).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = per_class_split(&labels, 3, 20, 50, 100, &mut rng);
        assert_eq!(s.train.iter().filter(|b| **b).count(), 60);
        assert_eq!(s.val.iter().filter(|b| **b).count(), 50);
        assert_eq!(s.test.iter().filter(|b| **b).count(), 100);
        assert!((0..300).all(|i| u8::from(s.train[i]) + u8::from(s.val[i]) + u8::from(s.test[i]) <= 1));
        let f = fractional_split(&labels, 3, 0.1, &mut rng).unwrap();
        assert_eq!(f.train.iter().filter(|b| **b).count(), 30);
    }

    #[test]
    fn l1_rows() {
        let mut x = ndarray::arr2(&[[1.0, 3.0], [0.0, 0.0]]);
        l1_normalize_rows(&mut x);
        assert_eq!(x, ndarray::arr2(&[[0.25, 0.75], [0.0, 0.0]]));
    }
}
