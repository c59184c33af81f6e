//! Undirected weighted graphs in compressed sparse row form.

use std::collections::HashSet;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

/// One undirected edge `(i, j, weight)` as it appears in an edge list.
pub type Edge = (usize, usize, f64);

/// Immutable undirected graph. Both orientations of every edge are stored,
/// columns within a row are sorted, and the diagonal is always empty.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    n: usize,
    m: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

/// How [`Graph::from_edges_with`] treats a repeated undirected edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DuplicatePolicy {
    /// Reject the input.
    Reject,
    /// Keep the first occurrence and drop later ones. Used by dataset
    /// loaders whose raw citation lists cite the same pair twice.
    KeepFirst,
}

impl Graph {
    /// Builds a graph on `n` vertices, rejecting self-loops, duplicate
    /// undirected edges, out-of-range ids and non-positive weights.
    pub fn from_edges(n: usize, edges: &[Edge]) -> Result<Self> {
        Self::from_edges_with(n, edges, DuplicatePolicy::Reject)
    }

    pub fn from_edges_with(n: usize, edges: &[Edge], policy: DuplicatePolicy) -> Result<Self> {
        let mut seen = HashSet::with_capacity(edges.len());
        let mut kept = Vec::with_capacity(edges.len());
        for &(i, j, w) in edges {
            for index in [i, j] {
                if index >= n {
                    return Err(Error::IndexOutOfRange { index, n });
                }
            }
            if i == j {
                return Err(Error::SelfLoop(i));
            }
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::InvalidWeight { i, j, weight: w });
            }
            let key = (i.min(j), i.max(j));
            if !seen.insert(key) {
                match policy {
                    DuplicatePolicy::Reject => return Err(Error::DuplicateEdge(i, j)),
                    DuplicatePolicy::KeepFirst => continue,
                }
            }
            kept.push((key.0, key.1, w));
        }

        let mut degree = vec![0usize; n];
        for &(i, j, _) in &kept {
            degree[i] += 1;
            degree[j] += 1;
        }
        let mut row_offsets = vec![0usize; n + 1];
        for i in 0..n {
            row_offsets[i + 1] = row_offsets[i] + degree[i];
        }
        let nnz = row_offsets[n];
        let mut col_indices = vec![0usize; nnz];
        let mut values = vec![0.0; nnz];
        let mut cursor = row_offsets[..n].to_vec();
        for &(i, j, w) in &kept {
            col_indices[cursor[i]] = j;
            values[cursor[i]] = w;
            cursor[i] += 1;
            col_indices[cursor[j]] = i;
            values[cursor[j]] = w;
            cursor[j] += 1;
        }
        for i in 0..n {
            let (lo, hi) = (row_offsets[i], row_offsets[i + 1]);
            let mut row: Vec<(usize, f64)> = col_indices[lo..hi]
                .iter()
                .copied()
                .zip(values[lo..hi].iter().copied())
                .collect();
            row.sort_unstable_by_key(|&(c, _)| c);
            for (k, (c, v)) in row.into_iter().enumerate() {
                col_indices[lo + k] = c;
                values[lo + k] = v;
            }
        }

        Ok(Graph {
            n,
            m: kept.len(),
            row_offsets,
            col_indices,
            values,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of undirected edges.
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Neighbours of `i` with their edge weights, sorted by neighbour id.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (lo, hi) = (self.row_offsets[i], self.row_offsets[i + 1]);
        self.col_indices[lo..hi]
            .iter()
            .copied()
            .zip(self.values[lo..hi].iter().copied())
    }

    /// Weighted degree `D_ii = sum_j A_ij`.
    pub fn degree(&self, i: usize) -> f64 {
        self.neighbors(i).map(|(_, w)| w).sum()
    }

    /// Each undirected edge once, as `(i, j, w)` with `i < j`.
    pub fn edges(&self) -> Vec<Edge> {
        let mut out = Vec::with_capacity(self.m);
        for i in 0..self.n {
            for (j, w) in self.neighbors(i) {
                if i < j {
                    out.push((i, j, w));
                }
            }
        }
        out
    }

    pub fn dense_adjacency(&self) -> Array2<f64> {
        let mut a = Array2::zeros((self.n, self.n));
        for i in 0..self.n {
            for (j, w) in self.neighbors(i) {
                a[[i, j]] = w;
            }
        }
        a
    }

    /// Relabels vertices so that old vertex `v` becomes `perm[v]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: perm.len(),
            });
        }
        let edges: Vec<Edge> = self
            .edges()
            .into_iter()
            .map(|(i, j, w)| (perm[i], perm[j], w))
            .collect();
        Graph::from_edges(self.n, &edges)
    }

    /// Heap bytes held by the CSR arrays.
    pub fn heap_bytes(&self) -> usize {
        self.row_offsets.len() * std::mem::size_of::<usize>()
            + self.col_indices.len() * std::mem::size_of::<usize>()
            + self.values.len() * std::mem::size_of::<f64>()
    }
}

/// Raw contents of an edge-list file.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeList {
    /// `max id + 1`, or 0 for an empty file.
    pub n: usize,
    pub edges: Vec<Edge>,
}

/// Parses `i<TAB>j[<TAB>weight]` lines; `#` lines and blank lines are
/// skipped. Any run of whitespace is accepted as a separator.
pub fn parse_edge_list(text: &str, source: &Path) -> Result<EdgeList> {
    let mut edges = Vec::new();
    let mut n = 0usize;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 2 && fields.len() != 3 {
            return Err(Error::parse(
                source,
                lineno + 1,
                format!("expected 2 or 3 fields, found {}", fields.len()),
            ));
        }
        let id = |s: &str| {
            s.parse::<usize>()
                .map_err(|e| Error::parse(source, lineno + 1, format!("bad vertex id {s:?}: {e}")))
        };
        let i = id(fields[0])?;
        let j = id(fields[1])?;
        let w = match fields.get(2) {
            Some(s) => s
                .parse::<f64>()
                .map_err(|e| Error::parse(source, lineno + 1, format!("bad weight {s:?}: {e}")))?,
            None => 1.0,
        };
        n = n.max(i + 1).max(j + 1);
        edges.push((i, j, w));
    }
    Ok(EdgeList { n, edges })
}

pub fn read_edge_list(path: &Path) -> Result<EdgeList> {
    let text = crate::error::read_input_text(path)?;
    parse_edge_list(&text, path)
}

/// Reads an edge list and builds a graph. `n_override` takes precedence
/// over the inferred vertex count.
pub fn load_graph(path: &Path, n_override: Option<usize>, policy: DuplicatePolicy) -> Result<Graph> {
    let list = read_edge_list(path)?;
    let n = n_override.unwrap_or(list.n);
    Graph::from_edges_with(n, &list.edges, policy)
}

/// Writes each undirected edge once. Weights equal to 1 are omitted.
pub fn write_edge_list(graph: &Graph, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "# n={} m={}", graph.n(), graph.m())?;
    for (i, j, weight) in graph.edges() {
        if weight == 1.0 {
            writeln!(w, "{i}\t{j}")?;
        } else {
            writeln!(w, "{i}\t{j}\t{weight:e}")?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_edge() {
        let g = Graph::from_edges(2, &[(0, 1, 1.0)]).unwrap();
        assert_eq!(g.m(), 1);
        assert_eq!(g.dense_adjacency(), ndarray::arr2(&[[0.0, 1.0], [1.0, 0.0]]));
    }

    #[test]
    fn edgeless() {
        let g = Graph::from_edges(3, &[]).unwrap();
        assert_eq!(g.m(), 0);
        assert_eq!(g.dense_adjacency(), Array2::<f64>::zeros((3, 3)));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            Graph::from_edges(3, &[(1, 1, 1.0)]),
            Err(Error::SelfLoop(1))
        ));
        assert!(matches!(
            Graph::from_edges(3, &[(0, 1, 1.0), (1, 0, 2.0)]),
            Err(Error::DuplicateEdge(1, 0))
        ));
        assert!(matches!(
            Graph::from_edges(3, &[(0, 3, 1.0)]),
            Err(Error::IndexOutOfRange { index: 3, n: 3 })
        ));
        assert!(Graph::from_edges(3, &[(0, 1, 0.0)]).is_err());
        assert!(Graph::from_edges(3, &[(0, 1, f64::NAN)]).is_err());
    }

    #[test]
    fn keep_first_drops_repeats() {
        let g = Graph::from_edges_with(
            3,
            &[(0, 1, 1.0), (1, 0, 1.0), (1, 2, 2.0)],
            DuplicatePolicy::KeepFirst,
        )
        .unwrap();
        assert_eq!(g.m(), 2);
        assert_eq!(g.degree(1), 3.0);
    }

    #[test]
    fn parses_comments_and_optional_weights() {
        let text = "# comment\n0\t1\n\n2\t1\t0.5\n";
        let list = parse_edge_list(text, Path::new("mem")).unwrap();
        assert_eq!(list.n, 3);
        assert_eq!(list.edges, vec![(0, 1, 1.0), (2, 1, 0.5)]);
        let err = parse_edge_list("0\n", Path::new("mem")).unwrap_err();
        assert!(err.to_string().starts_with("mem:1:"));
    }

    #[test]
    fn edge_list_round_trip() {
        let g = Graph::from_edges(4, &[(0, 1, 1.0), (1, 2, 0.25), (3, 0, 3.0)]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.tsv");
        write_edge_list(&g, &path).unwrap();
        let back = load_graph(&path, Some(4), DuplicatePolicy::Reject).unwrap();
        assert_eq!(g, back);
    }
}
