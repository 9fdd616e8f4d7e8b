//! KNN spot graphs, their normalized adjacency, feature corruption, and
//! neighborhood (community) means.

use std::fmt::Write as _;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Neighbors each spot connects to in both graphs.
pub const DEFAULT_K: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphKind {
    /// Spatial neighbors; drives the gene-expression branch.
    Proximity,
    /// Expression neighbors in PCA space; drives the image branch.
    Similarity,
}

/// Undirected KNN graph over spots.
#[derive(Debug, Clone)]
pub struct SpatialGraph {
    kind: GraphKind,
    /// Sorted neighbor lists, self excluded.
    neighbors: Vec<Vec<usize>>,
    normalized: CsrMatrix,
}

impl SpatialGraph {
    /// Builds a graph from explicit undirected edges and fills in its
    /// normalized adjacency.
    pub fn from_edges(n_nodes: usize, edges: &[(usize, usize)], kind: GraphKind) -> Result<Self> {
        let mut neighbors = vec![Vec::new(); n_nodes];
        for &(i, j) in edges {
            if i >= n_nodes || j >= n_nodes {
                return Err(Error::Dimension(format!(
                    "edge ({i}, {j}) outside graph of {n_nodes} nodes"
                )));
            }
            if i == j {
                return Err(Error::InvalidArgument(format!("self-loop at node {i}")));
            }
            neighbors[i].push(j);
            neighbors[j].push(i);
        }
        for list in &mut neighbors {
            list.sort_unstable();
            list.dedup();
        }
        let normalized = normalized_adjacency(&neighbors);
        Ok(Self {
            kind,
            neighbors,
            normalized,
        })
    }

    pub fn kind(&self) -> GraphKind {
        self.kind
    }

    pub fn n_nodes(&self) -> usize {
        self.neighbors.len()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    /// Undirected edges as `(i, j)` with `i < j`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.neighbors
            .iter()
            .enumerate()
            .flat_map(|(i, list)| list.iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
            .collect()
    }

    /// 0/1 adjacency without self-loops.
    pub fn adjacency(&self) -> Array2<f64> {
        let n = self.n_nodes();
        let mut a = Array2::zeros((n, n));
        for (i, list) in self.neighbors.iter().enumerate() {
            for &j in list {
                a[[i, j]] = 1.0;
            }
        }
        a
    }

    /// `D^{-1/2}(A+I)D^{-1/2}` with `D` the degree matrix of `A+I`.
    pub fn normalized_adjacency(&self) -> &CsrMatrix {
        &self.normalized
    }

    /// Edge list in `i,j` CSV form.
    pub fn edge_list_csv(&self) -> String {
        let mut out = String::from("i,j\n");
        for (i, j) in self.edges() {
            writeln!(out, "{i},{j}").unwrap();
        }
        out
    }
}

fn normalized_adjacency(neighbors: &[Vec<usize>]) -> CsrMatrix {
    let n = neighbors.len();
    let inv_sqrt: Vec<f64> = neighbors
        .iter()
        .map(|l| 1.0 / ((l.len() + 1) as f64).sqrt())
        .collect();
    let mut triplets = Vec::with_capacity(n + neighbors.iter().map(Vec::len).sum::<usize>());
    for (i, list) in neighbors.iter().enumerate() {
        triplets.push((i, i, inv_sqrt[i] * inv_sqrt[i]));
        for &j in list {
            triplets.push((i, j, inv_sqrt[i] * inv_sqrt[j]));
        }
    }
    CsrMatrix::from_triplets(n, n, triplets).expect("indices bounded by node count")
}

/// Recomputes the normalized adjacency of `g` from its edge set.
pub fn normalize_adjacency(g: &SpatialGraph) -> SpatialGraph {
    SpatialGraph {
        kind: g.kind,
        neighbors: g.neighbors.clone(),
        normalized: normalized_adjacency(&g.neighbors),
    }
}

/// The `k` nearest rows of `points` to row `i` by Euclidean distance,
/// excluding `i`; equal distances resolve to the lower index.
pub(crate) fn nearest(points: ArrayView2<'_, f64>, i: usize, k: usize) -> Vec<usize> {
    let origin = points.row(i);
    let mut dist: Vec<(f64, usize)> = points
        .outer_iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(j, p)| {
            let d2: f64 = p.iter().zip(origin).map(|(a, b)| (a - b) * (a - b)).sum();
            (d2, j)
        })
        .collect();
    let by_distance = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < dist.len() {
        dist.select_nth_unstable_by(k, by_distance);
        dist.truncate(k);
    }
    dist.sort_by(by_distance);
    dist.into_iter().map(|(_, j)| j).collect()
}

/// Connects every row of `points` to its `k` nearest other rows, then
/// symmetrizes by union.
pub fn knn_graph(points: ArrayView2<'_, f64>, k: usize, kind: GraphKind) -> Result<SpatialGraph> {
    let n = points.nrows();
    if n <= k {
        return Err(Error::InvalidArgument(format!(
            "KNN graph needs more than K={k} points, got {n}"
        )));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("K must be >= 1".into()));
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("KNN input contains non-finite values".into()));
    }
    let chosen: Vec<Vec<usize>> = (0..n)
        .into_par_iter()
        .map(|i| nearest(points, i, k))
        .collect();
    let edges: Vec<(usize, usize)> = chosen
        .iter()
        .enumerate()
        .flat_map(|(i, list)| list.iter().map(move |&j| (i, j)))
        .collect();
    SpatialGraph::from_edges(n, &edges, kind)
}

/// Seeded node shuffle used to build a corrupted graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorruptionPlan {
    permutation: Vec<usize>,
    seed: u64,
}

impl CorruptionPlan {
    /// Fisher–Yates shuffle of `0..n` driven by a ChaCha8 stream seeded with `seed`.
    pub fn from_seed(n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut permutation: Vec<usize> = (0..n).collect();
        permutation.shuffle(&mut rng);
        Self { permutation, seed }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            permutation: (0..n).collect(),
            seed: 0,
        }
    }

    /// Wraps an explicit permutation after checking it is a bijection.
    pub fn from_permutation(permutation: Vec<usize>, seed: u64) -> Result<Self> {
        let mut seen = vec![false; permutation.len()];
        for &p in &permutation {
            if p >= seen.len() || std::mem::replace(&mut seen[p], true) {
                return Err(Error::InvalidArgument(
                    "corruption plan is not a permutation".into(),
                ));
            }
        }
        Ok(Self { permutation, seed })
    }

    pub fn permutation(&self) -> &[usize] {
        &self.permutation
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.permutation.len()];
        for (i, &p) in self.permutation.iter().enumerate() {
            inv[p] = i;
        }
        Self {
            permutation: inv,
            seed: self.seed,
        }
    }
}

/// Row `i` of the output is row `plan.permutation()[i]` of `x`.
pub fn corrupt_features(x: ArrayView2<'_, f64>, plan: &CorruptionPlan) -> Result<Array2<f64>> {
    if plan.permutation.len() != x.nrows() {
        return Err(Error::Dimension(format!(
            "permutation of {} rows applied to {} rows",
            plan.permutation.len(),
            x.nrows()
        )));
    }
    Ok(x.select(Axis(0), &plan.permutation))
}

/// Row-stochastic neighbor-mean operator: row `i` averages `i`'s neighbors
/// with equal weight, or is the unit self entry when `i` has none.
pub fn community_operator(g: &SpatialGraph) -> CsrMatrix {
    let n = g.n_nodes();
    let mut triplets = Vec::new();
    for i in 0..n {
        let list = g.neighbors(i);
        if list.is_empty() {
            triplets.push((i, i, 1.0));
        } else {
            let w = 1.0 / list.len() as f64;
            triplets.extend(list.iter().map(|&j| (i, j, w)));
        }
    }
    CsrMatrix::from_triplets(n, n, triplets).expect("indices bounded by node count")
}

/// Mean embedding over each node's one-step neighbors.
pub fn community_representation(z: ArrayView2<'_, f64>, g: &SpatialGraph) -> Result<Array2<f64>> {
    if z.nrows() != g.n_nodes() {
        return Err(Error::Dimension(format!(
            "{} embedding rows for a {}-node graph",
            z.nrows(),
            g.n_nodes()
        )));
    }
    community_operator(g).matmul(z)
}
