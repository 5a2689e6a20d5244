use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector3;
use rayon::prelude::*;

use super::bitset::BitSet;
use crate::config::{ConsistencyMetric, RunConfig};
use crate::error::{Error, Result};
use crate::geom::GaussianCluster;
use crate::scene_graph::Correspondence;

/// Undirected simple graph stored as adjacency bitsets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    rows: Vec<BitSet>,
}

impl Graph {
    pub fn new(n: usize) -> Self {
        Self {
            rows: (0..n).map(|_| BitSet::new(n)).collect(),
        }
    }

    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut g = Self::new(n);
        for (a, b) in edges {
            g.add_edge(a, b);
        }
        g
    }

    pub(crate) fn from_rows(rows: Vec<BitSet>) -> Self {
        Self { rows }
    }

    /// Self-loops are ignored.
    pub fn add_edge(&mut self, a: usize, b: usize) {
        if a != b {
            self.rows[a].insert(b);
            self.rows[b].insert(a);
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.rows[a].contains(b)
    }

    pub fn neighbors(&self, v: usize) -> &BitSet {
        &self.rows[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.rows[v].count()
    }

    pub fn edge_count(&self) -> usize {
        self.rows.iter().map(BitSet::count).sum::<usize>() / 2
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(i, r)| r.iter().filter(move |&j| j > i).map(move |j| (i, j)))
    }

    pub fn is_clique(&self, vertices: &[usize]) -> bool {
        vertices
            .iter()
            .enumerate()
            .all(|(k, &a)| vertices[k + 1..].iter().all(|&b| a != b && self.has_edge(a, b)))
    }

    /// Edge-list dump: header `n m`, then one `i j` line per edge with `i < j`.
    pub fn write_edge_list(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::new();
        writeln!(out, "{} {}", self.len(), self.edge_count()).unwrap();
        for (i, j) in self.edges() {
            writeln!(out, "{i} {j}").unwrap();
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// One vertex per correspondence; edges join mutually consistent pairs.
#[derive(Debug, Clone)]
pub struct ConsistencyGraph {
    pub graph: Graph,
    pub correspondences: Vec<Correspondence>,
}

impl ConsistencyGraph {
    pub fn len(&self) -> usize {
        self.graph.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graph.is_empty()
    }
}

struct Endpoint<'a> {
    query: &'a GaussianCluster,
    map: &'a GaussianCluster,
}

fn consistent(a: &Endpoint, b: &Endpoint, metric: ConsistencyMetric, eps: f64) -> bool {
    let dq: Vector3<f64> = a.query.centroid - b.query.centroid;
    let dm: Vector3<f64> = a.map.centroid - b.map.centroid;
    if (dq.norm() - dm.norm()).abs() > eps {
        return false;
    }
    match metric {
        ConsistencyMetric::Euclidean => true,
        ConsistencyMetric::Wasserstein => {
            // rotation-invariant spread of the difference Gaussians
            let sq = (a.query.covariance + b.query.covariance).trace().max(0.0).sqrt();
            let sm = (a.map.covariance + b.map.covariance).trace().max(0.0).sqrt();
            (sq - sm).abs() <= eps
        }
    }
}

/// Builds the pairwise-consistency graph. Two correspondences are adjacent
/// when they involve distinct query clusters and distinct map clusters and
/// their pairwise geometry agrees within `epsilon`.
pub fn build_consistency_graph(
    correspondences: &[Correspondence],
    query: &[GaussianCluster],
    map: &[GaussianCluster],
    config: &RunConfig,
) -> Result<ConsistencyGraph> {
    let endpoints: Vec<Endpoint> = correspondences
        .iter()
        .map(|c| {
            Ok(Endpoint {
                query: query.get(c.query_id).ok_or(Error::UnknownCluster(c.query_id))?,
                map: map.get(c.map_id).ok_or(Error::UnknownCluster(c.map_id))?,
            })
        })
        .collect::<Result<_>>()?;
    let n = correspondences.len();
    let rows: Vec<BitSet> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut row = BitSet::new(n);
            let ci = &correspondences[i];
            for (j, cj) in correspondences.iter().enumerate() {
                if i != j
                    && ci.query_id != cj.query_id
                    && ci.map_id != cj.map_id
                    && consistent(&endpoints[i], &endpoints[j], config.consistency_metric, config.epsilon)
                {
                    row.insert(j);
                }
            }
            row
        })
        .collect();
    Ok(ConsistencyGraph {
        graph: Graph::from_rows(rows),
        correspondences: correspondences.to_vec(),
    })
}
