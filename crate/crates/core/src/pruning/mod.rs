//! Outlier pruning: pairwise-consistency graph and maximum clique.

mod bitset;
mod clique;
mod graph;

pub use bitset::BitSet;
pub use clique::{brute_force_max_clique, core_decomposition, max_clique, CliqueResult};
pub use graph::{build_consistency_graph, ConsistencyGraph, Graph};

use crate::config::RunConfig;
use crate::error::Result;
use crate::geom::GaussianCluster;
use crate::scene_graph::Correspondence;

/// Pruned correspondence set with the clique that selected it.
#[derive(Debug, Clone)]
pub struct PruneResult {
    pub inliers: Vec<Correspondence>,
    pub clique: CliqueResult,
    pub graph_vertices: usize,
    pub graph_edges: usize,
}

/// Builds the consistency graph and keeps the correspondences of its
/// maximum clique.
pub fn prune_correspondences(
    correspondences: &[Correspondence],
    query: &[GaussianCluster],
    map: &[GaussianCluster],
    config: &RunConfig,
) -> Result<PruneResult> {
    let cg = build_consistency_graph(correspondences, query, map, config)?;
    let clique = max_clique(&cg.graph, config.clique_time_budget);
    if !clique.exact {
        log::warn!(
            "clique search hit the {:?} budget; returning size {}",
            config.clique_time_budget,
            clique.len()
        );
    }
    Ok(PruneResult {
        inliers: clique.vertices.iter().map(|&i| cg.correspondences[i]).collect(),
        graph_vertices: cg.graph.len(),
        graph_edges: cg.graph.edge_count(),
        clique,
    })
}
