use std::collections::{BTreeSet, HashMap};

use rayon::prelude::*;

use super::triangle::{side_index, triangulate, TriangleDescriptor, TriangleKey, TriangulationParams};
use crate::config::RunConfig;
use crate::geom::{shape_distance, GaussianCluster};
use crate::ingest::ClusterMap;

/// Hash table from quantized sorted side lengths to map triangles.
#[derive(Debug, Clone)]
pub struct DescriptorDb {
    pub quantum: f64,
    triangles: Vec<TriangleDescriptor>,
    buckets: HashMap<TriangleKey, Vec<usize>>,
}

/// Verification thresholds applied to hash-table candidates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueryParams {
    pub quantum: f64,
    pub wasserstein_threshold: f64,
    pub semantic: bool,
}

impl From<&RunConfig> for QueryParams {
    fn from(cfg: &RunConfig) -> Self {
        Self {
            quantum: cfg.side_quantum,
            wasserstein_threshold: cfg.wasserstein_threshold,
            semantic: cfg.semantic,
        }
    }
}

/// A retrieved map triangle together with every slot alignment that passed
/// verification. `alignment[i]` is the map slot matched to query slot `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMatch<'a> {
    pub triangle: &'a TriangleDescriptor,
    pub alignments: Vec<[usize; 3]>,
}

const PERMUTATIONS: [[usize; 3]; 6] = [
    [0, 1, 2],
    [1, 2, 0],
    [2, 0, 1],
    [0, 2, 1],
    [2, 1, 0],
    [1, 0, 2],
];

impl DescriptorDb {
    pub fn empty(quantum: f64) -> Self {
        Self {
            quantum,
            triangles: Vec::new(),
            buckets: HashMap::new(),
        }
    }

    /// Inserts triangles, skipping any whose vertex set is already present.
    pub fn from_triangles(quantum: f64, triangles: impl IntoIterator<Item = TriangleDescriptor>) -> Self {
        let mut db = Self::empty(quantum);
        let mut seen = BTreeSet::new();
        for t in triangles {
            if seen.insert(t.sorted_ids()) {
                db.insert(t);
            }
        }
        db
    }

    fn insert(&mut self, t: TriangleDescriptor) {
        let key = t.key(self.quantum);
        self.buckets.entry(key).or_default().push(self.triangles.len());
        self.triangles.push(t);
    }

    pub fn triangles(&self) -> &[TriangleDescriptor] {
        &self.triangles
    }

    pub fn len(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn bucket(&self, key: &TriangleKey) -> &[usize] {
        self.buckets.get(key).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn buckets(&self) -> impl Iterator<Item = (&TriangleKey, &Vec<usize>)> {
        self.buckets.iter()
    }
}

/// Triangulates the map clusters and indexes each triangle by its key.
pub fn build_db(map: &ClusterMap, config: &RunConfig) -> DescriptorDb {
    let tris = triangulate(&map.clusters, &TriangulationParams::from(config));
    DescriptorDb::from_triangles(config.side_quantum, tris)
}

fn alignment_passes(query: &TriangleDescriptor, map: &TriangleDescriptor, perm: &[usize; 3], params: &QueryParams) -> bool {
    for (i, j) in [(0, 1), (1, 2), (2, 0)] {
        let dm = map.sides[side_index(perm[i], perm[j])];
        if (query.side_between(i, j) - dm).abs() > params.quantum {
            return false;
        }
    }
    if params.semantic && (0..3).any(|i| query.labels[i] != map.labels[perm[i]]) {
        return false;
    }
    (0..3).all(|i| shape_distance(&query.covariances[i], &map.covariances[perm[i]]) <= params.wasserstein_threshold)
}

/// Retrieves map triangles similar to `query`.
///
/// The query key and its 26 neighbors are probed. A candidate is kept when
/// some slot alignment consistent with the side lengths (each within one
/// quantum) also has equal labels (semantic mode) and per-vertex shape
/// distance within the threshold. The canonical alignment is tried first;
/// other permutations only pass when sides tie within a quantum.
pub fn query_db<'a>(db: &'a DescriptorDb, query: &TriangleDescriptor, params: &QueryParams) -> Vec<TriangleMatch<'a>> {
    let (k0, k1, k2) = query.key(db.quantum);
    let mut hits: Vec<usize> = Vec::new();
    for d0 in -1..=1 {
        for d1 in -1..=1 {
            for d2 in -1..=1 {
                hits.extend_from_slice(db.bucket(&(k0 + d0, k1 + d1, k2 + d2)));
            }
        }
    }
    hits.sort_unstable();
    hits.into_iter()
        .filter_map(|idx| {
            let map = &db.triangles[idx];
            let alignments: Vec<[usize; 3]> = PERMUTATIONS
                .iter()
                .filter(|perm| alignment_passes(query, map, perm, params))
                .copied()
                .collect();
            (!alignments.is_empty()).then_some(TriangleMatch {
                triangle: map,
                alignments,
            })
        })
        .collect()
}

/// Cluster-level hypothesis: query cluster ↔ map cluster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Correspondence {
    pub query_id: usize,
    pub map_id: usize,
    /// Number of triangle alignments that produced this pair.
    pub votes: u32,
}

/// Triangulates the query, retrieves similar map triangles and turns each
/// slot alignment into vertex-to-vertex pairs. Output is deduplicated and
/// sorted by `(query_id, map_id)`.
pub fn generate_correspondences(
    query_clusters: &[GaussianCluster],
    db: &DescriptorDb,
    config: &RunConfig,
) -> Vec<Correspondence> {
    let tris = triangulate(query_clusters, &TriangulationParams::from(config));
    let params = QueryParams::from(config);
    let pairs: Vec<(usize, usize)> = tris
        .par_iter()
        .flat_map_iter(|qt| {
            let mut out = Vec::new();
            for m in query_db(db, qt, &params) {
                for perm in &m.alignments {
                    for (&q, &slot) in qt.vertex_ids.iter().zip(perm) {
                        out.push((q, m.triangle.vertex_ids[slot]));
                    }
                }
            }
            out
        })
        .collect();
    let mut votes: std::collections::BTreeMap<(usize, usize), u32> = Default::default();
    for p in pairs {
        *votes.entry(p).or_default() += 1;
    }
    votes
        .into_iter()
        .map(|((query_id, map_id), votes)| Correspondence {
            query_id,
            map_id,
            votes,
        })
        .collect()
}
