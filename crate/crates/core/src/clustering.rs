//! Class-wise Euclidean clustering of labeled points into Gaussian instances.
//!
//! Points of one canonical class are linked when their distance is at most
//! the class threshold; connected components (union-find over a voxel hash
//! with cell size equal to the threshold) become clusters.

use std::collections::{BTreeMap, HashMap};

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::config::{ClassMap, ClusterParams, RunConfig};
use crate::geom::{fit_gaussian, GaussianCluster, SemanticClass};
use crate::ingest::{ClusterMap, SemanticPointCloud};

type Cell = (i64, i64, i64);

struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
    }
}

fn cell_of(p: &Vector3<f64>, size: f64) -> Cell {
    (
        (p.x / size).floor() as i64,
        (p.y / size).floor() as i64,
        (p.z / size).floor() as i64,
    )
}

/// Connected components of `points` under `dist ≤ threshold`. Each component
/// lists point indices in ascending order; components are ordered by their
/// smallest index.
pub fn euclidean_components(points: &[Vector3<f64>], threshold: f64) -> Vec<Vec<usize>> {
    let mut grid: HashMap<Cell, Vec<usize>> = HashMap::new();
    for (i, p) in points.iter().enumerate() {
        grid.entry(cell_of(p, threshold)).or_default().push(i);
    }
    let t2 = threshold * threshold;
    let mut uf = UnionFind::new(points.len());
    for (i, p) in points.iter().enumerate() {
        let (cx, cy, cz) = cell_of(p, threshold);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    let Some(bucket) = grid.get(&(cx + dx, cy + dy, cz + dz)) else {
                        continue;
                    };
                    for &j in bucket {
                        if j > i && (points[j] - p).norm_squared() <= t2 {
                            uf.union(i, j);
                        }
                    }
                }
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let mut first_of_root: HashMap<usize, usize> = HashMap::new();
    for i in 0..points.len() {
        let root = uf.find(i);
        let first = *first_of_root.entry(root).or_insert(i);
        groups.entry(first).or_default().push(i);
    }
    groups.into_values().collect()
}

fn lexicographic_min(points: &[Vector3<f64>]) -> [f64; 3] {
    points
        .iter()
        .map(|p| [p.x, p.y, p.z])
        .min_by(|a, b| {
            a[0].total_cmp(&b[0])
                .then(a[1].total_cmp(&b[1]))
                .then(a[2].total_cmp(&b[2]))
        })
        .expect("component is non-empty")
}

/// Deterministic stride subsampling down to at most `cap` points.
fn capped_indices(n: usize, cap: usize) -> Vec<usize> {
    if n <= cap {
        (0..n).collect()
    } else {
        let stride = n.div_ceil(cap);
        (0..n).step_by(stride).collect()
    }
}

/// Clusters every class covered by `class_map` and fits each component with
/// at least `min_points` points. Output is sorted by class, then by the
/// lexicographically smallest member point.
pub fn cluster_cloud(cloud: &SemanticPointCloud, params: &ClusterParams, class_map: &ClassMap) -> Vec<GaussianCluster> {
    let mut by_class: BTreeMap<SemanticClass, Vec<Vector3<f64>>> = BTreeMap::new();
    for i in capped_indices(cloud.len(), params.max_scene_points) {
        if let Some(class) = class_map.get(cloud.labels[i]) {
            by_class.entry(class).or_default().push(cloud.points[i]);
        }
    }
    let per_class: Vec<Vec<([f64; 3], GaussianCluster)>> = by_class
        .into_par_iter()
        .map(|(class, pts)| {
            let mut out: Vec<_> = euclidean_components(&pts, params.threshold(class))
                .into_iter()
                .filter(|c| c.len() >= params.min_points)
                .map(|idx| {
                    let members: Vec<Vector3<f64>> = idx.iter().map(|&i| pts[i]).collect();
                    let g = fit_gaussian(&members, class).expect("component is non-empty");
                    (lexicographic_min(&members), g)
                })
                .collect();
            out.sort_by(|a, b| {
                a.0[0].total_cmp(&b.0[0])
                    .then(a.0[1].total_cmp(&b.0[1]))
                    .then(a.0[2].total_cmp(&b.0[2]))
            });
            out
        })
        .collect();
    per_class.into_iter().flatten().map(|(_, g)| g).collect()
}

/// Clusters an accumulated world-frame cloud into a reference map.
pub fn cluster_map_cloud(cloud: &SemanticPointCloud, config: &RunConfig) -> ClusterMap {
    let clusters = cluster_cloud(cloud, &config.cluster, &config.class_map);
    ClusterMap::with_config(clusters, &config.canonical_string())
}
