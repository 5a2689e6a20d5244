use std::collections::BTreeSet;

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;

use crate::geom::{GaussianCluster, SemanticClass};

/// Hash key: component-wise floor of the sorted side lengths over the quantum.
pub type TriangleKey = (i64, i64, i64);

/// Side index joining canonical slots `i` and `j`: (0,1) → d12, (1,2) → d23,
/// (2,0) → d31.
pub(crate) fn side_index(i: usize, j: usize) -> usize {
    match (i.min(j), i.max(j)) {
        (0, 1) => 0,
        (1, 2) => 1,
        (0, 2) => 2,
        _ => unreachable!("slots must be distinct and < 3"),
    }
}

/// Three clusters with sorted side lengths.
///
/// Slots are ordered so that `sides[0] = d12 ≤ sides[1] = d23 ≤ sides[2] = d31`,
/// where `dij` joins slot `i` and slot `j` (1-based). Equal lengths are broken
/// by the sorted id pair of the side, which keeps the order deterministic.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleDescriptor {
    pub vertex_ids: [usize; 3],
    pub sides: [f64; 3],
    pub labels: [SemanticClass; 3],
    pub covariances: [Matrix3<f64>; 3],
}

impl TriangleDescriptor {
    /// Builds the canonical descriptor for three distinct cluster ids.
    pub fn new(ids: [usize; 3], clusters: &[GaussianCluster]) -> Self {
        let c = |id: usize| &clusters[id].centroid;
        let mut edges = [
            (ids[0], ids[1]),
            (ids[1], ids[2]),
            (ids[0], ids[2]),
        ]
        .map(|(a, b)| {
            let len = (c(a) - c(b)).norm();
            (len, a.min(b), a.max(b))
        });
        edges.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));

        let (s0, s1) = (edges[0], edges[1]);
        // slot 2 is shared by d12 and d23
        let v2 = if s0.1 == s1.1 || s0.1 == s1.2 { s0.1 } else { s0.2 };
        let v1 = if s0.1 == v2 { s0.2 } else { s0.1 };
        let v3 = if s1.1 == v2 { s1.2 } else { s1.1 };
        let vertex_ids = [v1, v2, v3];

        Self {
            vertex_ids,
            sides: [edges[0].0, edges[1].0, edges[2].0],
            labels: vertex_ids.map(|id| clusters[id].label),
            covariances: vertex_ids.map(|id| clusters[id].covariance),
        }
    }

    pub fn key(&self, quantum: f64) -> TriangleKey {
        quantize_key(&self.sides, quantum)
    }

    pub fn sorted_ids(&self) -> [usize; 3] {
        let mut ids = self.vertex_ids;
        ids.sort_unstable();
        ids
    }

    pub fn side_between(&self, i: usize, j: usize) -> f64 {
        self.sides[side_index(i, j)]
    }
}

pub fn quantize_key(sides: &[f64; 3], quantum: f64) -> TriangleKey {
    let q = |d: f64| (d / quantum).floor() as i64;
    (q(sides[0]), q(sides[1]), q(sides[2]))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriangulationParams {
    pub k_neighbors: usize,
    pub min_side: f64,
    pub max_side: f64,
    pub min_area: f64,
}

impl From<&crate::config::RunConfig> for TriangulationParams {
    fn from(cfg: &crate::config::RunConfig) -> Self {
        Self {
            k_neighbors: cfg.k_neighbors,
            min_side: cfg.min_side,
            max_side: cfg.max_side,
            min_area: cfg.min_triangle_area,
        }
    }
}

fn triangle_area(a: &Vector3<f64>, b: &Vector3<f64>, c: &Vector3<f64>) -> f64 {
    0.5 * (b - a).cross(&(c - a)).norm()
}

/// Ids of the `k` clusters closest to `anchor` (ties broken by id).
fn nearest(clusters: &[GaussianCluster], anchor: usize, k: usize) -> Vec<usize> {
    let a = clusters[anchor].centroid;
    let mut d: Vec<(f64, usize)> = clusters
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != anchor)
        .map(|(j, c)| ((c.centroid - a).norm_squared(), j))
        .collect();
    let by = |x: &(f64, usize), y: &(f64, usize)| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1));
    if d.len() > k {
        d.select_nth_unstable_by(k, by);
        d.truncate(k);
    }
    d.sort_by(by);
    d.into_iter().map(|(_, j)| j).collect()
}

/// Whether a triangle passes the side-length and area filters.
pub fn is_admissible(t: &TriangleDescriptor, clusters: &[GaussianCluster], params: &TriangulationParams) -> bool {
    if t.sides[0] < params.min_side || t.sides[2] > params.max_side {
        return false;
    }
    let [a, b, c] = t.vertex_ids.map(|id| clusters[id].centroid);
    triangle_area(&a, &b, &c) >= params.min_area
}

/// Forms every anchor + neighbor-pair triangle over each cluster's `K` nearest
/// neighbors, deduplicated by vertex set and sorted by sorted vertex ids.
pub fn triangulate(clusters: &[GaussianCluster], params: &TriangulationParams) -> Vec<TriangleDescriptor> {
    if clusters.len() < 3 {
        return Vec::new();
    }
    let triples: Vec<[usize; 3]> = (0..clusters.len())
        .into_par_iter()
        .flat_map_iter(|anchor| {
            let nn = nearest(clusters, anchor, params.k_neighbors);
            let mut out = Vec::with_capacity(nn.len() * nn.len().saturating_sub(1) / 2);
            for (i, &a) in nn.iter().enumerate() {
                for &b in &nn[i + 1..] {
                    let mut t = [anchor, a, b];
                    t.sort_unstable();
                    out.push(t);
                }
            }
            out
        })
        .collect();
    let unique: BTreeSet<[usize; 3]> = triples.into_iter().collect();
    let unique: Vec<[usize; 3]> = unique.into_iter().collect();
    unique
        .into_par_iter()
        .map(|ids| TriangleDescriptor::new(ids, clusters))
        .filter(|t| is_admissible(t, clusters, params))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Pose;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cl(p: [f64; 3]) -> GaussianCluster {
        GaussianCluster::new(SemanticClass::POLE, Vector3::from(p), Matrix3::identity() * 0.1, 30)
    }

    fn params(k: usize) -> TriangulationParams {
        TriangulationParams {
            k_neighbors: k,
            min_side: 1.0,
            max_side: 120.0,
            min_area: 0.5,
        }
    }

    #[test]
    fn right_triangle_345() {
        let cs = vec![cl([0.0, 0.0, 0.0]), cl([3.0, 0.0, 0.0]), cl([0.0, 4.0, 0.0])];
        let tris = triangulate(&cs, &params(10));
        assert_eq!(tris.len(), 1);
        let t = &tris[0];
        assert_eq!(t.sides, [3.0, 4.0, 5.0]);
        // d12 = 3 joins (0,0,0)-(3,0,0); d23 = 4 joins (0,0,0)-(0,4,0)
        assert_eq!(t.vertex_ids, [1, 0, 2]);
        for (i, j) in [(0, 1), (1, 2), (2, 0)] {
            let len = (cs[t.vertex_ids[i]].centroid - cs[t.vertex_ids[j]].centroid).norm();
            assert_eq!(len, t.side_between(i, j));
        }
    }

    #[test]
    fn collinear_rejected() {
        let cs = vec![cl([0.0, 0.0, 0.0]), cl([3.0, 0.0, 0.0]), cl([7.0, 0.0, 0.0])];
        assert!(triangulate(&cs, &params(10)).is_empty());
        assert!(triangulate(&cs[..2], &params(10)).is_empty());
    }

    #[test]
    fn exhaustive_count_when_k_covers_all() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let cs: Vec<_> = (0..10)
            .map(|_| cl([rng.random_range(0.0..40.0), rng.random_range(0.0..40.0), rng.random_range(0.0..10.0)]))
            .collect();
        let tris = triangulate(&cs, &params(9));
        // exhaustive oracle over all triples
        let mut oracle = 0;
        for a in 0..10 {
            for b in a + 1..10 {
                for c in b + 1..10 {
                    let t = TriangleDescriptor::new([a, b, c], &cs);
                    if is_admissible(&t, &cs, &params(9)) {
                        oracle += 1;
                    }
                }
            }
        }
        assert_eq!(oracle, 120);
        assert_eq!(tris.len(), 120);
    }

    #[test]
    fn canonical_order_invariants() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let cs: Vec<_> = (0..60)
            .map(|_| cl([rng.random_range(0.0..80.0), rng.random_range(0.0..80.0), rng.random_range(0.0..5.0)]))
            .collect();
        for t in triangulate(&cs, &params(6)) {
            assert!(t.sides[0] <= t.sides[1] && t.sides[1] <= t.sides[2]);
            assert!(t.sides[2] <= t.sides[0] + t.sides[1] + 1e-9);
            let ids = t.sorted_ids();
            assert!(ids[0] < ids[1] && ids[1] < ids[2]);
            for (i, j) in [(0, 1), (1, 2), (2, 0)] {
                let len = (cs[t.vertex_ids[i]].centroid - cs[t.vertex_ids[j]].centroid).norm();
                assert_eq!(len, t.side_between(i, j));
            }
        }
    }

    #[test]
    fn quantize_examples() {
        assert_eq!(quantize_key(&[3.2, 4.7, 5.1], 0.5), (6, 9, 10));
        assert_eq!(quantize_key(&[2.0, 2.0, 2.0], 0.5), (4, 4, 4));
    }

    #[test]
    fn keys_are_rigid_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..200 {
            let cs: Vec<_> = (0..3)
                .map(|_| cl([rng.random_range(-30.0..30.0), rng.random_range(-30.0..30.0), rng.random_range(-30.0..30.0)]))
                .collect();
            let pose = Pose::from_axis_angle(
                Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0)),
                rng.random_range(-3.0..3.0),
                Vector3::from_fn(|_, _| rng.random_range(-100.0..100.0)),
            );
            let moved: Vec<_> = cs.iter().map(|c| c.transformed(&pose)).collect();
            let a = TriangleDescriptor::new([0, 1, 2], &cs);
            let b = TriangleDescriptor::new([0, 1, 2], &moved);
            for i in 0..3 {
                assert!((a.sides[i] - b.sides[i]).abs() < 1e-9);
            }
        }
    }
}
