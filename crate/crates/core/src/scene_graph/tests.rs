use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::config::RunConfig;
use crate::geom::{GaussianCluster, Pose, SemanticClass};
use crate::ingest::ClusterMap;

fn cluster(label: SemanticClass, p: [f64; 3]) -> GaussianCluster {
    let cov = match label {
        SemanticClass::CAR => Matrix3::from_diagonal(&Vector3::new(1.0, 0.5, 0.3)),
        SemanticClass::POLE => Matrix3::from_diagonal(&Vector3::new(0.02, 0.02, 1.5)),
        _ => Matrix3::from_diagonal(&Vector3::new(0.1, 0.1, 0.8)),
    };
    GaussianCluster::new(label, Vector3::from(p), cov, 50)
}

fn random_world(rng: &mut ChaCha8Rng, n: usize, extent: f64) -> Vec<GaussianCluster> {
    let classes = [SemanticClass::CAR, SemanticClass::TRUNK, SemanticClass::POLE];
    (0..n)
        .map(|_| {
            cluster(
                classes[rng.random_range(0..3)],
                [rng.random_range(0.0..extent), rng.random_range(0.0..extent), rng.random_range(0.0..3.0)],
            )
        })
        .collect()
}

fn yaw_pose(rng: &mut ChaCha8Rng) -> Pose {
    Pose::from_yaw(
        rng.random_range(-3.1..3.1),
        Vector3::new(rng.random_range(-200.0..200.0), rng.random_range(-200.0..200.0), 0.0),
    )
}

#[test]
fn empty_map_gives_empty_db() {
    let db = build_db(&ClusterMap::default(), &RunConfig::default());
    assert!(db.is_empty());
}

#[test]
fn bucket_keys_match_stored_triangles() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..5 {
        let map = ClusterMap::new(random_world(&mut rng, 120, 150.0));
        let cfg = RunConfig::default();
        let db = build_db(&map, &cfg);
        assert!(!db.is_empty());
        let mut seen = std::collections::BTreeSet::new();
        for (key, idxs) in db.buckets() {
            for &i in idxs {
                assert_eq!(db.triangles()[i].key(cfg.side_quantum), *key);
            }
        }
        for t in db.triangles() {
            assert!(seen.insert(t.sorted_ids()), "duplicate triangle");
        }
    }
}

#[test]
fn self_retrieval() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let map = ClusterMap::new(random_world(&mut rng, 200, 200.0));
    let cfg = RunConfig::default();
    let db = build_db(&map, &cfg);
    let qp = QueryParams::from(&cfg);
    for t in db.triangles() {
        let hits = query_db(&db, t, &qp);
        let hit = hits
            .iter()
            .find(|m| m.triangle.vertex_ids == t.vertex_ids)
            .expect("stored triangle must retrieve itself");
        assert!(hit.alignments.contains(&[0, 1, 2]));
    }
}

#[test]
fn label_mismatch_filtered_in_semantic_mode_only() {
    let map = vec![
        cluster(SemanticClass::CAR, [0.0, 0.0, 0.0]),
        cluster(SemanticClass::TRUNK, [5.0, 0.0, 0.0]),
        cluster(SemanticClass::TRUNK, [0.0, 8.0, 0.0]),
    ];
    let cfg = RunConfig::default();
    let db = build_db(&ClusterMap::new(map.clone()), &cfg);
    assert_eq!(db.len(), 1);

    // same geometry, car swapped for a trunk
    let mut query = map.clone();
    query[0] = cluster(SemanticClass::TRUNK, [0.0, 0.0, 0.0]);
    let qt = TriangleDescriptor::new([0, 1, 2], &query);
    assert!(query_db(&db, &qt, &QueryParams::from(&cfg)).is_empty());

    let geo = RunConfig {
        semantic: false,
        ..RunConfig::default()
    };
    // trunk vs car shapes are within the default shape threshold
    assert_eq!(query_db(&db, &qt, &QueryParams::from(&geo)).len(), 1);
}

#[test]
fn shape_mismatch_filtered() {
    let map = vec![
        cluster(SemanticClass::POLE, [0.0, 0.0, 0.0]),
        cluster(SemanticClass::POLE, [5.0, 0.0, 0.0]),
        cluster(SemanticClass::POLE, [0.0, 8.0, 0.0]),
    ];
    let cfg = RunConfig {
        semantic: false,
        ..RunConfig::default()
    };
    let db = build_db(&ClusterMap::new(map.clone()), &cfg);
    let mut query = map.clone();
    query[0] = cluster(SemanticClass::CAR, [0.0, 0.0, 0.0]);
    let qt = TriangleDescriptor::new([0, 1, 2], &query);
    assert!(query_db(&db, &qt, &QueryParams::from(&cfg)).is_empty());
}

#[test]
fn neighbor_probing_recovers_bin_straddle() {
    let cfg = RunConfig::default();
    let q = cfg.side_quantum;
    // d12 = 3 m sits exactly on a bin edge
    let map = vec![
        cluster(SemanticClass::POLE, [0.0, 0.0, 0.0]),
        cluster(SemanticClass::POLE, [3.0, 0.0, 0.0]),
        cluster(SemanticClass::POLE, [0.0, 7.0, 0.0]),
    ];
    let db = build_db(&ClusterMap::new(map.clone()), &cfg);
    assert_eq!(db.len(), 1);
    let stored = db.triangles()[0].key(q);

    let mut query = map.clone();
    query[1].centroid.x = 3.0 - 0.6 * q;
    let qt = TriangleDescriptor::new([0, 1, 2], &query);
    assert_ne!(qt.key(q), stored, "perturbation must cross a bin edge");
    let hits = query_db(&db, &qt, &QueryParams::from(&cfg));
    assert_eq!(hits.len(), 1);
}

#[test]
fn identity_query_recovers_identity_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let clusters = random_world(&mut rng, 60, 100.0);
    let cfg = RunConfig::default();
    let db = build_db(&ClusterMap::new(clusters.clone()), &cfg);
    let corr = generate_correspondences(&clusters, &db, &cfg);
    let tris = triangulate(&clusters, &TriangulationParams::from(&cfg));
    let in_triangle: std::collections::BTreeSet<usize> = tris.iter().flat_map(|t| t.vertex_ids).collect();
    assert!(!in_triangle.is_empty());
    for id in in_triangle {
        assert!(corr.iter().any(|c| c.query_id == id && c.map_id == id), "missing {id}");
    }
    // sorted, deduplicated
    assert!(corr.windows(2).all(|w| (w[0].query_id, w[0].map_id) < (w[1].query_id, w[1].map_id)));
    assert!(corr.iter().all(|c| c.votes >= 1));
}

#[test]
fn rigid_copy_recovers_ground_truth_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(34);
    let cfg = RunConfig::default();
    for _ in 0..5 {
        let map = random_world(&mut rng, 80, 120.0);
        let db = build_db(&ClusterMap::new(map.clone()), &cfg);
        let pose = yaw_pose(&mut rng);
        let query: Vec<_> = map.iter().map(|c| c.transformed(&pose)).collect();
        let corr = generate_correspondences(&query, &db, &cfg);
        let tris = triangulate(&query, &TriangulationParams::from(&cfg));
        for t in &tris {
            for id in t.vertex_ids {
                assert!(corr.iter().any(|c| c.query_id == id && c.map_id == id));
            }
        }
    }
}

#[test]
fn correspondences_are_supported_by_a_triangle_pair() {
    let mut rng = ChaCha8Rng::seed_from_u64(35);
    let cfg = RunConfig::default();
    let map = random_world(&mut rng, 100, 150.0);
    let db = build_db(&ClusterMap::new(map.clone()), &cfg);
    let query: Vec<_> = random_world(&mut rng, 30, 60.0);
    let corr = generate_correspondences(&query, &db, &cfg);
    let qtris = triangulate(&query, &TriangulationParams::from(&cfg));
    for c in &corr {
        let supported = qtris.iter().filter(|qt| qt.vertex_ids.contains(&c.query_id)).any(|qt| {
            db.triangles().iter().filter(|mt| mt.vertex_ids.contains(&c.map_id)).any(|mt| {
                (0..3).all(|s| {
                    let mut qs = qt.sides;
                    let mut ms = mt.sides;
                    qs.sort_by(f64::total_cmp);
                    ms.sort_by(f64::total_cmp);
                    (qs[s] - ms[s]).abs() <= cfg.side_quantum
                })
            })
        });
        assert!(supported, "{c:?} lacks a supporting triangle pair");
    }
}

#[test]
fn equilateral_emits_all_rotations() {
    let h = 3f64.sqrt() / 2.0 * 6.0;
    let pts = [[0.0, 0.0, 0.0], [6.0, 0.0, 0.0], [3.0, h, 0.0]];
    let map: Vec<_> = pts.iter().map(|p| cluster(SemanticClass::POLE, *p)).collect();
    let cfg = RunConfig::default();
    let db = build_db(&ClusterMap::new(map.clone()), &cfg);
    let corr = generate_correspondences(&map, &db, &cfg);
    let pairs: std::collections::BTreeSet<(usize, usize)> = corr.iter().map(|c| (c.query_id, c.map_id)).collect();
    for shift in 0..3 {
        for q in 0..3 {
            assert!(pairs.contains(&(q, (q + shift) % 3)), "rotation {shift} missing");
        }
    }
}

#[test]
fn output_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(36);
    let cfg = RunConfig::default();
    let map = random_world(&mut rng, 150, 150.0);
    let db = build_db(&ClusterMap::new(map.clone()), &cfg);
    let pose = yaw_pose(&mut rng);
    let query: Vec<_> = map[..40].iter().map(|c| c.transformed(&pose)).collect();
    let a = generate_correspondences(&query, &db, &cfg);
    let b = generate_correspondences(&query, &db, &cfg);
    assert_eq!(a, b);
}
