use std::fmt;
use std::time::{Duration, Instant};

use crate::clustering::cluster_cloud;
use crate::config::RunConfig;
use crate::error::Result;
use crate::geom::{GaussianCluster, Pose};
use crate::ingest::{ClusterMap, SemanticPointCloud};
use crate::pruning::prune_correspondences;
use crate::scene_graph::{generate_correspondences, DescriptorDb};
use crate::solver::{gnc_tls_register, GncParams, RegistrationResult};

/// Declared localization failure; no pose is produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FailureCause {
    NoCorrespondences,
    CliqueTooSmall,
    Degenerate,
}

impl FailureCause {
    pub fn as_str(self) -> &'static str {
        match self {
            FailureCause::NoCorrespondences => "no_correspondences",
            FailureCause::CliqueTooSmall => "clique_too_small",
            FailureCause::Degenerate => "degenerate",
        }
    }
}

impl fmt::Display for FailureCause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Wall-clock time per stage.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimings {
    pub clustering: Duration,
    /// Query triangulation and descriptor retrieval.
    pub retrieval: Duration,
    /// Consistency graph and maximum clique.
    pub pruning: Duration,
    pub solve: Duration,
    pub total: Duration,
}

impl StageTimings {
    pub fn stage_sum(&self) -> Duration {
        self.clustering + self.retrieval + self.pruning + self.solve
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    pub query_clusters: usize,
    pub correspondences: usize,
    pub graph_edges: usize,
    pub clique_size: usize,
    pub clique_exact: bool,
    pub inlier_count: usize,
    pub gnc_iterations: usize,
    pub timings: StageTimings,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Localization {
    pub outcome: std::result::Result<RegistrationResult, FailureCause>,
    pub diagnostics: Diagnostics,
}

impl Localization {
    pub fn pose(&self) -> Option<&Pose> {
        self.outcome.as_ref().ok().map(|r| &r.pose)
    }

    pub fn failure(&self) -> Option<FailureCause> {
        self.outcome.as_ref().err().copied()
    }
}

/// Localizes query clusters (sensor frame) against the map. The returned
/// pose maps query coordinates into the map frame.
pub fn localize(query: &[GaussianCluster], map: &ClusterMap, db: &DescriptorDb, config: &RunConfig) -> Result<Localization> {
    let start = Instant::now();
    let mut diag = Diagnostics {
        query_clusters: query.len(),
        ..Diagnostics::default()
    };
    let outcome = run_stages(query, map, db, config, &mut diag)?;
    diag.timings.total = start.elapsed();
    Ok(Localization {
        outcome,
        diagnostics: diag,
    })
}

fn run_stages(
    query: &[GaussianCluster],
    map: &ClusterMap,
    db: &DescriptorDb,
    config: &RunConfig,
    diag: &mut Diagnostics,
) -> Result<std::result::Result<RegistrationResult, FailureCause>> {
    let t = Instant::now();
    let corrs = generate_correspondences(query, db, config);
    diag.timings.retrieval = t.elapsed();
    diag.correspondences = corrs.len();
    if corrs.is_empty() {
        return Ok(Err(FailureCause::NoCorrespondences));
    }

    let t = Instant::now();
    let pruned = prune_correspondences(&corrs, query, &map.clusters, config)?;
    diag.timings.pruning = t.elapsed();
    diag.graph_edges = pruned.graph_edges;
    diag.clique_size = pruned.clique.len();
    diag.clique_exact = pruned.clique.exact;
    if pruned.inliers.len() < 3 {
        return Ok(Err(FailureCause::CliqueTooSmall));
    }

    let t = Instant::now();
    let q: Vec<_> = pruned.inliers.iter().map(|c| query[c.query_id].centroid).collect();
    let m: Vec<_> = pruned.inliers.iter().map(|c| map.clusters[c.map_id].centroid).collect();
    let reg = gnc_tls_register(&q, &m, &GncParams::from(config))?;
    diag.timings.solve = t.elapsed();
    diag.inlier_count = reg.inlier_count;
    diag.gnc_iterations = reg.iterations;
    if reg.degenerate {
        return Ok(Err(FailureCause::Degenerate));
    }
    Ok(Ok(reg))
}

/// Clusters a labeled scan and localizes it.
pub fn localize_scan(scan: &SemanticPointCloud, map: &ClusterMap, db: &DescriptorDb, config: &RunConfig) -> Result<Localization> {
    let start = Instant::now();
    let query = cluster_cloud(scan, &config.cluster, &config.class_map);
    let clustering = start.elapsed();
    let mut loc = localize(&query, map, db, config)?;
    loc.diagnostics.timings.clustering = clustering;
    loc.diagnostics.timings.total = start.elapsed();
    Ok(loc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{pose_error, SemanticClass};
    use crate::harness::synth::{synth_scene, SynthParams};
    use crate::scene_graph::build_db;
    use nalgebra::{Matrix3, Vector3};

    fn noiseless() -> SynthParams {
        SynthParams {
            sigma: 0.0,
            outlier_fraction: 0.0,
            dropout_fraction: 0.0,
            ..SynthParams::default()
        }
    }

    #[test]
    fn noiseless_scene_is_exact() {
        let cfg = RunConfig::default();
        let (map, q) = synth_scene(&noiseless()).unwrap();
        let db = build_db(&map, &cfg);
        let loc = localize(&q.clusters, &map, &db, &cfg).unwrap();
        let pose = loc.pose().expect("localized");
        let e = pose_error(pose, &q.ground_truth);
        assert!(e.e_trans < 1e-6 && e.e_rot < 1e-6, "{e:?}");
        assert_eq!(loc.diagnostics.clique_size, q.clusters.len());
    }

    #[test]
    fn minimal_triangle_query() {
        let cov = Matrix3::from_diagonal(&Vector3::new(0.3, 0.2, 0.1));
        let map = ClusterMap::new(vec![
            GaussianCluster::new(SemanticClass::CAR, Vector3::new(0.0, 0.0, 0.0), cov, 50),
            GaussianCluster::new(SemanticClass::POLE, Vector3::new(6.0, 0.0, 0.5), cov, 50),
            GaussianCluster::new(SemanticClass::TRUNK, Vector3::new(1.0, 8.0, 1.0), cov, 50),
        ]);
        let gt = Pose::from_yaw(0.8, Vector3::new(3.0, -4.0, 0.2));
        let query: Vec<_> = map.clusters.iter().rev().map(|c| c.transformed(&gt.inverse())).collect();
        let cfg = RunConfig::default();
        let db = build_db(&map, &cfg);
        let loc = localize(&query, &map, &db, &cfg).unwrap();
        let e = pose_error(loc.pose().expect("localized"), &gt);
        assert!(e.e_trans < 1e-9 && e.e_rot < 1e-6, "{e:?}");
    }

    #[test]
    fn zero_overlap_fails_explicitly() {
        let cfg = RunConfig::default();
        let (map, _) = synth_scene(&noiseless()).unwrap();
        let db = build_db(&map, &cfg);
        // no map cluster carries this class
        let query: Vec<_> = (0..12)
            .map(|i| {
                let a = i as f64 * 0.7;
                GaussianCluster::new(
                    SemanticClass(40),
                    Vector3::new(10.0 * a.cos() + i as f64, 10.0 * a.sin(), 1.0),
                    Matrix3::identity() * 0.2,
                    40,
                )
            })
            .collect();
        let loc = localize(&query, &map, &db, &cfg).unwrap();
        assert!(loc.pose().is_none());
        assert_eq!(loc.failure(), Some(FailureCause::NoCorrespondences));
    }

    #[test]
    fn empty_query_fails() {
        let cfg = RunConfig::default();
        let (map, _) = synth_scene(&noiseless()).unwrap();
        let db = build_db(&map, &cfg);
        let loc = localize(&[], &map, &db, &cfg).unwrap();
        assert_eq!(loc.failure(), Some(FailureCause::NoCorrespondences));
    }

    #[test]
    fn collinear_support_is_degenerate() {
        let cov = Matrix3::from_diagonal(&Vector3::new(0.3, 0.2, 0.1));
        // wide isoceles triangles whose apex sits 0.01 m off the line
        let map = ClusterMap::new(
            [0.0, 7.0, 15.0, 3.5]
                .iter()
                .enumerate()
                .map(|(i, &x)| {
                    let y = if i == 3 { 0.05 } else { 0.0 };
                    GaussianCluster::new(SemanticClass::CAR, Vector3::new(x, y, 0.0), cov, 50)
                })
                .collect(),
        );
        let cfg = RunConfig {
            min_triangle_area: 0.1,
            ..RunConfig::default()
        };
        let db = build_db(&map, &cfg);
        let loc = localize(&map.clusters, &map, &db, &cfg).unwrap();
        assert!(loc.pose().is_none());
        assert_eq!(loc.failure(), Some(FailureCause::Degenerate));
    }

    #[test]
    fn timings_cover_total() {
        let cfg = RunConfig::default();
        let (map, q) = synth_scene(&SynthParams::default()).unwrap();
        let db = build_db(&map, &cfg);
        let loc = localize(&q.clusters, &map, &db, &cfg).unwrap();
        let t = loc.diagnostics.timings;
        assert!(t.stage_sum() <= t.total);
    }
}
