//! Synthetic cluster maps and queries with known ground truth.
//!
//! Parameter file keys (flat TOML, all optional):
//!
//! | key | default |
//! |---|---|
//! | `extent` | 500.0 m, side of the square world |
//! | `cluster_count` | 500 |
//! | `class_mix` | `[1.0, 1.0, 1.0]` relative weights of car, trunk, pole |
//! | `radius` | 60.0 m, horizontal query radius |
//! | `sigma` | 0.1 m, centroid noise |
//! | `outlier_fraction` | 0.3, share of the query made of outlier clusters |
//! | `dropout_fraction` | 0.1, share of in-radius clusters missing from the query |
//! | `seed` | 42 |
//! | `full_rotation` | false (yaw only) |
//! | `template_car` / `template_trunk` / `template_pole` | diagonal covariances `[1.0, 0.5, 0.3]` / `[0.1, 0.1, 0.8]` / `[0.02, 0.02, 1.5]` |

use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::config::{cfg_err, positive, KeyValues};
use crate::error::{Error, Result};
use crate::geom::{GaussianCluster, Pose, SemanticClass};
use crate::ingest::ClusterMap;

const CLASSES: [SemanticClass; 3] = [SemanticClass::CAR, SemanticClass::TRUNK, SemanticClass::POLE];
const MIN_QUERY_CLUSTERS: usize = 10;
const MAX_ATTEMPTS: usize = 100;
/// Vertical spread of cluster centroids.
const HEIGHT: f64 = 3.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    pub extent: f64,
    pub cluster_count: usize,
    /// Relative weights of car, trunk, pole.
    pub class_mix: [f64; 3],
    pub radius: f64,
    pub sigma: f64,
    pub outlier_fraction: f64,
    pub dropout_fraction: f64,
    pub seed: u64,
    pub full_rotation: bool,
    /// Diagonal covariance templates of car, trunk, pole.
    pub templates: [Vector3<f64>; 3],
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            extent: 500.0,
            cluster_count: 500,
            class_mix: [1.0, 1.0, 1.0],
            radius: 60.0,
            sigma: 0.1,
            outlier_fraction: 0.3,
            dropout_fraction: 0.1,
            seed: 42,
            full_rotation: false,
            templates: [
                Vector3::new(1.0, 0.5, 0.3),
                Vector3::new(0.1, 0.1, 0.8),
                Vector3::new(0.02, 0.02, 1.5),
            ],
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        positive("extent", self.extent)?;
        positive("radius", self.radius)?;
        if self.extent <= 2.0 * self.radius {
            return Err(cfg_err("extent", "must exceed twice the query radius"));
        }
        if self.cluster_count == 0 {
            return Err(cfg_err("cluster_count", "must be positive"));
        }
        if self.class_mix.iter().any(|w| !(*w >= 0.0 && w.is_finite())) || self.class_mix.iter().sum::<f64>() <= 0.0 {
            return Err(cfg_err("class_mix", "weights must be non-negative with a positive sum"));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(cfg_err("sigma", "must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.outlier_fraction) {
            return Err(cfg_err("outlier_fraction", "must be in [0, 1)"));
        }
        if !(0.0..1.0).contains(&self.dropout_fraction) {
            return Err(cfg_err("dropout_fraction", "must be in [0, 1)"));
        }
        for (name, t) in ["template_car", "template_trunk", "template_pole"].iter().zip(&self.templates) {
            if t.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                return Err(cfg_err(name, "variances must be non-negative"));
            }
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Format(format!("synth params: {e}")))?;
        let mut kv = KeyValues::new(table);
        let mut p = Self::default();
        kv.float_into("extent", &mut p.extent)?;
        kv.usize_into("cluster_count", &mut p.cluster_count)?;
        if let Some(v) = kv.floats("class_mix")? {
            p.class_mix = v
                .try_into()
                .map_err(|_| cfg_err("class_mix", "expected three weights (car, trunk, pole)"))?;
        }
        kv.float_into("radius", &mut p.radius)?;
        if let Some(v) = kv.float("sigma")? {
            p.sigma = v;
        }
        if let Some(v) = kv.float("outlier_fraction")? {
            p.outlier_fraction = v;
        }
        if let Some(v) = kv.float("dropout_fraction")? {
            p.dropout_fraction = v;
        }
        if let Some(v) = kv.integer("seed")? {
            p.seed = v as u64;
        }
        if let Some(v) = kv.bool("full_rotation")? {
            p.full_rotation = v;
        }
        for (i, key) in ["template_car", "template_trunk", "template_pole"].iter().enumerate() {
            if let Some(v) = kv.floats(key)? {
                let d: [f64; 3] = v
                    .try_into()
                    .map_err(|_| cfg_err(key, "expected three variances"))?;
                p.templates[i] = Vector3::from(d);
            }
        }
        kv.warn_unused("synth params");
        p.validate()?;
        Ok(p)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }
}

/// One query with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthQuery {
    /// Clusters in the sensor frame.
    pub clusters: Vec<GaussianCluster>,
    /// Sensor pose in the map frame: `map = gt.apply(query)`.
    pub ground_truth: Pose,
    /// Map id of each query cluster, `None` for injected outliers.
    pub source: Vec<Option<usize>>,
}

impl SynthQuery {
    pub fn outlier_count(&self) -> usize {
        self.source.iter().filter(|s| s.is_none()).count()
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn pick_class(rng: &mut ChaCha8Rng, mix: &[f64; 3]) -> usize {
    let total: f64 = mix.iter().sum();
    let mut x = rng.random_range(0.0..total);
    for (i, w) in mix.iter().enumerate() {
        if x < *w {
            return i;
        }
        x -= w;
    }
    mix.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

fn random_cluster(rng: &mut ChaCha8Rng, params: &SynthParams, centroid: Vector3<f64>, class: usize) -> GaussianCluster {
    let yaw = Pose::from_yaw(rng.random_range(0.0..std::f64::consts::TAU), Vector3::zeros()).rotation;
    let cov = yaw * Matrix3::from_diagonal(&params.templates[class]) * yaw.transpose();
    GaussianCluster::new(CLASSES[class], centroid, (cov + cov.transpose()) * 0.5, 100)
}

/// Uniformly distributed rotation (Shoemake's subgroup algorithm).
fn uniform_rotation(rng: &mut ChaCha8Rng) -> Matrix3<f64> {
    let (u1, u2, u3): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
    let tau = std::f64::consts::TAU;
    let (a, b) = ((1.0 - u1).sqrt(), u1.sqrt());
    let q = [a * (tau * u2).sin(), a * (tau * u2).cos(), b * (tau * u3).sin(), b * (tau * u3).cos()];
    Pose::from_quaternion(q, Vector3::zeros()).rotation
}

/// Map with clusters scattered uniformly over the world square.
pub fn synth_map(params: &SynthParams) -> Result<ClusterMap> {
    params.validate()?;
    let mut rng = rng_for(params.seed, 0);
    let clusters = (0..params.cluster_count)
        .map(|_| {
            let c = Vector3::new(
                rng.random_range(0.0..params.extent),
                rng.random_range(0.0..params.extent),
                rng.random_range(0.0..HEIGHT),
            );
            let class = pick_class(&mut rng, &params.class_mix);
            random_cluster(&mut rng, params, c, class)
        })
        .collect();
    Ok(ClusterMap::new(clusters))
}

/// Outlier count that makes `fraction` of the final query outliers.
pub fn outlier_count(inliers: usize, fraction: f64) -> usize {
    (fraction * inliers as f64 / (1.0 - fraction)).round() as usize
}

/// Query number `trial` against `map`; deterministic in `(params.seed, trial)`.
pub fn synth_query(map: &ClusterMap, params: &SynthParams, trial: u64) -> Result<SynthQuery> {
    params.validate()?;
    let mut rng = rng_for(params.seed, trial + 1);
    let r = params.radius;
    for _ in 0..MAX_ATTEMPTS {
        let origin = Vector3::new(
            rng.random_range(r..params.extent - r),
            rng.random_range(r..params.extent - r),
            0.0,
        );
        let in_radius: Vec<usize> = (0..map.len())
            .filter(|&i| (map.clusters[i].centroid - origin).xy().norm() <= r)
            .collect();
        if in_radius.len() < MIN_QUERY_CLUSTERS {
            continue;
        }
        return Ok(build_query(map, params, &mut rng, origin, in_radius));
    }
    Err(Error::InvalidParams(format!(
        "no query region with {MIN_QUERY_CLUSTERS} clusters after {MAX_ATTEMPTS} attempts"
    )))
}

fn build_query(
    map: &ClusterMap,
    params: &SynthParams,
    rng: &mut ChaCha8Rng,
    origin: Vector3<f64>,
    mut kept: Vec<usize>,
) -> SynthQuery {
    let rotation = if params.full_rotation {
        uniform_rotation(rng)
    } else {
        Pose::from_yaw(rng.random_range(0.0..std::f64::consts::TAU), Vector3::zeros()).rotation
    };
    let gt = Pose::new(rotation, origin);
    let to_sensor = gt.inverse();

    let drop = (params.dropout_fraction * kept.len() as f64).round() as usize;
    kept.shuffle(rng);
    kept.truncate(kept.len() - drop);
    kept.sort_unstable();

    let n_out = outlier_count(kept.len(), params.outlier_fraction);
    let mut world: Vec<(GaussianCluster, Option<usize>)> =
        kept.iter().map(|&i| (map.clusters[i].clone(), Some(i))).collect();
    for _ in 0..n_out {
        let (rho, phi) = (params.radius * rng.random::<f64>().sqrt(), rng.random_range(0.0..std::f64::consts::TAU));
        let c = origin + Vector3::new(rho * phi.cos(), rho * phi.sin(), rng.random_range(0.0..HEIGHT));
        let class = rng.random_range(0..CLASSES.len());
        world.push((random_cluster(rng, params, c, class), None));
    }
    world.shuffle(rng);

    let noise = Normal::new(0.0, params.sigma).expect("sigma validated");
    let mut clusters = Vec::with_capacity(world.len());
    let mut source = Vec::with_capacity(world.len());
    for (mut c, src) in world {
        if params.sigma > 0.0 {
            c.centroid += Vector3::from_fn(|_, _| noise.sample(rng));
        }
        clusters.push(c.transformed(&to_sensor));
        source.push(src);
    }
    SynthQuery {
        clusters,
        ground_truth: gt,
        source,
    }
}

/// Map plus the first query of the seed.
pub fn synth_scene(params: &SynthParams) -> Result<(ClusterMap, SynthQuery)> {
    let map = synth_map(params)?;
    let query = synth_query(&map, params, 0)?;
    Ok((map, query))
}
