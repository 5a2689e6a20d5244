//! Run configuration.
//!
//! The configuration file is TOML restricted to flat `key = value` pairs.
//! Every key is optional; missing keys take the defaults below. Unknown keys
//! are logged and ignored.
//!
//! | key | type | default |
//! |---|---|---|
//! | `class_map` | string `"<file label>=<class>,..."` | `"10=car,71=trunk,80=pole"` |
//! | `cluster_threshold_car` | float, m | 0.8 |
//! | `cluster_threshold_trunk` | float, m | 0.5 |
//! | `cluster_threshold_pole` | float, m | 0.5 |
//! | `cluster_threshold_default` | float, m (other classes) | 0.5 |
//! | `min_cluster_points` | integer ≥ 3 | 20 |
//! | `max_scene_points` | integer | 5000000 |
//! | `k_neighbors` | integer ≥ 2 | 10 |
//! | `side_quantum` | float, m | 0.5 |
//! | `min_side` / `max_side` | float, m | 1.0 / 120.0 |
//! | `min_triangle_area` | float, m² | 0.5 |
//! | `wasserstein_threshold` | float, m | 1.0 |
//! | `epsilon` | float, m | 0.5 |
//! | `consistency_metric` | `"euclidean"` or `"wasserstein"` | `"euclidean"` |
//! | `truncation` | float, m | 1.0 |
//! | `semantic` | bool | true |
//! | `clique_time_budget` | float, s | 10.0 |
//! | `gnc_factor` | float > 1 | 1.4 |
//! | `gnc_max_iterations` | integer | 100 |
//! | `gnc_cost_threshold` | float | 1e-6 |
//! | `degeneracy_threshold` | float, m | 0.1 |
//! | `success_trans` / `success_rot` | float, m / deg | 5.0 / 10.0 |
//!
//! Classes in `class_map` are `car`, `trunk`, `pole` or a numeric id for
//! additional classes; thresholds for numeric classes use
//! `cluster_threshold_<id>` or fall back to `cluster_threshold_default`.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Duration;

use crate::error::{Error, Result};
use crate::geom::SemanticClass;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConsistencyMetric {
    Euclidean,
    Wasserstein,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterParams {
    pub thresholds: BTreeMap<SemanticClass, f64>,
    pub default_threshold: f64,
    pub min_points: usize,
    pub max_scene_points: usize,
}

impl Default for ClusterParams {
    fn default() -> Self {
        let thresholds = [
            (SemanticClass::CAR, 0.8),
            (SemanticClass::TRUNK, 0.5),
            (SemanticClass::POLE, 0.5),
        ]
        .into_iter()
        .collect();
        Self {
            thresholds,
            default_threshold: 0.5,
            min_points: 20,
            max_scene_points: 5_000_000,
        }
    }
}

impl ClusterParams {
    pub fn threshold(&self, class: SemanticClass) -> f64 {
        self.thresholds
            .get(&class)
            .copied()
            .unwrap_or(self.default_threshold)
    }

    pub fn validate(&self) -> Result<()> {
        for (c, t) in &self.thresholds {
            positive(&format!("cluster_threshold_{c}"), *t)?;
        }
        positive("cluster_threshold_default", self.default_threshold)?;
        if self.min_points < 3 {
            return Err(cfg_err("min_cluster_points", "must be at least 3"));
        }
        if self.max_scene_points == 0 {
            return Err(cfg_err("max_scene_points", "must be positive"));
        }
        Ok(())
    }
}

/// Maps dataset label ids to canonical classes. Labels absent from the map
/// are ignored by clustering.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassMap(pub BTreeMap<u16, SemanticClass>);

impl Default for ClassMap {
    fn default() -> Self {
        Self::parse("10=car,71=trunk,80=pole").expect("default class map")
    }
}

impl ClassMap {
    pub fn parse(s: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for entry in s.split(',').map(str::trim).filter(|e| !e.is_empty()) {
            let (label, class) = entry
                .split_once('=')
                .ok_or_else(|| cfg_err("class_map", format!("entry `{entry}` is not `label=class`")))?;
            let label: u16 = label
                .trim()
                .parse()
                .map_err(|_| cfg_err("class_map", format!("bad label id `{label}`")))?;
            let class = SemanticClass::parse(class)
                .ok_or_else(|| cfg_err("class_map", format!("bad class `{class}`")))?;
            map.insert(label, class);
        }
        Ok(Self(map))
    }

    pub fn get(&self, label: u16) -> Option<SemanticClass> {
        self.0.get(&label).copied()
    }

    pub fn classes(&self) -> Vec<SemanticClass> {
        let mut v: Vec<_> = self.0.values().copied().collect();
        v.sort();
        v.dedup();
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub class_map: ClassMap,
    pub cluster: ClusterParams,
    pub k_neighbors: usize,
    pub side_quantum: f64,
    pub min_side: f64,
    pub max_side: f64,
    pub min_triangle_area: f64,
    pub wasserstein_threshold: f64,
    pub epsilon: f64,
    pub consistency_metric: ConsistencyMetric,
    pub truncation: f64,
    pub semantic: bool,
    pub clique_time_budget: Duration,
    pub gnc_factor: f64,
    pub gnc_max_iterations: usize,
    pub gnc_cost_threshold: f64,
    pub degeneracy_threshold: f64,
    pub success_trans: f64,
    pub success_rot: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            class_map: ClassMap::default(),
            cluster: ClusterParams::default(),
            k_neighbors: 10,
            side_quantum: 0.5,
            min_side: 1.0,
            max_side: 120.0,
            min_triangle_area: 0.5,
            wasserstein_threshold: 1.0,
            epsilon: 0.5,
            consistency_metric: ConsistencyMetric::Euclidean,
            truncation: 1.0,
            semantic: true,
            clique_time_budget: Duration::from_secs(10),
            gnc_factor: 1.4,
            gnc_max_iterations: 100,
            gnc_cost_threshold: 1e-6,
            degeneracy_threshold: 0.1,
            success_trans: 5.0,
            success_rot: 10.0,
        }
    }
}

pub(crate) fn cfg_err(key: &str, msg: impl Into<String>) -> Error {
    Error::Config {
        key: key.to_string(),
        msg: msg.into(),
    }
}

pub(crate) fn positive(key: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(cfg_err(key, format!("must be positive, got {v}")))
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.cluster.validate()?;
        if self.k_neighbors < 2 {
            return Err(cfg_err("k_neighbors", "must be at least 2"));
        }
        positive("side_quantum", self.side_quantum)?;
        positive("min_side", self.min_side)?;
        positive("max_side", self.max_side)?;
        if self.max_side < self.min_side {
            return Err(cfg_err("max_side", "must not be below min_side"));
        }
        positive("min_triangle_area", self.min_triangle_area)?;
        positive("wasserstein_threshold", self.wasserstein_threshold)?;
        positive("epsilon", self.epsilon)?;
        positive("truncation", self.truncation)?;
        positive("clique_time_budget", self.clique_time_budget.as_secs_f64())?;
        if self.gnc_factor.is_nan() || self.gnc_factor <= 1.0 {
            return Err(cfg_err("gnc_factor", "must be greater than 1"));
        }
        if self.gnc_max_iterations == 0 {
            return Err(cfg_err("gnc_max_iterations", "must be positive"));
        }
        positive("gnc_cost_threshold", self.gnc_cost_threshold)?;
        positive("degeneracy_threshold", self.degeneracy_threshold)?;
        positive("success_trans", self.success_trans)?;
        positive("success_rot", self.success_rot)?;
        Ok(())
    }

    /// Stable textual form of every parameter; hashed into map file headers.
    pub fn canonical_string(&self) -> String {
        format!("{self:?}")
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Format(format!("config: {e}")))?;
        let mut kv = KeyValues::new(table);
        let mut cfg = RunConfig::default();

        if let Some(s) = kv.string("class_map")? {
            cfg.class_map = ClassMap::parse(&s)?;
        }
        for (name, class) in [
            ("car", SemanticClass::CAR),
            ("trunk", SemanticClass::TRUNK),
            ("pole", SemanticClass::POLE),
        ] {
            if let Some(v) = kv.float(&format!("cluster_threshold_{name}"))? {
                cfg.cluster.thresholds.insert(class, v);
            }
        }
        for class in cfg.class_map.classes() {
            if class.name().is_none() {
                if let Some(v) = kv.float(&format!("cluster_threshold_{}", class.0))? {
                    cfg.cluster.thresholds.insert(class, v);
                }
            }
        }
        kv.float_into("cluster_threshold_default", &mut cfg.cluster.default_threshold)?;
        kv.usize_into("min_cluster_points", &mut cfg.cluster.min_points)?;
        kv.usize_into("max_scene_points", &mut cfg.cluster.max_scene_points)?;
        kv.usize_into("k_neighbors", &mut cfg.k_neighbors)?;
        kv.float_into("side_quantum", &mut cfg.side_quantum)?;
        kv.float_into("min_side", &mut cfg.min_side)?;
        kv.float_into("max_side", &mut cfg.max_side)?;
        kv.float_into("min_triangle_area", &mut cfg.min_triangle_area)?;
        kv.float_into("wasserstein_threshold", &mut cfg.wasserstein_threshold)?;
        kv.float_into("epsilon", &mut cfg.epsilon)?;
        if let Some(s) = kv.string("consistency_metric")? {
            cfg.consistency_metric = match s.as_str() {
                "euclidean" => ConsistencyMetric::Euclidean,
                "wasserstein" => ConsistencyMetric::Wasserstein,
                other => {
                    return Err(cfg_err(
                        "consistency_metric",
                        format!("expected `euclidean` or `wasserstein`, got `{other}`"),
                    ))
                }
            };
        }
        kv.float_into("truncation", &mut cfg.truncation)?;
        if let Some(b) = kv.bool("semantic")? {
            cfg.semantic = b;
        }
        if let Some(secs) = kv.float("clique_time_budget")? {
            positive("clique_time_budget", secs)?;
            cfg.clique_time_budget = Duration::from_secs_f64(secs);
        }
        kv.float_into("gnc_factor", &mut cfg.gnc_factor)?;
        kv.usize_into("gnc_max_iterations", &mut cfg.gnc_max_iterations)?;
        kv.float_into("gnc_cost_threshold", &mut cfg.gnc_cost_threshold)?;
        kv.float_into("degeneracy_threshold", &mut cfg.degeneracy_threshold)?;
        kv.float_into("success_trans", &mut cfg.success_trans)?;
        kv.float_into("success_rot", &mut cfg.success_rot)?;

        kv.warn_unused("config");
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn load_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    RunConfig::from_toml_str(&text)
}

/// Typed accessor over a flat TOML table that remembers which keys were read.
pub(crate) struct KeyValues {
    table: toml::Table,
}

impl KeyValues {
    pub(crate) fn new(table: toml::Table) -> Self {
        Self { table }
    }

    fn take(&mut self, key: &str) -> Option<toml::Value> {
        self.table.remove(key)
    }

    pub(crate) fn float(&mut self, key: &str) -> Result<Option<f64>> {
        match self.take(key) {
            None => Ok(None),
            Some(toml::Value::Float(f)) => Ok(Some(f)),
            Some(toml::Value::Integer(i)) => Ok(Some(i as f64)),
            Some(v) => Err(cfg_err(key, format!("expected a number, got {}", v.type_str()))),
        }
    }

    pub(crate) fn integer(&mut self, key: &str) -> Result<Option<i64>> {
        match self.take(key) {
            None => Ok(None),
            Some(toml::Value::Integer(i)) => Ok(Some(i)),
            Some(v) => Err(cfg_err(key, format!("expected an integer, got {}", v.type_str()))),
        }
    }

    pub(crate) fn string(&mut self, key: &str) -> Result<Option<String>> {
        match self.take(key) {
            None => Ok(None),
            Some(toml::Value::String(s)) => Ok(Some(s)),
            Some(v) => Err(cfg_err(key, format!("expected a string, got {}", v.type_str()))),
        }
    }

    pub(crate) fn bool(&mut self, key: &str) -> Result<Option<bool>> {
        match self.take(key) {
            None => Ok(None),
            Some(toml::Value::Boolean(b)) => Ok(Some(b)),
            Some(v) => Err(cfg_err(key, format!("expected a boolean, got {}", v.type_str()))),
        }
    }

    pub(crate) fn floats(&mut self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.take(key) {
            None => Ok(None),
            Some(toml::Value::Array(items)) => items
                .into_iter()
                .map(|v| match v {
                    toml::Value::Float(f) => Ok(f),
                    toml::Value::Integer(i) => Ok(i as f64),
                    other => Err(cfg_err(key, format!("expected numbers, got {}", other.type_str()))),
                })
                .collect::<Result<Vec<_>>>()
                .map(Some),
            Some(v) => Err(cfg_err(key, format!("expected an array, got {}", v.type_str()))),
        }
    }

    pub(crate) fn float_into(&mut self, key: &str, slot: &mut f64) -> Result<()> {
        if let Some(v) = self.float(key)? {
            positive(key, v)?;
            *slot = v;
        }
        Ok(())
    }

    pub(crate) fn usize_into(&mut self, key: &str, slot: &mut usize) -> Result<()> {
        if let Some(v) = self.integer(key)? {
            *slot = usize::try_from(v).map_err(|_| cfg_err(key, format!("must be non-negative, got {v}")))?;
        }
        Ok(())
    }

    pub(crate) fn warn_unused(self, what: &str) {
        for key in self.table.keys() {
            log::warn!("{what}: ignoring unknown key `{key}`");
        }
    }

    #[cfg(test)]
    pub(crate) fn leftover(&self) -> Vec<String> {
        self.table.keys().cloned().collect()
    }
}
