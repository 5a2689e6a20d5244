//! One-shot global localization of a semantically labeled LiDAR scan
//! against a prebuilt map of Gaussian semantic clusters.
//!
//! Pipeline: [`clustering`] → [`scene_graph`] (triangle descriptors and
//! hash retrieval) → [`pruning`] (consistency graph, maximum clique) →
//! [`solver`] (GNC-TLS). [`harness`] wires the stages together and
//! provides synthetic scenes and evaluation.

pub mod clustering;
pub mod config;
pub mod error;
pub mod geom;
pub mod harness;
pub mod ingest;
pub mod pruning;
pub mod scene_graph;
pub mod solver;

pub use config::RunConfig;
pub use error::{Error, Result};
pub use geom::{pose_error, GaussianCluster, Pose, PoseError, SemanticClass};
