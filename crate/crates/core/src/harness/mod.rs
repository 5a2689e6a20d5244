//! End-to-end wiring: synthetic scenes, the localization pipeline,
//! trajectory evaluation and CSV reports.

pub mod eval;
pub mod pipeline;
pub mod report;
pub mod synth;

pub use eval::{evaluate, EvalReport, EvalRow, MATCH_TOLERANCE};
pub use pipeline::{localize, localize_scan, Diagnostics, FailureCause, Localization, StageTimings};
pub use report::{write_eval_report, write_eval_summary, write_synth_report};
pub use synth::{synth_map, synth_query, synth_scene, SynthParams, SynthQuery};

use rayon::prelude::*;

use crate::config::RunConfig;
use crate::error::Result;
use crate::geom::{pose_error, Pose, PoseError};
use crate::scene_graph::build_db;

/// Outcome of one synthetic trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub trial: u64,
    pub ground_truth: Pose,
    pub localization: Localization,
    pub error: Option<PoseError>,
    pub success: bool,
    pub query_clusters: usize,
    pub outliers: usize,
}

/// Runs `trials` independent queries against one synthetic map, in parallel.
/// Records come back in trial order.
pub fn run_trials(params: &SynthParams, config: &RunConfig, trials: usize) -> Result<Vec<TrialRecord>> {
    let map = synth_map(params)?;
    let db = build_db(&map, config);
    (0..trials as u64)
        .into_par_iter()
        .map(|trial| {
            let q = synth_query(&map, params, trial)?;
            let loc = localize(&q.clusters, &map, &db, config)?;
            let error = loc.pose().map(|p| pose_error(p, &q.ground_truth));
            Ok(TrialRecord {
                trial,
                ground_truth: q.ground_truth,
                success: error.is_some_and(|e| e.is_success(config.success_trans, config.success_rot)),
                error,
                query_clusters: q.clusters.len(),
                outliers: q.outlier_count(),
                localization: loc,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialSummary {
    pub trials: usize,
    pub successes: usize,
    pub success_rate: f64,
    /// Medians over successful trials.
    pub median_trans: Option<f64>,
    pub median_rot: Option<f64>,
    pub failures: Vec<(FailureCause, usize)>,
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

pub fn summarize(records: &[TrialRecord]) -> TrialSummary {
    let ok: Vec<PoseError> = records.iter().filter(|r| r.success).filter_map(|r| r.error).collect();
    let failures = [
        FailureCause::NoCorrespondences,
        FailureCause::CliqueTooSmall,
        FailureCause::Degenerate,
    ]
    .into_iter()
    .map(|c| (c, records.iter().filter(|r| r.localization.failure() == Some(c)).count()))
    .filter(|(_, n)| *n > 0)
    .collect();
    TrialSummary {
        trials: records.len(),
        successes: ok.len(),
        success_rate: if records.is_empty() { 0.0 } else { ok.len() as f64 / records.len() as f64 },
        median_trans: median(ok.iter().map(|e| e.e_trans).collect()),
        median_rot: median(ok.iter().map(|e| e.e_rot).collect()),
        failures,
    }
}
