use crate::geom::{pose_error, PoseError};
use crate::ingest::StampedPose;

/// Maximum timestamp gap for an estimate to match a ground-truth pose.
pub const MATCH_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalRow {
    pub est_timestamp: f64,
    /// `None` when no ground-truth pose lies within the tolerance.
    pub gt_timestamp: Option<f64>,
    pub error: Option<PoseError>,
    pub success: bool,
    /// Empirical CDF of this row's errors over all matched rows.
    pub ecdf_trans: Option<f64>,
    pub ecdf_rot: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub matched: usize,
    pub unmatched: usize,
    pub successes: usize,
    /// Successes over all estimate rows; unmatched rows count as failures.
    pub success_rate: f64,
    /// Mean translation / rotation error over successful rows only.
    pub ate: Option<f64>,
    pub are: Option<f64>,
}

/// Index of the ground-truth pose nearest in time to `t` (gt sorted by time).
fn nearest(gt: &[StampedPose], t: f64) -> Option<usize> {
    let i = gt.partition_point(|p| p.timestamp < t);
    [i.checked_sub(1), (i < gt.len()).then_some(i)]
        .into_iter()
        .flatten()
        .min_by(|&a, &b| (gt[a].timestamp - t).abs().total_cmp(&(gt[b].timestamp - t).abs()))
}

fn ecdf(values: &[f64], v: f64) -> f64 {
    values.iter().filter(|&&x| x <= v).count() as f64 / values.len() as f64
}

/// Matches each estimate to the nearest ground-truth timestamp and scores it.
pub fn evaluate(est: &[StampedPose], gt: &[StampedPose], max_trans: f64, max_rot_deg: f64) -> EvalReport {
    let mut gt_sorted = gt.to_vec();
    gt_sorted.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
    let mut rows: Vec<EvalRow> = est
        .iter()
        .map(|e| {
            let m = nearest(&gt_sorted, e.timestamp)
                .filter(|&i| (gt_sorted[i].timestamp - e.timestamp).abs() <= MATCH_TOLERANCE);
            let error = m.map(|i| pose_error(&e.pose, &gt_sorted[i].pose));
            EvalRow {
                est_timestamp: e.timestamp,
                gt_timestamp: m.map(|i| gt_sorted[i].timestamp),
                error,
                success: error.is_some_and(|er| er.is_success(max_trans, max_rot_deg)),
                ecdf_trans: None,
                ecdf_rot: None,
            }
        })
        .collect();
    let et: Vec<f64> = rows.iter().filter_map(|r| r.error.map(|e| e.e_trans)).collect();
    let er: Vec<f64> = rows.iter().filter_map(|r| r.error.map(|e| e.e_rot)).collect();
    for r in &mut rows {
        if let Some(e) = r.error {
            r.ecdf_trans = Some(ecdf(&et, e.e_trans));
            r.ecdf_rot = Some(ecdf(&er, e.e_rot));
        }
    }
    let ok: Vec<PoseError> = rows.iter().filter(|r| r.success).filter_map(|r| r.error).collect();
    let mean = |f: fn(&PoseError) -> f64| (!ok.is_empty()).then(|| ok.iter().map(f).sum::<f64>() / ok.len() as f64);
    let matched = et.len();
    EvalReport {
        matched,
        unmatched: rows.len() - matched,
        successes: ok.len(),
        success_rate: if rows.is_empty() { 0.0 } else { ok.len() as f64 / rows.len() as f64 },
        ate: mean(|e| e.e_trans),
        are: mean(|e| e.e_rot),
        rows,
    }
}
