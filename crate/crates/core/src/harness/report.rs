//! CSV reports.
//!
//! Synthetic trial report, one row per trial:
//!
//! | column | meaning |
//! |---|---|
//! | `trial` | trial index |
//! | `success` | 1 when a pose was produced and passes the success thresholds |
//! | `failure` | declared failure cause, empty when a pose was produced |
//! | `e_trans`, `e_rot` | pose error in m and degrees, empty on failure |
//! | `est_tx` .. `est_qw` | estimated pose, TUM order, empty on failure |
//! | `gt_tx` .. `gt_qw` | ground-truth pose |
//! | `query_clusters`, `outliers` | query size and injected outliers |
//! | `correspondences`, `graph_edges`, `clique_size`, `clique_exact`, `inlier_count`, `gnc_iterations` | diagnostics |
//! | `clustering_ms`, `retrieval_ms`, `pruning_ms`, `solve_ms`, `total_ms` | stage timings (optional, always last) |
//!
//! Evaluation report, one row per estimate:
//! `est_timestamp, gt_timestamp, e_trans, e_rot, success, ecdf_trans, ecdf_rot`
//! (`gt_timestamp` and the error columns are empty for unmatched rows). The
//! summary file holds `key,value` rows.

use std::io::Write;
use std::path::Path;

use super::eval::EvalReport;
use super::TrialRecord;
use crate::error::{Error, Result};
use crate::geom::Pose;

const POSE_COLS: [&str; 7] = ["tx", "ty", "tz", "qx", "qy", "qz", "qw"];
const TIMING_COLS: [&str; 5] = ["clustering_ms", "retrieval_ms", "pruning_ms", "solve_ms", "total_ms"];

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Format(format!("{}: {other:?}", path.display())),
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn pose_fields(p: Option<&Pose>) -> Vec<String> {
    match p {
        Some(p) => {
            let q = p.quaternion();
            let t = p.translation;
            [t.x, t.y, t.z, q[0], q[1], q[2], q[3]].iter().map(f64::to_string).collect()
        }
        None => vec![String::new(); 7],
    }
}

pub fn synth_header(timings: bool) -> Vec<String> {
    let mut h: Vec<String> = ["trial", "success", "failure", "e_trans", "e_rot"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend(POSE_COLS.iter().map(|c| format!("est_{c}")));
    h.extend(POSE_COLS.iter().map(|c| format!("gt_{c}")));
    h.extend(
        [
            "query_clusters",
            "outliers",
            "correspondences",
            "graph_edges",
            "clique_size",
            "clique_exact",
            "inlier_count",
            "gnc_iterations",
        ]
        .iter()
        .map(|s| s.to_string()),
    );
    if timings {
        h.extend(TIMING_COLS.iter().map(|s| s.to_string()));
    }
    h
}

fn synth_row(r: &TrialRecord, timings: bool) -> Vec<String> {
    let d = &r.localization.diagnostics;
    let mut row = vec![
        r.trial.to_string(),
        u8::from(r.success).to_string(),
        r.localization.failure().map(|f| f.to_string()).unwrap_or_default(),
        opt(r.error.map(|e| e.e_trans)),
        opt(r.error.map(|e| e.e_rot)),
    ];
    row.extend(pose_fields(r.localization.pose()));
    row.extend(pose_fields(Some(&r.ground_truth)));
    row.extend(
        [
            r.query_clusters,
            r.outliers,
            d.correspondences,
            d.graph_edges,
            d.clique_size,
            usize::from(d.clique_exact),
            d.inlier_count,
            d.gnc_iterations,
        ]
        .iter()
        .map(usize::to_string),
    );
    if timings {
        let t = &d.timings;
        row.extend(
            [t.clustering, t.retrieval, t.pruning, t.solve, t.total]
                .iter()
                .map(|d| format!("{:.3}", d.as_secs_f64() * 1e3)),
        );
    }
    row
}

pub fn write_synth_csv<W: Write>(records: &[TrialRecord], out: W, timings: bool) -> std::result::Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(synth_header(timings))?;
    for r in records {
        w.write_record(synth_row(r, timings))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_synth_report(records: &[TrialRecord], path: impl AsRef<Path>, timings: bool) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_synth_csv(records, file, timings).map_err(|e| csv_err(path, e))
}

pub fn write_eval_report(report: &EvalReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let res: std::result::Result<(), csv::Error> = (|| {
        w.write_record(["est_timestamp", "gt_timestamp", "e_trans", "e_rot", "success", "ecdf_trans", "ecdf_rot"])?;
        for r in &report.rows {
            w.write_record([
                r.est_timestamp.to_string(),
                opt(r.gt_timestamp),
                opt(r.error.map(|e| e.e_trans)),
                opt(r.error.map(|e| e.e_rot)),
                u8::from(r.success).to_string(),
                opt(r.ecdf_trans),
                opt(r.ecdf_rot),
            ])?;
        }
        w.flush()?;
        Ok(())
    })();
    res.map_err(|e| csv_err(path, e))
}

pub fn write_eval_summary(report: &EvalReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let rows = [
        ("rows", report.rows.len().to_string()),
        ("matched", report.matched.to_string()),
        ("unmatched", report.unmatched.to_string()),
        ("successes", report.successes.to_string()),
        ("success_rate", report.success_rate.to_string()),
        ("ate", opt(report.ate)),
        ("are", opt(report.are)),
    ];
    let res: std::result::Result<(), csv::Error> = (|| {
        w.write_record(["key", "value"])?;
        for (k, v) in rows {
            w.write_record([k, v.as_str()])?;
        }
        w.flush()?;
        Ok(())
    })();
    res.map_err(|e| csv_err(path, e))
}
