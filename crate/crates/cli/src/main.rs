//! `sgloc` command-line front end.
//!
//! Exit codes: 0 success, 1 error, 2 declared localization failure.
//! `SGLOC_THREADS` sets the worker thread count.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use sgloc::clustering::cluster_map_cloud;
use sgloc::config::load_config;
use sgloc::harness::{
    evaluate, localize_scan, report, run_trials, summarize, write_eval_report, write_eval_summary, SynthParams,
};
use sgloc::ingest::{
    format_pose_line, read_cloud, read_cluster_map, read_descriptor_db, read_poses, write_cluster_map,
    write_descriptor_db, SemanticPointCloud,
};
use sgloc::scene_graph::build_db;
use sgloc::RunConfig;

const THREADS_ENV: &str = "SGLOC_THREADS";

#[derive(Parser)]
#[command(name = "sgloc", version, about = "One-shot LiDAR localization against a semantic cluster map")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Accumulate labeled scans by their poses and cluster them into a map.
    BuildMap {
        /// Directory of `.bin` scans.
        #[arg(long)]
        clouds: PathBuf,
        /// Directory of `.label` files with the same stems as the scans.
        #[arg(long)]
        labels: PathBuf,
        /// TUM trajectory with one pose per scan, in scan file-name order.
        #[arg(long)]
        poses: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Also write the descriptor database to this path.
        #[arg(long)]
        db: Option<PathBuf>,
    },
    /// Localize one labeled scan; writes a TUM pose line.
    Localize {
        /// Cluster map, or a descriptor database written by `build-map --db`.
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        scan: PathBuf,
        #[arg(long)]
        scan_labels: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Timestamp written with the pose.
        #[arg(long, default_value_t = 0.0)]
        timestamp: f64,
    },
    /// Monte Carlo evaluation over synthetic scenes.
    Synth {
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Leave out the timing columns (byte-reproducible reports).
        #[arg(long)]
        no_timings: bool,
    },
    /// Score an estimated trajectory against ground truth.
    Eval {
        #[arg(long)]
        est: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => load_config(p).with_context(|| format!("loading config {}", p.display())),
        None => Ok(RunConfig::default()),
    }
}

fn files_with_ext(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == ext) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

fn build_map(clouds: &Path, labels: &Path, poses: &Path, cfg: &RunConfig, out: &Path, db: Option<&Path>) -> Result<()> {
    let scans = files_with_ext(clouds, "bin")?;
    let poses = read_poses(poses)?;
    if scans.len() != poses.len() {
        bail!("{} scans but {} poses", scans.len(), poses.len());
    }
    if scans.is_empty() {
        bail!("no .bin scans in {}", clouds.display());
    }
    let mut world = SemanticPointCloud::default();
    for (scan, pose) in scans.iter().zip(&poses) {
        let stem = scan.file_stem().context("scan without a file name")?;
        let label = labels.join(stem).with_extension("label");
        let cloud = read_cloud(scan, &label)?;
        world.extend(&cloud.transformed(&pose.pose));
    }
    log::info!("accumulated {} points from {} scans", world.len(), scans.len());
    let map = cluster_map_cloud(&world, cfg);
    write_cluster_map(&map, out)?;
    eprintln!("wrote {} clusters to {}", map.len(), out.display());
    if let Some(db_path) = db {
        let db = build_db(&map, cfg);
        write_descriptor_db(&db, &map, db_path)?;
        eprintln!("wrote {} triangles to {}", db.len(), db_path.display());
    }
    Ok(())
}

fn is_descriptor_db(path: &Path) -> Result<bool> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text.starts_with("# sgloc-descriptordb"))
}

fn localize(map_path: &Path, scan: &Path, labels: &Path, cfg: &RunConfig, out: &Path, timestamp: f64) -> Result<ExitCode> {
    let t = Instant::now();
    let (map, db) = if is_descriptor_db(map_path)? {
        let (map, db) = read_descriptor_db(map_path)?;
        if db.quantum != cfg.side_quantum {
            log::warn!("descriptor db quantum {} differs from config {}; rebuilding", db.quantum, cfg.side_quantum);
            let db = build_db(&map, cfg);
            (map, db)
        } else {
            (map, db)
        }
    } else {
        let map = read_cluster_map(map_path)?;
        let db = build_db(&map, cfg);
        (map, db)
    };
    log::info!("map ready: {} clusters, {} triangles in {:?}", map.len(), db.len(), t.elapsed());
    let cloud = read_cloud(scan, labels)?;
    let loc = localize_scan(&cloud, &map, &db, cfg)?;
    let d = &loc.diagnostics;
    eprintln!(
        "query clusters {}, correspondences {}, clique {}{}, inliers {}, {:.1} ms",
        d.query_clusters,
        d.correspondences,
        d.clique_size,
        if d.clique_exact { "" } else { " (budget hit)" },
        d.inlier_count,
        d.timings.total.as_secs_f64() * 1e3
    );
    match loc.pose() {
        Some(pose) => {
            std::fs::write(out, format_pose_line(timestamp, pose) + "\n")
                .with_context(|| format!("writing {}", out.display()))?;
            Ok(ExitCode::SUCCESS)
        }
        None => {
            eprintln!("localization failed: {}", loc.failure().expect("failure without cause"));
            Ok(ExitCode::from(2))
        }
    }
}

fn synth(params: Option<&Path>, trials: usize, cfg: &RunConfig, out: &Path, timings: bool) -> Result<()> {
    let params = match params {
        Some(p) => SynthParams::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => SynthParams::default(),
    };
    let t = Instant::now();
    let records = run_trials(&params, cfg, trials)?;
    report::write_synth_report(&records, out, timings)?;
    let s = summarize(&records);
    eprintln!(
        "{} trials in {:.1} s: success {:.1}%, median e_trans {}, median e_rot {}",
        s.trials,
        t.elapsed().as_secs_f64(),
        s.success_rate * 100.0,
        s.median_trans.map_or("-".into(), |v| format!("{v:.3} m")),
        s.median_rot.map_or("-".into(), |v| format!("{v:.3} deg")),
    );
    for (cause, n) in &s.failures {
        eprintln!("  {cause}: {n}");
    }
    Ok(())
}

fn summary_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}_summary.csv"))
}

fn eval(est: &Path, gt: &Path, cfg: &RunConfig, out: &Path) -> Result<()> {
    let est = read_poses(est)?;
    let gt = read_poses(gt)?;
    let r = evaluate(&est, &gt, cfg.success_trans, cfg.success_rot);
    write_eval_report(&r, out)?;
    let summary = summary_path(out);
    write_eval_summary(&r, &summary)?;
    for row in r.rows.iter().filter(|row| row.gt_timestamp.is_none()) {
        eprintln!("unmatched estimate at t={}", row.est_timestamp);
    }
    eprintln!(
        "{} estimates, {} matched, success {:.1}%, ATE {}, ARE {}",
        r.rows.len(),
        r.matched,
        r.success_rate * 100.0,
        r.ate.map_or("-".into(), |v| format!("{v:.3} m")),
        r.are.map_or("-".into(), |v| format!("{v:.3} deg")),
    );
    Ok(())
}

fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v.parse().with_context(|| format!("{THREADS_ENV}={v} is not a thread count"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    init_threads()?;
    match cli.command {
        Command::BuildMap {
            clouds,
            labels,
            poses,
            config: c,
            out,
            db,
        } => build_map(&clouds, &labels, &poses, &config(c.as_deref())?, &out, db.as_deref())?,
        Command::Localize {
            map,
            scan,
            scan_labels,
            config: c,
            out,
            timestamp,
        } => return localize(&map, &scan, &scan_labels, &config(c.as_deref())?, &out, timestamp),
        Command::Synth {
            params,
            trials,
            config: c,
            out,
            no_timings,
        } => synth(params.as_deref(), trials, &config(c.as_deref())?, &out, !no_timings)?,
        Command::Eval { est, gt, config: c, out } => eval(&est, &gt, &config(c.as_deref())?, &out)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
