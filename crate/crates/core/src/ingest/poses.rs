use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geom::Pose;

const QUAT_NORM_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StampedPose {
    pub timestamp: f64,
    pub pose: Pose,
}

/// Reads a TUM trajectory: `timestamp tx ty tz qx qy qz qw` per line.
/// Blank lines and `#` comments are skipped.
pub fn read_poses(path: impl AsRef<Path>) -> Result<Vec<StampedPose>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_poses(&text, path)
}

pub(crate) fn parse_poses(text: &str, path: &Path) -> Result<Vec<StampedPose>> {
    let mut out: Vec<StampedPose> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<f64> = line
            .split_whitespace()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::parse(path, lineno, format!("bad number: {e}")))?;
        if fields.len() != 8 {
            return Err(Error::parse(
                path,
                lineno,
                format!("expected 8 fields, found {}", fields.len()),
            ));
        }
        if !fields.iter().all(|v| v.is_finite()) {
            return Err(Error::parse(path, lineno, "non-finite value"));
        }
        let q = [fields[4], fields[5], fields[6], fields[7]];
        let norm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > QUAT_NORM_TOL {
            return Err(Error::parse(
                path,
                lineno,
                format!("quaternion norm {norm} deviates from 1"),
            ));
        }
        let timestamp = fields[0];
        if let Some(prev) = out.last() {
            if timestamp <= prev.timestamp {
                return Err(Error::parse(
                    path,
                    lineno,
                    format!("timestamp {timestamp} does not increase past {}", prev.timestamp),
                ));
            }
        }
        let pose = Pose::from_quaternion(q, Vector3::new(fields[1], fields[2], fields[3]));
        out.push(StampedPose { timestamp, pose });
    }
    Ok(out)
}

pub fn format_pose_line(timestamp: f64, pose: &Pose) -> String {
    let t = pose.translation;
    let q = pose.quaternion();
    format!(
        "{} {} {} {} {} {} {} {}",
        timestamp, t.x, t.y, t.z, q[0], q[1], q[2], q[3]
    )
}

pub fn write_poses(poses: &[StampedPose], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = String::new();
    for p in poses {
        writeln!(text, "{}", format_pose_line(p.timestamp, &p.pose)).unwrap();
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Matrix3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn parse(text: &str) -> Result<Vec<StampedPose>> {
        parse_poses(text, Path::new("test.txt"))
    }

    #[test]
    fn identity_line() {
        let p = parse("0.0 0 0 0 0 0 0 1").unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].timestamp, 0.0);
        assert_eq!(p[0].pose, Pose::identity());
    }

    #[test]
    fn yaw_quarter_turn() {
        let p = parse("1.0 1 2 3 0 0 0.7071068 0.7071068").unwrap();
        let expected = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert!((p[0].pose.rotation - expected).amax() < 1e-6);
        assert_eq!(p[0].pose.translation, Vector3::new(1.0, 2.0, 3.0));
    }

    #[test]
    fn malformed_lines_report_line_number() {
        let err = parse("# header\n0 0 0 0 0 0 0 1\n1 0 0 0 0 0 1\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = parse("0 0 0 0 0 0 0 1\n1 a 0 0 0 0 0 1\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        let err = parse("0 0 0 0 0 0 0 1.1\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn timestamps_must_increase() {
        let err = parse("1 0 0 0 0 0 0 1\n1 0 0 0 0 0 0 1\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn near_unit_quaternion_normalized() {
        let p = parse("0 0 0 0 0 0 0 1.0005").unwrap();
        assert!(p[0].pose.is_valid());
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("poses.txt");
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut t = 0.0;
        let poses: Vec<_> = (0..100)
            .map(|_| {
                t += rng.random_range(0.01..1.0);
                let axis = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0));
                let tr = Vector3::from_fn(|_, _| rng.random_range(-500.0..500.0));
                StampedPose {
                    timestamp: t,
                    pose: Pose::from_axis_angle(axis, rng.random_range(-3.0..3.0), tr),
                }
            })
            .collect();
        write_poses(&poses, &path).unwrap();
        let back = read_poses(&path).unwrap();
        assert_eq!(back.len(), poses.len());
        for (a, b) in poses.iter().zip(&back) {
            assert!((a.timestamp - b.timestamp).abs() < 1e-6);
            assert!((a.pose.rotation - b.pose.rotation).amax() < 1e-6);
            assert!((a.pose.translation - b.pose.translation).amax() < 1e-6);
        }
    }
}
