use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geom::Pose;

/// Labeled scan. Coordinates are held as `f64` but originate from `f32`
/// files, so write∘read of a loaded cloud is bit-exact.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SemanticPointCloud {
    pub points: Vec<Vector3<f64>>,
    pub intensity: Vec<f32>,
    /// Dataset semantic label (low 16 bits of the label word).
    pub labels: Vec<u16>,
}

impl SemanticPointCloud {
    pub fn new(points: Vec<Vector3<f64>>, intensity: Vec<f32>, labels: Vec<u16>) -> Result<Self> {
        let cloud = Self {
            points,
            intensity,
            labels,
        };
        cloud.validate()?;
        Ok(cloud)
    }

    /// Convenience constructor with zero intensity.
    pub fn from_labeled(points: Vec<Vector3<f64>>, labels: Vec<u16>) -> Result<Self> {
        let intensity = vec![0.0; points.len()];
        Self::new(points, intensity, labels)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.len() != self.labels.len() || self.points.len() != self.intensity.len() {
            return Err(Error::Format(format!(
                "cloud has {} points, {} intensities and {} labels",
                self.points.len(),
                self.intensity.len(),
                self.labels.len()
            )));
        }
        if let Some(i) = self.points.iter().position(|p| !p.iter().all(|v| v.is_finite())) {
            return Err(Error::Format(format!("point {i} has a non-finite coordinate")));
        }
        Ok(())
    }

    pub fn transformed(&self, pose: &Pose) -> Self {
        Self {
            points: self.points.iter().map(|p| pose.apply(p)).collect(),
            intensity: self.intensity.clone(),
            labels: self.labels.clone(),
        }
    }

    pub fn extend(&mut self, other: &SemanticPointCloud) {
        self.points.extend_from_slice(&other.points);
        self.intensity.extend_from_slice(&other.intensity);
        self.labels.extend_from_slice(&other.labels);
    }
}

/// Reads a packed `f32 x,y,z,intensity` scan and its `u32` label file.
pub fn read_cloud(cloud_path: impl AsRef<Path>, label_path: impl AsRef<Path>) -> Result<SemanticPointCloud> {
    let cloud_path = cloud_path.as_ref();
    let label_path = label_path.as_ref();
    let raw = std::fs::read(cloud_path).map_err(|e| Error::io(cloud_path, e))?;
    let raw_labels = std::fs::read(label_path).map_err(|e| Error::io(label_path, e))?;

    if raw.len() % 16 != 0 {
        return Err(Error::Format(format!(
            "{}: {} bytes is not a multiple of 16",
            cloud_path.display(),
            raw.len()
        )));
    }
    if raw_labels.len() % 4 != 0 {
        return Err(Error::Format(format!(
            "{}: {} bytes is not a multiple of 4",
            label_path.display(),
            raw_labels.len()
        )));
    }
    let n = raw.len() / 16;
    if raw_labels.len() / 4 != n {
        return Err(Error::Format(format!(
            "{} holds {} points but {} holds {} labels",
            cloud_path.display(),
            n,
            label_path.display(),
            raw_labels.len() / 4
        )));
    }

    let mut points = Vec::with_capacity(n);
    let mut intensity = Vec::with_capacity(n);
    for rec in raw.chunks_exact(16) {
        let f = |i: usize| f32::from_le_bytes(rec[4 * i..4 * i + 4].try_into().unwrap());
        points.push(Vector3::new(f(0) as f64, f(1) as f64, f(2) as f64));
        intensity.push(f(3));
    }
    let labels = raw_labels
        .chunks_exact(4)
        .map(|w| (u32::from_le_bytes(w.try_into().unwrap()) & 0xFFFF) as u16)
        .collect();

    SemanticPointCloud::new(points, intensity, labels)
}

/// Writes the cloud in the same packed layout; coordinates are narrowed to `f32`
/// and labels are written with a zero instance id.
pub fn write_cloud(
    cloud: &SemanticPointCloud,
    cloud_path: impl AsRef<Path>,
    label_path: impl AsRef<Path>,
) -> Result<()> {
    cloud.validate()?;
    let cloud_path = cloud_path.as_ref();
    let label_path = label_path.as_ref();
    let mut raw = Vec::with_capacity(cloud.len() * 16);
    for (p, i) in cloud.points.iter().zip(&cloud.intensity) {
        for v in [p.x as f32, p.y as f32, p.z as f32, *i] {
            raw.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut raw_labels = Vec::with_capacity(cloud.len() * 4);
    for l in &cloud.labels {
        raw_labels.extend_from_slice(&(*l as u32).to_le_bytes());
    }
    std::fs::write(cloud_path, raw).map_err(|e| Error::io(cloud_path, e))?;
    std::fs::write(label_path, raw_labels).map_err(|e| Error::io(label_path, e))?;
    Ok(())
}
