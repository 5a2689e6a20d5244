//! Rigid transforms, Gaussian cluster primitives and pose-error metrics.

use std::fmt;

use nalgebra::{Matrix3, SymmetricEigen, UnitQuaternion, Vector3};

use crate::error::{Error, Result};

/// Tolerance used when validating rotation matrices and covariances.
pub const GEOM_TOL: f64 = 1e-9;

/// Canonical semantic class of a cluster.
///
/// Ids 0..=2 are the built-in classes; any other id is a user-defined class
/// introduced through the configuration's class map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SemanticClass(pub u16);

impl SemanticClass {
    pub const CAR: SemanticClass = SemanticClass(0);
    pub const TRUNK: SemanticClass = SemanticClass(1);
    pub const POLE: SemanticClass = SemanticClass(2);

    pub fn name(self) -> Option<&'static str> {
        match self.0 {
            0 => Some("car"),
            1 => Some("trunk"),
            2 => Some("pole"),
            _ => None,
        }
    }

    /// Parses either a built-in class name or a bare numeric id.
    pub fn parse(s: &str) -> Option<SemanticClass> {
        match s.trim() {
            "car" => Some(Self::CAR),
            "trunk" => Some(Self::TRUNK),
            "pole" => Some(Self::POLE),
            other => other.parse::<u16>().ok().map(SemanticClass),
        }
    }
}

impl fmt::Display for SemanticClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.name() {
            Some(n) => f.write_str(n),
            None => write!(f, "{}", self.0),
        }
    }
}

/// Rigid-body transform mapping query-frame points into the map frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::new(Matrix3::identity(), Vector3::zeros())
    }

    pub fn from_axis_angle(axis: Vector3<f64>, angle: f64, translation: Vector3<f64>) -> Self {
        let rot = nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle);
        Self::new(*rot.matrix(), translation)
    }

    /// Rotation about +z by `yaw` radians.
    pub fn from_yaw(yaw: f64, translation: Vector3<f64>) -> Self {
        Self::from_axis_angle(Vector3::z(), yaw, translation)
    }

    /// Builds a pose from a quaternion in (x, y, z, w) order. The quaternion
    /// is normalized; callers validate its norm beforehand if they care.
    pub fn from_quaternion(q: [f64; 4], translation: Vector3<f64>) -> Self {
        let uq = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(q[3], q[0], q[1], q[2]));
        Self::new(*uq.to_rotation_matrix().matrix(), translation)
    }

    /// Quaternion in (x, y, z, w) order with w ≥ 0.
    pub fn quaternion(&self) -> [f64; 4] {
        let rot = nalgebra::Rotation3::from_matrix_unchecked(self.rotation);
        let q = UnitQuaternion::from_rotation_matrix(&rot);
        let q = if q.w < 0.0 { -q.into_inner() } else { q.into_inner() };
        [q.i, q.j, q.k, q.w]
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// `self ∘ other`: first apply `other`, then `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose::new(
            self.rotation * other.rotation,
            self.rotation * other.translation + self.translation,
        )
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose::new(rt, -(rt * self.translation))
    }

    /// Checks orthonormality and det = +1 within `GEOM_TOL`.
    pub fn is_valid(&self) -> bool {
        let ortho = (self.rotation * self.rotation.transpose() - Matrix3::identity()).amax();
        let det = self.rotation.determinant();
        ortho <= GEOM_TOL && (det - 1.0).abs() <= GEOM_TOL && self.translation.iter().all(|v| v.is_finite())
    }

    /// Rotation angle of the rotation part, in radians.
    pub fn rotation_angle(&self) -> f64 {
        rotation_angle(&self.rotation)
    }
}

/// Angle of a rotation matrix in radians. Equal to `acos((tr R − 1) / 2)`;
/// evaluated with `atan2` against the skew part, which stays accurate near 0.
pub fn rotation_angle(r: &Matrix3<f64>) -> f64 {
    let s = Vector3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]).norm() / 2.0;
    let c = ((r.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    s.atan2(c)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseError {
    /// meters
    pub e_trans: f64,
    /// degrees
    pub e_rot: f64,
}

impl PoseError {
    pub fn is_success(&self, max_trans: f64, max_rot_deg: f64) -> bool {
        self.e_trans < max_trans && self.e_rot < max_rot_deg
    }
}

/// Relative pose error of `estimated` against `ground_truth`, with the
/// difference taken as `estimated · ground_truth⁻¹`.
pub fn pose_error(estimated: &Pose, ground_truth: &Pose) -> PoseError {
    let delta_r = estimated.rotation * ground_truth.rotation.transpose();
    // |t̂ − ΔR·t| written as |R̂ᵀt̂ − Rᵀt|, which is exactly 0 for equal poses
    let e_trans = (estimated.rotation.transpose() * estimated.translation
        - ground_truth.rotation.transpose() * ground_truth.translation)
        .norm();
    PoseError {
        e_trans,
        e_rot: rotation_angle(&delta_r).to_degrees(),
    }
}

/// Semantic instance approximated as a Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianCluster {
    pub label: SemanticClass,
    pub centroid: Vector3<f64>,
    pub covariance: Matrix3<f64>,
    pub point_count: usize,
}

impl GaussianCluster {
    pub fn new(
        label: SemanticClass,
        centroid: Vector3<f64>,
        covariance: Matrix3<f64>,
        point_count: usize,
    ) -> Self {
        Self {
            label,
            centroid,
            covariance,
            point_count,
        }
    }

    /// The same cluster expressed in another frame: centroid `R·μ + t`,
    /// covariance `R·Σ·Rᵀ`.
    pub fn transformed(&self, pose: &Pose) -> Self {
        Self {
            label: self.label,
            centroid: pose.apply(&self.centroid),
            covariance: pose.rotation * self.covariance * pose.rotation.transpose(),
            point_count: self.point_count,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_psd(&self.covariance)
    }
}

/// Verifies symmetry and positive semidefiniteness within `GEOM_TOL`.
pub fn check_psd(m: &Matrix3<f64>) -> Result<()> {
    check_psd_tol(m, GEOM_TOL)
}

/// Like [`check_psd`] with a caller-chosen relative tolerance.
pub fn check_psd_tol(m: &Matrix3<f64>, tol: f64) -> Result<()> {
    let scale = m.amax().max(1.0);
    let asym = (m - m.transpose()).amax();
    if asym > tol * scale {
        return Err(Error::NotSymmetric(asym));
    }
    let min_eig = SymmetricEigen::new(symmetrize(m)).eigenvalues.min();
    if min_eig < -tol * scale {
        return Err(Error::NotPsd {
            min_eigenvalue: min_eig,
        });
    }
    Ok(())
}

fn symmetrize(m: &Matrix3<f64>) -> Matrix3<f64> {
    (m + m.transpose()) * 0.5
}

/// Square root of a symmetric PSD matrix; negative eigenvalues are clamped to 0.
pub fn sqrt_psd(m: &Matrix3<f64>) -> Matrix3<f64> {
    let eig = SymmetricEigen::new(symmetrize(m));
    let d = Matrix3::from_diagonal(&eig.eigenvalues.map(|v| v.max(0.0).sqrt()));
    eig.eigenvectors * d * eig.eigenvectors.transpose()
}

/// Squared Bures term `trace(Σa + Σb − 2·(Σb^½ Σa Σb^½)^½)`, evaluated as
/// `min_U ‖Σa^½ − Σb^½·U‖²_F` over orthogonal `U` so that equal inputs give
/// a round-off sized result instead of a cancellation residue.
fn bures_sq(cov_a: &Matrix3<f64>, cov_b: &Matrix3<f64>) -> f64 {
    let sa = sqrt_psd(cov_a);
    let sb = sqrt_psd(cov_b);
    let svd = (sb * sa).svd(true, true);
    let u = svd.u.expect("svd u") * svd.v_t.expect("svd v");
    (sa - sb * u).norm_squared()
}

/// 2-Wasserstein distance between `N(mean_a, cov_a)` and `N(mean_b, cov_b)`.
pub fn wasserstein2_parts(
    mean_a: &Vector3<f64>,
    cov_a: &Matrix3<f64>,
    mean_b: &Vector3<f64>,
    cov_b: &Matrix3<f64>,
) -> Result<f64> {
    check_psd(cov_a)?;
    check_psd(cov_b)?;
    Ok(((mean_a - mean_b).norm_squared() + bures_sq(cov_a, cov_b)).sqrt())
}

pub fn wasserstein2(a: &GaussianCluster, b: &GaussianCluster) -> Result<f64> {
    wasserstein2_parts(&a.centroid, &a.covariance, &b.centroid, &b.covariance)
}

/// Shape-only distance: W₂ between the two covariances with both means at 0.
/// Inputs are assumed already validated.
pub fn shape_distance(cov_a: &Matrix3<f64>, cov_b: &Matrix3<f64>) -> f64 {
    bures_sq(cov_a, cov_b).sqrt()
}

/// Fits centroid and population covariance (1/n normalization).
pub fn fit_gaussian(points: &[Vector3<f64>], label: SemanticClass) -> Result<GaussianCluster> {
    if points.is_empty() {
        return Err(Error::EmptyCluster);
    }
    let n = points.len() as f64;
    let centroid = points.iter().fold(Vector3::zeros(), |acc, p| acc + p) / n;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p - centroid;
        cov += d * d.transpose();
    }
    cov /= n;
    Ok(GaussianCluster::new(label, centroid, cov, points.len()))
}
