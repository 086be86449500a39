//! Point clouds, rigid transforms and exact nearest-neighbor search.

mod kdtree;
mod normals;

pub use kdtree::{Neighbor, SpatialIndex};
pub use normals::{estimate_normals, NormalEstimate};

use nalgebra::{Matrix3, Point3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors for cloud construction and neighborhood operations.
#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("non-finite value at point {0}")]
    NonFinite(usize),
    #[error("{what} has length {got}, expected {expected}")]
    MismatchedLengths {
        what: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("normal {index} has norm {norm:.6}, expected unit length")]
    NonUnitNormal { index: usize, norm: f64 },
    #[error("operation needs at least {needed} points, cloud has {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("invalid neighborhood size k={0}")]
    InvalidK(usize),
}

/// Tolerance on `|n| - 1` for caller-supplied normals. Rotating a unit
/// normal by a near-orthonormal matrix drifts well below this.
const UNIT_NORMAL_TOL: f64 = 1e-6;

/// An immutable 3D point cloud with optional per-point unit normals.
///
/// Construction validates finiteness and caches the axis-aligned
/// bounding-box diagonal, which the rest of the crate uses as the cloud
/// "diameter" when resolving relative distance parameters.
#[derive(Debug, Clone)]
pub struct PointCloud {
    points: Vec<Point3<f64>>,
    normals: Option<Vec<Vector3<f64>>>,
    diameter: f64,
}

impl PointCloud {
    pub fn new(points: Vec<Point3<f64>>) -> Result<Self, GeometryError> {
        if points.is_empty() {
            return Err(GeometryError::EmptyCloud);
        }
        for (i, p) in points.iter().enumerate() {
            if !p.coords.iter().all(|c| c.is_finite()) {
                return Err(GeometryError::NonFinite(i));
            }
        }
        let diameter = aabb_diagonal(&points);
        Ok(Self {
            points,
            normals: None,
            diameter,
        })
    }

    pub fn with_normals(
        points: Vec<Point3<f64>>,
        normals: Vec<Vector3<f64>>,
    ) -> Result<Self, GeometryError> {
        if normals.len() != points.len() {
            return Err(GeometryError::MismatchedLengths {
                what: "normals",
                got: normals.len(),
                expected: points.len(),
            });
        }
        for (i, n) in normals.iter().enumerate() {
            if !n.iter().all(|c| c.is_finite()) {
                return Err(GeometryError::NonFinite(i));
            }
            let norm = n.norm();
            if (norm - 1.0).abs() > UNIT_NORMAL_TOL {
                return Err(GeometryError::NonUnitNormal { index: i, norm });
            }
        }
        let mut cloud = Self::new(points)?;
        cloud.normals = Some(normals);
        Ok(cloud)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// Always false after construction; present for API completeness.
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point3<f64>] {
        &self.points
    }

    pub fn point(&self, i: usize) -> &Point3<f64> {
        &self.points[i]
    }

    pub fn normals(&self) -> Option<&[Vector3<f64>]> {
        self.normals.as_deref()
    }

    pub fn has_normals(&self) -> bool {
        self.normals.is_some()
    }

    /// Axis-aligned bounding box as `(min, max)` corners.
    pub fn aabb(&self) -> (Point3<f64>, Point3<f64>) {
        let mut lo = self.points[0];
        let mut hi = self.points[0];
        for p in &self.points {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        (lo, hi)
    }

    /// Length of the axis-aligned bounding-box diagonal.
    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    pub fn centroid(&self) -> Point3<f64> {
        let sum: Vector3<f64> = self.points.iter().map(|p| p.coords).sum();
        Point3::from(sum / self.points.len() as f64)
    }

    /// Applies a rigid transform to every point (and rotates normals).
    /// The bounding-box diameter is recomputed since it is not rotation
    /// invariant.
    pub fn transformed(&self, t: &RigidTransform) -> PointCloud {
        let points: Vec<_> = self.points.iter().map(|p| t.apply_point(p)).collect();
        let diameter = aabb_diagonal(&points);
        let normals = self
            .normals
            .as_ref()
            .map(|ns| ns.iter().map(|n| t.rotation * n).collect());
        PointCloud {
            points,
            normals,
            diameter,
        }
    }

    /// Concatenates clouds in order. Normals are kept only if every input
    /// carries them.
    pub fn merged<'a, I>(clouds: I) -> Result<PointCloud, GeometryError>
    where
        I: IntoIterator<Item = &'a PointCloud>,
    {
        let mut points = Vec::new();
        let mut normals = Vec::new();
        let mut all_have_normals = true;
        for cloud in clouds {
            points.extend_from_slice(&cloud.points);
            match &cloud.normals {
                Some(ns) if all_have_normals => normals.extend_from_slice(ns),
                _ => all_have_normals = false,
            }
        }
        if points.is_empty() {
            return Err(GeometryError::EmptyCloud);
        }
        if all_have_normals {
            PointCloud::with_normals(points, normals)
        } else {
            PointCloud::new(points)
        }
    }

    /// Builds an exact nearest-neighbor index over this cloud's points.
    pub fn index(&self) -> SpatialIndex {
        SpatialIndex::build(&self.points)
    }
}

fn aabb_diagonal(points: &[Point3<f64>]) -> f64 {
    let mut lo = points[0];
    let mut hi = points[0];
    for p in points {
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    (hi - lo).norm()
}

/// Applies `t` to every point of `cloud`, returning a new cloud.
pub fn apply_transform(cloud: &PointCloud, t: &RigidTransform) -> PointCloud {
    cloud.transformed(t)
}

/// A length that is either absolute or relative to a cloud's bounding-box
/// diagonal. Relative lengths keep thresholds meaningful across objects of
/// different physical scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistanceParam {
    Absolute(f64),
    DiameterFraction(f64),
}

impl DistanceParam {
    pub fn resolve(&self, diameter: f64) -> f64 {
        match self {
            DistanceParam::Absolute(v) => *v,
            DistanceParam::DiameterFraction(f) => f * diameter,
        }
    }
}

/// A proper rigid motion: `x ↦ R x + t` with `R` orthonormal, `det R = +1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        let t = Self {
            rotation,
            translation,
        };
        debug_assert!(
            t.orthonormality_error() < 1e-6,
            "rotation part is not orthonormal"
        );
        t
    }

    pub fn from_axis_angle(axis: &Vector3<f64>, angle_rad: f64, translation: Vector3<f64>) -> Self {
        let rotation = nalgebra::Rotation3::from_axis_angle(
            &nalgebra::Unit::new_normalize(*axis),
            angle_rad,
        )
        .into_inner();
        Self {
            rotation,
            translation,
        }
    }

    pub fn apply_point(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    pub fn apply_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    /// Composition `self ∘ inner`: applies `inner` first, then `self`.
    pub fn compose(&self, inner: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * inner.rotation,
            translation: self.rotation * inner.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rot_inv = self.rotation.transpose();
        RigidTransform {
            rotation: rot_inv,
            translation: -(rot_inv * self.translation),
        }
    }

    /// `‖RᵀR - I‖` plus the deviation of `det R` from one. Zero for an
    /// exact rigid motion.
    pub fn orthonormality_error(&self) -> f64 {
        let gram = self.rotation.transpose() * self.rotation;
        (gram - Matrix3::identity()).norm() + (self.rotation.determinant() - 1.0).abs()
    }

    /// Rotation angle in degrees, from the trace.
    pub fn rotation_angle_deg(&self) -> f64 {
        let cos = ((self.rotation.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
        cos.acos().to_degrees()
    }

    /// Intrinsic Z-Y-X Euler angles `[yaw, pitch, roll]` in degrees, so
    /// that `R = Rz(yaw) · Ry(pitch) · Rx(roll)`. Near pitch = ±90° the
    /// yaw/roll split is ill-conditioned, as with any Euler convention.
    pub fn euler_zyx_deg(&self) -> [f64; 3] {
        let r = &self.rotation;
        let pitch = (-r[(2, 0)]).clamp(-1.0, 1.0).asin();
        let yaw = r[(1, 0)].atan2(r[(0, 0)]);
        let roll = r[(2, 1)].atan2(r[(2, 2)]);
        [yaw.to_degrees(), pitch.to_degrees(), roll.to_degrees()]
    }
}
