//! Surface normal estimation from local PCA neighborhoods.

use nalgebra::{Matrix3, Point3, Vector3};
use rayon::prelude::*;

use super::{GeometryError, PointCloud};

/// Relative eigenvalue threshold below which a neighborhood counts as
/// collinear (rank < 2) and gets a fallback normal.
const DEGENERATE_EIGEN_RATIO: f64 = 1e-12;

/// Result of [`estimate_normals`].
#[derive(Debug, Clone)]
pub struct NormalEstimate {
    /// Input cloud with freshly assigned unit normals.
    pub cloud: PointCloud,
    /// Number of points whose neighborhood was collinear and received a
    /// deterministic fallback normal instead of a PCA direction.
    pub degenerate_count: usize,
}

/// Estimates a unit normal per point from the `k` nearest neighbors
/// (including the point itself).
///
/// The normal is the eigenvector of the smallest eigenvalue of the
/// neighborhood covariance. Orientation is chosen so the normal points from
/// the neighborhood centroid toward the point; when that projection is
/// exactly zero the sign is fixed by making the largest-magnitude component
/// positive. Collinear neighborhoods fall back to a deterministic
/// perpendicular of the dominant direction and are counted, not failed.
pub fn estimate_normals(cloud: &PointCloud, k: usize) -> Result<NormalEstimate, GeometryError> {
    if k < 3 {
        return Err(GeometryError::InvalidK(k));
    }
    if cloud.len() < k {
        return Err(GeometryError::TooFewPoints {
            needed: k,
            got: cloud.len(),
        });
    }
    let index = cloud.index();
    let per_point: Vec<(Vector3<f64>, bool)> = cloud
        .points()
        .par_iter()
        .map(|p| point_normal(cloud, &index, p, k))
        .collect();
    let degenerate_count = per_point.iter().filter(|(_, d)| *d).count();
    let normals: Vec<Vector3<f64>> = per_point.into_iter().map(|(n, _)| n).collect();
    let cloud = PointCloud::with_normals(cloud.points().to_vec(), normals)?;
    Ok(NormalEstimate {
        cloud,
        degenerate_count,
    })
}

fn point_normal(
    cloud: &PointCloud,
    index: &super::SpatialIndex,
    p: &Point3<f64>,
    k: usize,
) -> (Vector3<f64>, bool) {
    let hits = index.knn(p, k);
    let mut centroid = Vector3::zeros();
    for h in &hits {
        centroid += cloud.point(h.index).coords;
    }
    centroid /= hits.len() as f64;
    let mut cov = Matrix3::zeros();
    for h in &hits {
        let d = cloud.point(h.index).coords - centroid;
        cov += d * d.transpose();
    }
    let eigen = nalgebra::SymmetricEigen::new(cov);
    let mut idx = [0usize, 1, 2];
    idx.sort_by(|&a, &b| eigen.eigenvalues[a].total_cmp(&eigen.eigenvalues[b]));
    let lambda_mid = eigen.eigenvalues[idx[1]].max(0.0);
    let lambda_max = eigen.eigenvalues[idx[2]].max(0.0);

    let (normal, degenerate) = if lambda_mid <= DEGENERATE_EIGEN_RATIO * lambda_max
        || lambda_max == 0.0
    {
        let dir = if lambda_max == 0.0 {
            Vector3::x()
        } else {
            eigen.eigenvectors.column(idx[2]).into_owned()
        };
        (fallback_perpendicular(&dir), true)
    } else {
        let n = eigen.eigenvectors.column(idx[0]).into_owned();
        (n.normalize(), false)
    };

    let outward = p.coords - centroid;
    let d = normal.dot(&outward);
    let oriented = if d < 0.0 {
        -normal
    } else if d > 0.0 {
        normal
    } else {
        canonical_sign(normal)
    };
    (oriented, degenerate)
}

/// Unit vector perpendicular to `dir`, chosen deterministically: cross with
/// the coordinate axis least aligned with `dir` (lowest axis on ties).
fn fallback_perpendicular(dir: &Vector3<f64>) -> Vector3<f64> {
    let mut axis = 0;
    for a in 1..3 {
        if dir[a].abs() < dir[axis].abs() {
            axis = a;
        }
    }
    let mut e = Vector3::zeros();
    e[axis] = 1.0;
    canonical_sign(dir.cross(&e).normalize())
}

/// Flips `n` so its largest-magnitude component is positive.
fn canonical_sign(n: Vector3<f64>) -> Vector3<f64> {
    let mut axis = 0;
    for a in 1..3 {
        if n[a].abs() > n[axis].abs() {
            axis = a;
        }
    }
    if n[axis] < 0.0 {
        -n
    } else {
        n
    }
}
