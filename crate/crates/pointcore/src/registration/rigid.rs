//! Closed-form rigid alignment of paired points.

use nalgebra::{Matrix3, Point3, Vector3};

use super::RegistrationError;
use crate::geometry::RigidTransform;

/// Relative singular-value threshold below which a correspondence set is
/// treated as collinear.
const COLLINEAR_RATIO: f64 = 1e-12;

/// Least-squares rigid transform mapping each `pairs[i].0` onto
/// `pairs[i].1`, via SVD of the cross-covariance. A reflection in the SVD
/// solution is corrected by flipping the smallest singular direction, so
/// the result always has determinant +1.
pub fn estimate_rigid_from_correspondences(
    pairs: &[(Point3<f64>, Point3<f64>)],
) -> Result<RigidTransform, RegistrationError> {
    if pairs.len() < 3 {
        return Err(RegistrationError::DegenerateSample);
    }
    let n = pairs.len() as f64;
    let mut centroid_a = Vector3::zeros();
    let mut centroid_b = Vector3::zeros();
    for (a, b) in pairs {
        centroid_a += a.coords;
        centroid_b += b.coords;
    }
    centroid_a /= n;
    centroid_b /= n;

    let mut cross = Matrix3::zeros();
    for (a, b) in pairs {
        let da = a.coords - centroid_a;
        let db = b.coords - centroid_b;
        cross += db * da.transpose();
    }
    let svd = cross.svd(true, true);
    let sv = &svd.singular_values;
    if sv[1] <= COLLINEAR_RATIO * sv[0] {
        return Err(RegistrationError::DegenerateSample);
    }
    let u = svd.u.unwrap();
    let v_t = svd.v_t.unwrap();
    let rotation = orient_rotation(&u, &v_t);
    let translation = centroid_b - rotation * centroid_a;
    Ok(RigidTransform::new(rotation, translation))
}

/// `U Vᵀ`, with the column of `U` belonging to the smallest singular value
/// negated when the product would be a reflection.
pub(crate) fn orient_rotation(u: &Matrix3<f64>, v_t: &Matrix3<f64>) -> Matrix3<f64> {
    let r = u * v_t;
    if r.determinant() < 0.0 {
        let mut u_fixed = *u;
        u_fixed.column_mut(2).neg_mut();
        u_fixed * v_t
    } else {
        r
    }
}

/// Projects a near-rotation matrix onto the closest true rotation.
pub(crate) fn project_to_rotation(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    orient_rotation(&svd.u.unwrap(), &svd.v_t.unwrap())
}
