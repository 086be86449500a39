//! Iterative closest point refinement, point-to-plane and point-to-point.

use nalgebra::{DMatrix, DVector, Matrix3, Point3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::rigid::{estimate_rigid_from_correspondences, project_to_rotation};
use super::RegistrationError;
use crate::geometry::{DistanceParam, PointCloud, RigidTransform};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IcpParams {
    pub max_iterations: usize,
    /// Stop when the relative change of the loss between iterations falls
    /// below this.
    pub convergence_tol: f64,
    /// Correspondences farther than this are rejected each iteration.
    pub max_correspondence: DistanceParam,
}

impl Default for IcpParams {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            convergence_tol: 1e-6,
            max_correspondence: DistanceParam::DiameterFraction(0.05),
        }
    }
}

/// Loss bookkeeping for one ICP iteration. Both losses are evaluated on
/// the iteration's own correspondence set: `loss_before` at the incoming
/// pose, `loss_after` after applying the iteration's increment.
#[derive(Debug, Clone, Copy)]
pub struct IcpIteration {
    pub loss_before: f64,
    pub loss_after: f64,
    pub correspondences: usize,
}

#[derive(Debug, Clone)]
pub struct IcpResult {
    /// Full source-to-target motion, including the initial guess.
    pub transform: RigidTransform,
    pub final_loss: f64,
    pub iterations: Vec<IcpIteration>,
}

/// One source point paired with a target point and the target's normal.
#[derive(Debug, Clone, Copy)]
pub struct PlaneCorrespondence {
    pub source: Point3<f64>,
    pub target: Point3<f64>,
    pub normal: Vector3<f64>,
}

/// The linearized point-to-plane increment: a small rotation vector and a
/// translation minimizing the sum of squared plane residuals.
#[derive(Debug, Clone)]
pub struct PlaneStep {
    pub rotation_vector: Vector3<f64>,
    pub translation: Vector3<f64>,
    /// True when the normal equations did not constrain all six degrees of
    /// freedom; the solver then returns the minimum-norm solution.
    pub rank_deficient: bool,
}

/// Solves the linearized point-to-plane least squares
/// `min Σ ((p + ω×p + t − q)·n)²` for `(ω, t)` via an SVD pseudoinverse.
pub fn solve_point_plane_step(correspondences: &[PlaneCorrespondence]) -> PlaneStep {
    if correspondences.is_empty() {
        return PlaneStep {
            rotation_vector: Vector3::zeros(),
            translation: Vector3::zeros(),
            rank_deficient: true,
        };
    }
    let n = correspondences.len();
    let mut a = DMatrix::<f64>::zeros(n, 6);
    let mut b = DVector::<f64>::zeros(n);
    for (row, c) in correspondences.iter().enumerate() {
        let cross = c.source.coords.cross(&c.normal);
        a[(row, 0)] = cross.x;
        a[(row, 1)] = cross.y;
        a[(row, 2)] = cross.z;
        a[(row, 3)] = c.normal.x;
        a[(row, 4)] = c.normal.y;
        a[(row, 5)] = c.normal.z;
        b[row] = -(c.source - c.target).dot(&c.normal);
    }
    let svd = a.svd(true, true);
    let sv_max = svd.singular_values.max();
    let eps = sv_max * 1e-12;
    let rank = svd.singular_values.iter().filter(|&&s| s > eps).count();
    let x = svd
        .solve(&b, eps)
        .expect("SVD was computed with both factors");
    PlaneStep {
        rotation_vector: Vector3::new(x[0], x[1], x[2]),
        translation: Vector3::new(x[3], x[4], x[5]),
        rank_deficient: rank < 6,
    }
}

/// Refines `init` so that `source` aligns onto `target`, minimizing
/// point-to-plane distance. `target` must carry normals.
///
/// Each iteration re-associates every transformed source point with its
/// nearest target point (rejecting pairs beyond the correspondence
/// distance), solves the linearized step, and re-orthonormalizes the
/// incremental rotation.
pub fn point_plane_icp(
    source: &PointCloud,
    target: &PointCloud,
    init: &RigidTransform,
    params: &IcpParams,
) -> Result<IcpResult, RegistrationError> {
    let normals = target.normals().ok_or(RegistrationError::NormalsRequired)?;
    run_icp(source, target, init, params, |current, tgt_points, nn| {
        let correspondences: Vec<PlaneCorrespondence> = nn
            .iter()
            .map(|&(src_idx, tgt_idx)| PlaneCorrespondence {
                source: current[src_idx],
                target: tgt_points[tgt_idx],
                normal: normals[tgt_idx],
            })
            .collect();
        let loss_before = plane_loss(correspondences.iter().map(|c| (c.source, c.target, c.normal)));
        let step = solve_point_plane_step(&correspondences);
        let rotation = project_to_rotation(&(Matrix3::identity() + skew(&step.rotation_vector)));
        let increment = RigidTransform::new(rotation, step.translation);
        let loss_after = plane_loss(
            correspondences
                .iter()
                .map(|c| (increment.apply_point(&c.source), c.target, c.normal)),
        );
        (increment, loss_before, loss_after)
    })
}

/// Refines `init` minimizing point-to-point distance. Stalls (degenerate
/// correspondence geometry) end the loop with the pose reached so far.
pub fn point_point_icp(
    source: &PointCloud,
    target: &PointCloud,
    init: &RigidTransform,
    params: &IcpParams,
) -> Result<IcpResult, RegistrationError> {
    run_icp(source, target, init, params, |current, tgt_points, nn| {
        let pairs: Vec<(Point3<f64>, Point3<f64>)> = nn
            .iter()
            .map(|&(src_idx, tgt_idx)| (current[src_idx], tgt_points[tgt_idx]))
            .collect();
        let loss_before = point_loss(pairs.iter().map(|&(p, q)| (p, q)));
        let increment = match estimate_rigid_from_correspondences(&pairs) {
            Ok(t) => t,
            Err(_) => RigidTransform::identity(),
        };
        let loss_after = point_loss(pairs.iter().map(|&(p, q)| (increment.apply_point(&p), q)));
        (increment, loss_before, loss_after)
    })
}

fn run_icp<F>(
    source: &PointCloud,
    target: &PointCloud,
    init: &RigidTransform,
    params: &IcpParams,
    mut step: F,
) -> Result<IcpResult, RegistrationError>
where
    F: FnMut(&[Point3<f64>], &[Point3<f64>], &[(usize, usize)]) -> (RigidTransform, f64, f64),
{
    if params.max_iterations == 0 {
        return Err(RegistrationError::InvalidParams(
            "max_iterations must be at least 1".into(),
        ));
    }
    let max_dist = params.max_correspondence.resolve(target.diameter());
    if !(max_dist > 0.0) {
        return Err(RegistrationError::InvalidParams(format!(
            "max correspondence distance must be positive, got {max_dist}"
        )));
    }
    let index = target.index();
    let tgt_points = target.points();
    let mut transform = *init;
    let mut iterations = Vec::new();
    let mut final_loss = f64::INFINITY;

    for _ in 0..params.max_iterations {
        let current: Vec<Point3<f64>> = source
            .points()
            .par_iter()
            .map(|p| transform.apply_point(p))
            .collect();
        let nn: Vec<(usize, usize)> = current
            .par_iter()
            .enumerate()
            .filter_map(|(i, p)| {
                let hit = index.knn(p, 1).into_iter().next()?;
                (hit.distance <= max_dist).then_some((i, hit.index))
            })
            .collect();
        if nn.is_empty() {
            return Err(RegistrationError::NoCorrespondences);
        }
        let (increment, loss_before, loss_after) = step(&current, tgt_points, &nn);
        transform = increment.compose(&transform);
        iterations.push(IcpIteration {
            loss_before,
            loss_after,
            correspondences: nn.len(),
        });
        let previous = final_loss;
        final_loss = loss_after;
        if loss_after < 1e-24 {
            break;
        }
        if previous.is_finite() {
            let rel = (previous - loss_after).abs() / previous.max(f64::MIN_POSITIVE);
            if rel < params.convergence_tol {
                break;
            }
        }
    }
    Ok(IcpResult {
        transform,
        final_loss,
        iterations,
    })
}

fn plane_loss(residuals: impl Iterator<Item = (Point3<f64>, Point3<f64>, Vector3<f64>)>) -> f64 {
    residuals
        .map(|(p, q, n)| {
            let r = (p - q).dot(&n);
            r * r
        })
        .sum()
}

fn point_loss(residuals: impl Iterator<Item = (Point3<f64>, Point3<f64>)>) -> f64 {
    residuals.map(|(p, q)| (p - q).norm_squared()).sum()
}

fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::estimate_normals;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn wavy_surface(n: usize, seed: u64) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts = (0..n)
            .map(|_| {
                let x: f64 = rng.random_range(-1.0..1.0);
                let y: f64 = rng.random_range(-1.0..1.0);
                let z = 0.3 * (2.0 * x).sin() + 0.2 * (3.0 * y).cos();
                Point3::new(x, y, z)
            })
            .collect();
        let cloud = PointCloud::new(pts).unwrap();
        estimate_normals(&cloud, 10).unwrap().cloud
    }

    #[test]
    fn plane_step_solves_exact_translation() {
        // Points on z = 0 with vertical normals, targets on z = 0.1: the
        // equations constrain only the z translation (and two rotations),
        // and the minimum-norm answer is a pure lift.
        let correspondences: Vec<PlaneCorrespondence> = (0..10)
            .map(|i| {
                let x = i as f64 * 0.3 - 1.5;
                PlaneCorrespondence {
                    source: Point3::new(x, (i % 3) as f64 * 0.4, 0.0),
                    target: Point3::new(x, (i % 3) as f64 * 0.4, 0.1),
                    normal: Vector3::z(),
                }
            })
            .collect();
        let step = solve_point_plane_step(&correspondences);
        assert!(step.rank_deficient);
        assert_relative_eq!(step.translation.z, 0.1, epsilon = 1e-9);
        assert!(step.rotation_vector.norm() < 1e-9);
    }

    #[test]
    fn plane_step_recovers_small_motion_in_full_rank_geometry() {
        let cloud = wavy_surface(300, 1);
        let normals = cloud.normals().unwrap();
        let truth = RigidTransform::from_axis_angle(
            &Vector3::new(0.3, 1.0, 0.2),
            0.002,
            Vector3::new(0.001, -0.002, 0.0015),
        );
        // Perfect correspondences between original and moved points: solve
        // for the increment mapping original onto moved.
        let correspondences: Vec<PlaneCorrespondence> = cloud
            .points()
            .iter()
            .zip(normals)
            .map(|(p, n)| PlaneCorrespondence {
                source: *p,
                target: truth.apply_point(p),
                normal: truth.apply_vector(n),
            })
            .collect();
        let step = solve_point_plane_step(&correspondences);
        assert!(!step.rank_deficient);
        let rotation = project_to_rotation(&(Matrix3::identity() + skew(&step.rotation_vector)));
        let recovered = RigidTransform::new(rotation, step.translation);
        let residual = recovered.compose(&truth.inverse());
        assert!(residual.rotation_angle_deg() < 1e-3);
        assert!(residual.translation.norm() < 1e-5);
    }

    #[test]
    fn empty_step_is_zero_and_rank_deficient() {
        let step = solve_point_plane_step(&[]);
        assert!(step.rank_deficient);
        assert_eq!(step.rotation_vector, Vector3::zeros());
        assert_eq!(step.translation, Vector3::zeros());
    }

    #[test]
    fn identical_clouds_converge_immediately() {
        let cloud = wavy_surface(200, 2);
        let result = point_plane_icp(
            &cloud,
            &cloud,
            &RigidTransform::identity(),
            &IcpParams::default(),
        )
        .unwrap();
        assert!(result.iterations.len() <= 2);
        assert!(result.final_loss < 1e-20);
        assert!(result.transform.rotation_angle_deg() < 1e-9);
        assert!(result.transform.translation.norm() < 1e-12);
    }

    #[test]
    fn recovers_small_perturbation_of_an_asymmetric_surface() {
        let target = wavy_surface(800, 3);
        let truth = RigidTransform::from_axis_angle(
            &Vector3::new(0.1, 0.4, 1.0),
            0.02,
            Vector3::new(0.01, -0.015, 0.008),
        );
        // Source is the target moved by the inverse, so the ICP estimate
        // should approximate `truth`.
        let source = target.transformed(&truth.inverse());
        let result = point_plane_icp(
            &source,
            &target,
            &RigidTransform::identity(),
            &IcpParams::default(),
        )
        .unwrap();
        let residual = result.transform.compose(&truth.inverse());
        assert!(
            residual.rotation_angle_deg() < 0.05,
            "rotation residual {}",
            residual.rotation_angle_deg()
        );
        assert!(residual.translation.norm() < 1e-3);
    }

    #[test]
    fn iteration_losses_do_not_increase_within_a_step() {
        let target = wavy_surface(500, 4);
        let source = target.transformed(
            &RigidTransform::from_axis_angle(
                &Vector3::y(),
                -0.03,
                Vector3::new(0.02, 0.0, -0.01),
            )
            .inverse(),
        );
        let result = point_plane_icp(
            &source,
            &target,
            &RigidTransform::identity(),
            &IcpParams::default(),
        )
        .unwrap();
        for it in &result.iterations {
            assert!(
                it.loss_after <= it.loss_before + 1e-12,
                "step increased loss: {} -> {}",
                it.loss_before,
                it.loss_after
            );
        }
    }

    #[test]
    fn point_point_variant_also_recovers_motion() {
        let target = wavy_surface(600, 5);
        let truth = RigidTransform::from_axis_angle(
            &Vector3::new(0.5, 0.2, 0.8),
            0.015,
            Vector3::new(-0.01, 0.012, 0.006),
        );
        let source = target.transformed(&truth.inverse());
        let result = point_point_icp(
            &source,
            &target,
            &RigidTransform::identity(),
            &IcpParams::default(),
        )
        .unwrap();
        let residual = result.transform.compose(&truth.inverse());
        assert!(residual.rotation_angle_deg() < 0.1);
        assert!(residual.translation.norm() < 5e-3);
    }

    #[test]
    fn disjoint_clouds_report_no_correspondences() {
        let target = wavy_surface(100, 6);
        let far = target.transformed(&RigidTransform::new(
            Matrix3::identity(),
            Vector3::new(100.0, 0.0, 0.0),
        ));
        let err = point_plane_icp(
            &far,
            &target,
            &RigidTransform::identity(),
            &IcpParams::default(),
        );
        assert!(matches!(err, Err(RegistrationError::NoCorrespondences)));
    }

    #[test]
    fn missing_target_normals_is_an_error() {
        let plain = PointCloud::new(wavy_surface(50, 7).points().to_vec()).unwrap();
        let err = point_plane_icp(
            &plain,
            &plain,
            &RigidTransform::identity(),
            &IcpParams::default(),
        );
        assert!(matches!(err, Err(RegistrationError::NormalsRequired)));
    }
}
