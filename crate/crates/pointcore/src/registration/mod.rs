//! Canonical-frame registration: FPFH matching, RANSAC and ICP refinement.

mod fpfh;
mod icp;
mod ransac;
mod rigid;

pub use fpfh::{compute_fpfh, FpfhDescriptor, FPFH_BINS, FPFH_DIM};
pub use icp::{
    point_plane_icp, point_point_icp, solve_point_plane_step, IcpIteration, IcpParams, IcpResult,
    PlaneCorrespondence, PlaneStep,
};
pub use ransac::{
    feature_correspondences, ransac_global_registration, GlobalRegistration, RansacParams,
    MIN_INLIER_FRACTION,
};
pub use rigid::estimate_rigid_from_correspondences;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{estimate_normals, DistanceParam, GeometryError, PointCloud, RigidTransform};

#[derive(Debug, Error)]
pub enum RegistrationError {
    #[error("operation requires cloud normals")]
    NormalsRequired,
    #[error("no mutual feature correspondences between the clouds")]
    NoCorrespondences,
    #[error("correspondence sample is degenerate (fewer than three points, collinear, or coincident)")]
    DegenerateSample,
    #[error(
        "global registration failed: best inlier fraction {inlier_fraction:.4} is below {min_inlier_fraction:.4}"
    )]
    RegistrationFailed {
        inlier_fraction: f64,
        min_inlier_fraction: f64,
    },
    #[error("invalid registration parameter: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Parameters for the full coarse-to-fine registration of one cloud onto
/// another.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegistrationConfig {
    /// Neighborhood size for normal estimation when a cloud has none.
    pub normals_k: usize,
    /// FPFH support radius, resolved against the target diameter.
    pub fpfh_radius: DistanceParam,
    pub ransac: RansacParams,
    pub icp: IcpParams,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        Self {
            normals_k: 15,
            fpfh_radius: DistanceParam::DiameterFraction(0.05),
            ransac: RansacParams::default(),
            icp: IcpParams::default(),
        }
    }
}

impl RegistrationConfig {
    /// Settings for clouds of a few hundred to a few thousand points,
    /// where the default radii capture too few neighbors: a wider FPFH
    /// support and correspondence radii of a few multiples of the
    /// typical point spacing.
    pub fn for_sparse_clouds() -> Self {
        let mut cfg = Self::default();
        cfg.normals_k = 12;
        cfg.fpfh_radius = DistanceParam::DiameterFraction(0.1);
        cfg.ransac.inlier_threshold = DistanceParam::DiameterFraction(0.05);
        cfg.icp.max_correspondence = DistanceParam::DiameterFraction(0.08);
        cfg
    }
}

/// Everything produced while registering one cloud pair.
#[derive(Debug, Clone)]
pub struct RegistrationOutcome {
    /// Source-to-target rigid motion after refinement.
    pub transform: RigidTransform,
    pub global: GlobalRegistration,
    pub icp: IcpResult,
    pub warnings: Vec<String>,
}

/// Registers `source` onto `target`: normal estimation where missing, FPFH
/// descriptors, RANSAC alignment, then point-to-plane ICP from the RANSAC
/// pose. Distance parameters resolve against the target diameter so both
/// clouds are measured in the canonical frame's scale.
pub fn register_clouds(
    source: &PointCloud,
    target: &PointCloud,
    config: &RegistrationConfig,
) -> Result<RegistrationOutcome, RegistrationError> {
    let mut warnings = Vec::new();
    let source = ensure_normals(source, config.normals_k, "source", &mut warnings)?;
    let target = ensure_normals(target, config.normals_k, "target", &mut warnings)?;
    let radius = config.fpfh_radius.resolve(target.diameter());
    let source_desc = compute_fpfh(&source, radius)?;
    let target_desc = compute_fpfh(&target, radius)?;
    let global =
        ransac_global_registration(&source, &target, &source_desc, &target_desc, &config.ransac)?;
    let icp = point_plane_icp(&source, &target, &global.transform, &config.icp)?;
    Ok(RegistrationOutcome {
        transform: icp.transform,
        global,
        icp,
        warnings,
    })
}

/// One seed's recovered poses from [`registration_stability`].
#[derive(Debug, Clone)]
pub struct StabilityTrial {
    pub seed: u64,
    /// Euler angles of the RANSAC pose, z-y-x order, degrees.
    pub euler_global_deg: [f64; 3],
    /// Euler angles after ICP refinement.
    pub euler_refined_deg: [f64; 3],
}

/// Spread of repeated registrations of one fixed cloud pair.
#[derive(Debug, Clone)]
pub struct StabilityReport {
    pub trials: Vec<StabilityTrial>,
    /// Sample standard deviation of each Euler angle before refinement.
    pub global_std_deg: [f64; 3],
    /// The same after refinement.
    pub refined_std_deg: [f64; 3],
}

impl StabilityReport {
    /// The largest of the three per-angle standard deviations.
    pub fn max_global_std_deg(&self) -> f64 {
        self.global_std_deg.iter().cloned().fold(0.0, f64::max)
    }

    pub fn max_refined_std_deg(&self) -> f64 {
        self.refined_std_deg.iter().cloned().fold(0.0, f64::max)
    }
}

fn euler_std(trials: &[StabilityTrial], pick: impl Fn(&StabilityTrial) -> [f64; 3]) -> [f64; 3] {
    let n = trials.len() as f64;
    let mut out = [0.0; 3];
    for axis in 0..3 {
        let mean = trials.iter().map(|t| pick(t)[axis]).sum::<f64>() / n;
        let var = trials
            .iter()
            .map(|t| (pick(t)[axis] - mean).powi(2))
            .sum::<f64>()
            / (n - 1.0).max(1.0);
        out[axis] = var.sqrt();
    }
    out
}

/// Registers the same pair once per seed, varying only the RANSAC seed,
/// and summarizes how much the recovered Euler angles spread before and
/// after ICP refinement. Needs at least two seeds.
pub fn registration_stability(
    source: &PointCloud,
    target: &PointCloud,
    config: &RegistrationConfig,
    seeds: &[u64],
) -> Result<StabilityReport, RegistrationError> {
    if seeds.len() < 2 {
        return Err(RegistrationError::InvalidParams(format!(
            "stability needs at least 2 seeds, got {}",
            seeds.len()
        )));
    }
    let mut trials = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let mut cfg = config.clone();
        cfg.ransac.seed = seed;
        let outcome = register_clouds(source, target, &cfg)?;
        trials.push(StabilityTrial {
            seed,
            euler_global_deg: outcome.global.transform.euler_zyx_deg(),
            euler_refined_deg: outcome.transform.euler_zyx_deg(),
        });
    }
    let global_std_deg = euler_std(&trials, |t| t.euler_global_deg);
    let refined_std_deg = euler_std(&trials, |t| t.euler_refined_deg);
    Ok(StabilityReport {
        trials,
        global_std_deg,
        refined_std_deg,
    })
}

fn ensure_normals(
    cloud: &PointCloud,
    k: usize,
    role: &str,
    warnings: &mut Vec<String>,
) -> Result<PointCloud, RegistrationError> {
    if cloud.has_normals() {
        return Ok(cloud.clone());
    }
    let estimate = estimate_normals(cloud, k)?;
    if estimate.degenerate_count > 0 {
        warnings.push(format!(
            "{role} cloud: {} of {} normal neighborhoods were collinear and used fallback normals",
            estimate.degenerate_count,
            cloud.len()
        ));
    }
    Ok(estimate.cloud)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn full_pipeline_aligns_a_displaced_cloud() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pts: Vec<_> = (0..500)
            .map(|_| {
                let dir = Vector3::new(
                    rng.random_range(-1.0f64..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                )
                .normalize();
                let r = 1.0 + 0.3 * (3.0 * dir.x).sin() + 0.2 * (5.0 * dir.y).cos();
                nalgebra::Point3::from(dir * r)
            })
            .collect();
        let target = PointCloud::new(pts).unwrap();
        let truth = RigidTransform::from_axis_angle(
            &Vector3::new(0.2, -0.7, 1.0),
            0.5,
            Vector3::new(0.3, 0.1, -0.2),
        );
        let source = target.transformed(&truth.inverse());
        let outcome = register_clouds(&source, &target, &RegistrationConfig::default()).unwrap();
        let residual = outcome.transform.compose(&truth.inverse());
        assert!(
            residual.rotation_angle_deg() < 0.1,
            "rotation residual {}",
            residual.rotation_angle_deg()
        );
        assert!(residual.translation.norm() < 0.01);
        assert!(outcome.global.inlier_fraction > 0.5);
    }

    #[test]
    fn stability_shows_icp_tightening_the_ransac_spread() {
        use crate::eval::synthetic::{generate_shape, jitter_cloud, random_pose, ShapeKind};

        let base = generate_shape(ShapeKind::BlendedBlob { surface_seed: 4 }, 500, 0.0, 21);
        let sigma = 0.001 * base.diameter();
        let target = jitter_cloud(&base, sigma, 31);
        let pose = random_pose(25.0, 0.08 * base.diameter(), 41);
        let source = jitter_cloud(&base, sigma, 32).transformed(&pose);

        let report =
            registration_stability(&source, &target, &RegistrationConfig::default(), &[1, 2, 3, 4])
                .unwrap();
        assert_eq!(report.trials.len(), 4);
        assert!(
            report.max_refined_std_deg() <= report.max_global_std_deg(),
            "refined {:?} vs global {:?}",
            report.refined_std_deg,
            report.global_std_deg
        );
        assert!(report.max_refined_std_deg() < 0.01);

        assert!(matches!(
            registration_stability(&source, &target, &RegistrationConfig::default(), &[7]),
            Err(RegistrationError::InvalidParams(_))
        ));
    }
}
