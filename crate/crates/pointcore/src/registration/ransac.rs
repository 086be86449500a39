//! Global registration from feature correspondences with seeded RANSAC.

use nalgebra::Point3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fpfh::FpfhDescriptor;
use super::rigid::estimate_rigid_from_correspondences;
use super::RegistrationError;
use crate::geometry::{DistanceParam, PointCloud, RigidTransform};
use crate::seed;

/// Below this inlier fraction the best hypothesis is considered a failure.
pub const MIN_INLIER_FRACTION: f64 = 0.05;

/// Iterations are evaluated in fixed-size blocks so that the early-exit
/// decision does not depend on thread scheduling.
const ITERATION_BLOCK: usize = 256;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RansacParams {
    pub max_iterations: usize,
    pub inlier_threshold: DistanceParam,
    pub sample_size: usize,
    pub seed: u64,
    /// Stop once the best hypothesis explains at least this fraction of the
    /// correspondences.
    pub early_exit_inlier_fraction: f64,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self {
            max_iterations: 100_000,
            inlier_threshold: DistanceParam::DiameterFraction(0.015),
            sample_size: 3,
            seed: 13,
            early_exit_inlier_fraction: 0.9,
        }
    }
}

/// Outcome of [`ransac_global_registration`].
#[derive(Debug, Clone)]
pub struct GlobalRegistration {
    pub transform: RigidTransform,
    /// Fraction of mutual correspondences within the inlier threshold under
    /// the returned transform.
    pub inlier_fraction: f64,
    /// Number of mutual feature correspondences the search ran on.
    pub correspondence_count: usize,
    pub iterations_run: usize,
}

/// Mutual nearest-neighbor matches in descriptor space, as `(source index,
/// target index)` pairs ordered by source index. Ties in descriptor
/// distance resolve to the lowest index on either side.
pub fn feature_correspondences(
    source: &[FpfhDescriptor],
    target: &[FpfhDescriptor],
) -> Vec<(usize, usize)> {
    if source.is_empty() || target.is_empty() {
        return Vec::new();
    }
    let nearest_in_target: Vec<usize> = source
        .par_iter()
        .map(|d| nearest_descriptor(d, target))
        .collect();
    let nearest_in_source: Vec<usize> = target
        .par_iter()
        .map(|d| nearest_descriptor(d, source))
        .collect();
    nearest_in_target
        .iter()
        .enumerate()
        .filter(|&(i, &j)| nearest_in_source[j] == i)
        .map(|(i, &j)| (i, j))
        .collect()
}

fn nearest_descriptor(query: &FpfhDescriptor, pool: &[FpfhDescriptor]) -> usize {
    let mut best = 0;
    let mut best_d2 = f64::INFINITY;
    for (j, cand) in pool.iter().enumerate() {
        let d2 = query.squared_distance(cand);
        if d2 < best_d2 {
            best_d2 = d2;
            best = j;
        }
    }
    best
}

/// Estimates the rigid motion aligning `source` onto `target` by sampling
/// minimal sets of mutual FPFH correspondences.
///
/// Each iteration draws its own RNG stream derived from `params.seed` and
/// the iteration number, so results are reproducible for any thread count
/// and the hypothesis search can run in parallel. The best hypothesis is
/// the one with the most inliers, with the earlier iteration winning ties.
pub fn ransac_global_registration(
    source: &PointCloud,
    target: &PointCloud,
    source_desc: &[FpfhDescriptor],
    target_desc: &[FpfhDescriptor],
    params: &RansacParams,
) -> Result<GlobalRegistration, RegistrationError> {
    if source_desc.len() != source.len() || target_desc.len() != target.len() {
        return Err(RegistrationError::InvalidParams(
            "descriptor count does not match cloud size".into(),
        ));
    }
    if params.sample_size < 3 {
        return Err(RegistrationError::InvalidParams(format!(
            "sample_size must be at least 3, got {}",
            params.sample_size
        )));
    }
    if params.max_iterations == 0 {
        return Err(RegistrationError::InvalidParams(
            "max_iterations must be at least 1".into(),
        ));
    }
    let threshold = params.inlier_threshold.resolve(target.diameter());
    if !(threshold > 0.0) {
        return Err(RegistrationError::InvalidParams(format!(
            "inlier threshold must resolve to a positive distance, got {threshold}"
        )));
    }

    let matches = feature_correspondences(source_desc, target_desc);
    if matches.is_empty() {
        return Err(RegistrationError::NoCorrespondences);
    }
    let pairs: Vec<(Point3<f64>, Point3<f64>)> = matches
        .iter()
        .map(|&(i, j)| (*source.point(i), *target.point(j)))
        .collect();
    if pairs.len() < params.sample_size {
        return Err(RegistrationError::RegistrationFailed {
            inlier_fraction: 0.0,
            min_inlier_fraction: MIN_INLIER_FRACTION,
        });
    }

    let threshold_sq = threshold * threshold;
    let mut best: Option<(usize, usize, RigidTransform)> = None;
    let mut iterations_run = 0;
    while iterations_run < params.max_iterations {
        let block_end = (iterations_run + ITERATION_BLOCK).min(params.max_iterations);
        let block_best = (iterations_run..block_end)
            .into_par_iter()
            .filter_map(|iter| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(params.seed, iter as u64));
                let picks =
                    rand::seq::index::sample(&mut rng, pairs.len(), params.sample_size).into_vec();
                let sample: Vec<_> = picks.iter().map(|&idx| pairs[idx]).collect();
                let hypothesis = estimate_rigid_from_correspondences(&sample).ok()?;
                let inliers = pairs
                    .iter()
                    .filter(|(a, b)| (hypothesis.apply_point(a) - b).norm_squared() < threshold_sq)
                    .count();
                Some((inliers, iter, hypothesis))
            })
            .reduce_with(|acc, cand| if candidate_beats(&cand, &acc) { cand } else { acc });
        if let Some(cand) = block_best {
            match &best {
                Some(current) if !candidate_beats(&cand, current) => {}
                _ => best = Some(cand),
            }
        }
        iterations_run = block_end;
        if let Some((count, _, _)) = &best {
            if *count as f64 / pairs.len() as f64 >= params.early_exit_inlier_fraction {
                break;
            }
        }
    }

    let (count, _, transform) = best.ok_or(RegistrationError::RegistrationFailed {
        inlier_fraction: 0.0,
        min_inlier_fraction: MIN_INLIER_FRACTION,
    })?;
    let inlier_fraction = count as f64 / pairs.len() as f64;
    if inlier_fraction < MIN_INLIER_FRACTION {
        return Err(RegistrationError::RegistrationFailed {
            inlier_fraction,
            min_inlier_fraction: MIN_INLIER_FRACTION,
        });
    }
    Ok(GlobalRegistration {
        transform,
        inlier_fraction,
        correspondence_count: pairs.len(),
        iterations_run,
    })
}

/// Whether candidate `a` beats `b`: more inliers, or the same count from an
/// earlier iteration.
fn candidate_beats(
    a: &(usize, usize, RigidTransform),
    b: &(usize, usize, RigidTransform),
) -> bool {
    a.0 > b.0 || (a.0 == b.0 && a.1 < b.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::estimate_normals;
    use crate::registration::fpfh::compute_fpfh;
    use nalgebra::Vector3;
    use rand::{Rng, SeedableRng};

    fn bumpy_cloud(n: usize, seed: u64) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts = (0..n)
            .map(|_| {
                let dir = Vector3::new(
                    rng.random_range(-1.0f64..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                )
                .normalize();
                let r = 1.0 + 0.25 * (4.0 * dir.x).sin() + 0.15 * (3.0 * dir.z).cos();
                Point3::from(dir * r)
            })
            .collect();
        let cloud = PointCloud::new(pts).unwrap();
        estimate_normals(&cloud, 12).unwrap().cloud
    }

    #[test]
    fn mutual_matching_of_identical_sets_is_the_identity_map() {
        let cloud = bumpy_cloud(300, 1);
        let desc = compute_fpfh(&cloud, 0.7).unwrap();
        // No isolated points: zero descriptors would tie with each other
        // at distance zero and collapse onto the lowest index.
        assert!(desc.iter().all(|d| d != &FpfhDescriptor::zeros()));
        let pairs = feature_correspondences(&desc, &desc);
        assert_eq!(pairs.len(), desc.len());
        assert!(pairs.iter().all(|&(i, j)| i == j));
    }

    #[test]
    fn registers_identical_clouds_to_identity() {
        let cloud = bumpy_cloud(200, 2);
        let desc = compute_fpfh(&cloud, 0.5).unwrap();
        let result =
            ransac_global_registration(&cloud, &cloud, &desc, &desc, &RansacParams::default())
                .unwrap();
        assert!(result.transform.rotation_angle_deg() < 1e-6);
        assert!(result.transform.translation.norm() < 1e-6);
        assert!((result.inlier_fraction - 1.0).abs() < 1e-12);
        assert_eq!(result.iterations_run, ITERATION_BLOCK);
    }

    #[test]
    fn recovers_a_large_rotation() {
        let cloud = bumpy_cloud(400, 3);
        let truth = RigidTransform::from_axis_angle(
            &Vector3::new(0.4, 1.0, -0.3),
            1.2,
            Vector3::new(0.8, -0.5, 0.3),
        );
        let moved = cloud.transformed(&truth);
        let src_desc = compute_fpfh(&moved, 0.5).unwrap();
        let tgt_desc = compute_fpfh(&cloud, 0.5).unwrap();
        let result = ransac_global_registration(
            &moved,
            &cloud,
            &src_desc,
            &tgt_desc,
            &RansacParams::default(),
        )
        .unwrap();
        // The recovered motion should invert the applied one.
        let residual = result.transform.compose(&truth);
        assert!(residual.rotation_angle_deg() < 0.5);
        assert!(residual.translation.norm() < 0.05);
        assert!(result.inlier_fraction > 0.8);
    }

    #[test]
    fn is_deterministic_across_runs() {
        let cloud = bumpy_cloud(150, 4);
        let moved = cloud.transformed(&RigidTransform::from_axis_angle(
            &Vector3::x(),
            0.6,
            Vector3::new(0.2, 0.0, -0.1),
        ));
        let src_desc = compute_fpfh(&moved, 0.5).unwrap();
        let tgt_desc = compute_fpfh(&cloud, 0.5).unwrap();
        let params = RansacParams::default();
        let a = ransac_global_registration(&moved, &cloud, &src_desc, &tgt_desc, &params).unwrap();
        let b = ransac_global_registration(&moved, &cloud, &src_desc, &tgt_desc, &params).unwrap();
        assert_eq!(a.transform.rotation, b.transform.rotation);
        assert_eq!(a.transform.translation, b.transform.translation);
        assert_eq!(a.inlier_fraction, b.inlier_fraction);
        assert_eq!(a.iterations_run, b.iterations_run);
    }

    #[test]
    fn unrelated_descriptors_fail_cleanly() {
        let cloud = bumpy_cloud(100, 5);
        let zero_desc = vec![FpfhDescriptor::zeros(); cloud.len()];
        let err = ransac_global_registration(
            &cloud,
            &cloud,
            &zero_desc,
            &zero_desc,
            &RansacParams {
                max_iterations: 512,
                ..RansacParams::default()
            },
        );
        // All-zero descriptors all tie, collapsing the mutual matching to
        // a single degenerate pair.
        assert!(matches!(
            err,
            Err(RegistrationError::RegistrationFailed { .. })
                | Err(RegistrationError::NoCorrespondences)
        ));
    }

    #[test]
    fn rejects_mismatched_descriptor_counts() {
        let cloud = bumpy_cloud(50, 6);
        let desc = compute_fpfh(&cloud, 0.5).unwrap();
        let short = &desc[..10];
        assert!(matches!(
            ransac_global_registration(
                &cloud,
                &cloud,
                short,
                &desc,
                &RansacParams::default()
            ),
            Err(RegistrationError::InvalidParams(_))
        ));
    }
}
