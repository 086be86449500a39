//! Shared fixtures and independent brute-force oracles for the
//! integration suites. Oracles deliberately avoid the library's own
//! data structures and algorithms so agreement is meaningful.
#![allow(dead_code)]

use std::f64::consts::TAU;

use nalgebra::{Point3, Vector3};
use pointcore::eval::synthetic::jitter_cloud;
use pointcore::geometry::DistanceParam;
use pointcore::registration::RegistrationConfig;
use pointcore::sampling::DistanceAggregate;
use pointcore::{PointCloud, RigidTransform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// An asymmetric calibration surface: a torus in the xy-plane (ring
/// radius 1, tube radius 0.35) carrying 65% of the points, plus a
/// sphere of radius 0.5 centered at (1.35, 0.63, 0.52) overlapping the
/// tube with the rest. The off-axis sphere breaks the torus symmetry,
/// so a registration problem on this shape has a unique answer.
pub fn composite_cloud(n: usize, rng: &mut ChaCha8Rng) -> PointCloud {
    let pts: Vec<Point3<f64>> = (0..n)
        .map(|_| {
            if rng.random_range(0.0f64..1.0) < 0.65 {
                loop {
                    let theta = rng.random_range(0.0f64..TAU);
                    if rng.random_range(0.0f64..1.0) > (1.0 + 0.35 * theta.cos()) / 1.35 {
                        continue;
                    }
                    let phi = rng.random_range(0.0f64..TAU);
                    let ring = 1.0 + 0.35 * theta.cos();
                    break Point3::new(ring * phi.cos(), ring * phi.sin(), 0.35 * theta.sin());
                }
            } else {
                let z = rng.random_range(-1.0f64..1.0);
                let phi = rng.random_range(0.0f64..TAU);
                let s = (1.0 - z * z).sqrt();
                Point3::new(
                    1.35 + 0.5 * s * phi.cos(),
                    0.63 + 0.5 * s * phi.sin(),
                    0.52 + 0.5 * z,
                )
            }
        })
        .collect();
    PointCloud::new(pts).unwrap()
}

/// Registration settings tuned for independently sampled pairs of the
/// composite surface at 1000-2000 points.
pub fn composite_registration_config() -> RegistrationConfig {
    let mut cfg = RegistrationConfig::default();
    cfg.normals_k = 15;
    cfg.fpfh_radius = DistanceParam::DiameterFraction(0.12);
    cfg.ransac.inlier_threshold = DistanceParam::DiameterFraction(0.05);
    cfg.icp.max_correspondence = DistanceParam::DiameterFraction(0.08);
    cfg
}

/// A random rigid pose drawn from `rng`: rotation up to
/// `max_rotation_deg` about a random axis, translation up to
/// `max_translation` in a random direction.
pub fn draw_pose(
    rng: &mut ChaCha8Rng,
    max_rotation_deg: f64,
    max_translation: f64,
) -> RigidTransform {
    let axis = Vector3::new(
        rng.random_range(-1.0f64..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    )
    .normalize();
    let angle = rng.random_range(0.0..max_rotation_deg) * TAU / 360.0;
    let dir = Vector3::new(
        rng.random_range(-1.0f64..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    )
    .normalize();
    let translation = dir * rng.random_range(0.0..max_translation);
    RigidTransform::from_axis_angle(&axis, angle, translation)
}

/// One registration problem: two independent noisy samplings of the
/// composite surface, the source displaced by a known pose.
pub struct RegistrationCase {
    pub source: PointCloud,
    pub target: PointCloud,
    pub pose: RigidTransform,
    pub diameter: f64,
}

/// Builds a seeded registration case at `n` points per side with
/// per-side isotropic noise of 0.001 of the diameter and a pose of up to
/// 30 degrees and 0.1 diameters.
pub fn composite_registration_case(seed: u64, n: usize) -> RegistrationCase {
    let mut rng = seeded_rng(400 + seed);
    let target_base = composite_cloud(n, &mut rng);
    let source_base = composite_cloud(n, &mut rng);
    let diameter = target_base.diameter();
    let sigma = 0.001 * diameter;
    let target = jitter_cloud(&target_base, sigma, seed * 2 + 1);
    let pose = draw_pose(&mut rng, 30.0, 0.1 * diameter);
    let source = jitter_cloud(&source_base, sigma, seed * 2 + 2).transformed(&pose);
    RegistrationCase {
        source,
        target,
        pose,
        diameter,
    }
}

/// Residual of a recovered registration against the pose that displaced
/// the source: rotation error in degrees and translation error as a
/// fraction of `diameter`. Exact recovery gives (0, 0).
pub fn pose_error(recovered: &RigidTransform, pose: &RigidTransform, diameter: f64) -> (f64, f64) {
    let residual = recovered.compose(pose);
    (
        residual.rotation_angle_deg(),
        residual.translation.norm() / diameter,
    )
}

/// Exact k nearest neighbors by full scan, sorted by distance with
/// index as tie-break.
pub fn brute_knn(points: &[Point3<f64>], query: &Point3<f64>, k: usize) -> Vec<(usize, f64)> {
    let mut all: Vec<(usize, f64)> = points
        .iter()
        .enumerate()
        .map(|(i, p)| (i, (p - query).norm()))
        .collect();
    all.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

/// The next greedy center by full scan: the unselected point whose
/// aggregated distance to the selected set is largest, lowest index on
/// ties.
pub fn greedy_pick_oracle(
    points: &[Point3<f64>],
    selected: &[usize],
    criterion: DistanceAggregate,
) -> usize {
    let mut best = usize::MAX;
    let mut best_score = f64::NEG_INFINITY;
    for (i, p) in points.iter().enumerate() {
        if selected.contains(&i) {
            continue;
        }
        let distances = selected.iter().map(|&s| (points[s] - p).norm());
        let score = match criterion {
            DistanceAggregate::Mean => {
                distances.sum::<f64>() / selected.len() as f64
            }
            DistanceAggregate::Min => distances.fold(f64::INFINITY, f64::min),
        };
        if score > best_score {
            best_score = score;
            best = i;
        }
    }
    best
}

/// Per-point raw scores by full scan: for each test point, the three
/// nearest bank coordinates (index tie-break), mean of the three
/// coordinate distances, and minimum Euclidean feature distance to
/// those same three elements.
pub fn raw_scores_oracle(
    bank_coords: &[Point3<f64>],
    bank_features: &[Vec<f64>],
    test_coords: &[Point3<f64>],
    test_features: &[Vec<f64>],
) -> (Vec<f64>, Vec<f64>) {
    let mut coord_scores = Vec::with_capacity(test_coords.len());
    let mut feature_scores = Vec::with_capacity(test_coords.len());
    for (p, f) in test_coords.iter().zip(test_features) {
        let nearest = brute_knn(bank_coords, p, 3);
        coord_scores.push(nearest.iter().map(|n| n.1).sum::<f64>() / 3.0);
        let min_feat = nearest
            .iter()
            .map(|&(i, _)| euclidean(&bank_features[i], f))
            .fold(f64::INFINITY, f64::min);
        feature_scores.push(min_feat);
    }
    (coord_scores, feature_scores)
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// AUROC by explicit pair counting: concordant positive-negative pairs
/// score 1, ties score 1/2.
pub fn auroc_oracle(labels: &[bool], scores: &[f64]) -> f64 {
    let mut concordant = 0.0;
    let mut pairs = 0.0;
    for (i, &li) in labels.iter().enumerate() {
        if !li {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj {
                continue;
            }
            pairs += 1.0;
            if scores[i] > scores[j] {
                concordant += 1.0;
            } else if scores[i] == scores[j] {
                concordant += 0.5;
            }
        }
    }
    concordant / pairs
}

/// Average precision by explicit threshold enumeration over unique
/// scores in descending order; tied scores enter together.
pub fn aupr_oracle(labels: &[bool], scores: &[f64]) -> f64 {
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();

    let n_pos = labels.iter().filter(|&&l| l).count() as f64;
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for &t in &thresholds {
        let mut tp = 0.0;
        let mut fp = 0.0;
        for (&label, &score) in labels.iter().zip(scores) {
            if score >= t {
                if label {
                    tp += 1.0;
                } else {
                    fp += 1.0;
                }
            }
        }
        let recall = tp / n_pos;
        let precision = tp / (tp + fp);
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    ap
}

/// Uniform random points in a cube of the given half-extent.
pub fn random_points(rng: &mut ChaCha8Rng, n: usize, half_extent: f64) -> Vec<Point3<f64>> {
    (0..n)
        .map(|_| {
            Point3::new(
                rng.random_range(-half_extent..half_extent),
                rng.random_range(-half_extent..half_extent),
                rng.random_range(-half_extent..half_extent),
            )
        })
        .collect()
}

/// Uniform random feature rows in [0, 1).
pub fn random_features(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..dim).map(|_| rng.random_range(0.0..1.0)).collect())
        .collect()
}

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
