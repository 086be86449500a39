//! Seeded synthetic surfaces and defect injection.
//!
//! The generator produces quasi-uniform samples of analytic surfaces with
//! exact normals, then optionally perturbs them along the normal with
//! Gaussian noise. Defects modify a localized region and return per-point
//! ground-truth labels, which is what makes the full pipeline checkable
//! end to end without external data.

use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use thiserror::Error;

use crate::geometry::PointCloud;
use crate::RigidTransform;

#[derive(Debug, Error)]
pub enum SyntheticError {
    #[error("invalid defect parameter: {0}")]
    InvalidParams(String),
    #[error("defect injection requires per-point normals")]
    NormalsRequired,
    #[error("defect region contains no points")]
    RegionEmpty,
}

/// Analytic surface families with fixed dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShapeKind {
    /// Unit sphere at the origin.
    Sphere,
    /// Torus in the xy-plane, ring radius 1, tube radius 0.35.
    Torus,
    /// Axis-aligned box, 1.6 x 1.1 x 0.7, centered at the origin.
    Box,
    /// Iso-surface of three Gaussian metaballs whose layout is drawn from
    /// `surface_seed`; asymmetric, no two seeds give congruent shapes.
    BlendedBlob { surface_seed: u64 },
}

const TORUS_RING: f64 = 1.0;
const TORUS_TUBE: f64 = 0.35;
const BOX_HALF: [f64; 3] = [0.8, 0.55, 0.35];
const BLOB_ISO: f64 = 0.4;

struct Metaballs {
    centers: [Point3<f64>; 3],
    sigmas: [f64; 3],
}

impl Metaballs {
    fn from_seed(surface_seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(surface_seed);
        let mut centers = [Point3::origin(); 3];
        let mut sigmas = [0.0; 3];
        for i in 0..3 {
            centers[i] = Point3::new(
                rng.random_range(-0.6..0.6),
                rng.random_range(-0.6..0.6),
                rng.random_range(-0.6..0.6),
            );
            sigmas[i] = rng.random_range(0.45..0.7);
        }
        Self { centers, sigmas }
    }

    fn field(&self, p: &Point3<f64>) -> f64 {
        (0..3)
            .map(|i| {
                let d2 = (p - self.centers[i]).norm_squared();
                (-d2 / (self.sigmas[i] * self.sigmas[i])).exp()
            })
            .sum()
    }

    fn gradient(&self, p: &Point3<f64>) -> Vector3<f64> {
        let mut g = Vector3::zeros();
        for i in 0..3 {
            let d = p - self.centers[i];
            let s2 = self.sigmas[i] * self.sigmas[i];
            g += (-d.norm_squared() / s2).exp() * (-2.0 / s2) * d;
        }
        g
    }

    /// Center with the strongest field value, the origin of the ray march.
    fn ray_origin(&self) -> Point3<f64> {
        let mut best = self.centers[0];
        let mut best_f = self.field(&self.centers[0]);
        for c in &self.centers[1..] {
            let f = self.field(c);
            if f > best_f {
                best_f = f;
                best = *c;
            }
        }
        best
    }

    /// First crossing of the iso level along `dir` from the ray origin.
    fn surface_point(&self, origin: &Point3<f64>, dir: &Vector3<f64>) -> Point3<f64> {
        let mut lo = 0.0;
        let mut hi = 0.0;
        loop {
            hi += 0.05;
            if self.field(&(origin + hi * dir)) < BLOB_ISO {
                break;
            }
            lo = hi;
            if hi > 8.0 {
                break;
            }
        }
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if self.field(&(origin + mid * dir)) >= BLOB_ISO {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        origin + 0.5 * (lo + hi) * dir
    }
}

fn unit_direction(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    let z: f64 = rng.random_range(-1.0..1.0);
    let phi: f64 = rng.random_range(0.0..TAU);
    let s = (1.0 - z * z).sqrt();
    Vector3::new(s * phi.cos(), s * phi.sin(), z)
}

/// Samples `n_points` quasi-uniform surface points of the given shape,
/// with analytic normals, displaced along the normal by Gaussian noise of
/// standard deviation `noise_sigma`. Deterministic in `seed`.
///
/// Panics if `n_points < 100`; smaller clouds cannot support the
/// neighborhood sizes the rest of the pipeline assumes.
pub fn generate_shape(kind: ShapeKind, n_points: usize, noise_sigma: f64, seed: u64) -> PointCloud {
    assert!(n_points >= 100, "generate_shape needs at least 100 points");
    assert!(
        noise_sigma >= 0.0 && noise_sigma.is_finite(),
        "noise sigma must be finite and non-negative"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, noise_sigma.max(f64::MIN_POSITIVE)).unwrap();
    let mut points = Vec::with_capacity(n_points);
    let mut normals = Vec::with_capacity(n_points);
    let blob = match kind {
        ShapeKind::BlendedBlob { surface_seed } => Some(Metaballs::from_seed(surface_seed)),
        _ => None,
    };
    let blob_origin = blob.as_ref().map(|b| b.ray_origin());
    for _ in 0..n_points {
        let (p, n) = match kind {
            ShapeKind::Sphere => {
                let dir = unit_direction(&mut rng);
                (Point3::from(dir), dir)
            }
            ShapeKind::Torus => loop {
                let theta: f64 = rng.random_range(0.0..TAU);
                // Rejection keeps the sampling uniform in surface area:
                // the outer side of the tube is longer than the inner.
                let keep: f64 = rng.random_range(0.0..1.0);
                if keep > (TORUS_RING + TORUS_TUBE * theta.cos()) / (TORUS_RING + TORUS_TUBE) {
                    continue;
                }
                let phi: f64 = rng.random_range(0.0..TAU);
                let ring = TORUS_RING + TORUS_TUBE * theta.cos();
                let p = Point3::new(ring * phi.cos(), ring * phi.sin(), TORUS_TUBE * theta.sin());
                let n = Vector3::new(
                    theta.cos() * phi.cos(),
                    theta.cos() * phi.sin(),
                    theta.sin(),
                );
                break (p, n);
            },
            ShapeKind::Box => {
                let areas = [
                    BOX_HALF[1] * BOX_HALF[2],
                    BOX_HALF[0] * BOX_HALF[2],
                    BOX_HALF[0] * BOX_HALF[1],
                ];
                let total: f64 = 2.0 * (areas[0] + areas[1] + areas[2]);
                let mut pick = rng.random_range(0.0..total);
                let mut face = 5;
                for f in 0..6 {
                    let w = areas[f / 2];
                    if pick < w {
                        face = f;
                        break;
                    }
                    pick -= w;
                }
                let axis = face / 2;
                let sign = if face % 2 == 0 { 1.0 } else { -1.0 };
                let (b, c) = ((axis + 1) % 3, (axis + 2) % 3);
                let mut coords = [0.0; 3];
                coords[axis] = sign * BOX_HALF[axis];
                coords[b] = rng.random_range(-BOX_HALF[b]..BOX_HALF[b]);
                coords[c] = rng.random_range(-BOX_HALF[c]..BOX_HALF[c]);
                let mut n = Vector3::zeros();
                n[axis] = sign;
                (Point3::new(coords[0], coords[1], coords[2]), n)
            }
            ShapeKind::BlendedBlob { .. } => {
                let blob = blob.as_ref().unwrap();
                let dir = unit_direction(&mut rng);
                let p = blob.surface_point(blob_origin.as_ref().unwrap(), &dir);
                let n = -blob.gradient(&p).normalize();
                (p, n)
            }
        };
        let p = if noise_sigma > 0.0 {
            p + n * noise.sample(&mut rng)
        } else {
            p
        };
        points.push(p);
        normals.push(n);
    }
    PointCloud::with_normals(points, normals).unwrap()
}

/// Adds seeded isotropic Gaussian jitter to every point, keeping the
/// normals as they are. Panics when `sigma` is negative.
pub fn jitter_cloud(cloud: &PointCloud, sigma: f64, seed: u64) -> PointCloud {
    if sigma == 0.0 {
        return cloud.clone();
    }
    let noise = Normal::new(0.0, sigma).expect("jitter sigma must be non-negative");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points: Vec<Point3<f64>> = cloud
        .points()
        .iter()
        .map(|p| {
            p + Vector3::new(
                noise.sample(&mut rng),
                noise.sample(&mut rng),
                noise.sample(&mut rng),
            )
        })
        .collect();
    match cloud.normals() {
        Some(normals) => PointCloud::with_normals(points, normals.to_vec()),
        None => PointCloud::new(points),
    }
    .expect("jitter keeps points finite")
}

/// Seeded rigid pose with rotation up to `max_rotation_deg` about a random
/// axis and translation up to `max_translation` in a random direction.
pub fn random_pose(max_rotation_deg: f64, max_translation: f64, seed: u64) -> RigidTransform {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let axis = unit_direction(&mut rng);
    let angle = rng.random_range(0.0..max_rotation_deg.max(f64::MIN_POSITIVE)) * TAU / 360.0;
    let dir = unit_direction(&mut rng);
    let dist = rng.random_range(0.0..max_translation.max(f64::MIN_POSITIVE));
    RigidTransform::from_axis_angle(&axis, angle, dir * dist)
}

/// Localized surface modifications with ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DefectKind {
    /// Outward displacement along local normals.
    Bump,
    /// Inward displacement along local normals.
    Dent,
    /// Removal of all points in the region; the surviving shell around
    /// the hole carries the labels.
    Excision,
    /// An added off-surface cluster of points.
    Clutter,
}

/// Per-point ground truth for one defective cloud.
#[derive(Debug, Clone)]
pub struct DefectLabeling {
    pub point_labels: Vec<bool>,
    pub object_label: bool,
}

#[derive(Debug, Clone)]
pub struct DefectOutcome {
    pub cloud: PointCloud,
    pub labeling: DefectLabeling,
}

/// Width of the labeled shell left behind by an excision, as a multiple
/// of the region radius beyond the hole boundary.
const EXCISION_SHELL: f64 = 1.25;

fn cosine_falloff(t: f64) -> f64 {
    0.5 * (1.0 + (std::f64::consts::PI * t).cos())
}

/// Applies one defect to a seeded region of the cloud.
///
/// The region is centered on a randomly drawn cloud point and spans
/// `region_radius`. Displacement defects scale with a cosine falloff,
/// full at the center, zero at the boundary; points whose falloff is at
/// least one half are labeled anomalous. A zero magnitude is an explicit
/// null defect: the cloud is returned unchanged with all labels clear.
pub fn inject_defect(
    cloud: &PointCloud,
    kind: DefectKind,
    magnitude: f64,
    region_radius: f64,
    seed: u64,
) -> Result<DefectOutcome, SyntheticError> {
    if !(magnitude >= 0.0 && magnitude.is_finite()) {
        return Err(SyntheticError::InvalidParams(format!(
            "magnitude must be finite and non-negative, got {magnitude}"
        )));
    }
    if !(region_radius > 0.0 && region_radius.is_finite()) {
        return Err(SyntheticError::InvalidParams(format!(
            "region radius must be finite and positive, got {region_radius}"
        )));
    }
    if region_radius >= cloud.diameter() / 4.0 {
        return Err(SyntheticError::InvalidParams(format!(
            "region radius {region_radius} must stay below a quarter of the cloud diameter {}",
            cloud.diameter()
        )));
    }
    if magnitude == 0.0 {
        return Ok(DefectOutcome {
            cloud: cloud.clone(),
            labeling: DefectLabeling {
                point_labels: vec![false; cloud.len()],
                object_label: false,
            },
        });
    }
    if cloud.normals().is_none() && kind != DefectKind::Excision {
        return Err(SyntheticError::NormalsRequired);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let anchor_idx = rng.random_range(0..cloud.len());
    let anchor = *cloud.point(anchor_idx);
    let dist: Vec<f64> = cloud
        .points()
        .iter()
        .map(|p| (p - anchor).norm())
        .collect();

    match kind {
        DefectKind::Bump | DefectKind::Dent => {
            let sign = if kind == DefectKind::Bump { 1.0 } else { -1.0 };
            let normals = cloud.normals().unwrap();
            let mut points = cloud.points().to_vec();
            let mut labels = vec![false; cloud.len()];
            for i in 0..points.len() {
                if dist[i] <= region_radius {
                    let t = dist[i] / region_radius;
                    points[i] += normals[i] * (sign * magnitude * cosine_falloff(t));
                    labels[i] = t <= 0.5;
                }
            }
            let cloud = match cloud.normals() {
                Some(n) => PointCloud::with_normals(points, n.to_vec()).unwrap(),
                None => PointCloud::new(points).unwrap(),
            };
            Ok(DefectOutcome {
                cloud,
                labeling: DefectLabeling {
                    point_labels: labels,
                    object_label: true,
                },
            })
        }
        DefectKind::Excision => {
            let keep: Vec<usize> = (0..cloud.len())
                .filter(|&i| dist[i] > region_radius)
                .collect();
            if keep.is_empty() {
                return Err(SyntheticError::RegionEmpty);
            }
            let labels: Vec<bool> = keep
                .iter()
                .map(|&i| dist[i] <= EXCISION_SHELL * region_radius)
                .collect();
            if !labels.iter().any(|&l| l) {
                return Err(SyntheticError::RegionEmpty);
            }
            let points: Vec<Point3<f64>> = keep.iter().map(|&i| *cloud.point(i)).collect();
            let cloud = match cloud.normals() {
                Some(n) => {
                    let normals: Vec<Vector3<f64>> = keep.iter().map(|&i| n[i]).collect();
                    PointCloud::with_normals(points, normals).unwrap()
                }
                None => PointCloud::new(points).unwrap(),
            };
            Ok(DefectOutcome {
                cloud,
                labeling: DefectLabeling {
                    point_labels: labels,
                    object_label: true,
                },
            })
        }
        DefectKind::Clutter => {
            let normals = cloud.normals().unwrap();
            let count = dist.iter().filter(|&&d| d <= region_radius).count();
            let center = anchor + normals[anchor_idx] * magnitude;
            let spread = Normal::new(0.0, region_radius / 3.0).unwrap();
            let mut points = cloud.points().to_vec();
            let mut all_normals = normals.to_vec();
            let mut labels = vec![false; cloud.len()];
            for _ in 0..count {
                let offset = Vector3::new(
                    spread.sample(&mut rng),
                    spread.sample(&mut rng),
                    spread.sample(&mut rng),
                );
                points.push(center + offset);
                all_normals.push(normals[anchor_idx]);
                labels.push(true);
            }
            Ok(DefectOutcome {
                cloud: PointCloud::with_normals(points, all_normals).unwrap(),
                labeling: DefectLabeling {
                    point_labels: labels,
                    object_label: true,
                },
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn jitter_perturbs_points_but_not_normals() {
        let cloud = generate_shape(ShapeKind::Sphere, 200, 0.0, 3);
        let jittered = jitter_cloud(&cloud, 0.01, 9);
        assert_eq!(jittered.len(), cloud.len());
        assert_eq!(jittered.normals().unwrap(), cloud.normals().unwrap());
        let max_shift = cloud
            .points()
            .iter()
            .zip(jittered.points())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(max_shift > 0.0 && max_shift < 0.1);

        let identical = jitter_cloud(&cloud, 0.01, 9);
        assert_eq!(identical.points(), jittered.points());
        assert_eq!(jitter_cloud(&cloud, 0.0, 5).points(), cloud.points());
    }

    #[test]
    fn sphere_points_sit_on_the_unit_sphere() {
        let cloud = generate_shape(ShapeKind::Sphere, 500, 0.0, 7);
        assert_eq!(cloud.len(), 500);
        let normals = cloud.normals().unwrap();
        for (p, n) in cloud.points().iter().zip(normals) {
            assert_relative_eq!(p.coords.norm(), 1.0, epsilon = 1e-9);
            assert_relative_eq!(n.norm(), 1.0, epsilon = 1e-12);
            assert_relative_eq!(p.coords.dot(n), 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn same_seed_reproduces_the_cloud() {
        for kind in [
            ShapeKind::Sphere,
            ShapeKind::Torus,
            ShapeKind::Box,
            ShapeKind::BlendedBlob { surface_seed: 3 },
        ] {
            let a = generate_shape(kind, 200, 0.01, 99);
            let b = generate_shape(kind, 200, 0.01, 99);
            assert_eq!(a.points(), b.points());
            assert_eq!(a.normals().unwrap(), b.normals().unwrap());
        }
    }

    #[test]
    fn torus_extent_matches_the_analytic_bounds() {
        let cloud = generate_shape(ShapeKind::Torus, 5000, 0.0, 5);
        let (min, max) = cloud.aabb();
        let reach = TORUS_RING + TORUS_TUBE;
        for p in cloud.points() {
            let ring = (p.x * p.x + p.y * p.y).sqrt();
            assert!(ring <= reach + 1e-12 && ring >= TORUS_RING - TORUS_TUBE - 1e-12);
            assert!(p.z.abs() <= TORUS_TUBE + 1e-12);
        }
        // 5000 samples come close to every extreme.
        assert!(max.x > reach - 0.02 && min.x < -(reach - 0.02));
        assert!(max.z > TORUS_TUBE - 0.01 && min.z < -(TORUS_TUBE - 0.01));
        // On-surface identity: distance from the tube's center circle.
        for p in cloud.points() {
            let ring = (p.x * p.x + p.y * p.y).sqrt();
            let tube = ((ring - TORUS_RING).powi(2) + p.z * p.z).sqrt();
            assert_relative_eq!(tube, TORUS_TUBE, epsilon = 1e-9);
        }
    }

    #[test]
    fn box_points_lie_on_faces_with_matching_normals() {
        let cloud = generate_shape(ShapeKind::Box, 1000, 0.0, 11);
        let normals = cloud.normals().unwrap();
        for (p, n) in cloud.points().iter().zip(normals) {
            let ratios = [
                p.x.abs() / BOX_HALF[0],
                p.y.abs() / BOX_HALF[1],
                p.z.abs() / BOX_HALF[2],
            ];
            let on_face = ratios
                .iter()
                .enumerate()
                .find(|(_, r)| (**r - 1.0).abs() < 1e-12)
                .map(|(i, _)| i)
                .expect("point must lie on a face");
            let mut expected = Vector3::zeros();
            expected[on_face] = p[on_face].signum();
            assert_eq!(*n, expected);
        }
    }

    #[test]
    fn blob_points_lie_on_the_iso_surface() {
        let kind = ShapeKind::BlendedBlob { surface_seed: 21 };
        let cloud = generate_shape(kind, 400, 0.0, 8);
        let balls = Metaballs::from_seed(21);
        for (p, n) in cloud.points().iter().zip(cloud.normals().unwrap()) {
            assert_relative_eq!(balls.field(p), BLOB_ISO, epsilon = 1e-9);
            assert_relative_eq!(n.norm(), 1.0, epsilon = 1e-12);
        }
        let other = generate_shape(ShapeKind::BlendedBlob { surface_seed: 22 }, 400, 0.0, 8);
        assert_ne!(cloud.points(), other.points());
    }

    #[test]
    fn noise_spreads_points_by_roughly_sigma() {
        let cloud = generate_shape(ShapeKind::Sphere, 2000, 0.01, 3);
        let devs: Vec<f64> = cloud
            .points()
            .iter()
            .map(|p| (p.coords.norm() - 1.0).abs())
            .collect();
        let max = devs.iter().cloned().fold(0.0, f64::max);
        let mean: f64 = devs.iter().sum::<f64>() / devs.len() as f64;
        assert!(max < 0.06, "max deviation {max}");
        // Mean absolute deviation of a half-normal is sigma * sqrt(2/pi).
        assert_relative_eq!(mean, 0.01 * (2.0 / std::f64::consts::PI).sqrt(), epsilon = 0.002);
    }

    #[test]
    #[should_panic(expected = "at least 100 points")]
    fn tiny_clouds_are_rejected() {
        generate_shape(ShapeKind::Sphere, 99, 0.0, 1);
    }

    #[test]
    fn zero_magnitude_defect_is_a_no_op() {
        let cloud = generate_shape(ShapeKind::Sphere, 300, 0.0, 2);
        for kind in [
            DefectKind::Bump,
            DefectKind::Dent,
            DefectKind::Excision,
            DefectKind::Clutter,
        ] {
            let out = inject_defect(&cloud, kind, 0.0, 0.3, 5).unwrap();
            assert_eq!(out.cloud.points(), cloud.points());
            assert!(!out.labeling.object_label);
            assert!(out.labeling.point_labels.iter().all(|&l| !l));
        }
    }

    #[test]
    fn bump_pushes_labeled_points_outward() {
        let cloud = generate_shape(ShapeKind::Sphere, 2000, 0.0, 2);
        let magnitude = 0.1;
        let out = inject_defect(&cloud, DefectKind::Bump, magnitude, 0.3, 5).unwrap();
        assert!(out.labeling.object_label);
        let labeled = out
            .labeling
            .point_labels
            .iter()
            .filter(|&&l| l)
            .count();
        assert!(labeled > 0);
        for (p, &l) in out.cloud.points().iter().zip(&out.labeling.point_labels) {
            if l {
                // Falloff is at least one half wherever the label is set.
                assert!(p.coords.norm() > 1.0 + 0.4 * magnitude);
            }
        }
        let dent = inject_defect(&cloud, DefectKind::Dent, magnitude, 0.3, 5).unwrap();
        for (p, &l) in dent.cloud.points().iter().zip(&dent.labeling.point_labels) {
            if l {
                assert!(p.coords.norm() < 1.0 - 0.4 * magnitude);
            }
        }
    }

    #[test]
    fn excision_removes_the_region_and_labels_the_shell() {
        let cloud = generate_shape(ShapeKind::Sphere, 2000, 0.0, 2);
        let out = inject_defect(&cloud, DefectKind::Excision, 0.05, 0.25, 5).unwrap();
        let removed = cloud.len() - out.cloud.len();
        assert!(removed > 0);
        assert!(out.labeling.object_label);
        assert_eq!(out.labeling.point_labels.len(), out.cloud.len());
        assert!(out.labeling.point_labels.iter().any(|&l| l));
        // Labeled survivors hug the hole; the hole itself is empty.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let anchor = *cloud.point(rng.random_range(0..cloud.len()));
        for (p, &l) in out.cloud.points().iter().zip(&out.labeling.point_labels) {
            let d = (p - anchor).norm();
            assert!(d > 0.25);
            assert_eq!(l, d <= EXCISION_SHELL * 0.25);
        }
    }

    #[test]
    fn clutter_appends_a_labeled_cluster() {
        let cloud = generate_shape(ShapeKind::Sphere, 1500, 0.0, 2);
        let out = inject_defect(&cloud, DefectKind::Clutter, 0.2, 0.25, 9).unwrap();
        let added = out.cloud.len() - cloud.len();
        assert!(added > 0);
        assert_eq!(
            out.labeling.point_labels.iter().filter(|&&l| l).count(),
            added
        );
        assert!(out.labeling.point_labels[..cloud.len()].iter().all(|&l| !l));
        assert!(out.labeling.point_labels[cloud.len()..].iter().all(|&l| l));
    }

    #[test]
    fn defect_injection_is_deterministic() {
        let cloud = generate_shape(ShapeKind::Torus, 1200, 0.0, 4);
        let a = inject_defect(&cloud, DefectKind::Bump, 0.1, 0.3, 17).unwrap();
        let b = inject_defect(&cloud, DefectKind::Bump, 0.1, 0.3, 17).unwrap();
        assert_eq!(a.cloud.points(), b.cloud.points());
        assert_eq!(a.labeling.point_labels, b.labeling.point_labels);
    }

    #[test]
    fn oversized_regions_are_rejected() {
        let cloud = generate_shape(ShapeKind::Sphere, 300, 0.0, 2);
        assert!(matches!(
            inject_defect(&cloud, DefectKind::Bump, 0.1, cloud.diameter(), 1),
            Err(SyntheticError::InvalidParams(_))
        ));
    }

    #[test]
    fn object_label_agrees_with_point_labels() {
        let cloud = generate_shape(ShapeKind::Box, 1500, 0.0, 6);
        for (kind, magnitude) in [
            (DefectKind::Bump, 0.08),
            (DefectKind::Dent, 0.08),
            (DefectKind::Excision, 0.08),
            (DefectKind::Clutter, 0.15),
            (DefectKind::Bump, 0.0),
        ] {
            let out = inject_defect(&cloud, kind, magnitude, 0.2, 23).unwrap();
            assert_eq!(
                out.labeling.object_label,
                out.labeling.point_labels.iter().any(|&l| l)
            );
        }
    }

    #[test]
    fn random_pose_stays_within_bounds() {
        for seed in 0..20 {
            let t = random_pose(30.0, 0.25, seed);
            assert!(t.rotation_angle_deg() <= 30.0 + 1e-9);
            assert!(t.translation.norm() <= 0.25 + 1e-12);
            assert!(t.orthonormality_error() < 1e-12);
        }
    }
}
