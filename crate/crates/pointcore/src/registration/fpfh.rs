//! Fast Point Feature Histograms over oriented point clouds.

use nalgebra::{Point3, Vector3};
use rayon::prelude::*;

use super::RegistrationError;
use crate::geometry::PointCloud;

/// Bins per angular feature. Three features concatenate to the descriptor.
pub const FPFH_BINS: usize = 11;
/// Total descriptor dimensionality.
pub const FPFH_DIM: usize = 3 * FPFH_BINS;

/// A 33-dimensional pose-invariant descriptor of the local surface around
/// one point. Each 11-bin block sums to one unless the point had no
/// neighbors inside the support radius, in which case the descriptor is
/// all zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct FpfhDescriptor(pub [f64; FPFH_DIM]);

impl FpfhDescriptor {
    pub fn zeros() -> Self {
        Self([0.0; FPFH_DIM])
    }

    pub fn squared_distance(&self, other: &Self) -> f64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    pub fn distance(&self, other: &Self) -> f64 {
        self.squared_distance(other).sqrt()
    }
}

/// Computes an FPFH descriptor for every point, using neighbors within
/// `radius`. The cloud must carry normals.
///
/// The first pass builds each point's simplified histogram from the three
/// pair angles against its neighbors; the second blends every histogram
/// with its neighbors' histograms weighted by inverse distance, then
/// renormalizes each block.
pub fn compute_fpfh(
    cloud: &PointCloud,
    radius: f64,
) -> Result<Vec<FpfhDescriptor>, RegistrationError> {
    let normals = cloud.normals().ok_or(RegistrationError::NormalsRequired)?;
    if !(radius > 0.0) {
        return Err(RegistrationError::InvalidParams(format!(
            "FPFH radius must be positive, got {radius}"
        )));
    }
    let index = cloud.index();
    let points = cloud.points();

    let neighborhoods: Vec<Vec<(usize, f64)>> = points
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            index
                .radius(p, radius)
                .into_iter()
                .filter(|n| n.index != i)
                .map(|n| (n.index, n.distance))
                .collect()
        })
        .collect();

    let spfh: Vec<[f64; FPFH_DIM]> = points
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let mut hist = [0.0f64; FPFH_DIM];
            let mut pairs = 0usize;
            for &(j, _) in &neighborhoods[i] {
                if let Some((alpha, phi, theta)) =
                    pair_features(p, &normals[i], &points[j], &normals[j])
                {
                    hist[bin_unit(alpha)] += 1.0;
                    hist[FPFH_BINS + bin_unit(phi)] += 1.0;
                    hist[2 * FPFH_BINS + bin_angle(theta)] += 1.0;
                    pairs += 1;
                }
            }
            if pairs > 0 {
                for v in &mut hist {
                    *v /= pairs as f64;
                }
            }
            hist
        })
        .collect();

    let descriptors = spfh
        .par_iter()
        .enumerate()
        .map(|(i, own)| {
            let neighbors = &neighborhoods[i];
            let mut out = *own;
            if !neighbors.is_empty() {
                let k = neighbors.len() as f64;
                for &(j, dist) in neighbors {
                    let w = 1.0 / (k * dist.max(1e-12));
                    for (o, s) in out.iter_mut().zip(spfh[j].iter()) {
                        *o += w * s;
                    }
                }
                normalize_blocks(&mut out);
            }
            FpfhDescriptor(out)
        })
        .collect();
    Ok(descriptors)
}

/// The three pair angles of the Darboux frame between two oriented points.
/// The point whose normal is better aligned with the connecting line acts
/// as the frame source; ties keep the first point. Returns `None` for
/// coincident points or when the source normal is parallel to the
/// connecting line, since the frame is undefined there.
fn pair_features(
    p1: &Point3<f64>,
    n1: &Vector3<f64>,
    p2: &Point3<f64>,
    n2: &Vector3<f64>,
) -> Option<(f64, f64, f64)> {
    let delta = p2 - p1;
    let dist = delta.norm();
    if dist <= 0.0 {
        return None;
    }
    let dhat = delta / dist;
    let (ns, nt, dir) = if n1.dot(&dhat).abs() >= n2.dot(&dhat).abs() {
        (n1, n2, dhat)
    } else {
        (n2, n1, -dhat)
    };
    let u = *ns;
    let v_raw = dir.cross(&u);
    let v_norm = v_raw.norm();
    if v_norm < 1e-12 {
        return None;
    }
    let v = v_raw / v_norm;
    let w = u.cross(&v);
    let alpha = v.dot(nt);
    let phi = u.dot(&dir);
    let theta = w.dot(nt).atan2(u.dot(nt));
    Some((alpha, phi, theta))
}

/// Bin for a value in [-1, 1].
fn bin_unit(x: f64) -> usize {
    (((x + 1.0) / 2.0 * FPFH_BINS as f64) as usize).min(FPFH_BINS - 1)
}

/// Bin for an angle in [-pi, pi].
fn bin_angle(x: f64) -> usize {
    ((((x + std::f64::consts::PI) / std::f64::consts::TAU) * FPFH_BINS as f64) as usize)
        .min(FPFH_BINS - 1)
}

fn normalize_blocks(hist: &mut [f64; FPFH_DIM]) {
    for block in 0..3 {
        let range = block * FPFH_BINS..(block + 1) * FPFH_BINS;
        let sum: f64 = hist[range.clone()].iter().sum();
        if sum > 0.0 {
            for v in &mut hist[range] {
                *v /= sum;
            }
        }
    }
}
