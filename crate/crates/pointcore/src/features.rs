//! Per-point feature matrices, center extraction and 3-NN interpolation.
//!
//! Features either come from the built-in FPFH descriptor or from an
//! externally computed per-point matrix (for example a learned embedding
//! exported by another tool). Only center points keep their own feature;
//! everything else is reconstructed by blending the three nearest centers,
//! which keeps the memory bank small without leaving off-center test
//! points featureless.

use nalgebra::Point3;
use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{PointCloud, SpatialIndex};
use crate::registration::{compute_fpfh, RegistrationError};

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("feature matrix has {got} rows, cloud has {expected} points")]
    FeatureCountMismatch { got: usize, expected: usize },
    #[error("feature dimension {got} does not match {expected}")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("non-finite feature value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("interpolation needs at least {needed} centers, got {got}")]
    TooFewCenters { needed: usize, got: usize },
    #[error("center index {index} out of bounds for cloud of {len}")]
    CenterOutOfBounds { index: usize, len: usize },
    #[error("center index {0} appears more than once")]
    DuplicateCenter(usize),
    #[error(transparent)]
    Registration(#[from] RegistrationError),
}

/// A dense row-major `rows x dim` matrix of per-point features. Values are
/// validated finite on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    data: Vec<f64>,
    dim: usize,
}

impl FeatureMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, FeatureError> {
        let dim = rows.first().map(|r| r.len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            if row.len() != dim {
                return Err(FeatureError::DimensionMismatch {
                    got: row.len(),
                    expected: dim,
                });
            }
            data.extend_from_slice(row);
        }
        Self::from_flat(data, dim)
    }

    pub fn from_flat(data: Vec<f64>, dim: usize) -> Result<Self, FeatureError> {
        if dim == 0 || data.len() % dim != 0 {
            return Err(FeatureError::DimensionMismatch {
                got: dim,
                expected: 1,
            });
        }
        for (i, v) in data.iter().enumerate() {
            if !v.is_finite() {
                return Err(FeatureError::NonFinite {
                    row: i / dim,
                    col: i % dim,
                });
            }
        }
        Ok(Self { data, dim })
    }

    pub fn nrows(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    /// Euclidean distance between row `i` and an external feature vector.
    pub fn row_distance(&self, i: usize, other: &[f64]) -> f64 {
        self.row(i)
            .iter()
            .zip(other)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// Where per-point features come from.
#[derive(Debug, Clone)]
pub enum FeatureSource<'a> {
    /// Built-in FPFH with an absolute support radius. The cloud must carry
    /// normals.
    Fpfh { radius: f64 },
    /// A caller-supplied matrix with one row per cloud point.
    Matrix(&'a FeatureMatrix),
}

/// Extracts the feature rows of the selected center points.
pub fn extract_center_features(
    cloud: &PointCloud,
    centers: &[usize],
    source: &FeatureSource,
) -> Result<FeatureMatrix, FeatureError> {
    for &c in centers {
        if c >= cloud.len() {
            return Err(FeatureError::CenterOutOfBounds {
                index: c,
                len: cloud.len(),
            });
        }
    }
    match source {
        FeatureSource::Fpfh { radius } => {
            let descriptors = compute_fpfh(cloud, *radius)?;
            let rows: Vec<Vec<f64>> = centers
                .iter()
                .map(|&c| descriptors[c].0.to_vec())
                .collect();
            FeatureMatrix::from_rows(&rows)
        }
        FeatureSource::Matrix(matrix) => {
            if matrix.nrows() != cloud.len() {
                return Err(FeatureError::FeatureCountMismatch {
                    got: matrix.nrows(),
                    expected: cloud.len(),
                });
            }
            let rows: Vec<Vec<f64>> = centers.iter().map(|&c| matrix.row(c).to_vec()).collect();
            FeatureMatrix::from_rows(&rows)
        }
    }
}

/// The three nearest centers to a query and their blend weights.
#[derive(Debug, Clone)]
pub struct InterpolationBlend {
    pub indices: [usize; 3],
    pub distances: [f64; 3],
    pub weights: [f64; 3],
}

/// Center positions with their features, indexed for 3-NN interpolation.
#[derive(Debug, Clone)]
pub struct CenterFeatureSet {
    positions: Vec<Point3<f64>>,
    features: FeatureMatrix,
    index: SpatialIndex,
}

impl CenterFeatureSet {
    pub fn new(positions: Vec<Point3<f64>>, features: FeatureMatrix) -> Result<Self, FeatureError> {
        if positions.len() < 3 {
            return Err(FeatureError::TooFewCenters {
                needed: 3,
                got: positions.len(),
            });
        }
        if features.nrows() != positions.len() {
            return Err(FeatureError::FeatureCountMismatch {
                got: features.nrows(),
                expected: positions.len(),
            });
        }
        let index = SpatialIndex::build(&positions);
        Ok(Self {
            positions,
            features,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.dim()
    }

    pub fn positions(&self) -> &[Point3<f64>] {
        &self.positions
    }

    pub fn features(&self) -> &FeatureMatrix {
        &self.features
    }

    /// Finds the three nearest centers and their inverse-distance blend.
    ///
    /// With distances `d1 <= d2 <= d3` the weights are proportional to
    /// `(d2·d3, d1·d3, d1·d2)`: each center is weighted by the product of
    /// the other two distances, so closer centers dominate and the weights
    /// sum to one. When the query coincides with a center (`d1 == 0`) the
    /// blend collapses onto that center exactly; equidistant coincident
    /// centers resolve to the lowest index.
    pub fn blend(&self, query: &Point3<f64>) -> InterpolationBlend {
        let hits = self.index.knn(query, 3);
        debug_assert_eq!(hits.len(), 3);
        let indices = [hits[0].index, hits[1].index, hits[2].index];
        let distances = [hits[0].distance, hits[1].distance, hits[2].distance];
        let weights = if distances[0] == 0.0 {
            [1.0, 0.0, 0.0]
        } else {
            let raw = [
                distances[1] * distances[2],
                distances[0] * distances[2],
                distances[0] * distances[1],
            ];
            let total = raw[0] + raw[1] + raw[2];
            [raw[0] / total, raw[1] / total, raw[2] / total]
        };
        InterpolationBlend {
            indices,
            distances,
            weights,
        }
    }

    /// Blends the features of the three nearest centers.
    pub fn interpolate(&self, query: &Point3<f64>) -> Vec<f64> {
        let blend = self.blend(query);
        if blend.weights[0] == 1.0 {
            return self.features.row(blend.indices[0]).to_vec();
        }
        let mut out = vec![0.0; self.features.dim()];
        for (&idx, &w) in blend.indices.iter().zip(&blend.weights) {
            for (o, v) in out.iter_mut().zip(self.features.row(idx)) {
                *o += w * v;
            }
        }
        out
    }
}

/// Feature vector of `query` interpolated from the three nearest centers.
pub fn interpolate_feature(centers: &CenterFeatureSet, query: &Point3<f64>) -> Vec<f64> {
    centers.interpolate(query)
}

/// Assembles a full per-point feature matrix for `cloud`: center points
/// keep their feature row verbatim, all others are interpolated from the
/// three nearest centers.
pub fn interpolate_all(
    cloud: &PointCloud,
    centers: &[usize],
    center_features: &FeatureMatrix,
) -> Result<FeatureMatrix, FeatureError> {
    if center_features.nrows() != centers.len() {
        return Err(FeatureError::FeatureCountMismatch {
            got: center_features.nrows(),
            expected: centers.len(),
        });
    }
    let mut row_of_center = vec![None; cloud.len()];
    for (row, &c) in centers.iter().enumerate() {
        if c >= cloud.len() {
            return Err(FeatureError::CenterOutOfBounds {
                index: c,
                len: cloud.len(),
            });
        }
        if row_of_center[c].is_some() {
            return Err(FeatureError::DuplicateCenter(c));
        }
        row_of_center[c] = Some(row);
    }
    let positions: Vec<Point3<f64>> = centers.iter().map(|&c| *cloud.point(c)).collect();
    let set = CenterFeatureSet::new(positions, center_features.clone())?;
    let dim = center_features.dim();
    let mut data = vec![0.0; cloud.len() * dim];
    data.par_chunks_mut(dim)
        .enumerate()
        .for_each(|(i, out)| match row_of_center[i] {
            Some(row) => out.copy_from_slice(center_features.row(row)),
            None => out.copy_from_slice(&set.interpolate(cloud.point(i))),
        });
    FeatureMatrix::from_flat(data, dim)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scalar_set(positions: Vec<Point3<f64>>, values: &[f64]) -> CenterFeatureSet {
        let rows: Vec<Vec<f64>> = values.iter().map(|&v| vec![v]).collect();
        CenterFeatureSet::new(positions, FeatureMatrix::from_rows(&rows).unwrap()).unwrap()
    }

    #[test]
    fn matrix_construction_validates_shape_and_values() {
        assert!(matches!(
            FeatureMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0]]),
            Err(FeatureError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            FeatureMatrix::from_rows(&[vec![1.0, f64::NAN]]),
            Err(FeatureError::NonFinite { row: 0, col: 1 })
        ));
        let m = FeatureMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(m.nrows(), 2);
        assert_eq!(m.dim(), 2);
        assert_eq!(m.row(1), &[3.0, 4.0]);
    }

    #[test]
    fn known_distances_give_known_blend() {
        // Centers at distances exactly 1, 2, 2 from the origin with scalar
        // features 3, 6, 9. The blend is (2*2*3 + 1*2*6 + 1*2*9) / (4+2+2)
        // = 42/8 = 5.25, with weights (0.5, 0.25, 0.25).
        let set = scalar_set(
            vec![
                Point3::new(1.0, 0.0, 0.0),
                Point3::new(0.0, 2.0, 0.0),
                Point3::new(0.0, 0.0, 2.0),
            ],
            &[3.0, 6.0, 9.0],
        );
        let q = Point3::origin();
        let blend = set.blend(&q);
        assert_eq!(blend.indices, [0, 1, 2]);
        assert_eq!(blend.distances, [1.0, 2.0, 2.0]);
        assert!((blend.weights[0] - 0.5).abs() < 1e-12);
        assert!((blend.weights[1] - 0.25).abs() < 1e-12);
        assert!((blend.weights[2] - 0.25).abs() < 1e-12);
        let value = set.interpolate(&q)[0];
        assert!((value - 5.25).abs() < 1e-12);
    }

    #[test]
    fn query_on_a_center_returns_its_feature_exactly() {
        let positions = vec![
            Point3::new(0.3, 0.1, -0.2),
            Point3::new(1.0, 1.0, 1.0),
            Point3::new(-1.0, 0.5, 0.4),
            Point3::new(0.0, -1.0, 0.7),
        ];
        let set = scalar_set(positions.clone(), &[0.11, 0.22, 0.33, 0.44]);
        let got = set.interpolate(&positions[2]);
        assert_eq!(got, vec![0.33]);
    }

    #[test]
    fn coincident_centers_resolve_to_lowest_index() {
        let p = Point3::new(0.5, 0.5, 0.5);
        let positions = vec![Point3::origin(), p, p, Point3::new(2.0, 0.0, 0.0)];
        let set = scalar_set(positions, &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(set.interpolate(&p), vec![2.0]);
    }

    #[test]
    fn weights_are_convex_for_random_queries() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let positions: Vec<Point3<f64>> = (0..40)
            .map(|_| {
                Point3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                )
            })
            .collect();
        let values: Vec<f64> = (0..40).map(|_| rng.random_range(-5.0..5.0)).collect();
        let set = scalar_set(positions, &values);
        for _ in 0..200 {
            let q = Point3::new(
                rng.random_range(-1.2..1.2),
                rng.random_range(-1.2..1.2),
                rng.random_range(-1.2..1.2),
            );
            let blend = set.blend(&q);
            assert!(blend.weights.iter().all(|&w| w >= 0.0));
            let sum: f64 = blend.weights.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12, "weight sum {sum}");
            let value = set.interpolate(&q)[0];
            let vals = [
                values[blend.indices[0]],
                values[blend.indices[1]],
                values[blend.indices[2]],
            ];
            let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert!(value >= lo - 1e-12 && value <= hi + 1e-12);
        }
    }

    #[test]
    fn interpolate_all_keeps_center_rows_verbatim() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let pts: Vec<Point3<f64>> = (0..60)
            .map(|_| {
                Point3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                )
            })
            .collect();
        let cloud = PointCloud::new(pts).unwrap();
        let centers = vec![3, 17, 29, 44, 58];
        let rows: Vec<Vec<f64>> = centers
            .iter()
            .map(|&c| vec![c as f64 * 0.1, 1.0 - c as f64 * 0.01])
            .collect();
        let center_features = FeatureMatrix::from_rows(&rows).unwrap();
        let full = interpolate_all(&cloud, &centers, &center_features).unwrap();
        assert_eq!(full.nrows(), cloud.len());
        assert_eq!(full.dim(), 2);
        for (row, &c) in centers.iter().enumerate() {
            assert_eq!(full.row(c), center_features.row(row));
        }
    }

    #[test]
    fn interpolate_all_validates_inputs() {
        let cloud = PointCloud::new(vec![
            Point3::origin(),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
            Point3::new(0.0, 0.0, 1.0),
        ])
        .unwrap();
        let features = FeatureMatrix::from_rows(&[vec![1.0], vec![2.0], vec![3.0]]).unwrap();
        assert!(matches!(
            interpolate_all(&cloud, &[0, 1], &features),
            Err(FeatureError::FeatureCountMismatch { .. })
        ));
        assert!(matches!(
            interpolate_all(&cloud, &[0, 1, 9], &features),
            Err(FeatureError::CenterOutOfBounds { index: 9, .. })
        ));
        assert!(matches!(
            interpolate_all(&cloud, &[0, 1, 1], &features),
            Err(FeatureError::DuplicateCenter(1))
        ));
        let two = FeatureMatrix::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
        assert!(matches!(
            interpolate_all(&cloud, &[0, 1], &two),
            Err(FeatureError::TooFewCenters { needed: 3, got: 2 })
        ));
    }

    #[test]
    fn extract_from_matrix_selects_rows() {
        let cloud = PointCloud::new(vec![
            Point3::origin(),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
        ])
        .unwrap();
        let all = FeatureMatrix::from_rows(&[vec![1.0, 10.0], vec![2.0, 20.0], vec![3.0, 30.0]])
            .unwrap();
        let picked =
            extract_center_features(&cloud, &[2, 0], &FeatureSource::Matrix(&all)).unwrap();
        assert_eq!(picked.row(0), &[3.0, 30.0]);
        assert_eq!(picked.row(1), &[1.0, 10.0]);
        let short = FeatureMatrix::from_rows(&[vec![1.0]]).unwrap();
        assert!(matches!(
            extract_center_features(&cloud, &[0], &FeatureSource::Matrix(&short)),
            Err(FeatureError::FeatureCountMismatch { .. })
        ));
    }
}
