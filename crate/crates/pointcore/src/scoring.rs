//! Scoring registered test clouds against a memory bank.
//!
//! Each test point performs exactly one 3-NN lookup into the bank's
//! coordinate index. The coordinate score is the mean of the three
//! neighbor distances; the feature score is the smallest feature distance
//! to those same three elements, never to the whole bank. Restricting the
//! feature comparison to spatial neighbors keeps a locally deviant surface
//! patch from being excused by a similar-looking patch elsewhere on the
//! object. Raw scores are converted to fractional ranks before fusion so
//! the two channels contribute scale-free.

use nalgebra::Point3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bank::MemoryBank;
use crate::features::{
    extract_center_features, interpolate_all, FeatureError, FeatureMatrix, FeatureSource,
};
use crate::geometry::{estimate_normals, GeometryError, PointCloud, RigidTransform};
use crate::registration::{register_clouds, RegistrationConfig, RegistrationError, RegistrationOutcome};
use crate::sampling::{greedy_downsample, SamplingError, SamplingParams};

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("scoring needs a bank of at least {needed} elements, got {got}")]
    BankTooSmall { needed: usize, got: usize },
    #[error("test feature dimension {test} does not match bank dimension {bank}")]
    DimensionMismatch { bank: usize, test: usize },
    #[error("{what} has length {got}, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("invalid scoring parameter: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Registration(#[from] RegistrationError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Convex combination weights for fusing the two normalized channels.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FusionWeights {
    pub coordinate: f64,
    pub feature: f64,
}

impl Default for FusionWeights {
    fn default() -> Self {
        Self {
            coordinate: 0.5,
            feature: 0.5,
        }
    }
}

impl FusionWeights {
    pub fn validate(&self) -> Result<(), ScoreError> {
        if !(self.coordinate >= 0.0 && self.feature >= 0.0) {
            return Err(ScoreError::InvalidParams(format!(
                "fusion weights must be non-negative, got ({}, {})",
                self.coordinate, self.feature
            )));
        }
        if ((self.coordinate + self.feature) - 1.0).abs() > 1e-9 {
            return Err(ScoreError::InvalidParams(format!(
                "fusion weights must sum to 1, got {}",
                self.coordinate + self.feature
            )));
        }
        Ok(())
    }
}

/// How per-point fused scores collapse into one object-level score.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectAggregation {
    /// Largest fused score.
    Max,
    /// Mean of the top `quantile` fraction of fused scores (at least one).
    TopQuantileMean { quantile: f64 },
}

impl ObjectAggregation {
    pub fn validate(&self) -> Result<(), ScoreError> {
        if let ObjectAggregation::TopQuantileMean { quantile } = self {
            if !(*quantile > 0.0 && *quantile <= 1.0) {
                return Err(ScoreError::InvalidParams(format!(
                    "aggregation quantile must be in (0, 1], got {quantile}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScoringParams {
    pub fusion: FusionWeights,
    pub aggregation: ObjectAggregation,
}

impl Default for ScoringParams {
    fn default() -> Self {
        Self {
            fusion: FusionWeights::default(),
            aggregation: ObjectAggregation::Max,
        }
    }
}

/// Raw per-point anomaly scores, before rank normalization.
#[derive(Debug, Clone)]
pub struct RawScores {
    pub coordinate: Vec<f64>,
    pub feature: Vec<f64>,
    /// Spatial index lookups performed against the bank, exactly one per
    /// test point.
    pub bank_queries: u64,
}

/// One 3-NN bank lookup per test point: mean coordinate distance and
/// minimum feature distance to the three returned elements.
pub fn compute_raw_scores(
    bank: &MemoryBank,
    coords: &[Point3<f64>],
    features: &FeatureMatrix,
) -> Result<RawScores, ScoreError> {
    if bank.len() < 3 {
        return Err(ScoreError::BankTooSmall {
            needed: 3,
            got: bank.len(),
        });
    }
    if features.nrows() != coords.len() {
        return Err(ScoreError::LengthMismatch {
            what: "test features",
            got: features.nrows(),
            expected: coords.len(),
        });
    }
    if features.dim() != bank.feature_dim() {
        return Err(ScoreError::DimensionMismatch {
            bank: bank.feature_dim(),
            test: features.dim(),
        });
    }
    let queries_before = bank.index().query_count();
    let pairs: Vec<(f64, f64)> = coords
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let hits = bank.index().knn(p, 3);
            let coordinate = (hits[0].distance + hits[1].distance + hits[2].distance) / 3.0;
            let mut feature = f64::INFINITY;
            for h in &hits {
                feature = feature.min(bank.features().row_distance(h.index, features.row(i)));
            }
            (coordinate, feature)
        })
        .collect();
    let bank_queries = bank.index().query_count() - queries_before;
    let (coordinate, feature) = pairs.into_iter().unzip();
    Ok(RawScores {
        coordinate,
        feature,
        bank_queries,
    })
}

/// Fractional (average-of-ties) 1-based ranks of `values`.
pub(crate) fn fractional_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_unstable_by(|&a, &b| values[a].total_cmp(&values[b]).then_with(|| a.cmp(&b)));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // Positions i..=j (0-based) hold equal values; they share the
        // average of ranks i+1..=j+1.
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            ranks[order[k]] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Maps each value to its fractional rank divided by the list length, so
/// outputs lie in `(0, 1]` and depend only on the ordering of the inputs.
/// Ties share their average rank.
pub fn rank_normalize(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    if n == 0 {
        return Vec::new();
    }
    fractional_ranks(values)
        .into_iter()
        .map(|r| r / n as f64)
        .collect()
}

/// Weighted sum of the two normalized channels.
pub fn fuse_scores(
    norm_coordinate: &[f64],
    norm_feature: &[f64],
    weights: &FusionWeights,
) -> Result<Vec<f64>, ScoreError> {
    weights.validate()?;
    if norm_coordinate.len() != norm_feature.len() {
        return Err(ScoreError::LengthMismatch {
            what: "normalized feature scores",
            got: norm_feature.len(),
            expected: norm_coordinate.len(),
        });
    }
    Ok(norm_coordinate
        .iter()
        .zip(norm_feature)
        .map(|(c, f)| weights.coordinate * c + weights.feature * f)
        .collect())
}

/// Collapses per-point fused scores into one object score.
pub fn object_score(fused: &[f64], aggregation: &ObjectAggregation) -> Result<f64, ScoreError> {
    aggregation.validate()?;
    if fused.is_empty() {
        return Err(ScoreError::InvalidParams(
            "cannot aggregate an empty score list".into(),
        ));
    }
    match aggregation {
        ObjectAggregation::Max => Ok(fused.iter().cloned().fold(f64::NEG_INFINITY, f64::max)),
        ObjectAggregation::TopQuantileMean { quantile } => {
            let count = ((quantile * fused.len() as f64).ceil() as usize)
                .clamp(1, fused.len());
            let mut sorted = fused.to_vec();
            sorted.sort_unstable_by(|a, b| b.total_cmp(a));
            Ok(sorted[..count].iter().sum::<f64>() / count as f64)
        }
    }
}

/// All per-point score channels plus the object-level aggregate, aligned
/// with the test cloud's point order.
#[derive(Debug, Clone)]
pub struct ScoreSet {
    pub raw_coordinate: Vec<f64>,
    pub raw_feature: Vec<f64>,
    pub norm_coordinate: Vec<f64>,
    pub norm_feature: Vec<f64>,
    pub fused: Vec<f64>,
    pub object_score: f64,
}

/// Scores already registered test points with known features.
pub fn score_points(
    bank: &MemoryBank,
    coords: &[Point3<f64>],
    features: &FeatureMatrix,
    params: &ScoringParams,
) -> Result<(ScoreSet, u64), ScoreError> {
    let raw = compute_raw_scores(bank, coords, features)?;
    let norm_coordinate = rank_normalize(&raw.coordinate);
    let norm_feature = rank_normalize(&raw.feature);
    let fused = fuse_scores(&norm_coordinate, &norm_feature, &params.fusion)?;
    let object = object_score(&fused, &params.aggregation)?;
    Ok((
        ScoreSet {
            raw_coordinate: raw.coordinate,
            raw_feature: raw.feature,
            norm_coordinate,
            norm_feature,
            fused,
            object_score: object,
        },
        raw.bank_queries,
    ))
}

/// Parameters for the end-to-end inference pass.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InferenceParams {
    pub registration: RegistrationConfig,
    pub sampling: SamplingParams,
    pub scoring: ScoringParams,
}

impl Default for InferenceParams {
    fn default() -> Self {
        Self {
            registration: RegistrationConfig::default(),
            sampling: SamplingParams::default(),
            scoring: ScoringParams::default(),
        }
    }
}

/// Everything produced while scoring one test cloud.
#[derive(Debug)]
pub struct InferenceOutcome {
    pub scores: ScoreSet,
    /// Test-to-canonical transform used for scoring.
    pub transform: RigidTransform,
    pub registration: RegistrationOutcome,
    /// Centers selected on the registered test cloud (original point
    /// indices).
    pub test_centers: Vec<usize>,
    pub bank_queries: u64,
    pub warnings: Vec<String>,
}

/// Registers a test cloud into the bank's frame, rebuilds per-point
/// features from the cloud's own centers, and scores every point against
/// the bank.
///
/// The registration target is the cloud of bank coordinates, so inference
/// needs no access to the original prototypes. With `external_features`,
/// a matrix with one row per test point replaces the built-in FPFH
/// features; only its center rows are used directly, the rest are
/// reconstructed by interpolation exactly as at bank build time.
pub fn run_inference(
    bank: &MemoryBank,
    test: &PointCloud,
    external_features: Option<&FeatureMatrix>,
    params: &InferenceParams,
) -> Result<InferenceOutcome, ScoreError> {
    if let Some(mat) = external_features {
        if mat.nrows() != test.len() {
            return Err(ScoreError::LengthMismatch {
                what: "external test features",
                got: mat.nrows(),
                expected: test.len(),
            });
        }
    }
    let mut warnings = Vec::new();
    let oriented = if test.has_normals() {
        test.clone()
    } else {
        let est = estimate_normals(test, params.registration.normals_k)?;
        if est.degenerate_count > 0 {
            warnings.push(format!(
                "test cloud: {} of {} normal neighborhoods were collinear",
                est.degenerate_count,
                test.len()
            ));
        }
        est.cloud
    };
    let target = {
        let coords = bank.coordinate_cloud();
        estimate_normals(&coords, params.registration.normals_k.min(coords.len()))?.cloud
    };
    let registration = register_clouds(&oriented, &target, &params.registration)?;
    warnings.extend(registration.warnings.iter().cloned());
    let registered = oriented.transformed(&registration.transform);

    let test_centers = greedy_downsample(&registered, &params.sampling)?;
    let source = match external_features {
        Some(mat) => FeatureSource::Matrix(mat),
        None => FeatureSource::Fpfh {
            radius: params.registration.fpfh_radius.resolve(target.diameter()),
        },
    };
    let center_features = extract_center_features(&registered, &test_centers, &source)?;
    let features = interpolate_all(&registered, &test_centers, &center_features)?;
    let (scores, bank_queries) =
        score_points(bank, registered.points(), &features, &params.scoring)?;
    Ok(InferenceOutcome {
        scores,
        transform: registration.transform,
        registration,
        test_centers,
        bank_queries,
        warnings,
    })
}
