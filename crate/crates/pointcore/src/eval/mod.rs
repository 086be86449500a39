//! Evaluation: ranking metrics and the synthetic end-to-end benchmark.
//!
//! The benchmark builds a memory bank from a handful of synthetic
//! prototypes per category, scores seeded good and defective test clouds,
//! and reports object-level and point-level AUROC and average precision.
//! Wall-clock timings are collected separately from the metric report so
//! the report itself is reproducible byte for byte.

pub mod synthetic;

use serde::{Deserialize, Serialize};
use std::time::Instant;
use thiserror::Error;

use crate::bank::{build_memory_bank, BankBuildParams, BankError};
use crate::features::FeatureMatrix;
use crate::scoring::{
    fractional_ranks, fuse_scores, object_score, rank_normalize, run_inference, InferenceParams,
    ScoreError, ScoreSet,
};
use crate::registration::RegistrationConfig;
use crate::sampling::DistanceAggregate;
use crate::seed;
use synthetic::{
    generate_shape, inject_defect, random_pose, DefectKind, ShapeKind, SyntheticError,
};

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("metric needs both classes present")]
    SingleClass,
    #[error("average precision needs at least one positive label")]
    NoPositives,
    #[error("labels have length {labels}, scores {scores}")]
    LengthMismatch { labels: usize, scores: usize },
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid category {name:?}: {reason}")]
    InvalidCategory { name: String, reason: String },
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Synthetic(#[from] SyntheticError),
    #[error(transparent)]
    Bank(#[from] BankError),
    #[error(transparent)]
    Score(#[from] ScoreError),
}

/// Area under the ROC curve via the Mann-Whitney rank statistic; tied
/// scores earn half credit, which matches trapezoidal ROC integration.
pub fn auroc(labels: &[bool], scores: &[f64]) -> Result<f64, MetricError> {
    if labels.len() != scores.len() {
        return Err(MetricError::LengthMismatch {
            labels: labels.len(),
            scores: scores.len(),
        });
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricError::SingleClass);
    }
    let ranks = fractional_ranks(scores);
    let rank_sum: f64 = labels
        .iter()
        .zip(&ranks)
        .filter(|(&l, _)| l)
        .map(|(_, &r)| r)
        .sum();
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos * n_neg) as f64)
}

/// Average precision over the descending-score threshold sweep; equal
/// scores are processed as one threshold group.
pub fn aupr(labels: &[bool], scores: &[f64]) -> Result<f64, MetricError> {
    if labels.len() != scores.len() {
        return Err(MetricError::LengthMismatch {
            labels: labels.len(),
            scores: scores.len(),
        });
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    if n_pos == 0 {
        return Err(MetricError::NoPositives);
    }
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.sort_unstable_by(|&a, &b| scores[b].total_cmp(&scores[a]).then_with(|| a.cmp(&b)));
    let mut ap = 0.0;
    let mut tp = 0usize;
    let mut seen = 0usize;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let mut group_tp = 0usize;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if labels[order[j]] {
                group_tp += 1;
            }
            j += 1;
        }
        tp += group_tp;
        seen = j;
        if group_tp > 0 {
            let precision = tp as f64 / seen as f64;
            ap += (group_tp as f64 / n_pos as f64) * precision;
        }
        i = j;
    }
    let _ = seen;
    Ok(ap)
}

/// One synthetic category: a shape plus defect and pose settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CategorySpec {
    pub name: String,
    pub shape: ShapeKind,
    pub prototypes: usize,
    pub prototype_points: usize,
    pub test_points: usize,
    pub good_tests: usize,
    pub defect_tests: usize,
    pub noise_sigma: f64,
    /// Defect kinds cycled over the defective tests in order.
    pub defect_kinds: Vec<DefectKind>,
    /// Defect displacement as a fraction of the cloud diameter.
    pub defect_magnitude_frac: f64,
    /// Defect region radius as a fraction of the cloud diameter.
    pub defect_region_frac: f64,
    pub max_rotation_deg: f64,
    /// Pose translation bound as a fraction of the cloud diameter.
    pub max_translation_frac: f64,
    pub seed: u64,
}

impl Default for CategorySpec {
    fn default() -> Self {
        Self {
            name: "category".into(),
            shape: ShapeKind::Sphere,
            prototypes: 4,
            prototype_points: 2000,
            test_points: 2000,
            good_tests: 20,
            defect_tests: 20,
            noise_sigma: 0.0,
            defect_kinds: vec![
                DefectKind::Bump,
                DefectKind::Dent,
                DefectKind::Excision,
                DefectKind::Clutter,
            ],
            defect_magnitude_frac: 0.10,
            defect_region_frac: 0.12,
            max_rotation_deg: 30.0,
            max_translation_frac: 0.1,
            seed: 1,
        }
    }
}

impl CategorySpec {
    pub fn validate(&self) -> Result<(), EvalError> {
        let fail = |reason: String| EvalError::InvalidCategory {
            name: self.name.clone(),
            reason,
        };
        if self.prototypes == 0 {
            return Err(fail("needs at least one prototype".into()));
        }
        if self.good_tests == 0 || self.defect_tests == 0 {
            return Err(fail(
                "needs at least one good and one defective test object".into(),
            ));
        }
        if self.prototype_points < 100 || self.test_points < 100 {
            return Err(fail("clouds need at least 100 points".into()));
        }
        if self.defect_kinds.is_empty() {
            return Err(fail("defect kind list is empty".into()));
        }
        if !(self.defect_magnitude_frac >= 0.0 && self.defect_magnitude_frac.is_finite()) {
            return Err(fail(format!(
                "defect magnitude fraction {} must be finite and non-negative",
                self.defect_magnitude_frac
            )));
        }
        if !(self.defect_region_frac > 0.0 && self.defect_region_frac < 0.25) {
            return Err(fail(format!(
                "defect region fraction {} must lie in (0, 0.25)",
                self.defect_region_frac
            )));
        }
        Ok(())
    }
}

/// How object-level scores are formed for the object metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectScoreMode {
    /// Aggregate each object's raw channels, then rank-normalize each
    /// channel across the whole test set and fuse. Within-object ranks
    /// always top out near 1, so cross-object comparison needs this
    /// test-set-wide normalization.
    AcrossTestSet,
    /// Use each object's own fused maximum as its score.
    PerObjectFusedMax,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchmarkConfig {
    pub bank: BankBuildParams,
    pub inference: InferenceParams,
    pub object_score_mode: ObjectScoreMode,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            bank: BankBuildParams::default(),
            inference: InferenceParams::default(),
            object_score_mode: ObjectScoreMode::AcrossTestSet,
        }
    }
}

impl BenchmarkConfig {
    /// Settings tuned for registering fresh samplings of the synthetic
    /// shapes against a bank-sized target cloud: farthest-point sampling
    /// for even bank coverage, and correspondence radii of a few
    /// multiples of the bank's point spacing.
    pub fn for_synthetic_shapes(s_max: usize) -> Self {
        let mut cfg = Self::default();
        cfg.bank.sampling.s_max = s_max;
        cfg.bank.sampling.criterion = DistanceAggregate::Min;
        cfg.bank.registration = RegistrationConfig::for_sparse_clouds();
        cfg.inference.sampling.s_max = s_max;
        cfg.inference.sampling.criterion = DistanceAggregate::Min;
        cfg.inference.registration = RegistrationConfig::for_sparse_clouds();
        cfg
    }
}

/// Deterministic metric results for one category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryMetrics {
    pub name: String,
    pub objects: usize,
    pub points_scored: usize,
    pub o_auroc: f64,
    pub o_aupr: f64,
    /// Absent when no test point carries a positive label, as in a
    /// null-defect control category.
    pub p_auroc: Option<f64>,
    pub p_aupr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub o_auroc: f64,
    pub o_aupr: f64,
    pub p_auroc: Option<f64>,
    pub p_aupr: Option<f64>,
}

/// Byte-reproducible benchmark report: metrics only, no wall-clock data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub categories: Vec<CategoryMetrics>,
    pub summary: MetricSummary,
}

impl MetricReport {
    /// Assembles a report whose summary averages the per-category
    /// metrics; point metrics average only over categories that have
    /// them.
    pub fn from_categories(categories: Vec<CategoryMetrics>) -> Self {
        let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len().max(1) as f64;
        let opt_mean = |xs: Vec<f64>| if xs.is_empty() { None } else { Some(mean(&xs)) };
        let summary = MetricSummary {
            o_auroc: mean(&categories.iter().map(|m| m.o_auroc).collect::<Vec<_>>()),
            o_aupr: mean(&categories.iter().map(|m| m.o_aupr).collect::<Vec<_>>()),
            p_auroc: opt_mean(categories.iter().filter_map(|m| m.p_auroc).collect()),
            p_aupr: opt_mean(categories.iter().filter_map(|m| m.p_aupr).collect()),
        };
        Self {
            categories,
            summary,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CategoryTiming {
    pub name: String,
    pub mean_inference_seconds: f64,
    pub total_seconds: f64,
}

/// Wall-clock measurements, reported separately from the metrics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimingReport {
    pub categories: Vec<CategoryTiming>,
    pub mean_inference_seconds: f64,
}

impl TimingReport {
    pub fn from_categories(categories: Vec<CategoryTiming>) -> Self {
        let per_category: Vec<f64> = categories
            .iter()
            .map(|t| t.mean_inference_seconds)
            .collect();
        let mean_inference_seconds =
            per_category.iter().sum::<f64>() / per_category.len().max(1) as f64;
        Self {
            categories,
            mean_inference_seconds,
        }
    }
}

/// Everything scored for one test object, for score-file output.
#[derive(Debug)]
pub struct ObjectRecord {
    pub category: String,
    pub name: String,
    pub defective: bool,
    pub labels: Vec<bool>,
    pub scores: ScoreSet,
    /// Object score under the configured [`ObjectScoreMode`].
    pub object_score: f64,
}

#[derive(Debug)]
pub struct BenchmarkOutcome {
    pub report: MetricReport,
    pub timing: TimingReport,
    pub objects: Vec<ObjectRecord>,
}

/// One test object ready for scoring: the cloud, its ground truth, and
/// optionally an external feature matrix with one row per point.
#[derive(Debug)]
pub struct TestObject {
    pub name: String,
    pub cloud: crate::PointCloud,
    pub labels: Vec<bool>,
    pub defective: bool,
    pub features: Option<FeatureMatrix>,
}

fn build_cases(spec: &CategorySpec) -> Result<Vec<TestObject>, EvalError> {
    let mut cases = Vec::new();
    for j in 0..spec.good_tests {
        let cloud = generate_shape(
            spec.shape,
            spec.test_points,
            spec.noise_sigma,
            seed::derive(spec.seed, 0x1000 + j as u64),
        );
        let pose = random_pose(
            spec.max_rotation_deg,
            spec.max_translation_frac * cloud.diameter(),
            seed::derive(spec.seed, 0x1800 + j as u64),
        );
        let posed = cloud.transformed(&pose);
        cases.push(TestObject {
            name: format!("good-{j:03}"),
            labels: vec![false; posed.len()],
            cloud: posed,
            defective: false,
            features: None,
        });
    }
    for j in 0..spec.defect_tests {
        let cloud = generate_shape(
            spec.shape,
            spec.test_points,
            spec.noise_sigma,
            seed::derive(spec.seed, 0x2000 + j as u64),
        );
        let kind = spec.defect_kinds[j % spec.defect_kinds.len()];
        let diameter = cloud.diameter();
        let out = inject_defect(
            &cloud,
            kind,
            spec.defect_magnitude_frac * diameter,
            spec.defect_region_frac * diameter,
            seed::derive(spec.seed, 0x2800 + j as u64),
        )?;
        let pose = random_pose(
            spec.max_rotation_deg,
            spec.max_translation_frac * diameter,
            seed::derive(spec.seed, 0x3000 + j as u64),
        );
        let posed = out.cloud.transformed(&pose);
        cases.push(TestObject {
            name: format!("defect-{j:03}-{kind:?}").to_lowercase(),
            cloud: posed,
            labels: out.labeling.point_labels,
            defective: true,
            features: None,
        });
    }
    Ok(cases)
}

/// The synthetic clouds for one category: prototypes in bank order and
/// the labeled test set.
#[derive(Debug)]
pub struct GeneratedCategory {
    pub prototypes: Vec<crate::PointCloud>,
    pub tests: Vec<TestObject>,
}

/// Generates every cloud a category calls for. All prototypes except
/// the canonical one are put under seeded random poses, as are all test
/// clouds; defects are injected before posing.
pub fn generate_category(
    spec: &CategorySpec,
    canonical_prototype: usize,
) -> Result<GeneratedCategory, EvalError> {
    spec.validate()?;
    let prototypes: Vec<crate::PointCloud> = (0..spec.prototypes)
        .map(|i| {
            let cloud = generate_shape(
                spec.shape,
                spec.prototype_points,
                spec.noise_sigma,
                seed::derive(spec.seed, i as u64),
            );
            if i == canonical_prototype {
                cloud
            } else {
                let pose = random_pose(
                    spec.max_rotation_deg,
                    spec.max_translation_frac * cloud.diameter(),
                    seed::derive(spec.seed, 0x100 + i as u64),
                );
                cloud.transformed(&pose)
            }
        })
        .collect();
    Ok(GeneratedCategory {
        prototypes,
        tests: build_cases(spec)?,
    })
}

fn run_category(
    spec: &CategorySpec,
    cfg: &BenchmarkConfig,
) -> Result<(CategoryMetrics, CategoryTiming, Vec<ObjectRecord>), EvalError> {
    let generated = generate_category(spec, cfg.bank.canonical_prototype)?;
    let bank = build_memory_bank(&generated.prototypes, None, &cfg.bank)?.bank;
    score_test_set(
        &bank,
        &spec.name,
        &generated.tests,
        &cfg.inference,
        cfg.object_score_mode,
    )
}

/// Scores every test object against a bank and computes category
/// metrics. Point metrics pool labels and fused scores across all
/// objects; object metrics compare per-object scores under `mode`
/// against each object's defective flag, so the set must contain at
/// least one good and one defective object.
pub fn score_test_set(
    bank: &crate::bank::MemoryBank,
    category: &str,
    tests: &[TestObject],
    inference: &InferenceParams,
    mode: ObjectScoreMode,
) -> Result<(CategoryMetrics, CategoryTiming, Vec<ObjectRecord>), EvalError> {
    let mut pooled_labels = Vec::new();
    let mut pooled_fused = Vec::new();
    let mut raw_object_coord = Vec::new();
    let mut raw_object_feat = Vec::new();
    let mut records = Vec::new();
    let mut intent = Vec::new();
    let mut total_seconds = 0.0;
    for case in tests {
        if case.labels.len() != case.cloud.len() {
            return Err(EvalError::InvalidCategory {
                name: case.name.clone(),
                reason: format!(
                    "{} labels for {} points",
                    case.labels.len(),
                    case.cloud.len()
                ),
            });
        }
        let start = Instant::now();
        let outcome = run_inference(bank, &case.cloud, case.features.as_ref(), inference)?;
        total_seconds += start.elapsed().as_secs_f64();
        pooled_labels.extend_from_slice(&case.labels);
        pooled_fused.extend_from_slice(&outcome.scores.fused);
        let aggregation = &inference.scoring.aggregation;
        raw_object_coord.push(object_score(&outcome.scores.raw_coordinate, aggregation)?);
        raw_object_feat.push(object_score(&outcome.scores.raw_feature, aggregation)?);
        intent.push(case.defective);
        records.push(ObjectRecord {
            category: category.to_string(),
            name: case.name.clone(),
            defective: case.defective,
            labels: case.labels.clone(),
            scores: outcome.scores,
            object_score: 0.0,
        });
    }
    let object_scores = match mode {
        ObjectScoreMode::AcrossTestSet => {
            let norm_c = rank_normalize(&raw_object_coord);
            let norm_f = rank_normalize(&raw_object_feat);
            fuse_scores(&norm_c, &norm_f, &inference.scoring.fusion)?
        }
        ObjectScoreMode::PerObjectFusedMax => {
            records.iter().map(|r| r.scores.object_score).collect()
        }
    };
    for (record, &score) in records.iter_mut().zip(&object_scores) {
        record.object_score = score;
    }

    let o_auroc = auroc(&intent, &object_scores)?;
    let o_aupr = aupr(&intent, &object_scores)?;
    let (p_auroc, p_aupr) = if pooled_labels.iter().any(|&l| l) {
        (
            Some(auroc(&pooled_labels, &pooled_fused)?),
            Some(aupr(&pooled_labels, &pooled_fused)?),
        )
    } else {
        (None, None)
    };
    let objects = intent.len();
    let metrics = CategoryMetrics {
        name: category.to_string(),
        objects,
        points_scored: pooled_fused.len(),
        o_auroc,
        o_aupr,
        p_auroc,
        p_aupr,
    };
    let timing = CategoryTiming {
        name: category.to_string(),
        mean_inference_seconds: total_seconds / objects.max(1) as f64,
        total_seconds,
    };
    Ok((metrics, timing, records))
}

/// Runs every category and assembles aggregate metrics, timings, and
/// per-object score records.
pub fn run_benchmark(
    categories: &[CategorySpec],
    cfg: &BenchmarkConfig,
) -> Result<BenchmarkOutcome, EvalError> {
    let mut metrics = Vec::new();
    let mut timings = Vec::new();
    let mut objects = Vec::new();
    for spec in categories {
        let (m, t, r) = run_category(spec, cfg)?;
        metrics.push(m);
        timings.push(t);
        objects.extend(r);
    }
    Ok(BenchmarkOutcome {
        report: MetricReport::from_categories(metrics),
        timing: TimingReport::from_categories(timings),
        objects,
    })
}
