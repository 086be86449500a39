//! Property tests for the order-statistic and blending primitives.
//!
//! The invariance properties use dyadic inputs and power-of-two slopes
//! so the monotone maps are exact in floating point; arbitrary floats
//! could collide under a general affine map and change the tie
//! structure, which would make the property vacuously false.

use nalgebra::Point3;
use pointcore::eval::auroc;
use pointcore::features::{CenterFeatureSet, FeatureMatrix};
use pointcore::scoring::{fuse_scores, rank_normalize, FusionWeights};
use proptest::prelude::*;

fn dyadic_values() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((-2000i16..2000).prop_map(|v| v as f64 * 0.5), 1..80)
}

fn exact_monotone_map() -> impl Strategy<Value = (f64, f64)> {
    (
        prop::sample::select(vec![0.5f64, 1.0, 2.0, 4.0]),
        (-100i8..100).prop_map(|b| b as f64 * 0.25),
    )
}

fn centers_features_query(
) -> impl Strategy<Value = (Vec<(f64, f64, f64)>, Vec<(f64, f64)>, (f64, f64, f64))> {
    (3usize..16).prop_flat_map(|n| {
        (
            prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0, -10.0f64..10.0), n),
            prop::collection::vec((-100.0f64..100.0, -100.0f64..100.0), n),
            (-12.0f64..12.0, -12.0f64..12.0, -12.0f64..12.0),
        )
    })
}

proptest! {
    #[test]
    fn rank_normalize_stays_in_unit_interval(
        values in prop::collection::vec(-1e9f64..1e9, 1..100),
    ) {
        for v in rank_normalize(&values) {
            prop_assert!(v > 0.0 && v <= 1.0);
        }
    }

    #[test]
    fn rank_normalize_is_invariant_under_order_preserving_maps(
        values in dyadic_values(),
        (slope, intercept) in exact_monotone_map(),
    ) {
        let mapped: Vec<f64> = values.iter().map(|&x| slope * x + intercept).collect();
        prop_assert_eq!(rank_normalize(&mapped), rank_normalize(&values));
    }

    #[test]
    fn auroc_is_invariant_under_order_preserving_maps(
        values in dyadic_values(),
        flags in prop::collection::vec(any::<bool>(), 1..80),
        (slope, intercept) in exact_monotone_map(),
    ) {
        let n = values.len().min(flags.len());
        prop_assume!(n >= 2);
        let scores = &values[..n];
        let labels = &flags[..n];
        prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
        let mapped: Vec<f64> = scores.iter().map(|&x| slope * x + intercept).collect();
        prop_assert_eq!(
            auroc(labels, &mapped).unwrap(),
            auroc(labels, scores).unwrap()
        );
    }

    #[test]
    fn fused_scores_stay_between_the_channels(
        pairs in prop::collection::vec((0.0f64..=1.0, 0.0f64..=1.0), 1..60),
        w in 0.0f64..=1.0,
    ) {
        let coord: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let feat: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let weights = FusionWeights {
            coordinate: w,
            feature: 1.0 - w,
        };
        let fused = fuse_scores(&coord, &feat, &weights).unwrap();
        for ((c, f), v) in coord.iter().zip(&feat).zip(&fused) {
            prop_assert!(*v >= c.min(*f) - 1e-12 && *v <= c.max(*f) + 1e-12);
        }
    }

    #[test]
    fn interpolation_blends_convexly(
        (raw_positions, raw_features, raw_query) in centers_features_query(),
    ) {
        let positions: Vec<Point3<f64>> = raw_positions
            .iter()
            .map(|&(x, y, z)| Point3::new(x, y, z))
            .collect();
        let rows: Vec<Vec<f64>> = raw_features.iter().map(|&(a, b)| vec![a, b]).collect();
        let centers =
            CenterFeatureSet::new(positions, FeatureMatrix::from_rows(&rows).unwrap()).unwrap();
        let query = Point3::new(raw_query.0, raw_query.1, raw_query.2);

        let blend = centers.blend(&query);
        let sum: f64 = blend.weights.iter().sum();
        prop_assert!((sum - 1.0).abs() <= 1e-9);
        for &w in &blend.weights {
            prop_assert!((-1e-12..=1.0 + 1e-12).contains(&w));
        }
        let value = centers.interpolate(&query);
        for dim in 0..2 {
            let picked: Vec<f64> = blend
                .indices
                .iter()
                .map(|&i| centers.features().row(i)[dim])
                .collect();
            let lo = picked.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = picked.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(value[dim] >= lo - 1e-9 && value[dim] <= hi + 1e-9);
        }
    }
}
