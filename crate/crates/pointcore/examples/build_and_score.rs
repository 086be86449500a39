//! Builds a memory bank from prototypes and scores a fresh scan.
//!
//! Three independent samplings of one surface act as prototype scans; the
//! first fixes the canonical frame. A fourth sampling under a random pose
//! plays the test scan, and every one of its points is scored against the
//! bank.

use pointcore::bank::build_memory_bank;
use pointcore::eval::synthetic::{generate_shape, random_pose, ShapeKind};
use pointcore::eval::BenchmarkConfig;
use pointcore::scoring::run_inference;

fn main() {
    let shape = ShapeKind::BlendedBlob { surface_seed: 3 };
    let prototypes: Vec<_> = (0..3)
        .map(|i| generate_shape(shape, 1200, 0.0, 10 + i))
        .collect();

    let cfg = BenchmarkConfig::for_synthetic_shapes(300);
    let build = build_memory_bank(&prototypes, None, &cfg.bank).expect("bank build");
    println!(
        "bank: {} elements of dimension {}",
        build.bank.len(),
        build.bank.feature_dim()
    );
    for report in &build.reports {
        println!(
            "  prototype {}: {} centers kept, inlier fraction {:.2}, rotation {:.2} deg",
            report.prototype,
            report.center_count,
            report.inlier_fraction,
            report.transform.rotation_angle_deg()
        );
    }

    let clean = generate_shape(shape, 1200, 0.0, 99);
    let pose = random_pose(30.0, 0.1 * clean.diameter(), 5);
    let test = clean.transformed(&pose);

    let outcome = run_inference(&build.bank, &test, None, &cfg.inference).expect("inference");
    let fused = &outcome.scores.fused;
    let mean = fused.iter().sum::<f64>() / fused.len() as f64;
    let max = fused.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    println!(
        "scored {} points with {} bank lookups",
        fused.len(),
        outcome.bank_queries
    );
    println!("fused scores: mean {mean:.3}, max {max:.3}, object score {:.3}", outcome.scores.object_score);
    println!(
        "recovered pose: {:.2} deg rotation, {:.0}% registration inliers",
        outcome.transform.rotation_angle_deg(),
        100.0 * outcome.registration.global.inlier_fraction
    );
}
