//! End-to-end benchmark on seeded synthetic categories.
//!
//! Builds a memory bank per category from a few prototypes, scores good
//! and defective test objects, and prints object- and point-level metrics
//! with per-object timing.

use pointcore::eval::{run_benchmark, BenchmarkConfig, CategorySpec};
use pointcore::eval::synthetic::ShapeKind;

fn main() {
    let categories = vec![
        CategorySpec {
            name: "torus".into(),
            shape: ShapeKind::Torus,
            prototypes: 3,
            prototype_points: 1500,
            test_points: 1500,
            good_tests: 8,
            defect_tests: 8,
            defect_magnitude_frac: 0.10,
            seed: 101,
            ..CategorySpec::default()
        },
        CategorySpec {
            name: "blob".into(),
            shape: ShapeKind::BlendedBlob { surface_seed: 7 },
            prototypes: 3,
            prototype_points: 1500,
            test_points: 1500,
            good_tests: 8,
            defect_tests: 8,
            defect_magnitude_frac: 0.10,
            seed: 202,
            ..CategorySpec::default()
        },
    ];
    let cfg = BenchmarkConfig::for_synthetic_shapes(400);
    let outcome = run_benchmark(&categories, &cfg).expect("benchmark failed");

    println!(
        "{:<10} {:>8} {:>8} {:>8} {:>8} {:>9}",
        "category", "O-AUROC", "P-AUROC", "O-AUPR", "P-AUPR", "time(s)"
    );
    for (m, t) in outcome
        .report
        .categories
        .iter()
        .zip(&outcome.timing.categories)
    {
        let opt = |v: Option<f64>| v.map_or("-".into(), |x| format!("{x:.3}"));
        println!(
            "{:<10} {:>8.3} {:>8} {:>8.3} {:>8} {:>9.3}",
            m.name,
            m.o_auroc,
            opt(m.p_auroc),
            m.o_aupr,
            opt(m.p_aupr),
            t.mean_inference_seconds
        );
    }
    let s = &outcome.report.summary;
    println!(
        "{:<10} {:>8.3} {:>8} {:>8.3} {:>8} {:>9.3}",
        "mean",
        s.o_auroc,
        s.p_auroc.map_or("-".into(), |x| format!("{x:.3}")),
        s.o_aupr,
        s.p_aupr.map_or("-".into(), |x| format!("{x:.3}")),
        outcome.timing.mean_inference_seconds
    );
}
