//! Scores a defective scan and shows how well the defect separates.
//!
//! Injects a bump into a fresh sampling of the prototype surface, poses
//! it randomly, runs inference, and compares fused scores between the
//! ground-truth anomalous points and the clean remainder.

use pointcore::bank::build_memory_bank;
use pointcore::eval::auroc;
use pointcore::eval::synthetic::{generate_shape, inject_defect, random_pose, DefectKind, ShapeKind};
use pointcore::eval::BenchmarkConfig;
use pointcore::scoring::run_inference;

fn main() {
    let shape = ShapeKind::BlendedBlob { surface_seed: 5 };
    let prototypes: Vec<_> = (0..3)
        .map(|i| generate_shape(shape, 1500, 0.0, 20 + i))
        .collect();
    let cfg = BenchmarkConfig::for_synthetic_shapes(400);
    let bank = build_memory_bank(&prototypes, None, &cfg.bank)
        .expect("bank build")
        .bank;

    let clean = generate_shape(shape, 1500, 0.0, 77);
    let diameter = clean.diameter();
    let defect = inject_defect(&clean, DefectKind::Bump, 0.10 * diameter, 0.12 * diameter, 40)
        .expect("defect injection");
    let labels = defect.labeling.point_labels;
    let test = defect
        .cloud
        .transformed(&random_pose(30.0, 0.1 * diameter, 41));

    let outcome = run_inference(&bank, &test, None, &cfg.inference).expect("inference");
    let fused = &outcome.scores.fused;

    let mean_where = |flag: bool| {
        let picked: Vec<f64> = fused
            .iter()
            .zip(&labels)
            .filter(|(_, &l)| l == flag)
            .map(|(v, _)| *v)
            .collect();
        picked.iter().sum::<f64>() / picked.len() as f64
    };
    let anomalous = labels.iter().filter(|&&l| l).count();
    println!(
        "{anomalous} of {} points sit inside the injected bump",
        labels.len()
    );
    println!(
        "mean fused score: {:.3} on defect points, {:.3} on clean points",
        mean_where(true),
        mean_where(false)
    );
    println!(
        "point-level auroc: {:.3}",
        auroc(&labels, fused).expect("auroc")
    );

    let mut ranked: Vec<(usize, f64)> = fused.iter().copied().enumerate().collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
    let hits = ranked[..20].iter().filter(|(i, _)| labels[*i]).count();
    println!("{hits} of the 20 highest-scoring points are true defect points");
}
