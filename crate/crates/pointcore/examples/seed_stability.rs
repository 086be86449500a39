//! Shows ICP refinement removing RANSAC seed sensitivity.
//!
//! Registers one fixed cloud pair once per RANSAC seed and prints the
//! recovered Euler angles before and after refinement, followed by the
//! per-angle spread across seeds.

use pointcore::eval::synthetic::{generate_shape, jitter_cloud, random_pose, ShapeKind};
use pointcore::registration::{registration_stability, RegistrationConfig};

fn main() {
    let base = generate_shape(ShapeKind::BlendedBlob { surface_seed: 9 }, 1500, 0.0, 1);
    let diameter = base.diameter();
    let target = jitter_cloud(&base, 0.001 * diameter, 2);
    let pose = random_pose(30.0, 0.1 * diameter, 4);
    let source = jitter_cloud(&base, 0.001 * diameter, 3).transformed(&pose);

    let seeds: Vec<u64> = (1..=8).collect();
    let cfg = RegistrationConfig::for_sparse_clouds();
    let report = registration_stability(&source, &target, &cfg, &seeds).expect("stability");

    println!(
        "{:<5} {:>27} {:>33}",
        "seed", "ransac yaw/pitch/roll (deg)", "refined yaw/pitch/roll (deg)"
    );
    for trial in &report.trials {
        let g = trial.euler_global_deg;
        let r = trial.euler_refined_deg;
        println!(
            "{:<5} {:>8.3} {:>8.3} {:>8.3}  {:>10.6} {:>10.6} {:>10.6}",
            trial.seed, g[0], g[1], g[2], r[0], r[1], r[2]
        );
    }
    println!(
        "largest per-angle std: {:.4} deg before refinement, {:.2e} deg after",
        report.max_global_std_deg(),
        report.max_refined_std_deg()
    );
}
