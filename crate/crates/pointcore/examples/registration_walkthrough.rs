//! Coarse-to-fine registration, one stage at a time.
//!
//! Generates two independent samplings of the same surface, hides a known
//! rigid pose in one of them, and runs the stack by hand: normal
//! estimation, FPFH descriptors, mutual correspondences, RANSAC, and
//! point-to-plane ICP. After each pose estimate it prints the residual
//! against the hidden pose.

use pointcore::eval::synthetic::{generate_shape, jitter_cloud, random_pose, ShapeKind};
use pointcore::geometry::estimate_normals;
use pointcore::registration::{
    compute_fpfh, feature_correspondences, point_plane_icp, ransac_global_registration,
    RegistrationConfig,
};
use pointcore::RigidTransform;

fn main() {
    let shape = ShapeKind::BlendedBlob { surface_seed: 7 };
    let target_base = generate_shape(shape, 1500, 0.0, 1);
    let source_base = generate_shape(shape, 1500, 0.0, 2);
    let diameter = target_base.diameter();

    let sigma = 0.001 * diameter;
    let target = jitter_cloud(&target_base, sigma, 11);
    let pose = random_pose(30.0, 0.1 * diameter, 12);
    let source = jitter_cloud(&source_base, sigma, 13).transformed(&pose);
    println!(
        "hidden pose: {:.2} deg rotation, {:.4} diameters translation",
        pose.rotation_angle_deg(),
        pose.translation.norm() / diameter
    );

    let cfg = RegistrationConfig::for_sparse_clouds();
    let source = estimate_normals(&source, cfg.normals_k)
        .expect("source normals")
        .cloud;
    let target = estimate_normals(&target, cfg.normals_k)
        .expect("target normals")
        .cloud;

    let radius = cfg.fpfh_radius.resolve(diameter);
    let source_desc = compute_fpfh(&source, radius).expect("source descriptors");
    let target_desc = compute_fpfh(&target, radius).expect("target descriptors");
    let pairs = feature_correspondences(&source_desc, &target_desc);
    println!(
        "descriptors: radius {:.3}, {} mutual correspondences from {} points",
        radius,
        pairs.len(),
        source.len()
    );

    let residual = |recovered: &RigidTransform| {
        let r = recovered.compose(&pose);
        (r.rotation_angle_deg(), r.translation.norm() / diameter)
    };

    let global = ransac_global_registration(&source, &target, &source_desc, &target_desc, &cfg.ransac)
        .expect("global registration");
    let (rot, trans) = residual(&global.transform);
    println!(
        "ransac:  {:>5.1}% inliers after {} iterations, residual {rot:.3} deg / {trans:.5} diameters",
        100.0 * global.inlier_fraction,
        global.iterations_run
    );

    let refined = point_plane_icp(&source, &target, &global.transform, &cfg.icp).expect("icp");
    let (rot, trans) = residual(&refined.transform);
    println!(
        "icp:     {} iterations, final loss {:.3e}, residual {rot:.4} deg / {trans:.6} diameters",
        refined.iterations.len(),
        refined.final_loss
    );
}
