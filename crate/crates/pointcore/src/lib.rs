//! Unsupervised anomaly detection for 3D point clouds.
//!
//! The pipeline aligns every prototype scan into a shared canonical frame
//! (FPFH correspondences, RANSAC, point-to-plane ICP), picks representative
//! center points with a greedy mean-distance criterion, and stores each
//! center as a `(coordinate, feature)` pair in a single memory bank. At
//! inference time a test scan is registered into the same frame and every
//! test point is scored by one coordinate-space 3-NN lookup into the bank:
//! the coordinate score is the mean of the three neighbor distances, the
//! feature score is the smallest feature distance to those same three
//! elements. Both scores are rank-normalized before fusion so neither scale
//! dominates.
//!
//! The crate is primarily a library; `examples/` holds one runnable program
//! per stage of the pipeline and `src/bin/pointcore.rs` exposes the same
//! operations as a small CLI (`build-bank`, `infer`, `evaluate`,
//! `gen-synthetic`, `bench-registration`).
//!
//! ```
//! use pointcore::eval::synthetic::{generate_shape, ShapeKind};
//! use pointcore::sampling::{greedy_downsample, SamplingParams};
//!
//! let cloud = generate_shape(ShapeKind::Sphere, 400, 0.0, 7);
//! let params = SamplingParams { s_max: 32, ..SamplingParams::default() };
//! let centers = greedy_downsample(&cloud, &params).unwrap();
//! assert_eq!(centers.len(), 32);
//! ```

pub mod bank;
pub mod config;
pub mod error;
pub mod eval;
pub mod features;
pub mod geometry;
pub mod io;
pub mod registration;
pub mod sampling;
pub mod scoring;

mod seed;

pub use error::Error;
pub use geometry::{PointCloud, RigidTransform, SpatialIndex};
