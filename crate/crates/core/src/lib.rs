//! Six degree-of-freedom relative pose estimation against a black-box
//! feature renderer.
//!
//! The renderer is only ever queried, never differentiated. Around the current
//! pose guess a batch of random pose perturbations is rendered, a local image
//! Jacobian is fit to the observed feature motion, and a Levenberg-Marquardt
//! step moves the guess toward the reference observation. This repeats until
//! the step falls below a threshold.
//!
//! Module map:
//!
//! - [`geometry`]: Gibbs vector (classical Rodrigues parameter) attitude algebra
//!   and pose differencing.
//! - [`rendering`]: pinhole keypoint projector standing in for an image renderer
//!   plus feature tracker, and observation corruption.
//! - [`sampling`]: seeded pose perturbation batches.
//! - [`jacobian`]: fitting the local feature Jacobian from a batch.
//! - [`solver`]: the outer estimation loop.
//! - [`metrics`]: translation and rotation error.
//! - [`harness`]: scenario files, synthetic targets, CSV output and batch runs.

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod geometry;
pub mod harness;
pub mod jacobian;
pub mod metrics;
pub mod parallel;
pub mod rendering;
pub mod sampling;
pub mod solver;

pub use error::{Error, Result};
pub use geometry::{GibbsVector, Pose, PoseDelta, RotationMatrix};
pub use rendering::{CameraIntrinsics, FeatureObservation, PinholeRenderer, Renderer, TargetModel};
pub use sampling::SamplerConfig;
pub use solver::{estimate_pose, LmConfig, SolveResult};
