//! Multi-camera torso pose estimation.
//!
//! Skeleton detections from several calibrated cameras are associated per
//! person, fused into a single graph and regressed to a floor position and
//! torso orientation `(x, y, α)` by a graph neural network. An analytical
//! depth-based estimator and a masked MLP serve as comparisons, and a
//! simulator produces labelled multi-camera datasets.

pub mod baseline;
pub mod cli;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod graph;
pub mod matcher;
pub mod nn;
pub mod sim;
pub mod skeleton;

pub use error::{Error, Result};
