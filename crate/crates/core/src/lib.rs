//! Volumetric 3D keypoint localization with coarse-to-fine depth supervision.
//!
//! The crate is split along the data path: [`skeleton`] generates poses,
//! [`voxelgrid`] maps them into a discretized volume, [`heatmap`] builds and
//! decodes per-voxel targets, [`autonet`] provides the differentiable network,
//! [`trainer`] runs experiments and [`metrics`] scores them.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autonet;
pub mod cli;
pub mod error;
pub mod geom;
pub mod heatmap;
pub mod metrics;
pub mod skeleton;
pub mod trainer;
pub mod voxelgrid;

pub use error::{Error, Result};
