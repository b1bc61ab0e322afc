//! Structured-light depth sensor simulation.
//!
//! The crate reproduces the full acquisition chain of a single-shot
//! structured-light device: a virtual projector casts a dot pattern over a
//! triangle-mesh scene, a virtual camera captures the infrared image, the
//! capture is degraded like a real imaging sensor, and SAD block matching
//! against a reference image recovers disparity and metric depth, which is
//! then trimmed, smoothed and hole-filled.
//!
//! The stages are exposed individually (see [`scene`], [`sensor`],
//! [`render`], [`noise`], [`stereo`], [`post`], [`compositor`]) and
//! assembled by [`pipeline::Pipeline`]. [`benchmark`] runs the flat-wall
//! error characterization and [`dataset`] drives batch generation from a
//! [`config::Config`].

pub mod benchmark;
pub mod compositor;
pub mod config;
pub mod dataset;
pub mod depth;
mod error;
pub mod grid;
pub mod noise;
pub mod pipeline;
pub mod post;
pub mod render;
pub mod scene;
pub mod sensor;
pub mod stereo;
pub mod viewpoints;

pub use error::{Error, Result};
pub use grid::Grid;

/// Rigid transform used for every pose in the crate (camera-to-world,
/// object-to-world).
pub type Pose = nalgebra::Isometry3<f64>;
