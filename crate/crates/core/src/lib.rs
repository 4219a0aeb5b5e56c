//! Keypoint-heatmap tracking toolkit.
//!
//! Objects are anchored on their *top keypoint* (half the width, one tenth of
//! the height of the box). This crate covers everything downstream of a
//! neural backbone: rendering and decoding heatmaps, the training losses as
//! reference functions with gradient checks, displacement-conditioned
//! association into tracks, a synthetic scene generator that stands in for a
//! trained network, and CLEAR-MOT / IDF1 scoring.
//!
//! Coordinates follow the MOTChallenge convention: `x` is the column axis,
//! `y` the row axis, origin at the top-left corner of the image.

pub mod ablation;
pub mod assignment;
pub mod association;
pub mod config;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod gradcheck;
pub mod grid;
pub mod heatmap;
pub mod io;
pub mod losses;
pub mod pipeline;
pub mod simulator;

pub use config::PipelineConfig;
pub use error::{Error, Result};
pub use geometry::{BBox, Corners, Detection, GridPoint, Keypoint, Size, TopPoint, Vec2};
pub use grid::{Grid, GridDims};
