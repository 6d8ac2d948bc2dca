//! Locally non-rigid registration and error-tolerant fusion for two-image
//! HDR exposure stacks.
//!
//! The pipeline, in order:
//!
//! 1. [`metering`] picks the reference (darkest) exposure.
//! 2. [`histogram`] matches the source luminance to the reference so SSD
//!    scores ignore the exposure gap.
//! 3. [`matcher`] finds one quadrant-contrast corner per tile on each pyramid
//!    level and matches it by SSD search around a homography-predicted start.
//! 4. [`weeding`] keeps the union of inlier sets of every well-supported
//!    4-point homography.
//! 5. [`densify`] spreads the sparse flow with a normalized domain-transform
//!    cross-bilateral filter guided by the reference.
//! 6. [`warp`] backward-warps the source onto the reference.
//! 7. [`fusion`] blends with exposure-fusion weights multiplied by a local
//!    SSIM trust map.
//!
//! [`pipeline`] wires the stages together and [`synth`] generates synthetic
//! stacks with known ground-truth flow. [`viz`] renders flow, scalar maps
//! and matches for inspection.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coords;
pub mod densify;
pub mod error;
pub mod filter;
pub mod fusion;
pub mod geometry;
pub mod histogram;
pub mod image;
pub mod integral;
pub mod io;
pub mod matcher;
pub mod metering;
pub mod pipeline;
pub mod pyramid;
pub mod synth;
pub mod viz;
pub mod warp;
pub mod weeding;

pub use error::{Error, Result};
