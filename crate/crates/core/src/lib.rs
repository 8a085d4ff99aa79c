//! Dense optical tracking.
//!
//! A small set of point tracks, seeded near motion boundaries, is densified by
//! nearest-neighbor interpolation into a coarse flow and visibility estimate,
//! which an iterative correlation-based network then refines to full
//! resolution.
//!
//! - [`types`]: videos, tracks, flows, masks, metric reports.
//! - [`io`], [`color`]: `.flo`, PNG masks, track JSON, flow visualization.
//! - [`synthgen`]: procedural scenes with analytic ground truth.
//! - [`seeding`]: motion-edge detection, query sampling, tracker adapters.
//! - [`interp`]: nearest visible track interpolation (direct and bucketed).
//! - [`nn`]: the tape-based autodiff engine behind the refiner.
//! - [`refiner`]: frame encoder, correlation pyramid, recurrent updates.
//! - [`training`]: losses, data sampling and the optimizer loop.
//! - [`eval`]: EPE, occlusion IoU, TAP metrics, consistency checks, timing.
//! - [`pipeline`]: end-to-end tracking and ablation experiments.

pub mod color;
pub mod error;
pub mod eval;
pub mod interp;
pub mod io;
pub mod nn;
pub mod pipeline;
pub mod refiner;
pub mod seeding;
pub mod synthgen;
pub mod training;
pub mod types;

pub use error::{DotError, Result};
pub use types::{
    binarize_mask, FlowField, Frame, MetricReport, Resolution, TrackPoint, TrackSet, TrackSource, Video,
    VisibilityMask, DEFAULT_TAU,
};
