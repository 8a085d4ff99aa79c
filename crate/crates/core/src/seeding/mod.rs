//! Where to spawn tracks, and a uniform interface over point trackers.
//!
//! Tracks are seeded preferentially near motion boundaries: Sobel edges of
//! consecutive-frame flows, dilated by a small disc, receive a fixed share of
//! the budget and the rest is spread uniformly over the frame.

mod edges;
mod sample;
mod tracker;

pub use edges::{flow_edges, sobel_magnitude, EdgeMap};
pub use sample::{sample_queries, QuerySample, SamplingBudget};
pub use tracker::{run_tracker, CorruptedTracker, ExternalTracker, GroundTruthTracker, PointTracker};
