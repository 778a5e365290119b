//! Remote state estimation of a self-propelled particle over a costly link.
//!
//! The sensing unit observes the pose of a particle moving in the plane and
//! decides at each step whether to pay for transmitting it; the estimator
//! keeps a running estimate from the last transmitted pose. The crate
//! computes person-by-person optimal transmission thresholds and estimates by
//! alternating best responses, assembles them into a deployable scheme and
//! evaluates it on simulated or recorded tracks.

pub mod belief;
pub mod cli;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod ingestion;
pub mod noise;
pub mod scheme;
pub mod solver;

pub use error::{Error, Result};
pub use geometry::State;
