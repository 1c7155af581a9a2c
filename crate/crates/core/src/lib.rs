//! Train small classifiers, prune them, and measure how pruning moves
//! samples in the penultimate feature space (angle to each class
//! direction, feature length, distance to the decision boundary).

pub mod corruption;
pub mod error;
pub mod geometry;
pub mod io;
pub mod nn;
pub mod pruning;
pub mod registry;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
