//! Domain distance measures and the tooling built around them: separability
//! analysis of distance matrices, distance-regularized classifier training,
//! and UCB scheduling over multiple source domains.

pub mod analysis;
pub mod bandit;
pub mod distances;
pub mod error;
pub mod harness;
pub mod model;
pub mod numerics;

pub use error::{Error, Result};
