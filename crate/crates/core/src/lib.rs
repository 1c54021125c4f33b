//! Cooperative multi-robot pursuit with a learned potential-field layer.
//!
//! Pursuers steer with an artificial potential field whose repulsion and
//! cohesion parameters are picked each step by a dueling double Q-network.

pub mod apf;
pub mod checkpoint;
pub mod arena_file;
pub mod baselines;
pub mod env;
pub mod error;
pub mod geometry;
pub mod neural;
pub mod replay;
pub mod trainer;
pub mod svg;
pub mod trajectory;

pub use error::{Error, Result};
