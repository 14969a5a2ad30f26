//! Zero-shot classification with hyperdimensional computing.
//!
//! Class embeddings come from a stationary encoder `φ = A × B`, where `B`
//! binds a group hypervector to a value hypervector for every attribute. Only
//! a linear projection head (and the kernel temperature) is trained.

pub mod audit;
pub mod codebooks;
pub mod encoder;
pub mod error;
pub mod hypervector;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod nn;
pub mod rng;
pub mod training;

pub use error::{Error, FormatError, Result};
