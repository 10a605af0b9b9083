//! Graph-regularized auto-encoders for low-dimensional data representation.
//!
//! The pipeline: build an affinity graph over the samples ([`graph`]), train
//! a sigmoid auto-encoder whose objective charges `lambda tr(H G H^T)` for
//! separating graph neighbors ([`autoencoder`]), optionally stack layers
//! greedily and fine-tune the whole encoder ([`stack`]), then score the
//! learned representation by k-means clustering accuracy and normalized
//! mutual information ([`eval`]).
//!
//! See the `examples/` directory for runnable walkthroughs of each
//! capability, and the `graphae` binary for the file-driven command-line
//! interface.

pub mod autoencoder;
pub mod dataset;
mod error;
pub mod eval;
pub mod graph;
pub mod optimizer;
pub mod runner;
pub mod seed;
pub mod stack;

pub use error::{Error, Result};
