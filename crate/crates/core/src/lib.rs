//! Rationale-augmented convolutional networks for document classification.
//!
//! Documents are encoded sentence by sentence with a shared convolutional
//! encoder. An RA-CNN weights each sentence by how likely it is to be a
//! rationale for either label before summing into the document vector;
//! flat CNN, Doc-CNN and AT-CNN baselines are provided for comparison.

pub mod cli;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod graph;
pub mod models;
pub mod tensor;
pub mod text;
pub mod train;

pub use error::{Error, Result};
