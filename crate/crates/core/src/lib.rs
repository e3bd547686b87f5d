//! Neighborhood Preserving Embedding, computed exactly and through a
//! simulated quantum pipeline.
//!
//! The classical path ([`classical`]) is the reference: neighbor search,
//! closed-form reconstruction weights, the bottom eigenvectors of
//! (I - W)ᵀ(I - W), and ridge regression. The quantum path ([`pipeline`])
//! reaches the same quantities through amplitude estimation, block-encoded
//! inversion, tomography, singular value estimation and minimum finding, all
//! running on the deterministic statevector simulator in [`sim`].

pub mod classical;
pub mod data;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod pipeline;
pub mod sim;
pub mod subroutines;

pub use error::{Error, Result};
pub use nalgebra;
