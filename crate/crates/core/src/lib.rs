//! Skip-gram word embeddings (oSG and SGNS) and dimensionality selection by
//! information criteria: AIC, BIC, held-out loss and sequential NML codelengths
//! with warm-started re-fitting and importance-sampled normalizers.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the command line
//! and sweep orchestration live in the `sgdim` crate.

#![no_std]

extern crate alloc;
#[cfg(any(test, feature = "std"))]
extern crate std;

pub mod corpus;
pub mod criteria;
pub mod error;
pub mod evaluation;
pub mod math;
pub mod sgmodel;
pub mod synthgen;

pub use error::{Error, Result};

/// Generator behind every seeded operation.
pub type SeededRng = rand_chacha::ChaCha8Rng;
