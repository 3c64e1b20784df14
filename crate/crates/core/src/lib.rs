//! Exact construction of Toeplitz Z^d-subshifts whose simplex of invariant
//! measures is prescribed, together with finite certificates for every
//! checkable property of the construction.

pub mod arith;
pub mod blocks;
pub mod choquet;
pub mod error;
pub mod invariants;
pub mod io;
pub mod lattice;
pub mod matrices;
pub mod pipeline;

pub use error::{Error, Result};
