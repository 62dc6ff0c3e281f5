//! Moments, integrability obstructions, classification and sampling for
//! 1-Meixner random vectors given by their commutator coefficient tensor.
//!
//! Indices are 0-based throughout.

pub mod chaos;
pub mod classify;
pub mod dist3;
pub mod error;
pub mod integrability;
pub mod io;
pub mod moments;
pub mod scalar;
pub mod tensor;
pub mod verify;

pub use error::{Error, Result};
pub use moments::{MomentTable, MultiIndex, PivotPolicy};
pub use scalar::Scalar;
pub use tensor::{MeixnerSpec, SliceMatrix, SymmetricCubicTensor};
