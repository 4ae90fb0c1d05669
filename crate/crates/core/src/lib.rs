//! Estimators for the orthogonal extension problem (recover `A` from a
//! homolog `B ≈ A` and `C = A A*`) and the Kam autocorrelation machinery
//! needed to run them on volumes.

pub mod error;
pub mod estimators;
pub mod linalg;
pub mod sphbasis;
pub mod autocorr;
pub mod volume;
pub mod extension;
pub mod formats;
pub mod checks;
pub mod experiments;

pub use error::{Error, Result};
