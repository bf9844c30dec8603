//! Scalar and operator-valued infinitesimal free probability.

pub mod cli;
pub mod cumulants;
pub mod dual;
pub mod error;
pub mod measures;
pub mod ncpart;
pub mod oracle;
pub mod ovspace;
pub mod rmt;
pub mod subord;
pub mod verify;

pub use dual::{C64, CMat, Dual, DualMatrix, DualScalar, Ring, Scalar};
pub use error::{Error, Result};
