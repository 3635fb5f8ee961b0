//! Online minimax state estimation for linear time-varying descriptor
//! difference systems under set-bounded uncertainty.
//!
//! The crate is organised bottom-up:
//!
//! * [`psdlinalg`]: symmetric PSD eigendecomposition, pseudoinverse and rank;
//! * [`model`]: descriptor systems, weights, simulation;
//! * [`observer`]: the online `Q/r/α` recursion and what it reports;
//! * [`oracle`]: whole-trajectory least squares used to cross-check it;
//! * [`kalman`]: the regular-system Kalman recursion it reduces to;
//! * [`cli`]: configuration files and the `singulax` commands.

pub mod cli;
pub mod error;
pub mod kalman;
pub mod model;
pub mod observer;
pub mod oracle;
pub mod psdlinalg;

pub use error::{Error, Result};
