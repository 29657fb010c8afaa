//! Sensing-error analysis and transmit covariance optimization for
//! multi-antenna integrated sensing and communication links with random
//! data symbols.

pub mod error;
pub mod linalg;
pub mod convex;
pub mod metrics;
pub mod model;
pub mod sca;

pub use error::{IsacError, Result};
pub use linalg::{CMatrix, HermitianMatrix};
pub use model::{Frame, Precoder, SystemConfig, Target, TargetScene};

#[cfg(doctest)]
#[doc = include_str!("../../../README.md")]
pub struct ReadmeDoctests;
