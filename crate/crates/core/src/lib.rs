//! Conway-Maxwell-multinomial distribution: exact evaluation, sampling,
//! maximum-likelihood regression and simulation diagnostics.

pub mod error;
pub mod logspace;
pub mod space;
pub mod dist;
pub mod sampler;
pub mod inference;
pub mod diagnostics;
pub mod io;

pub use dist::{Cmm, CmmParams, MomentSummary, TrialCorrelation};
pub use error::{CmmError, ErrorKind, Result};
pub use space::{CountVector, SpaceSubsets};
