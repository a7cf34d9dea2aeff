//! Log-linear model selection for discrete multivariate data by structural
//! risk minimization.
//!
//! The crate fits k-factor log-linear models under a probability floor λ,
//! evaluates the VC-based guaranteed-risk bound for each (degree, floor)
//! class, and reports the classical goodness-of-fit criteria alongside.

pub mod cli;
pub mod error;
pub mod fit;
pub mod io;
pub mod loglin;
pub mod select;
pub mod space;
pub mod special;
pub mod vc;

pub use error::{Error, Result};
pub use space::{Alphabet, Dataset, DistributionTable};
