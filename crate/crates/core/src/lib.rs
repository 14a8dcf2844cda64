//! Data-driven feedback control of partially observed diffusions.
//!
//! A kernel-learning backward-SDE filter tracks the hidden state from noisy
//! indirect readings and a sample-wise stochastic-maximum-principle solver
//! refreshes the feedback control at every observation time.

pub mod control;
pub mod error;
pub mod experiments;
pub mod filter;
pub mod models;
pub mod oracle;
pub mod sde;

pub use error::{Error, Result};
