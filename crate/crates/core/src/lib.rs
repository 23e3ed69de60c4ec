//! Batched variance-reduced stochastic gradient methods for finite sums,
//! with exact gradient-evaluation accounting and bound calculators.

pub mod analysis;
pub mod error;
pub mod estimators;
pub mod linalg;
pub mod optimizers;
pub mod oracle;
pub mod sampler;
pub mod schedules;

pub use error::{Error, Result};
