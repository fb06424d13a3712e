pub mod allocator;
pub mod baselines;
pub mod cli;
pub mod doc;
pub mod error;
pub mod game;
pub mod linalg;
pub mod pipeline;
pub mod interaction;
pub mod spqe;
pub mod surrogate;

pub use error::{Error, Result};
