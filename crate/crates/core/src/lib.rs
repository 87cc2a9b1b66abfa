pub mod analysis;
pub mod backend;
pub mod concept;
pub mod corpus;
pub mod dataset;
pub mod distill;
pub mod error;
pub mod lm;
pub mod matrix;
pub mod prompt;
pub mod scoring;

pub use error::{BackendError, Error, Result};
