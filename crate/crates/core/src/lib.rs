pub mod diffcore;
pub mod error;
pub mod experiments;

pub use error::{CdmError, Result};
pub mod config;
pub mod dataset;
pub mod metrics;
pub mod models;
pub mod training;
