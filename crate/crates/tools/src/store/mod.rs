//! Persistence: dataset ingestion and the tensor, model, report, profile and
//! suite file formats.

pub mod error;
pub mod fs;
pub mod idx;
pub mod json;
pub mod model;
pub mod profile;
pub mod report;
pub mod suite;
pub mod tensor_file;

pub use error::{Result, StoreError};
