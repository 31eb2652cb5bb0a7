//! File formats, dataset ingestion and the `manifold` command-line tool.

pub mod cli;
pub mod store;
