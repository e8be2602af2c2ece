//! Command line tools and HTTP service over `trackfill-core`.

pub mod args;
pub mod commands;
pub mod corpus;
pub mod pianoroll;
pub mod report;
pub mod service;
pub mod store;
