//! Run orchestration: configuration schema, artifact persistence, the
//! adaptation benchmark, multi-seed validation, and figure-data reports.

pub mod benchmark;
pub mod config;
pub mod io;
pub mod report;
pub mod validate;
