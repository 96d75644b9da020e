//! The `gatebias` command line: thin orchestration over `gatebias-core` with
//! deterministic JSON reports and plot-ready tidy tables.

pub mod args;
pub mod commands;
pub mod config;
pub mod report;

use gatebias_core::error::Error;

/// 2 for configuration and data validation failures, 3 for I/O, serialization,
/// and resampling failures at runtime.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io(_) | Error::Csv(_) | Error::Json(_) | Error::BootstrapDegenerate { .. } => 3,
        _ => 2,
    }
}
