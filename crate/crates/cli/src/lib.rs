//! File formats and command implementations behind the `gp4pc` binary.

pub mod commands;
pub mod format;

/// Environment variable holding the default worker thread count.
pub const THREADS_ENV: &str = "GP4PC_THREADS";
