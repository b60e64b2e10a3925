//! File formats, reports, run bookkeeping and the command implementations
//! behind the `attraudit` binary.

pub mod commands;
pub mod config;
pub mod io;
pub mod model_file;
pub mod report;
pub mod runs;

pub use commands::{classify, execute, Command, ExitKind, Outcome};
pub use config::{ConfigError, Overrides, RunConfig};
