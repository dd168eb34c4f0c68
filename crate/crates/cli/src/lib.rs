//! Scenario-driven runner: loads a JSON scenario, runs one pipeline and
//! writes its artifacts next to a checksummed manifest.

pub mod commands;
pub mod error;
pub mod manifest;
pub mod scenario;

pub use commands::{run, Command, RunOptions};
pub use error::{CliError, CliResult};
pub use manifest::RunManifest;
pub use scenario::Scenario;
