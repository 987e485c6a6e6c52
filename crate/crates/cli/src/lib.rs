//! Command-line pipeline around the `dyncable` library.

pub mod config;
pub mod error;
pub mod stages;

pub use config::ExperimentConfig;
pub use error::CliError;
