use std::path::PathBuf;

use thiserror::Error;

use dyncable::analysis::AnalysisError;
use dyncable::cablesim::SimError;
use dyncable::datasets::DatasetError;
use dyncable::models::ModelError;
use dyncable::policy::PolicyError;
use dyncable::trajgen::TrajError;
use dyncable::tuner::TuneError;

/// Every failure maps to one exit code: 2 for bad configuration or input,
/// 3 for numerical failure, 4 for a missing upstream artifact, 1 for
/// anything else (I/O on outputs).
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("missing artifact {}: run `{stage}` first", path.display())]
    MissingArtifact { path: PathBuf, stage: &'static str },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::MissingArtifact { .. } => 4,
            CliError::Io(_) => 1,
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::BlowUp { .. } => CliError::Numerical(e.to_string()),
            SimError::Io(io) => CliError::Io(io),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<TrajError> for CliError {
    fn from(e: TrajError) -> Self {
        match e {
            TrajError::Io(io) => CliError::Io(io),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<TuneError> for CliError {
    fn from(e: TuneError) -> Self {
        match e {
            TuneError::AllPenalized => CliError::Numerical(e.to_string()),
            TuneError::Sim(s) => s.into(),
            TuneError::Traj(t) => t.into(),
            TuneError::Io(io) => CliError::Io(io),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::Sim(s) => s.into(),
            DatasetError::Traj(t) => t.into(),
            DatasetError::Io(io) => CliError::Io(io),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Diverged { .. } | ModelError::Singular | ModelError::Simulator(_) => {
                CliError::Numerical(e.to_string())
            }
            ModelError::Io(io) => CliError::Io(io),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<PolicyError> for CliError {
    fn from(e: PolicyError) -> Self {
        match e {
            PolicyError::Model(m) => m.into(),
            PolicyError::Sim(s) => s.into(),
            PolicyError::Dataset(d) => d.into(),
            PolicyError::Io(io) => CliError::Io(io),
            PolicyError::Csv(c) => CliError::Io(c.into()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::Io(io) => CliError::Io(io),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.into())
    }
}
