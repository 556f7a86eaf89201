//! Process-level error type and its exit-code mapping.

use std::io;
use std::path::Path;

use reservoir_cast_core::baselines::BaselineError;
use reservoir_cast_core::config::ConfigError;
use reservoir_cast_core::deep::DeepEsnError;
use reservoir_cast_core::field::FieldError;
use reservoir_cast_core::metrics::MetricsError;
use reservoir_cast_core::numerics::NumericsError;
use reservoir_cast_core::qeesn::QeesnError;
use reservoir_cast_core::reservoir::ReservoirError;
use reservoir_cast_core::ssvs::SsvsError;

/// Anything a subcommand can fail with, bucketed by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Simulation(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numerics(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl CliError {
    /// Stable exit code for scripts: 2 config, 3 simulation, 4 data,
    /// 5 numerical, 1 anything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Simulation(_) => 3,
            CliError::Data(_) => 4,
            CliError::Numerics(_) => 5,
            CliError::Io(_) => 1,
        }
    }
}

/// Wrap an IO error with the path it happened on; bare `io::Error` messages
/// ("No such file or directory") are useless without it.
pub fn io_context(path: &Path, err: io::Error) -> CliError {
    CliError::Data(format!("{}: {err}", path.display()))
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<FieldError> for CliError {
    fn from(e: FieldError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<NumericsError> for CliError {
    fn from(e: NumericsError) -> Self {
        CliError::Numerics(e.to_string())
    }
}

impl From<ReservoirError> for CliError {
    fn from(e: ReservoirError) -> Self {
        match e {
            ReservoirError::InsufficientHistory { .. } => CliError::Data(e.to_string()),
            ReservoirError::Numerics(n) => n.into(),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<SsvsError> for CliError {
    fn from(e: SsvsError) -> Self {
        match e {
            SsvsError::Numerics(n) => n.into(),
            SsvsError::Config(c) => c.into(),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<BaselineError> for CliError {
    fn from(e: BaselineError) -> Self {
        match e {
            BaselineError::SimulationDiverged { .. } | BaselineError::ZeroLength => {
                CliError::Simulation(e.to_string())
            }
            BaselineError::Numerics(n) => n.into(),
            BaselineError::Reservoir(r) => r.into(),
            BaselineError::Config(c) => c.into(),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<QeesnError> for CliError {
    fn from(e: QeesnError) -> Self {
        match e {
            QeesnError::HorizonBeyondLead { .. }
            | QeesnError::ZeroHorizon
            | QeesnError::InvalidLevel(_)
            | QeesnError::EmptyGrid { .. }
            | QeesnError::ValidationTooShort { .. } => CliError::Config(e.to_string()),
            QeesnError::Reservoir(r) => r.into(),
            QeesnError::Numerics(n) => n.into(),
            QeesnError::Config(c) => c.into(),
            QeesnError::Field(f) => f.into(),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<DeepEsnError> for CliError {
    fn from(e: DeepEsnError) -> Self {
        match e {
            DeepEsnError::HorizonBeyondLead { .. } | DeepEsnError::ZeroHorizon => {
                CliError::Config(e.to_string())
            }
            DeepEsnError::TuningFailed => CliError::Numerics(e.to_string()),
            DeepEsnError::Reservoir(r) => r.into(),
            DeepEsnError::Numerics(n) => n.into(),
            DeepEsnError::Config(c) => c.into(),
            DeepEsnError::Selection(s) => s.into(),
            _ => CliError::Data(e.to_string()),
        }
    }
}
