//! Error type with the process exit-code contract:
//! 0 ok, 2 config/usage, 3 numeric failure, 4 artifact mismatch,
//! 5 resource guard.

use mogcsl::data::DataError;
use mogcsl::envs::EnvError;
use mogcsl::eval::EvalError;
use mogcsl::gbt::GbtError;
use mogcsl::goalsel::GoalSelError;
use mogcsl::policy::PolicyError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Usage(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("artifact mismatch: {0}")]
    Artifact(String),
    #[error("resource guard: {0}")]
    Resource(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Artifact(_) => 4,
            CliError::Resource(_) => 5,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Usage(format!("i/o error: {e}"))
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<EnvError> for CliError {
    fn from(e: EnvError) -> Self {
        match e {
            EnvError::BudgetExceeded { .. } => CliError::Resource(e.to_string()),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<PolicyError> for CliError {
    fn from(e: PolicyError) -> Self {
        match e {
            PolicyError::NanLoss { .. } => CliError::Numeric(e.to_string()),
            PolicyError::Version { .. }
            | PolicyError::Shape { .. }
            | PolicyError::MissingParam(_)
            | PolicyError::Corrupt(_) => CliError::Artifact(e.to_string()),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<GoalSelError> for CliError {
    fn from(e: GoalSelError) -> Self {
        match e {
            GoalSelError::NanLoss { .. } => CliError::Numeric(e.to_string()),
            GoalSelError::Version { .. } | GoalSelError::Corrupt(_) => {
                CliError::Artifact(e.to_string())
            }
            GoalSelError::Policy(p) => p.into(),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Policy(p) => p.into(),
            EvalError::Gbt(g) => g.into(),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<GbtError> for CliError {
    fn from(e: GbtError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<mogcsl::oracle::OracleError> for CliError {
    fn from(e: mogcsl::oracle::OracleError) -> Self {
        match e {
            mogcsl::oracle::OracleError::Env(env) => env.into(),
            other => CliError::Usage(other.to_string()),
        }
    }
}
