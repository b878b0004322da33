//! Command implementations behind the `fracvar` binary.
//!
//! Every command reads a [`RunConfig`], writes JSON (and CSV unless disabled)
//! into the output directory, and reports failures as a [`CliError`] whose
//! [`CliError::exit_code`] is the process status.

pub mod commands;
pub mod config;
pub mod io;

use std::path::PathBuf;

pub use config::{Overrides, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("bad input {}: {reason}", path.display())]
    Input { path: PathBuf, reason: String },

    #[error("verification failed: {}", failed.join(", "))]
    Verification { failed: Vec<String> },

    #[error("solver did not converge: {0}")]
    NonConvergence(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("i/o: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } | CliError::Input { .. } => 2,
            CliError::Verification { .. } => 3,
            CliError::NonConvergence(_) => 4,
            CliError::Numerical(_) | CliError::Io(_) => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config { .. } => "config-validation",
            CliError::Input { .. } => "input-validation",
            CliError::Verification { .. } => "verification-failure",
            CliError::NonConvergence(_) => "non-convergence",
            CliError::Numerical(_) => "numerical-failure",
            CliError::Io(_) => "io",
        }
    }

    /// Machine-readable form written to `error.json` and stderr.
    pub fn to_json(&self) -> serde_json::Value {
        let mut err = serde_json::json!({
            "kind": self.kind(),
            "message": self.to_string(),
            "exit_code": self.exit_code(),
        });
        match self {
            CliError::Config { field, .. } => err["field"] = field.clone().into(),
            CliError::Input { path, .. } => err["path"] = path.display().to_string().into(),
            CliError::Verification { failed } => err["failed"] = failed.clone().into(),
            _ => {}
        }
        serde_json::json!({ "error": err })
    }
}

impl From<fracvar::Error> for CliError {
    fn from(e: fracvar::Error) -> Self {
        use fracvar::Error as E;
        match e {
            E::InvalidParameter { name, reason } => CliError::Config {
                field: name.to_string(),
                reason,
            },
            E::NonConvergence { .. } => CliError::NonConvergence(e.to_string()),
            E::WeightNotPositive | E::EmptyAdmissibleSet => CliError::Config {
                field: "problem".into(),
                reason: e.to_string(),
            },
            E::GridMismatch { .. } | E::CoincidentNodes(..) => CliError::Config {
                field: "grid".into(),
                reason: e.to_string(),
            },
            E::Undefined(_) | E::NoAdmissibleSamples(_) | E::Quadrature(_) => CliError::Numerical(e.to_string()),
        }
    }
}
