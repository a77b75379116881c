//! Library backing the `ristep` binary: configuration, file formats, gates
//! and the four subcommands. Everything here is deterministic — identical
//! configurations produce byte-identical CSV artifacts.

pub mod commands;
pub mod config;
pub mod gates;
pub mod io;
pub mod svg;

use thiserror::Error;

/// Process exit codes: 2 configuration/usage, 3 verification gates failed,
/// 4 input parsing or I/O, 5 solver failure.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },
    #[error("verification gates failed ({failed} of {total})")]
    GatesFailed { failed: usize, total: usize },
    #[error("solver error: {0}")]
    Solver(#[from] ristep::SchemeError),
    #[error("model evaluation error: {0}")]
    Model(#[from] ristep::ModelError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => 2,
            CliError::GatesFailed { .. } => 3,
            CliError::Io { .. } | CliError::Parse { .. } => 4,
            CliError::Solver(_) | CliError::Model(_) => 5,
        }
    }

    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// Builds a model from its identifier: `one_d` or `fem2d_n<NODES_PER_SIDE>`.
pub fn model_from_id(id: &str) -> Result<Box<dyn ristep::EnergyModel>, CliError> {
    if id == "one_d" {
        return Ok(Box::new(ristep::make_model_1d()));
    }
    if let Some(rest) = id.strip_prefix("fem2d_n") {
        let n: usize = rest
            .parse()
            .map_err(|_| CliError::Usage(format!("bad mesh size in model id `{id}`")))?;
        let mesh = ristep::build_mesh(n)
            .map_err(|e| CliError::Config(format!("cannot build mesh for `{id}`: {e}")))?;
        return Ok(Box::new(ristep::make_model_fem(&mesh)));
    }
    Err(CliError::Usage(format!(
        "unknown model id `{id}` (expected `one_d` or `fem2d_n<N>`)"
    )))
}
