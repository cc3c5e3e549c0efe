use std::path::PathBuf;

/// Errors produced by the simulation and analysis pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument lies outside the physical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration value failed validation.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Malformed command input (grids, drive specs, overrides).
    #[error("invalid input: {0}")]
    Input(String),

    /// Too few points, or too little signal, for the requested estimate.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// A numerical error attached to the control value where it happened.
    #[error("at control {control}: {source}")]
    AtControl {
        control: f64,
        #[source]
        source: Box<Error>,
    },

    /// The drive-product search failed to settle; carries the best estimate seen.
    #[error("fit did not converge: {message} (best cP = {best_cp} MHz^3, residual rms = {residual_rms} MHz)")]
    FitNotConverged {
        message: String,
        best_cp: f64,
        residual_rms: f64,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A file was readable but did not match the expected layout.
    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    /// True for failures of the numerics rather than of inputs or files.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Domain(_) | Error::InsufficientData(_) | Error::FitNotConverged { .. } => true,
            Error::AtControl { source, .. } => source.is_numerical(),
            _ => false,
        }
    }

    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. } | Error::Format { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
