use std::path::PathBuf;

/// Every failure the toolkit can report.
///
/// Variants split into two families: input validation (bad files, bad
/// parameters, rejected gains) and runtime faults raised while integrating.
/// [`Error::is_validation`] tells them apart for exit-code mapping.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("non-finite derivative at t = {time} s")]
    IntegrationFault { time: f64 },

    #[error("envelope violation: {guard} (value {value})")]
    Envelope { guard: &'static str, value: f64 },

    #[error("singular {what} (condition number {condition:e})")]
    Singular { what: &'static str, condition: f64 },

    #[error("{map} map queried outside its grid on {axis} axis at {value}")]
    MapExtrapolation {
        map: &'static str,
        axis: &'static str,
        value: f64,
    },

    #[error("thermodynamically infeasible operating point: {0}")]
    Infeasible(&'static str),

    #[error("engine balance did not converge after {iterations} iterations (residuals {residuals:?})")]
    BalanceFailure {
        iterations: usize,
        residuals: [f64; 2],
    },

    #[error("engine balance solution left the unit box: z_c = {z_c}, w_t = {w_t}")]
    BalanceEnvelope { z_c: f64, w_t: f64 },

    #[error("engine trim failed: {0}")]
    TrimFailure(String),

    #[error("linear engine model assumption violated: {0}")]
    Assumption(String),

    #[error("observer gains not Hurwitz (k_o1 = {k_o1}, k_o2 = {k_o2}, w = {w})")]
    NotHurwitz { k_o1: f64, k_o2: f64, w: f64 },

    #[error("non-finite observer input on channel {0}")]
    EstimationFault(&'static str),

    #[error("invalid configuration at `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("{source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(String),
}

impl Error {
    /// True for problems with the inputs rather than the simulation itself.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Config { .. }
                | Error::Parse { .. }
                | Error::Io { .. }
                | Error::NotHurwitz { .. }
                | Error::Csv(_)
        )
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
