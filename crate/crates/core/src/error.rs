use std::path::PathBuf;

/// Everything that can go wrong across the crate.
///
/// Variants are grouped by origin so callers (in particular the CLI) can
/// distinguish malformed input data from domain violations:
///
/// * input data / files: [`Error::Io`], [`Error::Ranks`], [`Error::Skeleton`],
///   [`Error::Config`]
/// * domain violations: everything else
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed rank table (non-rectangular, not a permutation, bad CSV).
    #[error("rank table: {0}")]
    Ranks(String),

    /// Malformed or inconsistent skeleton file.
    #[error("skeleton file: {0}")]
    Skeleton(String),

    /// Malformed portfolio configuration.
    #[error("portfolio config: {0}")]
    Config(String),

    /// A parameter is outside its admissible range.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("coordinate {index} is {value}, outside the unit interval")]
    OutsideUnitCube { index: usize, value: f64 },

    /// Grid size does not divide the pseudo-rank range `n * M`.
    #[error(
        "grid size {grid_size} (axis {axis}) does not divide n*M = {n}*{multiplier}; \
         smallest valid multiplier is {smallest}"
    )]
    Divisibility {
        axis: usize,
        grid_size: u64,
        n: u64,
        multiplier: u64,
        smallest: u64,
    },

    #[error("need at least {needed} samples for alpha = {alpha}, got {got}")]
    InsufficientSamples { needed: usize, got: usize, alpha: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True when the error is caused by unreadable or malformed input
    /// (files, tables, configs) rather than by an out-of-domain request.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Io { .. } | Error::Ranks(_) | Error::Skeleton(_) | Error::Config(_)
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
