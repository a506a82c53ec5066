use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("invalid recipe: {0}")]
    InvalidRecipe(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("io error: {0}")]
    Io(String),

    #[error("sampled graph is disconnected after {attempts} attempts")]
    Disconnected { attempts: usize },

    #[error("matrix is not positive definite (most negative eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("matrix is rank deficient (smallest/largest singular value {ratio:e})")]
    RankDeficient { ratio: f64 },

    #[error("degenerate eigenfrequency spacing {spacing:e} at index {index}")]
    DegenerateSpacing { index: usize, spacing: f64 },

    #[error("grid step {step:e} cannot resolve peaks of width {width:e}")]
    GridTooCoarse { step: f64, width: f64 },

    #[error("only {found} of {expected} eigenfrequencies detected")]
    InsufficientEigenfrequencies { found: usize, expected: usize },

    #[error("no occupation contrast: probe starts at the thermal fixed point")]
    DegenerateContrast,

    #[error("occupation contrast changed sign during the interaction")]
    SignFlip,
}

impl Error {
    /// True for failures of the numerics (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotPositiveDefinite { .. }
                | Error::RankDeficient { .. }
                | Error::DegenerateSpacing { .. }
                | Error::GridTooCoarse { .. }
                | Error::InsufficientEigenfrequencies { .. }
                | Error::DegenerateContrast
                | Error::SignFlip
                | Error::Disconnected { .. }
        )
    }

    /// Short machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidNetwork(_) => "invalid_network",
            Error::InvalidRecipe(_) => "invalid_recipe",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::Dimension(_) => "dimension_mismatch",
            Error::Schema(_) => "schema",
            Error::Io(_) => "io",
            Error::Disconnected { .. } => "disconnected",
            Error::NotPositiveDefinite { .. } => "not_positive_definite",
            Error::RankDeficient { .. } => "rank_deficient",
            Error::DegenerateSpacing { .. } => "degenerate_spacing",
            Error::GridTooCoarse { .. } => "grid_too_coarse",
            Error::InsufficientEigenfrequencies { .. } => "insufficient_eigenfrequencies",
            Error::DegenerateContrast => "degenerate_contrast",
            Error::SignFlip => "sign_flip",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
