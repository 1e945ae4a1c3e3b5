use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not orthogonal: max |R^T R - I| = {defect:.3e}")]
    NotOrthogonal { defect: f64 },

    #[error("group closure exceeded {max_order} elements")]
    GroupNotFinite { max_order: usize },

    #[error("generator list is empty")]
    EmptyGenerators,

    #[error("invariant decomposition failed: residual {residual:.3e} exceeds tolerance {tol:.3e}")]
    NotInvariant { residual: f64, tol: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("convolution produced {count} atoms, cap is {cap}")]
    AtomExplosion { count: usize, cap: usize },

    #[error("fixed point is not unique: smallest singular value of I - T is {sigma_min:.3e}")]
    NonUniqueFixedPoint { sigma_min: f64 },

    #[error("{what} = {value} exceeds cap {cap}")]
    CapExceeded { what: &'static str, value: u128, cap: u128 },

    #[error("ensemble does not store endpoints")]
    EndpointsAbsent,

    #[error("unsupported sphere dimension {0} (grids exist for d = 2, 3)")]
    UnsupportedDimension(usize),

    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),

    #[error("interpolation overflow: {ratio:.3e} of field energy lies above the band limit")]
    InterpolationOverflow { ratio: f64 },

    #[error("rank deficiency at degree {degree}: found {found}, expected at least {expected}")]
    RankDeficiency { degree: usize, found: usize, expected: usize },

    #[error("degenerate quadratic form: eigenvalues in [{min_eig:.3e}, {max_eig:.3e}]")]
    DegenerateForm { min_eig: f64, max_eig: f64 },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable variant name, used by the CLI in diagnostics.
    pub fn name(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::NotOrthogonal { .. } => "NotOrthogonal",
            Error::GroupNotFinite { .. } => "GroupNotFinite",
            Error::EmptyGenerators => "EmptyGenerators",
            Error::NotInvariant { .. } => "NotInvariant",
            Error::InvalidParameter { .. } => "InvalidParameter",
            Error::InvalidMeasure(_) => "InvalidMeasure",
            Error::AtomExplosion { .. } => "AtomExplosion",
            Error::NonUniqueFixedPoint { .. } => "NonUniqueFixedPoint",
            Error::CapExceeded { .. } => "CapExceeded",
            Error::EndpointsAbsent => "EndpointsAbsent",
            Error::UnsupportedDimension(_) => "UnsupportedDimension",
            Error::GridTooCoarse(_) => "GridTooCoarse",
            Error::InterpolationOverflow { .. } => "InterpolationOverflow",
            Error::RankDeficiency { .. } => "RankDeficiency",
            Error::DegenerateForm { .. } => "DegenerateForm",
            Error::Parse { .. } => "Parse",
            Error::Io(_) => "Io",
            Error::Json(_) => "Json",
        }
    }
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
