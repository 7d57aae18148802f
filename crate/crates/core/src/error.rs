use thiserror::Error;

use crate::lattice::Point;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("unsupported dimension {0} (need 3..=8)")]
    InvalidDimension(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty set")]
    EmptySet,

    #[error("truncation radius {truncation} too small (need more than {required})")]
    TruncationTooSmall { truncation: u64, required: u64 },

    #[error("number of Monte Carlo samples must be positive")]
    ZeroSamples,

    #[error("rejection budget exhausted after {attempts} attempts at entry point {entry:?}")]
    RejectionBudget { entry: Point, attempts: u64 },

    #[error("leg length {leg} shorter than {required} needed to leave the observation region")]
    LegTooShort { leg: usize, required: usize },

    #[error("label band ({lo}, {hi}] not inside (0, {u}]")]
    InvalidBand { lo: f64, hi: f64, u: f64 },

    #[error("invalid radii r={r}, R={big_r}")]
    InvalidRadii { r: f64, big_r: f64 },

    #[error("walk did not exit within {steps} steps")]
    NoExit { steps: usize },

    #[error("search budget of {budget} expansions exhausted at subset size {size}")]
    SearchBudget { budget: u64, size: usize },

    #[error("size guard exceeded: {what} is {value}, limit {limit}")]
    Guard { what: &'static str, value: u64, limit: u64 },

    #[error("input is not strictly connected: {0}")]
    NotStrictlyConnected(String),

    #[error("ill-formed tree: {0}")]
    IllFormedTree(String),

    #[error("reduction step rejected: {0}")]
    Reduction(String),

    #[error("memory guard: {cells} cells exceed the limit {limit}; use a smaller truncation")]
    Memory { cells: u64, limit: u64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("config error at {field}: {message}")]
    Config { field: String, message: String },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable snake_case name of the variant, for machine-readable reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::InvalidDimension(_) => "invalid_dimension",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::EmptySet => "empty_set",
            Error::TruncationTooSmall { .. } => "truncation_too_small",
            Error::ZeroSamples => "zero_samples",
            Error::RejectionBudget { .. } => "rejection_budget",
            Error::LegTooShort { .. } => "leg_too_short",
            Error::InvalidBand { .. } => "invalid_band",
            Error::InvalidRadii { .. } => "invalid_radii",
            Error::NoExit { .. } => "no_exit",
            Error::SearchBudget { .. } => "search_budget",
            Error::Guard { .. } => "guard",
            Error::NotStrictlyConnected(_) => "not_strictly_connected",
            Error::IllFormedTree(_) => "ill_formed_tree",
            Error::Reduction(_) => "reduction",
            Error::Memory { .. } => "memory",
            Error::Numerical(_) => "numerical",
            Error::Config { .. } => "config",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
