use thiserror::Error;

/// Errors produced by the distribution, sampling and fitting routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum CmmError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("sample space of size {size} for m={m}, k={k} exceeds the limit {limit}")]
    SpaceTooLarge { m: u32, k: usize, size: u128, limit: u64 },

    #[error("sample space size overflows for m={m}, k={k}")]
    SpaceOverflow { m: u32, k: usize },

    #[error("data error at row {row}, column {column}: {message}")]
    Data { row: usize, column: String, message: String },

    #[error("data error: {0}")]
    DataFormat(String),

    #[error("non-finite rate in cell {cell} at z={z:?}")]
    NonFiniteRate { cell: usize, z: Vec<u32> },

    #[error("singular information matrix: {0}")]
    SingularInformation(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("io error: {0}")]
    Io(String),
}

impl CmmError {
    /// Coarse category used by the command-line tool to pick an exit code.
    pub fn kind(&self) -> ErrorKind {
        match self {
            CmmError::InvalidArgument(_) | CmmError::DimensionMismatch(_) => ErrorKind::Usage,
            CmmError::Data { .. } | CmmError::DataFormat(_) | CmmError::Io(_) => ErrorKind::Data,
            CmmError::SpaceTooLarge { .. }
            | CmmError::SpaceOverflow { .. }
            | CmmError::NonFiniteRate { .. }
            | CmmError::SingularInformation(_)
            | CmmError::Numerical(_) => ErrorKind::Numerical,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Numerical,
}

impl From<std::io::Error> for CmmError {
    fn from(e: std::io::Error) -> Self {
        CmmError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CmmError>;
