use thiserror::Error;

/// Errors raised by mesh construction, discretization and the solvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported degree {degree} for {family}")]
    UnsupportedDegree { family: &'static str, degree: usize },

    #[error("element cell type does not match the mesh")]
    CellTypeMismatch,

    #[error("space does not fit the form: {0}")]
    FormMismatch(String),

    #[error("singular matrix: pivot {pivot:e} in column {column}")]
    SingularMatrix { column: usize, pivot: f64 },

    #[error("singular local matrix on the patch seeded at point {seed}")]
    SingularPatch { seed: usize },

    #[error("meshes are not nested: {0}")]
    NotNested(String),

    #[error("invalid spectral bounds ({lo}, {hi}): need 0 < lo <= hi")]
    InvalidBounds { lo: f64, hi: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
