use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("SVD did not converge for a {rows}x{cols} matrix")]
    SvdNoConvergence { rows: usize, cols: usize },

    #[error("eigendecomposition did not converge for a {0}x{0} matrix")]
    EigNoConvergence(usize),

    #[error("matrix is not Hermitian (max |M - M^H| = {0:e})")]
    NotHermitian(f64),

    #[error("requested {requested} eigenpairs from an operator of dimension {dim}")]
    TooManyEigenpairs { requested: usize, dim: usize },

    #[error("Lanczos did not converge for eigenpair {index} (residual {residual:e} after {restarts} restarts)")]
    LanczosNoConvergence { index: usize, residual: f64, restarts: usize },

    #[error("Krylov breakdown: {0}")]
    KrylovBreakdown(String),

    #[error("Krylov tolerance {tol:e} not reached within {substeps} substeps")]
    KrylovTolerance { tol: f64, substeps: usize },

    #[error("invalid Hamiltonian: {0}")]
    InvalidHamiltonian(String),

    #[error("{sites} sites exceed the state-vector limit of {limit}")]
    TooManySites { sites: usize, limit: usize },

    #[error("state has zero norm")]
    ZeroNorm,

    #[error("site tensor is not an isometry (residual {0:e})")]
    NotIsometric(f64),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("index out of range: {0}")]
    OutOfRange(String),

    #[error("fit failed: {0}")]
    FitFailure(String),

    #[error("fit window contains no data: {0}")]
    EmptyWindow(String),

    #[error("singular Jacobian in fit: {0}")]
    SingularJacobian(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("schedule rejected: {0}")]
    Schedule(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config { path: path.into(), message: message.into() }
    }
}
