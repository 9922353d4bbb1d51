use thiserror::Error;

/// Errors raised while building meshes, local operators, or solving.
#[derive(Debug, Error)]
pub enum HhoError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate geometry in cell {cell}: {reason}")]
    DegenerateGeometry { cell: usize, reason: String },

    #[error("cell {cell} is not star-shaped with respect to its barycenter")]
    NotStarShaped { cell: usize },

    #[error("polynomial degree {degree} exceeds the cap {cap}")]
    DegreeCap { degree: usize, cap: usize },

    #[error("quadrature order {order} exceeds the supported maximum {max}")]
    QuadratureOrder { order: usize, max: usize },

    #[error("singular or indefinite matrix: {0}")]
    SingularMatrix(String),

    #[error(
        "ill-conditioned mass matrix in cell {cell} (condition estimate {condition:.3e}); \
         consider enabling basis orthonormalization"
    )]
    IllConditioned { cell: usize, condition: f64 },

    #[error("boundary face {face} carries no boundary condition tag")]
    UntaggedBoundary { face: usize },

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("verification failed: {0}")]
    Verification(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, HhoError>;
