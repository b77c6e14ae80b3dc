use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("rotation is at or near the Gibbs vector singularity (trace {trace:.9})")]
    NearSingularRotation { trace: f64 },

    #[error(
        "matrix is not a proper rotation (orthogonality deviation {orthogonality:e}, det {det})"
    )]
    InvalidRotation { orthogonality: f64, det: f64 },

    #[error("point lies behind the camera (depth {depth:e})")]
    BehindCamera { depth: f64 },

    #[error("only {found} features tracked in common, at least {required} required")]
    InsufficientFeatures { found: usize, required: usize },

    #[error("perturbation batch failed to reach rank 6 after {attempts} attempts")]
    DegenerateBatch { attempts: usize },

    #[error("perturbation matrix is rank deficient (singular values {smallest:e} / {largest:e})")]
    RankDeficientBatch { smallest: f64, largest: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("damped normal equations are singular")]
    SingularNormalEquations,

    #[error("initial guess shares only {common} features with the reference, at least 4 required")]
    InitialGuessInfeasible { common: usize },

    #[error("solve degenerated: {0}")]
    Degenerate(String),

    #[error("target model is degenerate: {0}")]
    DegenerateModel(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
