use alloc::string::String;

/// Errors raised by the core solver.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid cell: {0}")]
    InvalidCell(String),
    #[error("stencil {stencil} needs a {expected}D cell, got {found}D")]
    DimensionMismatch {
        stencil: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("shape mismatch in {what}: expected {expected}, found {found}")]
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("invalid material: {0}")]
    InvalidMaterial(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("matrix is not symmetric positive definite: {0}")]
    NotPositiveDefinite(&'static str),
    #[error("frequency block {index} is numerically singular")]
    SingularBlock { index: usize },
    #[error("zero-frequency block does not annihilate the translation modes (residual {residual:e})")]
    KernelMismatch { residual: f64 },
    #[error("frequency blocks must be inverted before they are applied")]
    BlocksNotInverted,
    #[error("operator is not positive definite: <p, Ap> = {curvature:e} at CG iteration {iteration}")]
    IndefiniteOperator { iteration: usize, curvature: f64 },
    #[error("dense assembly limited to {limit} unknowns, requested {requested}")]
    SizeGuard { limit: usize, requested: usize },
    #[error("strain-based projection requires equal quadrature weights")]
    UnequalWeights,
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = core::result::Result<T, Error>;
