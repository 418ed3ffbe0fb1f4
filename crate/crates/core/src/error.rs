use thiserror::Error;

/// Errors raised by body construction, sampling, and limit extraction.
#[derive(Debug, Error)]
pub enum TansecError {
    #[error("boundary point is not strictly convex: smallest Hessian eigenvalue {0:.3e}")]
    NonConvexPoint(f64),
    #[error("perturbation has negative normal speed {0:.3e}")]
    NegativeSpeed(f64),
    #[error("subspace basis is not orthonormal (max defect {0:.3e})")]
    BadSubspace(f64),
    #[error("epsilon {eps:.3e} produces a sample of diameter {diameter:.3e} beyond the patch radius {patch:.3e}")]
    EpsilonTooLarge { eps: f64, diameter: f64, patch: f64 },
    #[error("functional expects dimension {expected}, sample has {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("unsupported functional combination: {0}")]
    UnsupportedCombination(String),
    #[error("limit fit residual {residual:.3e} exceeds {tolerance:.3e}; grid too coarse or wrong exponent")]
    PoorFit { residual: f64, tolerance: f64 },
    #[error("T is not a symmetry of K: radial residual {0:.3e}")]
    NotASymmetryOfK(f64),
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, TansecError>;
