use thiserror::Error;

/// Final state of a Newton-type iteration that did not converge.
#[derive(Debug, Clone, PartialEq)]
pub struct DivergenceReport {
    pub iterations: usize,
    pub residual_norm: f64,
    pub iterate: Vec<f64>,
    /// Residual (or |g|) history, one entry per iteration.
    pub history: Vec<f64>,
    pub reason: String,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfiguration(String),
    #[error("evaluation failure: {0}")]
    EvaluationFailure(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("singular matrix (pivot step {pivot}, magnitude {magnitude:e})")]
    SingularMatrix { pivot: usize, magnitude: f64 },
    #[error("singular Schur complement in bordered solve")]
    BorderedSingular,
    #[error("singular jacobian during Newton iteration")]
    SingularJacobian { iterate: Vec<f64> },
    #[error("diverged after {} iterations ({}), residual {:e}", .0.iterations, .0.reason, .0.residual_norm)]
    Divergence(DivergenceReport),
    #[error("iterate coincides with a deflated solution")]
    DeflationSingular,
    #[error("tangent undefined: jacobian is singular")]
    TangentAtSingularity,
    #[error("corrector failed to converge")]
    CorrectorFailure { trace: Vec<f64> },
    #[error("shift lies on an eigenvalue")]
    SingularShift,
    #[error("eigensolver did not converge ({converged} of {requested} pairs)")]
    EigenNotConverged { converged: usize, requested: usize },
    #[error("degenerate bordering: 1/g vanished, re-seed the bordering vectors")]
    DegenerateBordering,
    #[error("frequency collapsed to {omega:e} during Hopf location; fold or Bogdanov-Takens nearby")]
    ReclassifyCandidate { omega: f64 },
    #[error("resonant operator in normal form reduction")]
    Resonance,
    #[error("no small-amplitude solution on this side of the bifurcation")]
    NoOrbit,
    #[error("unsupported problem: {0}")]
    Unsupported(String),
    #[error("degenerate phase reference (zero harmonics)")]
    DegeneratePhase,
    #[error("harmonic balance collapsed to a steady state")]
    CollapsedToSteady,
}

pub type Result<T> = std::result::Result<T, Error>;
