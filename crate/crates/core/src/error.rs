use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("cannot build a frame from coincident points (separation {separation:e})")]
    DegenerateFrame { separation: f64 },

    #[error("timestamps must be strictly increasing (index {index})")]
    NonMonotoneTimestamps { index: usize },

    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),

    #[error("invalid pose: {0}")]
    InvalidPose(String),

    #[error("invalid Gaussian component: {0}")]
    InvalidComponent(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("insufficient data: {have} points, need at least {need}")]
    InsufficientData { have: usize, need: usize },

    #[error("EM log-likelihood decreased from {previous} to {current} at iteration {iteration}")]
    EmDidNotImprove {
        iteration: usize,
        previous: f64,
        current: f64,
    },

    #[error("covariance is not positive definite")]
    SingularCovariance,

    #[error("constrained edit is rank deficient or inconsistent (residual {residual:e})")]
    RankDeficientSystem { residual: f64 },

    #[error("joint chain has zero length between joints {index} and {}", index + 1)]
    ZeroLengthChain { index: usize },

    #[error("joints {first} and {second} map to the same profile index {index}")]
    IndexCollision {
        first: usize,
        second: usize,
        index: usize,
    },

    #[error("policy optimization diverged: {0}")]
    OptimizationDiverged(String),

    #[error("attractor has non-finite coordinates")]
    InfeasibleAttractor,

    #[error("via-point {index} is {distance} from the demonstration (radius {radius})")]
    ViaPointNotOnDemo {
        index: usize,
        distance: f64,
        radius: f64,
    },

    #[error("via-points are out of demonstration order (via-point {index})")]
    NonMonotoneViaPoints { index: usize },

    #[error("chains {index} and {} are {gap} apart (tolerance {tolerance})", index + 1)]
    ChainGapTooLarge {
        index: usize,
        gap: f64,
        tolerance: f64,
    },

    #[error("rollout state became non-finite at step {step}")]
    NonFiniteState { step: usize },

    #[error("direction is undefined: the two samples coincide")]
    DegenerateDirection,

    #[error("descriptor is missing its {0} pose")]
    MissingPose(&'static str),
}

impl Error {
    /// Errors caused by malformed or inconsistent input rather than by a
    /// numerical failure inside an algorithm.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::NonMonotoneTimestamps { .. }
                | Error::InvalidTrajectory(_)
                | Error::InvalidPose(_)
                | Error::InvalidComponent(_)
                | Error::InvalidConfig(_)
                | Error::DimensionMismatch { .. }
                | Error::InsufficientData { .. }
                | Error::ViaPointNotOnDemo { .. }
                | Error::NonMonotoneViaPoints { .. }
                | Error::ChainGapTooLarge { .. }
                | Error::InfeasibleAttractor
                | Error::MissingPose(_)
                | Error::IndexCollision { .. }
        )
    }
}
