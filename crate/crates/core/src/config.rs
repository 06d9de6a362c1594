//! Numerical tolerances shared across the crate.

/// Every tolerance used by validation and solver checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Minimum separation for two points to define a frame axis.
    pub degenerate_frame: f64,
    /// Orthonormality / determinant tolerance for in-memory rotations.
    pub rotation: f64,
    /// Orthonormality tolerance applied to rotations read from files.
    pub rotation_on_load: f64,
    /// Allowed asymmetry of a covariance matrix.
    pub covariance_symmetry: f64,
    /// Pinned joints must match their targets within this distance.
    pub constraint: f64,
    /// Consecutive chains must share endpoints within this distance.
    pub chain_gap: f64,
    /// Sequential-plan attractors must meet the next segment start within this distance.
    pub segment_junction: f64,
    /// Relative slack on EM log-likelihood monotonicity.
    pub em_monotonicity: f64,
}

pub const TOLERANCES: Tolerances = Tolerances {
    degenerate_frame: 1e-9,
    rotation: 1e-9,
    rotation_on_load: 1e-6,
    covariance_symmetry: 1e-9,
    constraint: 1e-9,
    chain_gap: 1e-6,
    segment_junction: 1e-6,
    em_monotonicity: 1e-8,
};

impl Default for Tolerances {
    fn default() -> Self {
        TOLERANCES
    }
}
