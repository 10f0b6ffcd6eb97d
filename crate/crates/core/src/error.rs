//! Error types shared across the simulation engines.

use thiserror::Error;

/// Errors raised by the model, solvers and experiment drivers.
#[derive(Debug, Error)]
pub enum CoreError {
    /// Parameter validation failed; one message per violated invariant.
    #[error("invalid parameters:\n  {}", .0.join("\n  "))]
    InvalidParams(Vec<String>),

    /// Frozen-rate steady state requires `k_F + k_U > 0`.
    #[error("steady state undefined: k_F + k_U must be positive (gamma > 0)")]
    DegenerateFrozenRates,

    /// Invalid integration configuration.
    #[error("invalid integration config: {0}")]
    InvalidConfig(String),

    /// Adaptive step controller drove the step size below the resolvable limit.
    #[error("step size underflow at t = {t:.9e} (h = {h:.3e})")]
    StepSizeUnderflow { t: f64, h: f64 },

    /// A state component left the admissible region by more than `abs_tol`.
    #[error("negative state excursion at t = {t:.9e}: component {component} = {value:.6e}")]
    NegativeState {
        component: usize,
        t: f64,
        value: f64,
    },

    /// Series passed to a grid operation are not on a uniform grid.
    #[error("non-uniform grid: {0}")]
    NonUniformGrid(String),

    /// Fusion-flux peak detection found too few peaks for a paired-pulse ratio.
    #[error("fewer than two fusion-flux peaks detected (found {found})")]
    TooFewPeaks { found: usize },

    /// Ensemble statistics need at least two runs.
    #[error("ensemble statistics need at least 2 runs (got {0})")]
    NotEnoughRuns(usize),

    /// Mismatched or empty input series.
    #[error("invalid series: {0}")]
    InvalidSeries(String),
}

pub type Result<T> = std::result::Result<T, CoreError>;
