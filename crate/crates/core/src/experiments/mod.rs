//! Scripted studies built on the engines: recovery-rate parameter sweeps,
//! paired-pulse calibration of the priming/unpriming rates, and the two
//! reduced binding systems used to isolate the effect of independent
//! recovery on the stochastic mean.

pub mod calibrate;
pub mod reduced;
pub mod sweep;

pub use calibrate::{
    calibrate, detect_flux_peaks, paired_pulse_loss, paired_pulse_ratio, CalibrationResult,
    FluxPeak, NelderMeadOptions, DEFAULT_PAIRED_PULSE_TARGET, DEFAULT_PEAK_PROMINENCE,
};
pub use reduced::{
    fig9_reduced_params, reduced_ode, reduced_ssa_correlation, ReducedComparison, ReducedParams,
    ReducedTrajectory,
};
pub use sweep::{
    default_factors, first_response_time, run_sweep, scaled_params, SweepLeg, SweepParam,
    SweepSpec,
};
