//! Simulation engines for a vesicle/release-site recovery reaction network
//! under sustained stimulation.
//!
//! The crate provides:
//! - the shared model core: parameters, time-varying rates, the reaction
//!   rate equation and its Jacobian ([`model`], [`params`]);
//! - the closed-form frozen-rate steady state and its parameter derivatives
//!   ([`steady_state`]);
//! - deterministic integration with forward sensitivities ([`ode`]);
//! - exact stochastic simulation of the reaction jump process with
//!   time-varying propensities, plus ensemble statistics ([`ssa`],
//!   [`ensemble`]);
//! - the impulse-response kernel and current synthesis ([`signal`]);
//! - scripted studies: parameter sweeps, paired-pulse calibration and the
//!   reduced comparison systems ([`experiments`]).

pub mod ensemble;
pub mod error;
pub mod experiments;
pub mod grid;
pub mod model;
pub mod ode;
pub mod params;
pub mod signal;
pub mod ssa;
pub mod steady_state;

pub use error::{CoreError, Result};
pub use grid::UniformGrid;
pub use params::ModelParams;
