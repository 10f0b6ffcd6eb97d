//! Impulse-response kernel and convolution machinery.
//!
//! Fusion activity maps to the postsynaptic current by convolution with a
//! stereotyped single-event response
//! `g(t) = A (1 - e^{-(t-t0)/tau_r}) (B e^{-(t-t0)/tau_df} + (1-B) e^{-(t-t0)/tau_ds})`
//! for `t > t0` and zero before. The deterministic engine convolves the grid
//! flux `dF/dt` with `g`; the stochastic engine superposes one kernel copy per
//! fusion event, which is exact (no quadrature).

use crate::error::{CoreError, Result};
use crate::grid::UniformGrid;
use crate::params::ModelParams;
use crate::steady_state::{averaged_rates, steady_state_closed_form};
use serde::{Deserialize, Serialize};

/// Relative cutoff below the kernel peak at which the tail is truncated.
pub const KERNEL_TRUNCATION_REL: f64 = 1e-8;

/// Postsynaptic impulse response parameters (current units are those of `A`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImpulseKernel {
    /// Onset delay, s.
    pub t0: f64,
    /// Amplitude scale, current units.
    #[serde(rename = "A")]
    pub amplitude: f64,
    /// Fraction of the fast decay component, dimensionless.
    #[serde(rename = "B")]
    pub fast_fraction: f64,
    /// Rise time constant, s.
    pub tau_r: f64,
    /// Fast decay time constant, s.
    pub tau_df: f64,
    /// Slow decay time constant, s.
    pub tau_ds: f64,
}

impl ImpulseKernel {
    /// Reference kernel.
    pub fn paper_default() -> Self {
        ImpulseKernel {
            t0: 3e-3,
            amplitude: 7.21,
            fast_fraction: 2.7e-9,
            tau_r: 10.6928,
            tau_df: 1.5e-3,
            tau_ds: 2.8e-3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if !(self.t0 >= 0.0) || !self.t0.is_finite() {
            bad.push(format!("impulse_kernel.t0 must be nonnegative (got {})", self.t0));
        }
        if !self.amplitude.is_finite() {
            bad.push("impulse_kernel.A must be finite".into());
        }
        if !(0.0..=1.0).contains(&self.fast_fraction) {
            bad.push(format!(
                "impulse_kernel.B must lie in [0, 1] (got {})",
                self.fast_fraction
            ));
        }
        for (v, name) in [
            (self.tau_r, "tau_r"),
            (self.tau_df, "tau_df"),
            (self.tau_ds, "tau_ds"),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                bad.push(format!("impulse_kernel.{name} must be positive (got {v})"));
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(CoreError::InvalidParams(bad))
        }
    }

    /// Kernel value at time `t` (zero for `t <= t0`).
    pub fn eval(&self, t: f64) -> f64 {
        let s = t - self.t0;
        if s <= 0.0 {
            return 0.0;
        }
        let rise = 1.0 - (-s / self.tau_r).exp();
        let decay = self.fast_fraction * (-s / self.tau_df).exp()
            + (1.0 - self.fast_fraction) * (-s / self.tau_ds).exp();
        self.amplitude * rise * decay
    }

    /// Closed-form integral over the whole support:
    /// `A [B tau_df^2/(tau_df+tau_r) + (1-B) tau_ds^2/(tau_ds+tau_r)]`.
    pub fn integral(&self) -> f64 {
        let fast = self.tau_df * self.tau_df / (self.tau_df + self.tau_r);
        let slow = self.tau_ds * self.tau_ds / (self.tau_ds + self.tau_r);
        self.amplitude * (self.fast_fraction * fast + (1.0 - self.fast_fraction) * slow)
    }

    /// Time (relative to the event) past which `|g| < rel_cutoff * max|g|`.
    ///
    /// Scanned numerically: the slow rise (`tau_r` may be large) makes a fixed
    /// multiple of the decay constants unreliable, so we walk the tail until
    /// the cutoff holds.
    pub fn truncation_horizon(&self, rel_cutoff: f64) -> f64 {
        let step = self.tau_ds.max(self.tau_df) / 50.0;
        let mut peak: f64 = 0.0;
        let mut s = self.t0;
        let cap = self.t0 + 1e4 * self.tau_ds.max(self.tau_df);
        loop {
            s += step;
            let v = self.eval(s).abs();
            if v > peak {
                peak = v;
            } else if peak > 0.0 && v < rel_cutoff * peak {
                return s;
            }
            if s > cap {
                return s;
            }
        }
    }
}

/// Shared direct-summation convolution over the truncated kernel support.
///
/// `out[j] = dt * sum_l ker(l dt) * series[j - l]` with `series` taken as zero
/// before the grid start. With the kernel vanishing at both support ends this
/// equals the trapezoid quadrature of the convolution integral. Causality is
/// structural: `out[j]` only reads `series[i]` with `i <= j`.
fn convolve_impl(series: &[f64], kernel: &ImpulseKernel, grid_dt: f64) -> Result<Vec<f64>> {
    if !(grid_dt > 0.0) || !grid_dt.is_finite() {
        return Err(CoreError::NonUniformGrid(format!(
            "grid_dt must be positive (got {grid_dt})"
        )));
    }
    let horizon = kernel.truncation_horizon(KERNEL_TRUNCATION_REL);
    let taps = (horizon / grid_dt).ceil() as usize + 1;
    let weights: Vec<f64> = (0..taps).map(|l| kernel.eval(l as f64 * grid_dt)).collect();
    let mut out = vec![0.0; series.len()];
    for (j, slot) in out.iter_mut().enumerate() {
        let lmax = taps.min(j + 1);
        let mut acc = 0.0;
        for l in 0..lmax {
            acc += weights[l] * series[j - l];
        }
        *slot = acc * grid_dt;
    }
    Ok(out)
}

/// Postsynaptic current from the deterministic fusion flux `dF/dt` on a
/// uniform grid.
pub fn convolve_flux(flux: &[f64], kernel: &ImpulseKernel, grid_dt: f64) -> Result<Vec<f64>> {
    convolve_impl(flux, kernel, grid_dt)
}

/// Current-sensitivity from the flux-sensitivity series (same operator as
/// [`convolve_flux`]; the input may be signed).
pub fn convolve_sensitivity(
    z_flux: &[f64],
    kernel: &ImpulseKernel,
    grid_dt: f64,
) -> Result<Vec<f64>> {
    convolve_impl(z_flux, kernel, grid_dt)
}

/// Stochastic output current: exact superposition of one kernel copy per
/// fusion event, evaluated on the grid.
pub fn current_from_events(
    fusion_times: &[f64],
    kernel: &ImpulseKernel,
    grid: &UniformGrid,
) -> Vec<f64> {
    let mut out = vec![0.0; grid.n];
    let horizon = kernel.truncation_horizon(KERNEL_TRUNCATION_REL);
    for &event in fusion_times {
        let j0 = grid.first_index_at_or_after(event + kernel.t0);
        let j1 = grid.first_index_at_or_after(event + horizon).min(grid.n);
        for (j, slot) in out.iter_mut().enumerate().take(j1).skip(j0) {
            *slot += kernel.eval(grid.time(j) - event);
        }
    }
    out
}

/// Asymptotic fixed-point current `C0 = kbar_F * R0 * integral(g)` around
/// which the periodically forced current oscillates.
pub fn fixed_point_current(p: &ModelParams, t0: f64, period: f64) -> Result<f64> {
    let fr = averaged_rates(p, t0, period);
    let x0 = steady_state_closed_form(&fr)?;
    Ok(fr.k_f * x0.r * p.impulse_kernel.integral())
}
