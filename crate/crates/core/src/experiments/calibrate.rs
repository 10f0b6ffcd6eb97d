//! Paired-pulse calibration of the priming rate and the unpriming plateau.
//!
//! The calibration target is the ratio of the second to the first peak of
//! the fusion flux `dF/dt` under train stimulation. The target value itself
//! comes from an external reference model and is supplied by the caller; a
//! default matching the shipped parameter set is provided.

use crate::error::{CoreError, Result};
use crate::grid::UniformGrid;
use crate::ode::{integrate, IntegrationConfig};
use crate::params::ModelParams;

/// Externally sourced default paired-pulse target ratio.
///
/// This is the fusion-flux peak ratio the reference parameter set was
/// calibrated to reproduce; it is shipped as a convenience default and is
/// not computed by this crate.
pub const DEFAULT_PAIRED_PULSE_TARGET: f64 = 0.3097;

/// Default peak prominence: a window's maximum counts as a peak only if it
/// exceeds the window baseline by this fraction of the maximum.
pub const DEFAULT_PEAK_PROMINENCE: f64 = 0.05;

/// A detected local maximum of the fusion flux.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluxPeak {
    pub index: usize,
    pub time: f64,
    pub value: f64,
}

/// Locate flux peaks by local-maximum search within one window per stimulus.
///
/// Each window is centered on a stimulus time with half the inter-stimulus
/// spacing as half-width (peak times lag the stimulus centers slightly, so
/// centered windows capture them). A window contributes a peak only when the
/// maximum is a grid-local maximum and rises above the window baseline by
/// `prominence * max`.
pub fn detect_flux_peaks(
    grid: &UniformGrid,
    flux: &[f64],
    stim_times: &[f64],
    prominence: f64,
) -> Vec<FluxPeak> {
    let mut peaks = Vec::new();
    if stim_times.is_empty() || flux.len() < 3 {
        return peaks;
    }
    let spacing = if stim_times.len() >= 2 {
        stim_times[1] - stim_times[0]
    } else {
        2.0 * (grid.time(grid.n - 1) - stim_times[0]).abs().max(grid.dt)
    };
    let half = spacing / 2.0;
    for &center in stim_times {
        let lo = grid.first_index_at_or_after(center - half).max(1);
        let hi = grid
            .first_index_at_or_after(center + half)
            .min(flux.len().saturating_sub(1));
        if lo >= hi {
            continue;
        }
        let mut best = lo;
        let mut baseline = flux[lo];
        for j in lo..hi {
            if flux[j] > flux[best] {
                best = j;
            }
            if flux[j] < baseline {
                baseline = flux[j];
            }
        }
        let v = flux[best];
        let local_max = flux[best - 1] <= v && v >= flux[best + 1];
        if local_max && v - baseline > prominence * v {
            peaks.push(FluxPeak {
                index: best,
                time: grid.time(best),
                value: v,
            });
        }
    }
    peaks
}

/// Reporting window that covers the first two stimuli with margin.
fn ratio_config(p: &ModelParams) -> Result<IntegrationConfig> {
    let stim = &p.kf_shape.stim_times;
    if stim.len() < 2 {
        return Err(CoreError::TooFewPeaks { found: stim.len() });
    }
    Ok(IntegrationConfig {
        t_end: stim[1] + (stim[1] - stim[0]),
        output_dt: 1e-5,
        ..Default::default()
    })
}

/// Ratio of the second to the first fusion-flux peak, with the detected
/// peaks for inspection.
pub fn paired_pulse_ratio(p: &ModelParams) -> Result<(f64, Vec<FluxPeak>)> {
    let cfg = ratio_config(p)?;
    let traj = integrate(p, &cfg)?;
    let peaks = detect_flux_peaks(
        &traj.grid,
        &traj.flux,
        &p.kf_shape.stim_times,
        DEFAULT_PEAK_PROMINENCE,
    );
    if peaks.len() < 2 {
        return Err(CoreError::TooFewPeaks { found: peaks.len() });
    }
    Ok((peaks[1].value / peaks[0].value, peaks))
}

/// Calibration loss `L = |ratio - target|`.
pub fn paired_pulse_loss(p: &ModelParams, target_ratio: f64) -> Result<f64> {
    let (ratio, _) = paired_pulse_ratio(p)?;
    Ok((ratio - target_ratio).abs())
}

/// Options for the bounded Nelder-Mead simplex search.
#[derive(Debug, Clone, Copy)]
pub struct NelderMeadOptions {
    pub max_iters: usize,
    /// Stop when the simplex function spread falls below this.
    pub f_tol: f64,
    /// Stop when the simplex diameter falls below this (relative to scale).
    pub x_tol: f64,
    /// Relative size of the initial simplex edges.
    pub initial_step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        NelderMeadOptions {
            max_iters: 200,
            f_tol: 1e-10,
            x_tol: 1e-8,
            initial_step: 0.05,
        }
    }
}

/// Result of a calibration run.
#[derive(Debug, Clone)]
pub struct CalibrationResult {
    pub params: ModelParams,
    pub loss: f64,
    pub iterations: usize,
    /// `false` means the iteration budget ran out; the best iterate is still
    /// returned.
    pub converged: bool,
}

/// Fit `(k_R, kU_max)` to a paired-pulse target by bounded Nelder-Mead.
///
/// Bounds are enforced by clamping every simplex candidate into the box
/// before evaluation, so a start on the boundary stays feasible throughout.
pub fn calibrate(
    p0: &ModelParams,
    target_ratio: f64,
    k_r_bounds: (f64, f64),
    ku_max_bounds: (f64, f64),
    opts: NelderMeadOptions,
) -> Result<CalibrationResult> {
    p0.validate()?;
    // fail fast if the starting point cannot produce a ratio at all
    paired_pulse_ratio(p0)?;
    let objective = |x: &[f64]| -> f64 {
        let mut p = p0.clone();
        p.k_r = x[0];
        p.ku_shape.ku_max = x[1];
        paired_pulse_loss(&p, target_ratio).unwrap_or(f64::INFINITY)
    };
    let x0 = [
        p0.k_r.clamp(k_r_bounds.0, k_r_bounds.1),
        p0.ku_shape.ku_max.clamp(ku_max_bounds.0, ku_max_bounds.1),
    ];
    let out = nelder_mead(objective, &x0, &[k_r_bounds, ku_max_bounds], opts);
    let mut fitted = p0.clone();
    fitted.k_r = out.x[0];
    fitted.ku_shape.ku_max = out.x[1];
    Ok(CalibrationResult {
        params: fitted,
        loss: out.f,
        iterations: out.iterations,
        converged: out.converged,
    })
}

pub(crate) struct NelderMeadOutcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Plain Nelder-Mead with box clamping (reflection 1, expansion 2,
/// contraction 0.5, shrink 0.5).
pub(crate) fn nelder_mead(
    mut f: impl FnMut(&[f64]) -> f64,
    x0: &[f64],
    bounds: &[(f64, f64)],
    opts: NelderMeadOptions,
) -> NelderMeadOutcome {
    let dim = x0.len();
    let clamp = |x: &mut Vec<f64>| {
        for (v, &(lo, hi)) in x.iter_mut().zip(bounds) {
            *v = v.clamp(lo, hi);
        }
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(dim + 1);
    {
        let mut x = x0.to_vec();
        clamp(&mut x);
        let fx = f(&x);
        simplex.push((x, fx));
    }
    for i in 0..dim {
        let mut x = x0.to_vec();
        let span = bounds[i].1 - bounds[i].0;
        let step = if x[i] != 0.0 {
            opts.initial_step * x[i].abs()
        } else {
            opts.initial_step * span.max(1.0)
        };
        // step inward when the start sits on the upper bound
        x[i] = if x[i] + step <= bounds[i].1 {
            x[i] + step
        } else {
            x[i] - step
        };
        clamp(&mut x);
        let fx = f(&x);
        simplex.push((x, fx));
    }

    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iters {
        iterations += 1;
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[dim].1;
        let diameter = simplex[1..]
            .iter()
            .map(|(x, _)| {
                x.iter()
                    .zip(&simplex[0].0)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0f64, f64::max)
            })
            .fold(0.0f64, f64::max);
        let scale = simplex[0]
            .0
            .iter()
            .map(|v| v.abs())
            .fold(1.0f64, f64::max);
        if (worst - best).abs() <= opts.f_tol || diameter <= opts.x_tol * scale {
            converged = true;
            break;
        }

        let centroid: Vec<f64> = (0..dim)
            .map(|i| simplex[..dim].iter().map(|(x, _)| x[i]).sum::<f64>() / dim as f64)
            .collect();
        let worst_x = simplex[dim].0.clone();
        let make_point = |coef: f64| -> Vec<f64> {
            let mut x: Vec<f64> = centroid
                .iter()
                .zip(&worst_x)
                .map(|(c, w)| c + coef * (c - w))
                .collect();
            clamp(&mut x);
            x
        };

        let xr = make_point(1.0);
        let fr = f(&xr);
        if fr < simplex[0].1 {
            let xe = make_point(2.0);
            let fe = f(&xe);
            simplex[dim] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[dim - 1].1 {
            simplex[dim] = (xr, fr);
        } else {
            let xc = make_point(-0.5);
            let fc = f(&xc);
            if fc < simplex[dim].1.min(fr) {
                simplex[dim] = (xc, fc);
            } else {
                // shrink toward the best vertex
                let best_x = simplex[0].0.clone();
                for entry in simplex.iter_mut().skip(1) {
                    let mut x: Vec<f64> = entry
                        .0
                        .iter()
                        .zip(&best_x)
                        .map(|(v, b)| b + 0.5 * (v - b))
                        .collect();
                    clamp(&mut x);
                    let fx = f(&x);
                    *entry = (x, fx);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, fx) = simplex.swap_remove(0);
    NelderMeadOutcome {
        x,
        f: fx,
        iterations,
        converged,
    }
}
