//! Adaptive integration of the extended reaction rate equation and the
//! coupled forward-sensitivity system.
//!
//! The solver is an explicit Dormand-Prince 5(4) pair with PI step control
//! and cubic Hermite dense output onto a uniform reporting grid. The fusion
//! rate carries Gaussian peaks of width `sigma ~ 1 ms`, so while stimulation
//! is active the step size is capped at `sigma / 4` and the controller is
//! restarted at every stimulus time; a spike can therefore never be stepped
//! over regardless of controller history.
//!
//! Sensitivities with respect to the two recovery rates are integrated
//! jointly with the state as one 18-dimensional system (6 state + 2 x 6
//! sensitivity equations `Z' = dh/dg + J Z`), so state and sensitivities see
//! identical step sequences.

use crate::error::{CoreError, Result};
use crate::grid::UniformGrid;
use crate::model::{self, extended_rhs, idx, jacobian, StateVec, EXT_DIM};
use crate::params::ModelParams;
use crate::signal::{convolve_flux, convolve_sensitivity, ImpulseKernel};
use crate::steady_state::{steady_state_closed_form, steady_state_derivatives, FrozenRates};

/// Below this current magnitude the normalized sensitivity is reported as
/// undefined instead of being divided out.
pub const C_MIN: f64 = 1e-12;

/// Integration settings for the reporting grid and the error controller.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrationConfig {
    /// End of the integration window. Runs always start at `t = 0`.
    pub t_end: f64,
    /// Uniform reporting interval.
    pub output_dt: f64,
    /// Relative error tolerance per step.
    pub rel_tol: f64,
    /// Absolute error tolerance per step.
    pub abs_tol: f64,
    /// Step-size ceiling outside stimulation windows.
    pub max_step: f64,
}

impl Default for IntegrationConfig {
    fn default() -> Self {
        IntegrationConfig {
            t_end: 1.0,
            output_dt: 1e-4,
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            max_step: 1e-2,
        }
    }
}

impl IntegrationConfig {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if !(self.t_end > 0.0) || !self.t_end.is_finite() {
            bad.push(format!("t_end must be positive (got {})", self.t_end));
        }
        if !(self.output_dt > 0.0) || !self.output_dt.is_finite() {
            bad.push(format!("output_dt must be positive (got {})", self.output_dt));
        }
        if !(self.rel_tol > 0.0) || !(self.abs_tol > 0.0) {
            bad.push(format!(
                "tolerances must be positive (rel_tol {}, abs_tol {})",
                self.rel_tol, self.abs_tol
            ));
        }
        if !(self.max_step > 0.0) || self.output_dt > self.max_step {
            bad.push(format!(
                "need 0 < output_dt <= max_step (output_dt {}, max_step {})",
                self.output_dt, self.max_step
            ));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(CoreError::InvalidConfig(bad.join("; ")))
        }
    }

    pub fn grid(&self) -> Result<UniformGrid> {
        UniformGrid::from_range(0.0, self.t_end, self.output_dt)
    }
}

/// Dense-grid trajectory of the extended state.
#[derive(Debug, Clone)]
pub struct OdeTrajectory {
    pub grid: UniformGrid,
    /// Extended state `(V, W_V, W_P, R, P, F)` at each grid time.
    pub states: Vec<[f64; EXT_DIM]>,
    /// Fusion flux `dF/dt = k_F(t) R(t)` at each grid time.
    pub flux: Vec<f64>,
}

impl OdeTrajectory {
    /// Postsynaptic current on the trajectory grid.
    pub fn current(&self, kernel: &ImpulseKernel) -> Result<Vec<f64>> {
        convolve_flux(&self.flux, kernel, self.grid.dt)
    }
}

/// Raw sensitivities of the extended state at one grid time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensitivityPair {
    pub z_gv: [f64; EXT_DIM],
    pub z_gp: [f64; EXT_DIM],
}

/// Trajectory with attached forward sensitivities.
#[derive(Debug, Clone)]
pub struct SensitivityTrajectory {
    pub grid: UniformGrid,
    pub states: Vec<[f64; EXT_DIM]>,
    pub flux: Vec<f64>,
    pub sensitivities: Vec<SensitivityPair>,
    /// Flux sensitivities `Z_{dF/dt} = k_F(t) Z_R(t)` per recovery rate.
    pub z_flux_gv: Vec<f64>,
    pub z_flux_gp: Vec<f64>,
}

/// Normalized current sensitivities and the per-time dominance labels.
#[derive(Debug, Clone)]
pub struct NormalizedSensitivities {
    pub z_gv: Vec<Option<f64>>,
    pub z_gp: Vec<Option<f64>>,
    pub dominance: Vec<Dominance>,
}

impl SensitivityTrajectory {
    pub fn current(&self, kernel: &ImpulseKernel) -> Result<Vec<f64>> {
        convolve_flux(&self.flux, kernel, self.grid.dt)
    }

    /// Current sensitivities `Z_C = Z_{dF/dt} * g` for both recovery rates.
    pub fn current_sensitivities(&self, kernel: &ImpulseKernel) -> Result<(Vec<f64>, Vec<f64>)> {
        Ok((
            convolve_sensitivity(&self.z_flux_gv, kernel, self.grid.dt)?,
            convolve_sensitivity(&self.z_flux_gp, kernel, self.grid.dt)?,
        ))
    }

    /// Normalized sensitivities `z = Z_C g / C` with dominance labels.
    pub fn normalized(&self, p: &ModelParams) -> Result<NormalizedSensitivities> {
        let kernel = &p.impulse_kernel;
        let c = self.current(kernel)?;
        let (zc_gv, zc_gp) = self.current_sensitivities(kernel)?;
        let z_gv: Vec<Option<f64>> = zc_gv
            .iter()
            .zip(&c)
            .map(|(&z, &cv)| normalize_sensitivity(z, p.g_v, cv))
            .collect();
        let z_gp: Vec<Option<f64>> = zc_gp
            .iter()
            .zip(&c)
            .map(|(&z, &cv)| normalize_sensitivity(z, p.g_p, cv))
            .collect();
        let dominance = dominance_series(&z_gv, &z_gp);
        Ok(NormalizedSensitivities { z_gv, z_gp, dominance })
    }
}

/// Scale-free sensitivity `z = Z g / C`; `None` when the current is below
/// [`C_MIN`] and the ratio is not meaningful.
pub fn normalize_sensitivity(z_c: f64, g: f64, c: f64) -> Option<f64> {
    if c.abs() < C_MIN {
        None
    } else {
        Some(z_c * g / c)
    }
}

/// Which recovery process limits the output at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dominance {
    /// `|z^{g_P}| > |z^{g_V}|`: release-site recovery limits the response.
    SiteLimited,
    /// `|z^{g_V}| > |z^{g_P}|`: vesicle recovery limits the response.
    VesicleLimited,
    /// Tie, or either sensitivity undefined.
    Undefined,
}

impl Dominance {
    pub fn as_str(self) -> &'static str {
        match self {
            Dominance::SiteLimited => "SITE_LIMITED",
            Dominance::VesicleLimited => "VESICLE_LIMITED",
            Dominance::Undefined => "UNDEFINED",
        }
    }
}

impl std::fmt::Display for Dominance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Pointwise comparison of the normalized sensitivities' absolute values.
pub fn dominance_series(z_gv: &[Option<f64>], z_gp: &[Option<f64>]) -> Vec<Dominance> {
    z_gv.iter()
        .zip(z_gp)
        .map(|(v, p)| match (v, p) {
            (Some(v), Some(p)) => {
                if p.abs() > v.abs() {
                    Dominance::SiteLimited
                } else if v.abs() > p.abs() {
                    Dominance::VesicleLimited
                } else {
                    Dominance::Undefined
                }
            }
            _ => Dominance::Undefined,
        })
        .collect()
}

/// Extended initial state: steady state of the rates frozen at `t = 0`, with
/// `F(0) = 0`.
pub fn initial_extended_state(p: &ModelParams) -> Result<[f64; EXT_DIM]> {
    Ok(steady_state_closed_form(&FrozenRates::at_time(p, 0.0))?.extend(0.0))
}

/// Initial sensitivities: steady-state derivatives for the species and zero
/// for the fusion counter.
pub fn initial_sensitivities(p: &ModelParams) -> Result<(SensitivityPair, [f64; EXT_DIM])> {
    let x0 = initial_extended_state(p)?;
    let (d_gv, d_gp) = steady_state_derivatives(&FrozenRates::at_time(p, 0.0))?;
    Ok((
        SensitivityPair {
            z_gv: d_gv.extend(0.0),
            z_gp: d_gp.extend(0.0),
        },
        x0,
    ))
}

/// Integrate the extended RRE from the pre-stimulation steady state.
pub fn integrate(p: &ModelParams, cfg: &IntegrationConfig) -> Result<OdeTrajectory> {
    integrate_from(p, cfg, initial_extended_state(p)?)
}

/// Integrate the extended RRE from an explicit initial state.
pub fn integrate_from(
    p: &ModelParams,
    cfg: &IntegrationConfig,
    x0: [f64; EXT_DIM],
) -> Result<OdeTrajectory> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    let mut states = vec![[0.0; EXT_DIM]; grid.n];
    let mut rhs = |t: f64, y: &[f64], dy: &mut [f64]| {
        let yc = clamped_ext(y);
        dy.copy_from_slice(&extended_rhs(t, &yc, p));
    };
    let abs_tol = cfg.abs_tol;
    solve_on_grid(
        &mut rhs,
        &x0,
        &grid,
        &restart_times(p, cfg.t_end),
        &model_max_step(p, cfg),
        cfg.rel_tol,
        cfg.abs_tol,
        &mut |i, _t, y| states[i][..].copy_from_slice(&y[..EXT_DIM]),
        &|t, y| check_species_nonnegative(t, y, abs_tol),
    )?;
    let flux = flux_series(p, &grid, &states);
    Ok(OdeTrajectory { grid, states, flux })
}

/// Integrate state and sensitivities jointly from the steady-state initial
/// conditions.
pub fn integrate_with_sensitivities(
    p: &ModelParams,
    cfg: &IntegrationConfig,
) -> Result<SensitivityTrajectory> {
    let (z0, x0) = initial_sensitivities(p)?;
    integrate_with_sensitivities_from(p, cfg, x0, z0, 1.0)
}

/// Joint integration with explicit initial data.
///
/// `forcing_scale` multiplies the sensitivity forcing vectors and exists as a
/// linearity test hook; production callers pass `1.0`.
pub fn integrate_with_sensitivities_from(
    p: &ModelParams,
    cfg: &IntegrationConfig,
    x0: [f64; EXT_DIM],
    z0: SensitivityPair,
    forcing_scale: f64,
) -> Result<SensitivityTrajectory> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    let mut y0 = [0.0; 3 * EXT_DIM];
    y0[..EXT_DIM].copy_from_slice(&x0);
    y0[EXT_DIM..2 * EXT_DIM].copy_from_slice(&z0.z_gv);
    y0[2 * EXT_DIM..].copy_from_slice(&z0.z_gp);

    let mut states = vec![[0.0; EXT_DIM]; grid.n];
    let mut sens = vec![
        SensitivityPair {
            z_gv: [0.0; EXT_DIM],
            z_gp: [0.0; EXT_DIM],
        };
        grid.n
    ];

    let mut rhs = |t: f64, y: &[f64], dy: &mut [f64]| {
        let yc = clamped_ext(y);
        dy[..EXT_DIM].copy_from_slice(&extended_rhs(t, &yc, p));
        let x = StateVec {
            v: yc[idx::V],
            w_v: yc[idx::W_V],
            w_p: yc[idx::W_P],
            r: yc[idx::R],
            p: yc[idx::P],
        };
        let jac = jacobian(t, &x, p);
        let mut forcing_gv = [0.0; EXT_DIM];
        forcing_gv[idx::V] = forcing_scale * x.w_v;
        forcing_gv[idx::W_V] = -forcing_scale * x.w_v;
        let mut forcing_gp = [0.0; EXT_DIM];
        forcing_gp[idx::W_P] = -forcing_scale * x.w_p;
        forcing_gp[idx::P] = forcing_scale * x.w_p;
        for (block, forcing) in [(EXT_DIM, forcing_gv), (2 * EXT_DIM, forcing_gp)] {
            let z = &y[block..block + EXT_DIM];
            for row in 0..EXT_DIM {
                let mut acc = forcing[row];
                for (col, &zc) in z.iter().enumerate() {
                    acc += jac[row][col] * zc;
                }
                dy[block + row] = acc;
            }
        }
    };
    let abs_tol = cfg.abs_tol;
    solve_on_grid(
        &mut rhs,
        &y0,
        &grid,
        &restart_times(p, cfg.t_end),
        &model_max_step(p, cfg),
        cfg.rel_tol,
        cfg.abs_tol,
        &mut |i, _t, y| {
            states[i][..].copy_from_slice(&y[..EXT_DIM]);
            sens[i].z_gv.copy_from_slice(&y[EXT_DIM..2 * EXT_DIM]);
            sens[i].z_gp.copy_from_slice(&y[2 * EXT_DIM..]);
        },
        &|t, y| check_species_nonnegative(t, y, abs_tol),
    )?;
    let flux = flux_series(p, &grid, &states);
    let z_flux_gv: Vec<f64> = (0..grid.n)
        .map(|i| model::eval_kf(grid.time(i), p) * sens[i].z_gv[idx::R])
        .collect();
    let z_flux_gp: Vec<f64> = (0..grid.n)
        .map(|i| model::eval_kf(grid.time(i), p) * sens[i].z_gp[idx::R])
        .collect();
    Ok(SensitivityTrajectory {
        grid,
        states,
        flux,
        sensitivities: sens,
        z_flux_gv,
        z_flux_gp,
    })
}

fn flux_series(p: &ModelParams, grid: &UniformGrid, states: &[[f64; EXT_DIM]]) -> Vec<f64> {
    states
        .iter()
        .enumerate()
        .map(|(i, y)| model::eval_kf(grid.time(i), p) * y[idx::R].max(0.0))
        .collect()
}

/// Clamp tiny negative excursions to zero for rate evaluation only; stored
/// trajectories keep the raw values.
fn clamped_ext(y: &[f64]) -> [f64; EXT_DIM] {
    let mut out = [0.0; EXT_DIM];
    for i in 0..EXT_DIM {
        out[i] = y[i].max(0.0);
    }
    out
}

fn check_species_nonnegative(t: f64, y: &[f64], abs_tol: f64) -> Result<()> {
    for (component, &v) in y.iter().enumerate().take(EXT_DIM) {
        if v < -abs_tol {
            return Err(CoreError::NegativeState { component, t, value: v });
        }
    }
    Ok(())
}

/// Stimulus times interior to `(0, t_end)`: the controller restarts there.
fn restart_times(p: &ModelParams, t_end: f64) -> Vec<f64> {
    p.kf_shape
        .stim_times
        .iter()
        .copied()
        .filter(|&t| t > 0.0 && t < t_end)
        .collect()
}

/// Step ceiling: `sigma / 4` while inside the stimulation span (peaks are
/// resolved even between restarts), `cfg.max_step` elsewhere.
fn model_max_step<'a>(p: &'a ModelParams, cfg: &IntegrationConfig) -> impl Fn(f64) -> f64 + 'a {
    let s = &p.kf_shape;
    let active = s.amplitudes.iter().any(|&a| a > 0.0) && !s.stim_times.is_empty();
    let (lo, hi) = if active {
        let reach = model::GAUSS_CUTOFF_SIGMAS * s.sigma;
        (s.stim_times[0] - reach, s.stim_times[s.stim_times.len() - 1] + reach)
    } else {
        (f64::INFINITY, f64::NEG_INFINITY)
    };
    let cap = s.sigma / 4.0;
    let base = cfg.max_step;
    move |t: f64| {
        if t >= lo && t <= hi {
            cap.min(base)
        } else {
            base
        }
    }
}

// ---------------------------------------------------------------------------
// Dormand-Prince 5(4) core
// ---------------------------------------------------------------------------

const STAGES: usize = 7;
const C: [f64; STAGES] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; STAGES] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
/// Error coefficients (5th-order minus embedded 4th-order weights).
const E: [f64; STAGES] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Integrate `y' = f(t, y)` over the grid's span, restarting the controller
/// at each time in `restarts`, and deliver dense output at every grid point
/// through `sink(index, t, y)`. `check` runs on every accepted state.
#[allow(clippy::too_many_arguments)]
pub(crate) fn solve_on_grid<F>(
    f: &mut F,
    y0: &[f64],
    grid: &UniformGrid,
    restarts: &[f64],
    max_step_at: &dyn Fn(f64) -> f64,
    rel_tol: f64,
    abs_tol: f64,
    sink: &mut dyn FnMut(usize, f64, &[f64]),
    check: &dyn Fn(f64, &[f64]) -> Result<()>,
) -> Result<Vec<f64>>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let dim = y0.len();
    let t_begin = grid.t0;
    let t_final = grid.time(grid.n - 1);
    sink(0, t_begin, y0);
    let mut next_grid = 1;
    if grid.n == 1 {
        return Ok(y0.to_vec());
    }

    let mut segments: Vec<f64> = restarts
        .iter()
        .copied()
        .filter(|&t| t > t_begin && t < t_final)
        .collect();
    segments.sort_by(f64::total_cmp);
    segments.dedup();
    segments.push(t_final);

    let mut y = y0.to_vec();
    let mut y_new = vec![0.0; dim];
    let mut y_stage = vec![0.0; dim];
    let mut y_dense = vec![0.0; dim];
    let mut k: Vec<Vec<f64>> = (0..STAGES).map(|_| vec![0.0; dim]).collect();

    let mut t = t_begin;
    for &seg_end in &segments {
        // controller reset at the segment boundary
        f(t, &y, &mut k[0]);
        let mut h = 0.1 * max_step_at(t).min(seg_end - t);
        let mut err_prev: f64 = 1e-2;

        while t < seg_end {
            let allowed = max_step_at(t).min(seg_end - t);
            h = h.min(allowed).max(f64::MIN_POSITIVE);
            let forced_end = h >= seg_end - t - 1e-14 * seg_end.abs().max(1.0);
            if h.abs() < 1e-14 * t.abs().max(1.0) {
                return Err(CoreError::StepSizeUnderflow { t, h });
            }

            // stages 2..7 (k[0] holds f(t, y) via FSAL or the restart above)
            for s in 1..STAGES {
                for i in 0..dim {
                    let mut acc = 0.0;
                    for (j, kj) in k.iter().enumerate().take(s) {
                        acc += A[s][j] * kj[i];
                    }
                    y_stage[i] = y[i] + h * acc;
                }
                if s == STAGES - 1 {
                    // seventh stage is evaluated at the 5th-order solution
                    y_new.copy_from_slice(&y_stage);
                }
                f(t + C[s] * h, &y_stage, &mut k[s]);
            }

            // embedded error estimate
            let mut err_sq = 0.0;
            for i in 0..dim {
                let mut e = 0.0;
                for (j, kj) in k.iter().enumerate() {
                    e += E[j] * kj[i];
                }
                e *= h;
                let scale = abs_tol + rel_tol * y[i].abs().max(y_new[i].abs());
                err_sq += (e / scale) * (e / scale);
            }
            let err = (err_sq / dim as f64).sqrt();

            if !err.is_finite() {
                h *= 0.25;
                if h < 1e-14 * t.abs().max(1.0) {
                    return Err(CoreError::StepSizeUnderflow { t, h });
                }
                continue;
            }

            if err <= 1.0 {
                let t_new = if forced_end { seg_end } else { t + h };
                check(t_new, &y_new)?;

                // dense output: cubic Hermite with the FSAL derivatives
                while next_grid < grid.n {
                    let tg = grid.time(next_grid);
                    if tg > t_new {
                        break;
                    }
                    let theta = ((tg - t) / h).clamp(0.0, 1.0);
                    hermite(&y, &k[0], &y_new, &k[STAGES - 1], h, theta, &mut y_dense);
                    sink(next_grid, tg, &y_dense);
                    next_grid += 1;
                }

                t = t_new;
                std::mem::swap(&mut y, &mut y_new);
                k.swap(0, STAGES - 1); // FSAL
                let fac = 0.9 * err.max(1e-10).powf(-0.17) * err_prev.powf(0.04);
                h *= fac.clamp(0.2, 5.0);
                err_prev = err.max(1e-4);
            } else {
                h *= (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
            }
        }
        t = seg_end;
    }
    Ok(y)
}

fn hermite(y0: &[f64], f0: &[f64], y1: &[f64], f1: &[f64], h: f64, theta: f64, out: &mut [f64]) {
    let t2 = theta * theta;
    let t3 = t2 * theta;
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + theta;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    for i in 0..y0.len() {
        out[i] = h00 * y0[i] + h10 * h * f0[i] + h01 * y1[i] + h11 * h * f1[i];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::eval_kf;

    fn paper() -> ModelParams {
        ModelParams::paper_default()
    }

    #[test]
    fn solver_reproduces_smooth_solution_on_grid() {
        let grid = UniformGrid::from_range(0.0, 3.0, 1e-3).unwrap();
        let mut worst: f64 = 0.0;
        let mut rhs = |t: f64, _y: &[f64], dy: &mut [f64]| {
            dy[0] = t.cos();
        };
        solve_on_grid(
            &mut rhs,
            &[0.0],
            &grid,
            &[],
            &|_| 0.02,
            1e-10,
            1e-12,
            &mut |i, t, y| {
                let _ = i;
                worst = worst.max((y[0] - t.sin()).abs());
            },
            &|_, _| Ok(()),
        )
        .unwrap();
        // bounded by the cubic Hermite interpolation error at max_step
        assert!(worst < 1e-8, "max dense-output error {worst}");
    }

    #[test]
    fn solver_reports_step_underflow() {
        let grid = UniformGrid::from_range(0.0, 1.0, 0.1).unwrap();
        let mut rhs = |_t: f64, _y: &[f64], dy: &mut [f64]| {
            dy[0] = f64::NAN;
        };
        let err = solve_on_grid(
            &mut rhs,
            &[1.0],
            &grid,
            &[],
            &|_| 0.1,
            1e-8,
            1e-10,
            &mut |_, _, _| {},
            &|_, _| Ok(()),
        )
        .unwrap_err();
        assert!(matches!(err, CoreError::StepSizeUnderflow { .. }));
    }

    #[test]
    fn frozen_rates_hold_the_fixed_point() {
        let mut p = paper();
        // freeze both rates at their t = 0 values by flattening the shapes
        let kf0 = eval_kf(0.0, &p);
        p.kf_shape.m0 = 2.0 * kf0;
        p.kf_shape.m1 = 0.0;
        p.kf_shape.amplitudes.iter_mut().for_each(|a| *a = 0.0);
        p.ku_shape.ku_max = 0.0;
        p.ku_shape.ku_min = 334.0000000102;
        let cfg = IntegrationConfig {
            t_end: 2.0,
            output_dt: 1e-3,
            ..Default::default()
        };
        let x0 = initial_extended_state(&p).unwrap();
        let traj = integrate(&p, &cfg).unwrap();
        for y in &traj.states {
            for i in 0..5 {
                assert!(
                    (y[i] - x0[i]).abs() < 1e-8,
                    "component {i} drifted: {} vs {}",
                    y[i],
                    x0[i]
                );
            }
        }
        // F grows linearly at the frozen flux
        let expect_f = kf0 * x0[idx::R] * 2.0;
        let got_f = traj.states.last().unwrap()[idx::F];
        assert!((got_f - expect_f).abs() < 1e-6 * expect_f);
    }

    #[test]
    fn paper_run_conserves_and_accumulates_fusions() {
        let p = paper();
        let cfg = IntegrationConfig::default();
        let traj = integrate(&p, &cfg).unwrap();
        let (n_sites, n_ves) = p.totals();
        let mut worst_sites: f64 = 0.0;
        let mut worst_ves: f64 = 0.0;
        let mut prev_f = -1.0;
        for y in &traj.states {
            worst_sites = worst_sites.max((y[idx::R] + y[idx::P] + y[idx::W_P] - n_sites).abs());
            worst_ves = worst_ves.max((y[idx::R] + y[idx::V] + y[idx::W_V] - n_ves).abs());
            assert!(y[idx::F] >= prev_f);
            prev_f = y[idx::F];
        }
        assert!(worst_sites < 1e-9 * n_sites, "{worst_sites}");
        assert!(worst_ves < 1e-9 * n_ves, "{worst_ves}");

        // F(t_end) equals the quadrature of the grid flux
        let dt = traj.grid.dt;
        let mut quad = 0.0;
        for w in traj.flux.windows(2) {
            quad += 0.5 * (w[0] + w[1]) * dt;
        }
        let f_end = traj.states.last().unwrap()[idx::F];
        assert!(
            (quad - f_end).abs() < 1e-4 * f_end,
            "quadrature {quad} vs counter {f_end}"
        );
    }

    #[test]
    fn tightening_tolerance_converges() {
        let p = paper();
        let cfg = IntegrationConfig {
            t_end: 0.3,
            ..Default::default()
        };
        let base = integrate(&p, &cfg).unwrap();
        let tighter = integrate(
            &p,
            &IntegrationConfig {
                rel_tol: cfg.rel_tol / 2.0,
                abs_tol: cfg.abs_tol / 2.0,
                ..cfg
            },
        )
        .unwrap();
        let yb = base.states.last().unwrap();
        let yt = tighter.states.last().unwrap();
        for i in 0..EXT_DIM {
            let scale = yt[i].abs().max(1e-6);
            assert!(
                (yb[i] - yt[i]).abs() <= 10.0 * cfg.rel_tol * scale,
                "component {i}: {} vs {}",
                yb[i],
                yt[i]
            );
        }
    }

    #[test]
    fn homogeneous_sensitivity_stays_zero() {
        // k_F = 0 keeps W_V empty, so the g_V forcing vanishes; with zero
        // initial sensitivity the whole Z^{g_V} system stays identically zero
        let mut p = paper();
        p.kf_shape.m0 = 0.0;
        p.kf_shape.amplitudes.iter_mut().for_each(|a| *a = 0.0);
        let (n_sites, n_ves) = p.totals();
        let x0 = StateVec {
            v: n_ves,
            w_v: 0.0,
            w_p: 0.0,
            r: 0.0,
            p: n_sites,
        }
        .extend(0.0);
        let z0 = SensitivityPair {
            z_gv: [0.0; EXT_DIM],
            z_gp: [0.0; EXT_DIM],
        };
        let cfg = IntegrationConfig {
            t_end: 0.5,
            output_dt: 1e-3,
            ..Default::default()
        };
        let traj = integrate_with_sensitivities_from(&p, &cfg, x0, z0, 1.0).unwrap();
        for s in &traj.sensitivities {
            for c in s.z_gv {
                assert_eq!(c, 0.0);
            }
        }
    }

    #[test]
    fn sensitivity_system_is_linear_in_forcing() {
        let p = paper();
        let cfg = IntegrationConfig {
            t_end: 0.2,
            output_dt: 1e-3,
            ..Default::default()
        };
        let (z0, x0) = initial_sensitivities(&p).unwrap();
        let base = integrate_with_sensitivities_from(&p, &cfg, x0, z0, 1.0).unwrap();
        let doubled_z0 = SensitivityPair {
            z_gv: z0.z_gv.map(|v| 2.0 * v),
            z_gp: z0.z_gp.map(|v| 2.0 * v),
        };
        let doubled = integrate_with_sensitivities_from(&p, &cfg, x0, doubled_z0, 2.0).unwrap();
        // scaling Z changes the error controller's weights slightly, so the
        // two runs differ by integration error; compare against the sup norm
        let sup = base
            .sensitivities
            .iter()
            .flat_map(|s| s.z_gv.iter().chain(s.z_gp.iter()))
            .fold(0.0f64, |m, z| m.max(z.abs()));
        for (a, b) in base.sensitivities.iter().zip(&doubled.sensitivities) {
            for i in 0..EXT_DIM {
                assert!(
                    (2.0 * a.z_gv[i] - b.z_gv[i]).abs() < 1e-6 * sup,
                    "{} vs {}",
                    2.0 * a.z_gv[i],
                    b.z_gv[i]
                );
                assert!((2.0 * a.z_gp[i] - b.z_gp[i]).abs() < 1e-6 * sup);
            }
        }
    }

    #[test]
    fn normalization_and_dominance_rules() {
        assert_eq!(normalize_sensitivity(0.0, 3.0, 6.0), Some(0.0));
        assert_eq!(normalize_sensitivity(2.0, 3.0, 6.0), Some(1.0));
        assert_eq!(normalize_sensitivity(-2.0, 3.0, 6.0), Some(-1.0));
        assert_eq!(normalize_sensitivity(2.0, 3.0, 0.5 * C_MIN), None);

        let dom = dominance_series(
            &[Some(1.0), Some(-2.0), Some(1.0), None, Some(0.0)],
            &[Some(1.0), Some(1.0), Some(-3.0), Some(1.0), Some(0.0)],
        );
        assert_eq!(
            dom,
            vec![
                Dominance::Undefined,
                Dominance::VesicleLimited,
                Dominance::SiteLimited,
                Dominance::Undefined,
                Dominance::Undefined,
            ]
        );
        // one-sided zero: the nonzero side dominates everywhere
        let dom = dominance_series(&[Some(0.0); 3], &[Some(0.1), Some(-0.2), Some(5.0)]);
        assert!(dom.iter().all(|&d| d == Dominance::SiteLimited));
    }

    #[test]
    fn config_validation() {
        assert!(IntegrationConfig::default().validate().is_ok());
        let bad = IntegrationConfig {
            output_dt: 0.1,
            max_step: 1e-3,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = IntegrationConfig {
            rel_tol: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
