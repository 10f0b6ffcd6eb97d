//! Monte Carlo ensembles of the recovery network: per-grid-time moments,
//! the vesicle/site correlation and total-current samples.
//!
//! Runs are independent given their derived seeds and execute in parallel.
//! Accumulation is split into a fixed number of chunks merged in index
//! order, so results are bit-identical regardless of how many workers the
//! pool happens to schedule.

use crate::error::{CoreError, Result};
use crate::grid::UniformGrid;
use crate::params::ModelParams;
use crate::signal::current_from_events;
use crate::ssa::{run_rng, sample_stationary_initial, simulate_one_with_rng, JumpState};
use rayon::prelude::*;

/// Number of accumulation chunks; fixed so that the merge order (and hence
/// the floating-point result) does not depend on the worker count.
const ENSEMBLE_CHUNKS: usize = 64;

/// Per-grid-time sample statistics over an ensemble of realizations.
#[derive(Debug, Clone)]
pub struct EnsembleStats {
    pub grid: UniformGrid,
    pub n_runs: usize,
    /// Sample mean of `(V, W_V, W_P, R, P, F)`.
    pub mean: Vec<[f64; 6]>,
    /// Sample standard deviation (Bessel-corrected) of the same components.
    pub std: Vec<[f64; 6]>,
    /// Sample covariance of `(V, P)`.
    pub cov_vp: Vec<f64>,
    /// Correlation of `(V, P)`; `None` where a variance vanishes.
    pub corr_vp: Vec<Option<f64>>,
    /// Mean of the stochastic output current.
    pub mean_current: Vec<f64>,
    /// Standard deviation of the stochastic output current.
    pub std_current: Vec<f64>,
}

#[derive(Clone)]
struct Accumulator {
    n: usize,
    sum: Vec<[f64; 6]>,
    sum_sq: Vec<[f64; 6]>,
    sum_vp: Vec<f64>,
    sum_c: Vec<f64>,
    sum_c_sq: Vec<f64>,
    fusion_times: Vec<Vec<f64>>,
}

impl Accumulator {
    fn new(n_grid: usize) -> Self {
        Accumulator {
            n: 0,
            sum: vec![[0.0; 6]; n_grid],
            sum_sq: vec![[0.0; 6]; n_grid],
            sum_vp: vec![0.0; n_grid],
            sum_c: vec![0.0; n_grid],
            sum_c_sq: vec![0.0; n_grid],
            fusion_times: Vec::new(),
        }
    }

    fn add_run(&mut self, states: &[JumpState], current: &[f64], fusion_times: Vec<f64>) {
        self.n += 1;
        for (i, s) in states.iter().enumerate() {
            let comps = [
                f64::from(s.v),
                f64::from(s.w_v),
                f64::from(s.w_p),
                f64::from(s.r),
                f64::from(s.p),
                f64::from(s.f),
            ];
            for (k, c) in comps.iter().enumerate() {
                self.sum[i][k] += c;
                self.sum_sq[i][k] += c * c;
            }
            self.sum_vp[i] += f64::from(s.v) * f64::from(s.p);
            self.sum_c[i] += current[i];
            self.sum_c_sq[i] += current[i] * current[i];
        }
        self.fusion_times.push(fusion_times);
    }

    fn merge(mut self, other: Accumulator) -> Accumulator {
        self.n += other.n;
        for i in 0..self.sum.len() {
            for k in 0..6 {
                self.sum[i][k] += other.sum[i][k];
                self.sum_sq[i][k] += other.sum_sq[i][k];
            }
            self.sum_vp[i] += other.sum_vp[i];
            self.sum_c[i] += other.sum_c[i];
            self.sum_c_sq[i] += other.sum_c_sq[i];
        }
        self.fusion_times.extend(other.fusion_times);
        self
    }
}

pub(crate) fn chunk_bounds(chunk: usize, n_chunks: usize, total: usize) -> (usize, usize) {
    let per = total / n_chunks;
    let extra = total % n_chunks;
    let lo = chunk * per + chunk.min(extra);
    let hi = lo + per + usize::from(chunk < extra);
    (lo, hi)
}

/// Run `n_runs` independent realizations and estimate per-grid-time moments.
///
/// Each run draws its initial state from the no-stimulation stationary
/// distribution (burn-in), then simulates `[0, t_end)` where `t_end` is the
/// last grid time. Returns the statistics and the per-run fusion times.
pub fn run_ensemble(
    p: &ModelParams,
    n_runs: usize,
    seed0: u64,
    grid: &UniformGrid,
) -> Result<(EnsembleStats, Vec<Vec<f64>>)> {
    if n_runs < 2 {
        return Err(CoreError::NotEnoughRuns(n_runs));
    }
    p.validate()?;
    let t_end = grid.time(grid.n - 1);
    let n_chunks = ENSEMBLE_CHUNKS.min(n_runs);
    let chunks: Vec<Result<Accumulator>> = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| {
            let (lo, hi) = chunk_bounds(chunk, n_chunks, n_runs);
            let mut acc = Accumulator::new(grid.n);
            for run in lo..hi {
                let mut rng = run_rng(seed0, run as u64);
                let x0 = sample_stationary_initial(p, &mut rng)?;
                let traj = simulate_one_with_rng(p, t_end, x0, &mut rng);
                let states = traj.sample_on_grid(grid);
                let fusion_times = traj.fusion_times();
                let current = current_from_events(&fusion_times, &p.impulse_kernel, grid);
                acc.add_run(&states, &current, fusion_times);
            }
            Ok(acc)
        })
        .collect();

    let mut merged = Accumulator::new(grid.n);
    for acc in chunks {
        merged = merged.merge(acc?);
    }
    let fusion_times = std::mem::take(&mut merged.fusion_times);
    Ok((finalize(merged, *grid), fusion_times))
}

fn finalize(acc: Accumulator, grid: UniformGrid) -> EnsembleStats {
    let n = acc.n as f64;
    let bessel = n - 1.0;
    let mut mean = Vec::with_capacity(grid.n);
    let mut std = Vec::with_capacity(grid.n);
    let mut cov_vp = Vec::with_capacity(grid.n);
    let mut corr_vp = Vec::with_capacity(grid.n);
    let mut mean_current = Vec::with_capacity(grid.n);
    let mut std_current = Vec::with_capacity(grid.n);
    for i in 0..grid.n {
        let mut m = [0.0; 6];
        let mut s = [0.0; 6];
        for k in 0..6 {
            m[k] = acc.sum[i][k] / n;
            let var = ((acc.sum_sq[i][k] - acc.sum[i][k] * acc.sum[i][k] / n) / bessel).max(0.0);
            s[k] = var.sqrt();
        }
        let cov = (acc.sum_vp[i] - acc.sum[i][0] * acc.sum[i][4] / n) / bessel;
        let corr = clipped_corr(cov, s[0], s[4]);
        let mc = acc.sum_c[i] / n;
        let vc = ((acc.sum_c_sq[i] - acc.sum_c[i] * acc.sum_c[i] / n) / bessel).max(0.0);
        mean.push(m);
        std.push(s);
        cov_vp.push(cov);
        corr_vp.push(corr);
        mean_current.push(mc);
        std_current.push(vc.sqrt());
    }
    EnsembleStats {
        grid,
        n_runs: acc.n,
        mean,
        std,
        cov_vp,
        corr_vp,
        mean_current,
        std_current,
    }
}

fn clipped_corr(cov: f64, sd_a: f64, sd_b: f64) -> Option<f64> {
    if sd_a <= 0.0 || sd_b <= 0.0 {
        return None;
    }
    let c = cov / (sd_a * sd_b);
    // tolerate rounding overshoot only
    debug_assert!(c.abs() <= 1.0 + 1e-9, "correlation overshoot {c}");
    Some(c.clamp(-1.0, 1.0))
}

/// One realization of the scaled total current `C_total / N`: the average of
/// `n_sites_summed` independent single-site currents.
pub fn total_current_sample(
    p: &ModelParams,
    n_sites_summed: usize,
    seed0: u64,
    grid: &UniformGrid,
) -> Result<Vec<f64>> {
    if n_sites_summed == 0 {
        return Err(CoreError::NotEnoughRuns(0));
    }
    p.validate()?;
    let t_end = grid.time(grid.n - 1);
    let n_chunks = ENSEMBLE_CHUNKS.min(n_sites_summed);
    let partials: Vec<Result<Vec<f64>>> = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| {
            let (lo, hi) = chunk_bounds(chunk, n_chunks, n_sites_summed);
            let mut total = vec![0.0; grid.n];
            for run in lo..hi {
                let mut rng = run_rng(seed0, run as u64);
                let x0 = sample_stationary_initial(p, &mut rng)?;
                let traj = simulate_one_with_rng(p, t_end, x0, &mut rng);
                let current = current_from_events(&traj.fusion_times(), &p.impulse_kernel, grid);
                for (t, c) in total.iter_mut().zip(&current) {
                    *t += c;
                }
            }
            Ok(total)
        })
        .collect();
    let mut total = vec![0.0; grid.n];
    for partial in partials {
        for (t, c) in total.iter_mut().zip(&partial?) {
            *t += c;
        }
    }
    let scale = 1.0 / n_sites_summed as f64;
    total.iter_mut().for_each(|t| *t *= scale);
    Ok(total)
}

/// Per-grid-time sample correlation between two per-run series
/// (`series_a[run][grid]`). `None` marks times where a variance vanishes.
pub fn correlation(series_a: &[Vec<f64>], series_b: &[Vec<f64>]) -> Result<Vec<Option<f64>>> {
    if series_a.len() != series_b.len() || series_a.len() < 2 {
        return Err(CoreError::NotEnoughRuns(series_a.len()));
    }
    let n_grid = series_a[0].len();
    for (a, b) in series_a.iter().zip(series_b) {
        if a.len() != n_grid || b.len() != n_grid {
            return Err(CoreError::InvalidSeries(
                "per-run series have mismatched grid lengths".into(),
            ));
        }
    }
    let n = series_a.len() as f64;
    let mut out = Vec::with_capacity(n_grid);
    for i in 0..n_grid {
        let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (a, b) in series_a.iter().zip(series_b) {
            let (x, y) = (a[i], b[i]);
            sa += x;
            sb += y;
            saa += x * x;
            sbb += y * y;
            sab += x * y;
        }
        let var_a = (saa - sa * sa / n).max(0.0);
        let var_b = (sbb - sb * sb / n).max(0.0);
        let cov = sab - sa * sb / n;
        out.push(clipped_corr(cov, var_a.sqrt(), var_b.sqrt()));
    }
    Ok(out)
}
