//! Reduced binding systems used to isolate the effect of independent
//! recovery on how well the ODE tracks the stochastic mean.
//!
//! System I is plain binding/unbinding `A + B <-> W`; system II replaces the
//! joint unbinding by a fused intermediate with independent returns
//! `A + B -> W_A + W_B`, `W_A -> A`, `W_B -> B`. Under the matching
//! conditions (`alpha = alpha'`, `beta = g_A = g_B`, equal initial
//! intermediates) the two ODE systems coincide, while their jump processes
//! differ: independent return decorrelates `A` and `B` and pulls the
//! stochastic mean toward the ODE solution.

use crate::ensemble::chunk_bounds;
use crate::error::{CoreError, Result};
use crate::grid::UniformGrid;
use crate::ode::solve_on_grid;
use crate::ssa::{run_rng, simulate_system, Count, ReactionSystem};
use rayon::prelude::*;

/// Parameters and initial counts of one reduced system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReducedParams {
    /// System I: `A + B -> W` at `alpha A B`, `W -> A + B` at `beta W`.
    StandardBinding {
        alpha: f64,
        beta: f64,
        a0: Count,
        b0: Count,
        w0: Count,
    },
    /// System II: `A + B -> W_A + W_B` at `alpha A B`, `W_A -> A` at
    /// `g_a W_A`, `W_B -> B` at `g_b W_B`.
    IndependentReturn {
        alpha: f64,
        g_a: f64,
        g_b: f64,
        a0: Count,
        b0: Count,
        wa0: Count,
        wb0: Count,
    },
}

impl ReducedParams {
    pub fn validate(&self) -> Result<()> {
        let rates_ok = match *self {
            ReducedParams::StandardBinding { alpha, beta, .. } => alpha > 0.0 && beta > 0.0,
            ReducedParams::IndependentReturn { alpha, g_a, g_b, .. } => {
                alpha > 0.0 && g_a > 0.0 && g_b > 0.0
            }
        };
        if rates_ok {
            Ok(())
        } else {
            Err(CoreError::InvalidParams(vec![
                "reduced-system rates must be positive".into(),
            ]))
        }
    }

    pub fn species_labels(&self) -> &'static [&'static str] {
        match self {
            ReducedParams::StandardBinding { .. } => &["A", "B", "W"],
            ReducedParams::IndependentReturn { .. } => &["A", "B", "W_A", "W_B"],
        }
    }

    pub fn initial_counts(&self) -> Vec<Count> {
        match *self {
            ReducedParams::StandardBinding { a0, b0, w0, .. } => vec![a0, b0, w0],
            ReducedParams::IndependentReturn { a0, b0, wa0, wb0, .. } => vec![a0, b0, wa0, wb0],
        }
    }

    fn initial_f64(&self) -> Vec<f64> {
        self.initial_counts().iter().map(|&c| f64::from(c)).collect()
    }

    fn rhs(&self, y: &[f64], dy: &mut [f64]) {
        match *self {
            ReducedParams::StandardBinding { alpha, beta, .. } => {
                let bind = alpha * y[0] * y[1];
                let unbind = beta * y[2];
                dy[0] = -bind + unbind;
                dy[1] = -bind + unbind;
                dy[2] = bind - unbind;
            }
            ReducedParams::IndependentReturn { alpha, g_a, g_b, .. } => {
                let bind = alpha * y[0] * y[1];
                let ra = g_a * y[2];
                let rb = g_b * y[3];
                dy[0] = -bind + ra;
                dy[1] = -bind + rb;
                dy[2] = bind - ra;
                dy[3] = bind - rb;
            }
        }
    }
}

/// Dense-grid ODE trajectory of a reduced system; `species[k][i]` is species
/// `k` at grid index `i`.
#[derive(Debug, Clone)]
pub struct ReducedTrajectory {
    pub grid: UniformGrid,
    pub labels: &'static [&'static str],
    pub species: Vec<Vec<f64>>,
}

/// Integrate the reduced ODE system on a uniform grid (tight tolerances; the
/// systems are small and smooth).
pub fn reduced_ode(rp: &ReducedParams, t_end: f64, output_dt: f64) -> Result<ReducedTrajectory> {
    rp.validate()?;
    let grid = UniformGrid::from_range(0.0, t_end, output_dt)?;
    let y0 = rp.initial_f64();
    let dim = y0.len();
    let mut species = vec![vec![0.0; grid.n]; dim];
    let mut rhs = |_t: f64, y: &[f64], dy: &mut [f64]| rp.rhs(y, dy);
    solve_on_grid(
        &mut rhs,
        &y0,
        &grid,
        &[],
        &|_| 0.01,
        1e-11,
        1e-13,
        &mut |i, _t, y| {
            for (k, series) in species.iter_mut().enumerate() {
                series[i] = y[k];
            }
        },
        &|_, _| Ok(()),
    )?;
    Ok(ReducedTrajectory {
        grid,
        labels: rp.species_labels(),
        species,
    })
}

struct ReducedNetwork {
    rp: ReducedParams,
}

impl ReactionSystem for ReducedNetwork {
    fn n_species(&self) -> usize {
        match self.rp {
            ReducedParams::StandardBinding { .. } => 3,
            ReducedParams::IndependentReturn { .. } => 4,
        }
    }

    fn n_reactions(&self) -> usize {
        match self.rp {
            ReducedParams::StandardBinding { .. } => 2,
            ReducedParams::IndependentReturn { .. } => 3,
        }
    }

    fn propensity(&self, reaction: usize, x: &[Count], _t: f64) -> f64 {
        match (self.rp, reaction) {
            (ReducedParams::StandardBinding { alpha, .. }, 0) => {
                alpha * f64::from(x[0]) * f64::from(x[1])
            }
            (ReducedParams::StandardBinding { beta, .. }, _) => beta * f64::from(x[2]),
            (ReducedParams::IndependentReturn { alpha, .. }, 0) => {
                alpha * f64::from(x[0]) * f64::from(x[1])
            }
            (ReducedParams::IndependentReturn { g_a, .. }, 1) => g_a * f64::from(x[2]),
            (ReducedParams::IndependentReturn { g_b, .. }, _) => g_b * f64::from(x[3]),
        }
    }

    fn propensity_bound(&self, reaction: usize, x: &[Count], t0: f64, _t1: f64) -> f64 {
        // rates are constant: the bound is tight and nothing is thinned
        self.propensity(reaction, x, t0)
    }

    fn apply(&self, reaction: usize, x: &mut [Count]) {
        match (self.rp, reaction) {
            (ReducedParams::StandardBinding { .. }, 0) => {
                x[0] -= 1;
                x[1] -= 1;
                x[2] += 1;
            }
            (ReducedParams::StandardBinding { .. }, _) => {
                x[2] -= 1;
                x[0] += 1;
                x[1] += 1;
            }
            (ReducedParams::IndependentReturn { .. }, 0) => {
                x[0] -= 1;
                x[1] -= 1;
                x[2] += 1;
                x[3] += 1;
            }
            (ReducedParams::IndependentReturn { .. }, 1) => {
                x[2] -= 1;
                x[0] += 1;
            }
            (ReducedParams::IndependentReturn { .. }, _) => {
                x[3] -= 1;
                x[1] += 1;
            }
        }
    }
}

/// Moment comparison of the two reduced systems against their common ODE.
#[derive(Debug, Clone)]
pub struct ReducedComparison {
    pub grid: UniformGrid,
    pub mean_a_i: Vec<f64>,
    pub mean_b_i: Vec<f64>,
    pub mean_a_ii: Vec<f64>,
    pub mean_b_ii: Vec<f64>,
    pub ode_a: Vec<f64>,
    pub ode_b: Vec<f64>,
    /// `|mean - ODE| / ODE` per species and system.
    pub rel_err_a_i: Vec<f64>,
    pub rel_err_b_i: Vec<f64>,
    pub rel_err_a_ii: Vec<f64>,
    pub rel_err_b_ii: Vec<f64>,
    pub corr_i: Vec<Option<f64>>,
    pub corr_ii: Vec<Option<f64>>,
}

/// Reference comparison setup: system I with `alpha = beta = 5`, system II
/// with `alpha' = g_A = g_B = 5`, starting from `A(0) = 2, B(0) = 1` and all
/// other species empty.
pub fn fig9_reduced_params() -> (ReducedParams, ReducedParams) {
    (
        ReducedParams::StandardBinding {
            alpha: 5.0,
            beta: 5.0,
            a0: 2,
            b0: 1,
            w0: 0,
        },
        ReducedParams::IndependentReturn {
            alpha: 5.0,
            g_a: 5.0,
            g_b: 5.0,
            a0: 2,
            b0: 1,
            wa0: 0,
            wb0: 0,
        },
    )
}

struct AbAccumulator {
    n: usize,
    sum_a: Vec<f64>,
    sum_b: Vec<f64>,
    sum_aa: Vec<f64>,
    sum_bb: Vec<f64>,
    sum_ab: Vec<f64>,
}

impl AbAccumulator {
    fn new(n_grid: usize) -> Self {
        AbAccumulator {
            n: 0,
            sum_a: vec![0.0; n_grid],
            sum_b: vec![0.0; n_grid],
            sum_aa: vec![0.0; n_grid],
            sum_bb: vec![0.0; n_grid],
            sum_ab: vec![0.0; n_grid],
        }
    }

    fn merge(mut self, o: AbAccumulator) -> AbAccumulator {
        self.n += o.n;
        for i in 0..self.sum_a.len() {
            self.sum_a[i] += o.sum_a[i];
            self.sum_b[i] += o.sum_b[i];
            self.sum_aa[i] += o.sum_aa[i];
            self.sum_bb[i] += o.sum_bb[i];
            self.sum_ab[i] += o.sum_ab[i];
        }
        self
    }
}

/// Ensemble moments of `(A, B)` for one reduced system. Run `j` of system
/// `system_tag` draws its seed from `(seed0, 2 j + system_tag)`.
fn reduced_ensemble(
    rp: &ReducedParams,
    n_runs: usize,
    seed0: u64,
    system_tag: u64,
    grid: &UniformGrid,
) -> AbAccumulator {
    let net = ReducedNetwork { rp: *rp };
    let x0 = rp.initial_counts();
    let t_end = grid.time(grid.n - 1);
    let n_chunks = 64.min(n_runs);
    let chunks: Vec<AbAccumulator> = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| {
            let (lo, hi) = chunk_bounds(chunk, n_chunks, n_runs);
            let mut acc = AbAccumulator::new(grid.n);
            for run in lo..hi {
                let mut rng = run_rng(seed0, 2 * run as u64 + system_tag);
                let mut state = x0.clone();
                let events = simulate_system(&net, &mut state, 0.0, t_end, &mut rng);
                // replay (A, B) onto the grid
                let mut st = x0.clone();
                let mut ev = events.iter().peekable();
                acc.n += 1;
                for i in 0..grid.n {
                    let t = grid.time(i);
                    while let Some(&&(et, r)) = ev.peek() {
                        if et <= t {
                            net.apply(r, &mut st);
                            ev.next();
                        } else {
                            break;
                        }
                    }
                    let a = f64::from(st[0]);
                    let b = f64::from(st[1]);
                    acc.sum_a[i] += a;
                    acc.sum_b[i] += b;
                    acc.sum_aa[i] += a * a;
                    acc.sum_bb[i] += b * b;
                    acc.sum_ab[i] += a * b;
                }
            }
            acc
        })
        .collect();
    chunks
        .into_iter()
        .fold(AbAccumulator::new(grid.n), AbAccumulator::merge)
}

/// Compare the two reduced systems: per-time correlation of `(A, B)` and the
/// relative error of the mean against the shared ODE solution.
pub fn reduced_ssa_correlation(
    rp_i: &ReducedParams,
    rp_ii: &ReducedParams,
    n_runs: usize,
    seed0: u64,
    grid: &UniformGrid,
) -> Result<ReducedComparison> {
    if n_runs < 2 {
        return Err(CoreError::NotEnoughRuns(n_runs));
    }
    rp_i.validate()?;
    rp_ii.validate()?;
    if !matches!(rp_i, ReducedParams::StandardBinding { .. })
        || !matches!(rp_ii, ReducedParams::IndependentReturn { .. })
    {
        return Err(CoreError::InvalidParams(vec![
            "expected system I (standard binding) and system II (independent return)".into(),
        ]));
    }
    let t_end = grid.time(grid.n - 1);
    let ode = reduced_ode(rp_i, t_end, grid.dt)?;

    let acc_i = reduced_ensemble(rp_i, n_runs, seed0, 0, grid);
    let acc_ii = reduced_ensemble(rp_ii, n_runs, seed0, 1, grid);

    let finalize = |acc: &AbAccumulator| {
        let n = acc.n as f64;
        let mut mean_a = Vec::with_capacity(grid.n);
        let mut mean_b = Vec::with_capacity(grid.n);
        let mut corr = Vec::with_capacity(grid.n);
        for i in 0..grid.n {
            let ma = acc.sum_a[i] / n;
            let mb = acc.sum_b[i] / n;
            let va = (acc.sum_aa[i] - acc.sum_a[i] * acc.sum_a[i] / n).max(0.0);
            let vb = (acc.sum_bb[i] - acc.sum_b[i] * acc.sum_b[i] / n).max(0.0);
            let cov = acc.sum_ab[i] - acc.sum_a[i] * acc.sum_b[i] / n;
            let c = if va > 0.0 && vb > 0.0 {
                Some((cov / (va.sqrt() * vb.sqrt())).clamp(-1.0, 1.0))
            } else {
                None
            };
            mean_a.push(ma);
            mean_b.push(mb);
            corr.push(c);
        }
        (mean_a, mean_b, corr)
    };
    let (mean_a_i, mean_b_i, corr_i) = finalize(&acc_i);
    let (mean_a_ii, mean_b_ii, corr_ii) = finalize(&acc_ii);

    let rel = |mean: &[f64], ode: &[f64]| -> Vec<f64> {
        mean.iter()
            .zip(ode)
            .map(|(m, o)| (m - o).abs() / o)
            .collect()
    };
    Ok(ReducedComparison {
        grid: *grid,
        rel_err_a_i: rel(&mean_a_i, &ode.species[0]),
        rel_err_b_i: rel(&mean_b_i, &ode.species[1]),
        rel_err_a_ii: rel(&mean_a_ii, &ode.species[0]),
        rel_err_b_ii: rel(&mean_b_ii, &ode.species[1]),
        mean_a_i,
        mean_b_i,
        mean_a_ii,
        mean_b_ii,
        ode_a: ode.species[0].clone(),
        ode_b: ode.species[1].clone(),
        corr_i,
        corr_ii,
    })
}
