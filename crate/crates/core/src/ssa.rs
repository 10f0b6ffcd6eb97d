//! Exact stochastic simulation of reaction jump processes with time-varying
//! propensities.
//!
//! The sampler handles non-homogeneous rates by thinning: within a majorant
//! window, candidate waiting times are drawn from a constant upper bound of
//! the total propensity and accepted with probability `a(t) / a_sup`. The
//! bound is rebuilt whenever the state changes or a window boundary is
//! crossed, so correctness is independent of the window layout; windows only
//! set the acceptance efficiency. For constant-rate systems the bound is
//! tight and the scheme reduces to the plain direct method.

use crate::error::Result;
use crate::grid::UniformGrid;
use crate::model::{kf_upper_bound, ku_upper_bound};
use crate::model::{eval_kf, eval_ku};
use crate::params::ModelParams;
use crate::steady_state::{steady_state_closed_form, FrozenRates};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Species count type for jump states.
pub type Count = u32;

/// Reaction channels of the recovery network, in propensity order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReactionId {
    /// `V + P -> R` at `k_R V P`.
    Prime = 0,
    /// `R -> V + P` at `k_U(t) R`.
    Unprime = 1,
    /// `R -> W_V + W_P` at `k_F(t) R`, increments the fusion counter.
    Fuse = 2,
    /// `W_V -> V` at `g_V W_V`.
    RecoverV = 3,
    /// `W_P -> P` at `g_P W_P`.
    RecoverP = 4,
}

impl ReactionId {
    pub const ALL: [ReactionId; 5] = [
        ReactionId::Prime,
        ReactionId::Unprime,
        ReactionId::Fuse,
        ReactionId::RecoverV,
        ReactionId::RecoverP,
    ];

    pub fn from_index(i: usize) -> ReactionId {
        ReactionId::ALL[i]
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ReactionId::Prime => "PRIME",
            ReactionId::Unprime => "UNPRIME",
            ReactionId::Fuse => "FUSE",
            ReactionId::RecoverV => "RECOVER_V",
            ReactionId::RecoverP => "RECOVER_P",
        }
    }
}

/// Integer state of one realization, fusion counter included.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct JumpState {
    pub v: Count,
    pub w_v: Count,
    pub w_p: Count,
    pub r: Count,
    pub p: Count,
    pub f: Count,
}

impl JumpState {
    pub fn species(&self) -> [Count; 5] {
        [self.v, self.w_v, self.w_p, self.r, self.p]
    }

    pub fn conserves(&self, n_sites: Count, n_ves: Count) -> bool {
        self.r + self.p + self.w_p == n_sites && self.r + self.v + self.w_v == n_ves
    }

    fn apply(&mut self, r: ReactionId) {
        match r {
            ReactionId::Prime => {
                self.v -= 1;
                self.p -= 1;
                self.r += 1;
            }
            ReactionId::Unprime => {
                self.r -= 1;
                self.v += 1;
                self.p += 1;
            }
            ReactionId::Fuse => {
                self.r -= 1;
                self.w_v += 1;
                self.w_p += 1;
                self.f += 1;
            }
            ReactionId::RecoverV => {
                self.w_v -= 1;
                self.v += 1;
            }
            ReactionId::RecoverP => {
                self.w_p -= 1;
                self.p += 1;
            }
        }
    }
}

/// One stochastic realization: the initial state plus the ordered event list.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpTrajectory {
    pub initial: JumpState,
    pub events: Vec<(f64, ReactionId)>,
}

impl JumpTrajectory {
    /// Times of the fusion events `T_1 < T_2 < ...`.
    pub fn fusion_times(&self) -> Vec<f64> {
        self.events
            .iter()
            .filter(|(_, r)| *r == ReactionId::Fuse)
            .map(|(t, _)| *t)
            .collect()
    }

    /// Piecewise-constant state sampled at each grid time.
    pub fn sample_on_grid(&self, grid: &UniformGrid) -> Vec<JumpState> {
        let mut out = Vec::with_capacity(grid.n);
        let mut state = self.initial;
        let mut ev = self.events.iter().peekable();
        for i in 0..grid.n {
            let t = grid.time(i);
            while let Some(&&(et, r)) = ev.peek() {
                if et <= t {
                    state.apply(r);
                    ev.next();
                } else {
                    break;
                }
            }
            out.push(state);
        }
        out
    }

    /// Replay the event list checking strict time ordering, integer
    /// conservation and nonnegativity at every event.
    pub fn replay_check(&self, n_sites: Count, n_ves: Count) -> bool {
        if !self.initial.conserves(n_sites, n_ves) {
            return false;
        }
        let mut state = self.initial;
        let mut prev = f64::NEG_INFINITY;
        for &(t, r) in &self.events {
            if t <= prev {
                return false;
            }
            prev = t;
            let lost = match r {
                ReactionId::Prime => state.v > 0 && state.p > 0,
                ReactionId::Unprime | ReactionId::Fuse => state.r > 0,
                ReactionId::RecoverV => state.w_v > 0,
                ReactionId::RecoverP => state.w_p > 0,
            };
            if !lost {
                return false;
            }
            state.apply(r);
            if !state.conserves(n_sites, n_ves) {
                return false;
            }
        }
        true
    }
}

/// A reaction system the thinning sampler can drive.
///
/// `propensity_bound` must dominate `propensity` for every `t` in the window
/// at the given state; `window_end` returns the next time the bound should be
/// rebuilt even without a state change.
pub trait ReactionSystem {
    fn n_species(&self) -> usize;
    fn n_reactions(&self) -> usize;
    fn propensity(&self, reaction: usize, x: &[Count], t: f64) -> f64;
    fn propensity_bound(&self, reaction: usize, x: &[Count], t0: f64, t1: f64) -> f64;
    fn apply(&self, reaction: usize, x: &mut [Count]);
    fn window_end(&self, t: f64) -> f64 {
        let _ = t;
        f64::INFINITY
    }
}

/// Exact sample of the jump process on `[t0, t_end)` by Ogata thinning.
///
/// Returns the ordered `(time, reaction)` event list; `x` is advanced to the
/// terminal state.
pub fn simulate_system<S: ReactionSystem, R: Rng>(
    sys: &S,
    x: &mut [Count],
    t0: f64,
    t_end: f64,
    rng: &mut R,
) -> Vec<(f64, usize)> {
    let n_reactions = sys.n_reactions();
    let mut events = Vec::new();
    let mut t = t0;
    while t < t_end {
        let w_end = sys.window_end(t).min(t_end);
        let mut a_sup = 0.0;
        for r in 0..n_reactions {
            a_sup += sys.propensity_bound(r, x, t, w_end);
        }
        if a_sup <= 0.0 {
            if w_end >= t_end {
                break;
            }
            t = w_end;
            continue;
        }
        // candidate from the homogeneous majorant
        let u: f64 = rng.gen();
        let tau = -(1.0 - u).ln() / a_sup;
        if t + tau >= w_end {
            // no candidate inside the window; memorylessness lets us restart
            // at the boundary
            if w_end >= t_end {
                break;
            }
            t = w_end;
            continue;
        }
        t += tau;
        let mut a = [0.0f64; 8];
        debug_assert!(n_reactions <= 8);
        let mut a_tot = 0.0;
        for r in 0..n_reactions {
            a[r] = sys.propensity(r, x, t);
            a_tot += a[r];
        }
        let threshold: f64 = rng.gen::<f64>() * a_sup;
        if threshold < a_tot {
            // accepted: pick the channel proportionally to its propensity
            let mut acc = 0.0;
            let mut chosen = n_reactions - 1;
            for (r, &ar) in a.iter().enumerate().take(n_reactions) {
                acc += ar;
                if threshold < acc {
                    chosen = r;
                    break;
                }
            }
            sys.apply(chosen, x);
            events.push((t, chosen));
        }
        // rejected candidates advance time without an event
    }
    events
}

/// The full recovery network as a [`ReactionSystem`].
///
/// Majorant windows are bounded by the stimulus times and additionally capped
/// at one inter-stimulus period, keeping the `k_F` bound tight everywhere.
pub struct RecoveryNetwork<'a> {
    params: &'a ModelParams,
    max_window: f64,
}

impl<'a> RecoveryNetwork<'a> {
    pub fn new(params: &'a ModelParams) -> Self {
        let stim = &params.kf_shape.stim_times;
        let max_window = if stim.len() >= 2 {
            stim[1] - stim[0]
        } else {
            0.01
        };
        RecoveryNetwork { params, max_window }
    }
}

impl ReactionSystem for RecoveryNetwork<'_> {
    fn n_species(&self) -> usize {
        5
    }

    fn n_reactions(&self) -> usize {
        5
    }

    fn propensity(&self, reaction: usize, x: &[Count], t: f64) -> f64 {
        let p = self.params;
        match ReactionId::from_index(reaction) {
            ReactionId::Prime => p.k_r * f64::from(x[0]) * f64::from(x[4]),
            ReactionId::Unprime => eval_ku(t, p) * f64::from(x[3]),
            ReactionId::Fuse => eval_kf(t, p) * f64::from(x[3]),
            ReactionId::RecoverV => p.g_v * f64::from(x[1]),
            ReactionId::RecoverP => p.g_p * f64::from(x[2]),
        }
    }

    fn propensity_bound(&self, reaction: usize, x: &[Count], t0: f64, t1: f64) -> f64 {
        let p = self.params;
        match ReactionId::from_index(reaction) {
            ReactionId::Unprime => ku_upper_bound(t0, t1, p) * f64::from(x[3]),
            ReactionId::Fuse => kf_upper_bound(t0, t1, p) * f64::from(x[3]),
            // the remaining channels are time-independent
            _ => self.propensity(reaction, x, t0),
        }
    }

    fn apply(&self, reaction: usize, x: &mut [Count]) {
        match ReactionId::from_index(reaction) {
            ReactionId::Prime => {
                x[0] -= 1;
                x[4] -= 1;
                x[3] += 1;
            }
            ReactionId::Unprime => {
                x[3] -= 1;
                x[0] += 1;
                x[4] += 1;
            }
            ReactionId::Fuse => {
                x[3] -= 1;
                x[1] += 1;
                x[2] += 1;
            }
            ReactionId::RecoverV => {
                x[1] -= 1;
                x[0] += 1;
            }
            ReactionId::RecoverP => {
                x[2] -= 1;
                x[4] += 1;
            }
        }
    }

    fn window_end(&self, t: f64) -> f64 {
        let stim = &self.params.kf_shape.stim_times;
        let next = match stim.binary_search_by(|s| s.total_cmp(&t)) {
            Ok(i) => stim.get(i + 1).copied(),
            Err(i) => stim.get(i).copied(),
        };
        let capped = t + self.max_window;
        match next {
            Some(s) if s > t => s.min(capped),
            _ => capped,
        }
    }
}

/// The network with both rates frozen at their `t = 0` values; used for the
/// stationary burn-in. The bound is tight, so no candidate is ever thinned.
struct FrozenNetwork<'a> {
    inner: RecoveryNetwork<'a>,
    k_f: f64,
    k_u: f64,
}

impl ReactionSystem for FrozenNetwork<'_> {
    fn n_species(&self) -> usize {
        5
    }

    fn n_reactions(&self) -> usize {
        5
    }

    fn propensity(&self, reaction: usize, x: &[Count], _t: f64) -> f64 {
        match ReactionId::from_index(reaction) {
            ReactionId::Unprime => self.k_u * f64::from(x[3]),
            ReactionId::Fuse => self.k_f * f64::from(x[3]),
            _ => self.inner.propensity(reaction, x, 0.0),
        }
    }

    fn propensity_bound(&self, reaction: usize, x: &[Count], t0: f64, _t1: f64) -> f64 {
        self.propensity(reaction, x, t0)
    }

    fn apply(&self, reaction: usize, x: &mut [Count]) {
        self.inner.apply(reaction, x);
    }
}

/// Deterministic steady state rounded to integers with exact conservation:
/// `R` is rounded to nearest first, then each conservation group distributes
/// its remaining total by largest remainder.
pub fn rounded_steady_initial(p: &ModelParams) -> Result<JumpState> {
    let x = steady_state_closed_form(&FrozenRates::at_time(p, 0.0))?;
    let r = (x.r.round() as Count).min(p.n_sites).min(p.n_ves);

    let split = |total: Count, first: f64, second: f64| -> (Count, Count) {
        let first_floor = (first.floor() as Count).min(total);
        let second_floor = (second.floor() as Count).min(total - first_floor);
        let mut a = first_floor;
        let mut b = second_floor;
        let mut left = total - first_floor - second_floor;
        // hand out the leftover units by largest fractional remainder
        while left > 0 {
            if first - f64::from(a) >= second - f64::from(b) {
                a += 1;
            } else {
                b += 1;
            }
            left -= 1;
        }
        (a, b)
    };
    let (p_cnt, w_p) = split(p.n_sites - r, x.p, x.w_p);
    let (v_cnt, w_v) = split(p.n_ves - r, x.v, x.w_v);
    Ok(JumpState {
        v: v_cnt,
        w_v,
        w_p,
        r,
        p: p_cnt,
        f: 0,
    })
}

/// Burn-in horizon: twenty times the slowest relevant relaxation scale of the
/// frozen pre-stimulation system (50 s at the reference parameters).
pub fn burn_in_time(p: &ModelParams) -> f64 {
    let exchange = eval_kf(0.0, p) + eval_ku(0.0, p);
    let mut slowest = p.g_v.min(p.g_p);
    if exchange > 0.0 {
        slowest = slowest.min(exchange);
    }
    20.0 / slowest
}

/// Draw an initial state from the no-stimulation stationary distribution by
/// burn-in: simulate the frozen system from the rounded deterministic steady
/// state and keep the terminal state.
pub fn sample_stationary_initial<R: Rng>(p: &ModelParams, rng: &mut R) -> Result<JumpState> {
    sample_stationary_initial_with(p, rng, burn_in_time(p))
}

/// Burn-in with an explicit horizon (exposed so tests can validate the
/// default by doubling it).
pub fn sample_stationary_initial_with<R: Rng>(
    p: &ModelParams,
    rng: &mut R,
    horizon: f64,
) -> Result<JumpState> {
    let start = rounded_steady_initial(p)?;
    let net = FrozenNetwork {
        inner: RecoveryNetwork::new(p),
        k_f: eval_kf(0.0, p),
        k_u: eval_ku(0.0, p),
    };
    let mut x = start.species();
    simulate_system(&net, &mut x, 0.0, horizon, rng);
    Ok(JumpState {
        v: x[0],
        w_v: x[1],
        w_p: x[2],
        r: x[3],
        p: x[4],
        f: 0,
    })
}

/// One exact realization of the recovery network on `[0, t_end)` from an
/// explicit initial state. Deterministic given the seed.
pub fn simulate_one(p: &ModelParams, t_end: f64, x0: JumpState, seed: u64) -> JumpTrajectory {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    simulate_one_with_rng(p, t_end, x0, &mut rng)
}

/// As [`simulate_one`] but drawing from a caller-owned RNG; lets a burn-in
/// and the main run share one stream.
pub fn simulate_one_with_rng<R: Rng>(
    p: &ModelParams,
    t_end: f64,
    x0: JumpState,
    rng: &mut R,
) -> JumpTrajectory {
    let net = RecoveryNetwork::new(p);
    let mut x = x0.species();
    let events = simulate_system(&net, &mut x, 0.0, t_end, rng);
    JumpTrajectory {
        initial: x0,
        events: events
            .into_iter()
            .map(|(t, r)| (t, ReactionId::from_index(r)))
            .collect(),
    }
}

/// Stable counter-based split of a base seed into per-run seeds
/// (SplitMix64 finalizer over `seed0 + i * golden`), identical on every
/// platform.
pub fn derive_run_seed(seed0: u64, run: u64) -> u64 {
    let mut z = seed0
        .wrapping_add(run.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// RNG for run `i` of an ensemble.
pub fn run_rng(seed0: u64, run: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(derive_run_seed(seed0, run))
}
