//! Reaction network core: species state, time-varying rates and the ODE
//! right-hand side.
//!
//! Species order is fixed as `(V, W_V, W_P, R, P)` with the cumulative fusion
//! counter `F` appended as a sixth component in the extended system. The five
//! reaction channels are
//!
//! ```text
//! V + P  -- k_R    -->  R            (priming)
//! R      -- k_U(t) -->  V + P        (unpriming)
//! R      -- k_F(t) -->  W_V + W_P    (fusion, increments F)
//! W_V    -- g_V    -->  V            (vesicle recovery)
//! W_P    -- g_P    -->  P            (site recovery)
//! ```
//!
//! Each flux term is computed once and reused in every component, so the two
//! conservation sums `R + P + W_P` and `R + V + W_V` are structural zeros of
//! the right-hand side rather than numerical coincidences.

use crate::params::ModelParams;

/// Number of species in the reduced state.
pub const N_SPECIES: usize = 5;
/// Dimension of the extended state (species plus fusion counter).
pub const EXT_DIM: usize = 6;

/// Component indices into extended state arrays.
pub mod idx {
    pub const V: usize = 0;
    pub const W_V: usize = 1;
    pub const W_P: usize = 2;
    pub const R: usize = 3;
    pub const P: usize = 4;
    pub const F: usize = 5;
}

/// Gaussian terms further than this many widths from `t` are skipped; the
/// discarded contribution is below `exp(-32) < 1.3e-14` of each peak.
pub const GAUSS_CUTOFF_SIGMAS: f64 = 8.0;

/// Deterministic species state `(V, W_V, W_P, R, P)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateVec {
    pub v: f64,
    pub w_v: f64,
    pub w_p: f64,
    pub r: f64,
    pub p: f64,
}

impl StateVec {
    pub const ZERO: StateVec = StateVec {
        v: 0.0,
        w_v: 0.0,
        w_p: 0.0,
        r: 0.0,
        p: 0.0,
    };

    pub fn to_array(self) -> [f64; N_SPECIES] {
        [self.v, self.w_v, self.w_p, self.r, self.p]
    }

    pub fn from_array(a: [f64; N_SPECIES]) -> Self {
        StateVec {
            v: a[idx::V],
            w_v: a[idx::W_V],
            w_p: a[idx::W_P],
            r: a[idx::R],
            p: a[idx::P],
        }
    }

    /// Extend with a fusion counter value.
    pub fn extend(self, f: f64) -> [f64; EXT_DIM] {
        [self.v, self.w_v, self.w_p, self.r, self.p, f]
    }
}

/// Fusion rate `k_F(t)`: logistic baseline plus the Gaussian peak train.
pub fn eval_kf(t: f64, p: &ModelParams) -> f64 {
    let s = &p.kf_shape;
    let mut rate = s.m0 * logistic(s.m1 * (t - s.m2));
    let reach = GAUSS_CUTOFF_SIGMAS * s.sigma;
    // stim_times is sorted; only peaks within reach contribute.
    let lo = s.stim_times.partition_point(|&c| c < t - reach);
    for i in lo..s.stim_times.len() {
        let d = s.stim_times[i] - t;
        if d > reach {
            break;
        }
        rate += s.amplitudes[i] * (-0.5 * (d / s.sigma).powi(2)).exp();
    }
    rate
}

/// Analytic time derivative of [`eval_kf`].
pub fn eval_kf_dt(t: f64, p: &ModelParams) -> f64 {
    let s = &p.kf_shape;
    let l = logistic(s.m1 * (t - s.m2));
    let mut d = s.m0 * s.m1 * l * (1.0 - l);
    let reach = GAUSS_CUTOFF_SIGMAS * s.sigma;
    let lo = s.stim_times.partition_point(|&c| c < t - reach);
    for i in lo..s.stim_times.len() {
        let dev = t - s.stim_times[i];
        if -dev > reach {
            break;
        }
        d += s.amplitudes[i] * (-0.5 * (dev / s.sigma).powi(2)).exp() * (-dev / s.sigma.powi(2));
    }
    d
}

/// Unpriming rate `k_U(t)`: monotone nonincreasing sigmoid from
/// `kU_max + kU_min` down to `kU_min`.
pub fn eval_ku(t: f64, p: &ModelParams) -> f64 {
    let s = &p.ku_shape;
    s.ku_max * (1.0 - logistic(s.m3 * (t - s.m4))) + s.ku_min
}

/// Analytic time derivative of [`eval_ku`].
pub fn eval_ku_dt(t: f64, p: &ModelParams) -> f64 {
    let s = &p.ku_shape;
    let l = logistic(s.m3 * (t - s.m4));
    -s.ku_max * s.m3 * l * (1.0 - l)
}

/// Upper bound of `k_F` over `[t0, t1]`, exact for the monotone baseline and
/// a per-term supremum for the Gaussian train. Used as an SSA majorant.
pub fn kf_upper_bound(t0: f64, t1: f64, p: &ModelParams) -> f64 {
    let s = &p.kf_shape;
    let mut bound = s.m0 * logistic(s.m1 * (t1 - s.m2));
    let reach = GAUSS_CUTOFF_SIGMAS * s.sigma;
    let lo = s.stim_times.partition_point(|&c| c < t0 - reach);
    for i in lo..s.stim_times.len() {
        let c = s.stim_times[i];
        if c > t1 + reach {
            break;
        }
        // distance from the window to the peak center (zero if inside)
        let d = if c < t0 {
            t0 - c
        } else if c > t1 {
            c - t1
        } else {
            0.0
        };
        bound += s.amplitudes[i] * (-0.5 * (d / s.sigma).powi(2)).exp();
    }
    bound
}

/// Upper bound of `k_U` over `[t0, t1]`; exact since `k_U` is nonincreasing.
pub fn ku_upper_bound(t0: f64, _t1: f64, p: &ModelParams) -> f64 {
    eval_ku(t0, p)
}

/// Analytic integral of `k_F` over `[t0, t1]` (softplus baseline plus erf
/// terms for the Gaussian train).
pub fn kf_integral(t0: f64, t1: f64, p: &ModelParams) -> f64 {
    let s = &p.kf_shape;
    let base = if s.m1 > 0.0 {
        s.m0 / s.m1 * (softplus(s.m1 * (t1 - s.m2)) - softplus(s.m1 * (t0 - s.m2)))
    } else {
        // m1 = 0 degenerates to a constant baseline m0/2
        0.5 * s.m0 * (t1 - t0)
    };
    let scale = s.sigma * (std::f64::consts::PI / 2.0).sqrt();
    let sqrt2_sigma = std::f64::consts::SQRT_2 * s.sigma;
    let mut gauss = 0.0;
    for (c, a) in s.stim_times.iter().zip(&s.amplitudes) {
        gauss += a * scale * (libm::erf((t1 - c) / sqrt2_sigma) - libm::erf((t0 - c) / sqrt2_sigma));
    }
    base + gauss
}

#[inline]
fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
#[inline]
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Per-channel fluxes at `(t, x)`; shared by the RHS components so that the
/// conservation sums cancel structurally.
#[inline]
fn fluxes(t: f64, x: &StateVec, p: &ModelParams) -> [f64; 5] {
    let bind = p.k_r * x.v * x.p;
    let unprime = eval_ku(t, p) * x.r;
    let fuse = eval_kf(t, p) * x.r;
    let recover_v = p.g_v * x.w_v;
    let recover_p = p.g_p * x.w_p;
    [bind, unprime, fuse, recover_v, recover_p]
}

/// Reaction rate equation right-hand side `h(x, t)`.
pub fn rre_rhs(t: f64, x: &StateVec, p: &ModelParams) -> StateVec {
    let [bind, unprime, fuse, recover_v, recover_p] = fluxes(t, x, p);
    StateVec {
        v: -bind + recover_v + unprime,
        w_v: fuse - recover_v,
        w_p: fuse - recover_p,
        r: bind - fuse - unprime,
        p: -bind + recover_p + unprime,
    }
}

/// Extended right-hand side including the fusion counter: sixth component is
/// `dF/dt = k_F(t) R`.
pub fn extended_rhs(t: f64, y: &[f64; EXT_DIM], p: &ModelParams) -> [f64; EXT_DIM] {
    let x = StateVec {
        v: y[idx::V],
        w_v: y[idx::W_V],
        w_p: y[idx::W_P],
        r: y[idx::R],
        p: y[idx::P],
    };
    let [bind, unprime, fuse, recover_v, recover_p] = fluxes(t, &x, p);
    [
        -bind + recover_v + unprime,
        fuse - recover_v,
        fuse - recover_p,
        bind - fuse - unprime,
        -bind + recover_p + unprime,
        fuse,
    ]
}

/// Jacobian of [`extended_rhs`] with respect to the extended state. The `F`
/// column is identically zero; entries depend on the state only through the
/// bilinear priming term.
pub fn jacobian(t: f64, x: &StateVec, p: &ModelParams) -> [[f64; EXT_DIM]; EXT_DIM] {
    let kf = eval_kf(t, p);
    let ku = eval_ku(t, p);
    let krp = p.k_r * x.p;
    let krv = p.k_r * x.v;
    let (gv, gp) = (p.g_v, p.g_p);
    [
        [-krp, gv, 0.0, ku, -krv, 0.0],
        [0.0, -gv, 0.0, kf, 0.0, 0.0],
        [0.0, 0.0, -gp, kf, 0.0, 0.0],
        [krp, 0.0, 0.0, -(kf + ku), krv, 0.0],
        [-krp, 0.0, gp, ku, -krv, 0.0],
        [0.0, 0.0, 0.0, kf, 0.0, 0.0],
    ]
}
