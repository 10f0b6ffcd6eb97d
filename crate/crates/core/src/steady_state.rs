//! Closed-form steady state of the frozen-rate system and its parameter
//! derivatives.
//!
//! With `k_F` and `k_U` held constant the network has a unique admissible
//! steady state. Writing `alpha = 1 + k_F/g_P`, `beta = 1 + k_F/g_V` and
//! `gamma = (k_F + k_U)/k_R`, the docked population solves
//! `R^2 + p R + q = 0` with
//! `p = -(n_ves/beta + n_sites/alpha + gamma/(alpha beta))` and
//! `q = n_sites n_ves / (alpha beta)`; the admissible root is the smaller one
//! (the other drives `P` negative). The remaining components follow from the
//! recovery balances and the two conservation laws.

use crate::error::{CoreError, Result};
use crate::model::{kf_integral, StateVec};
use crate::model::{eval_kf, eval_ku};
use crate::params::ModelParams;

/// Constant-rate snapshot of the network, the domain of the closed form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrozenRates {
    pub k_f: f64,
    pub k_u: f64,
    pub k_r: f64,
    pub g_v: f64,
    pub g_p: f64,
    pub n_sites: f64,
    pub n_ves: f64,
}

impl FrozenRates {
    /// Freeze the time-varying rates of `p` at time `t`.
    pub fn at_time(p: &ModelParams, t: f64) -> Self {
        let (n_sites, n_ves) = p.totals();
        FrozenRates {
            k_f: eval_kf(t, p),
            k_u: eval_ku(t, p),
            k_r: p.k_r,
            g_v: p.g_v,
            g_p: p.g_p,
            n_sites,
            n_ves,
        }
    }

    fn check(&self) -> Result<()> {
        let ok = self.k_f >= 0.0
            && self.k_u >= 0.0
            && self.k_r > 0.0
            && self.g_v > 0.0
            && self.g_p > 0.0
            && self.n_sites >= 0.0
            && self.n_ves >= 0.0;
        if !ok {
            return Err(CoreError::InvalidParams(vec![format!(
                "frozen rates out of domain: {self:?}"
            )]));
        }
        if self.k_f + self.k_u <= 0.0 {
            return Err(CoreError::DegenerateFrozenRates);
        }
        Ok(())
    }

    /// Quadratic coefficients `(p, q)` for the docked population.
    fn quadratic(&self) -> (f64, f64) {
        let alpha = 1.0 + self.k_f / self.g_p;
        let beta = 1.0 + self.k_f / self.g_v;
        let gamma = (self.k_f + self.k_u) / self.k_r;
        let p = -(self.n_ves / beta + self.n_sites / alpha + gamma / (alpha * beta));
        let q = self.n_sites * self.n_ves / (alpha * beta);
        (p, q)
    }
}

/// Unique admissible steady state of the frozen-rate system.
///
/// The quadratic is solved in the cancellation-free form: the large root by
/// `-p/2 + sqrt(p^2/4 - q)` (both terms positive), the admissible small root
/// by Vieta as `q / R_large`.
pub fn steady_state_closed_form(fr: &FrozenRates) -> Result<StateVec> {
    fr.check()?;
    let (p, q) = fr.quadratic();
    let disc = (p * p / 4.0 - q).max(0.0);
    let r_large = -p / 2.0 + disc.sqrt();
    let r = if r_large > 0.0 { q / r_large } else { 0.0 };
    let alpha = 1.0 + fr.k_f / fr.g_p;
    let beta = 1.0 + fr.k_f / fr.g_v;
    Ok(StateVec {
        v: (fr.n_ves - beta * r).max(0.0),
        w_v: fr.k_f / fr.g_v * r,
        w_p: fr.k_f / fr.g_p * r,
        r,
        p: (fr.n_sites - alpha * r).max(0.0),
    })
}

/// The rejected larger root of the quadratic, exposed for verification: it
/// always implies a negative free-site population when `gamma > 0`.
pub fn steady_state_rejected_root(fr: &FrozenRates) -> Result<f64> {
    fr.check()?;
    let (p, q) = fr.quadratic();
    let disc = (p * p / 4.0 - q).max(0.0);
    Ok(-p / 2.0 + disc.sqrt())
}

/// Derivatives of the steady state with respect to the recovery rates,
/// `(d x_hat / d g_V, d x_hat / d g_P)`.
///
/// Solved from the implicit-function relation `J s + dh/dg = 0` restricted to
/// the conserved manifold: unknowns `(s_WV, s_WP, s_R)` with
/// `s_V = -s_R - s_WV` and `s_P = -s_R - s_WP`.
pub fn steady_state_derivatives(fr: &FrozenRates) -> Result<(StateVec, StateVec)> {
    let x = steady_state_closed_form(fr)?;
    let solve_for = |forcing_wv: f64, forcing_wp: f64| -> Result<StateVec> {
        // rows: W_V balance, W_P balance, R balance (with V, P eliminated)
        let a = [
            [-fr.g_v, 0.0, fr.k_f],
            [0.0, -fr.g_p, fr.k_f],
            [
                -fr.k_r * x.p,
                -fr.k_r * x.v,
                -fr.k_r * (x.p + x.v) - (fr.k_f + fr.k_u),
            ],
        ];
        let b = [-forcing_wv, -forcing_wp, 0.0];
        let s = solve3(a, b).ok_or(CoreError::DegenerateFrozenRates)?;
        let (s_wv, s_wp, s_r) = (s[0], s[1], s[2]);
        Ok(StateVec {
            v: -s_r - s_wv,
            w_v: s_wv,
            w_p: s_wp,
            r: s_r,
            p: -s_r - s_wp,
        })
    };
    // dh/dg_V = (W_V, -W_V, 0, 0, 0); dh/dg_P = (0, 0, -W_P, 0, W_P)
    let d_gv = solve_for(-x.w_v, 0.0)?;
    let d_gp = solve_for(0.0, -x.w_p)?;
    Ok((d_gv, d_gp))
}

/// Right-hand side of the RRE with the rates held constant; the closed-form
/// steady state is its root.
pub fn frozen_rhs(fr: &FrozenRates, x: &StateVec) -> StateVec {
    let bind = fr.k_r * x.v * x.p;
    let unprime = fr.k_u * x.r;
    let fuse = fr.k_f * x.r;
    let recover_v = fr.g_v * x.w_v;
    let recover_p = fr.g_p * x.w_p;
    StateVec {
        v: -bind + recover_v + unprime,
        w_v: fuse - recover_v,
        w_p: fuse - recover_p,
        r: bind - fuse - unprime,
        p: -bind + recover_p + unprime,
    }
}

/// Window-averaged rates for the periodically forced regime: `k_F` averaged
/// analytically over `[t0, t0 + period]`, `k_U` frozen at `t0`.
pub fn averaged_rates(p: &ModelParams, t0: f64, period: f64) -> FrozenRates {
    let (n_sites, n_ves) = p.totals();
    FrozenRates {
        k_f: kf_integral(t0, t0 + period, p) / period,
        k_u: eval_ku(t0, p),
        k_r: p.k_r,
        g_v: p.g_v,
        g_p: p.g_p,
        n_sites,
        n_ves,
    }
}

/// Fixed point of the averaged system: the state the asymptotic periodic
/// orbit oscillates around.
pub fn averaged_fixed_point(p: &ModelParams, t0: f64, period: f64) -> Result<StateVec> {
    steady_state_closed_form(&averaged_rates(p, t0, period))
}

fn solve3(a: [[f64; 3]; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    let mut m = [[0.0f64; 4]; 3];
    for i in 0..3 {
        m[i][..3].copy_from_slice(&a[i]);
        m[i][3] = b[i];
    }
    for col in 0..3 {
        let piv = (col..3).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[piv][col] == 0.0 {
            return None;
        }
        m.swap(col, piv);
        for row in col + 1..3 {
            let f = m[row][col] / m[col][col];
            for k in col..4 {
                m[row][k] -= f * m[col][k];
            }
        }
    }
    let mut x = [0.0f64; 3];
    for i in (0..3).rev() {
        let mut acc = m[i][3];
        for k in i + 1..3 {
            acc -= m[i][k] * x[k];
        }
        x[i] = acc / m[i][i];
    }
    Some(x)
}
