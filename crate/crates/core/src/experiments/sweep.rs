//! Recovery-rate and priming-rate sweeps of the sensitivity time course.

use crate::error::Result;
use crate::grid::UniformGrid;
use crate::ode::{integrate_with_sensitivities, Dominance, IntegrationConfig};
use crate::params::ModelParams;
use rayon::prelude::*;

/// Parameter varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    KR,
    GV,
    GP,
}

impl SweepParam {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepParam::KR => "k_R",
            SweepParam::GV => "g_V",
            SweepParam::GP => "g_P",
        }
    }

    pub fn parse(s: &str) -> Option<SweepParam> {
        match s {
            "k_R" | "kR" | "k_r" => Some(SweepParam::KR),
            "g_V" | "gV" | "g_v" => Some(SweepParam::GV),
            "g_P" | "gP" | "g_p" => Some(SweepParam::GP),
            _ => None,
        }
    }
}

/// One sweep: a parameter, the multiplicative factors and the base set.
#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub param: SweepParam,
    pub factors: Vec<f64>,
    pub base: ModelParams,
}

/// Result of one sweep leg: normalized current sensitivities and dominance
/// on the reporting grid.
#[derive(Debug, Clone)]
pub struct SweepLeg {
    pub factor: f64,
    pub grid: UniformGrid,
    pub z_gv: Vec<Option<f64>>,
    pub z_gp: Vec<Option<f64>>,
    pub dominance: Vec<Dominance>,
}

/// Log-spaced factors over `[1/20, 20]`; for odd `n` the middle factor is
/// exactly `1` (the unscaled reference leg).
pub fn default_factors(n: usize) -> Vec<f64> {
    let ln20 = 20.0f64.ln();
    (0..n)
        .map(|i| {
            let exponent = if n == 1 {
                0.0
            } else {
                ln20 * (2.0 * i as f64 / (n - 1) as f64 - 1.0)
            };
            exponent.exp()
        })
        .collect()
}

/// Base parameters with the swept parameter scaled by `factor`.
pub fn scaled_params(base: &ModelParams, param: SweepParam, factor: f64) -> ModelParams {
    let mut p = base.clone();
    match param {
        SweepParam::KR => p.k_r *= factor,
        SweepParam::GV => p.g_v *= factor,
        SweepParam::GP => p.g_p *= factor,
    }
    p
}

/// Time by which the current response to the first stimulus has fully
/// developed: first peak center plus the Gaussian tail plus the kernel onset
/// delay. Dominance claims "at stimulation onset" are evaluated here.
pub fn first_response_time(p: &ModelParams) -> Option<f64> {
    let first = *p.kf_shape.stim_times.first()?;
    Some(first + 4.0 * p.kf_shape.sigma + p.impulse_kernel.t0)
}

/// Run every leg of the sweep. Legs run concurrently; a failing leg carries
/// its error without aborting the others.
pub fn run_sweep(spec: &SweepSpec, cfg: &IntegrationConfig) -> Vec<(f64, Result<SweepLeg>)> {
    spec.factors
        .par_iter()
        .map(|&factor| {
            let leg = (|| {
                let p = scaled_params(&spec.base, spec.param, factor);
                p.validate()?;
                let traj = integrate_with_sensitivities(&p, cfg)?;
                let norm = traj.normalized(&p)?;
                Ok(SweepLeg {
                    factor,
                    grid: traj.grid,
                    z_gv: norm.z_gv,
                    z_gp: norm.z_gp,
                    dominance: norm.dominance,
                })
            })();
            (factor, leg)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factor_grid_is_symmetric_with_unit_middle() {
        let f = default_factors(9);
        assert_eq!(f.len(), 9);
        assert_eq!(f[4], 1.0);
        assert!((f[0] - 0.05).abs() < 1e-15);
        assert!((f[8] - 20.0).abs() < 1e-12);
        for i in 0..4 {
            assert!((f[i] * f[8 - i] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn unit_factor_leg_matches_base_run_bitwise() {
        let base = ModelParams::paper_default();
        let cfg = IntegrationConfig {
            t_end: 0.12,
            output_dt: 1e-3,
            ..Default::default()
        };
        let spec = SweepSpec {
            param: SweepParam::GV,
            factors: vec![1.0],
            base: base.clone(),
        };
        let legs = run_sweep(&spec, &cfg);
        let leg = legs[0].1.as_ref().unwrap();

        let traj = integrate_with_sensitivities(&base, &cfg).unwrap();
        let norm = traj.normalized(&base).unwrap();
        assert_eq!(leg.z_gv, norm.z_gv);
        assert_eq!(leg.z_gp, norm.z_gp);
    }

    #[test]
    fn failing_leg_does_not_abort_the_sweep() {
        let base = ModelParams::paper_default();
        let spec = SweepSpec {
            param: SweepParam::GP,
            // a negative factor makes g_P invalid for that leg only
            factors: vec![-1.0, 1.0],
            base,
        };
        let cfg = IntegrationConfig {
            t_end: 0.06,
            output_dt: 1e-3,
            ..Default::default()
        };
        let legs = run_sweep(&spec, &cfg);
        assert!(legs[0].1.is_err());
        assert!(legs[1].1.is_ok());
    }

    #[test]
    fn response_onset_is_just_after_the_first_peak() {
        let p = ModelParams::paper_default();
        let t = first_response_time(&p).unwrap();
        assert!(t > 0.06 && t < 0.07, "{t}");
    }
}
