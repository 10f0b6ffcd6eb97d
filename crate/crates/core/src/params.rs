//! Model parameters: rate constants, rate-function shapes and population totals.
//!
//! `ModelParams` is the single source of truth shared by the deterministic and
//! stochastic engines. The bundled defaults reproduce the reference parameter
//! set: a 100 Hz stimulus train of 100 Gaussian fusion-rate peaks riding on a
//! logistic baseline, a sigmoid unpriming rate that shuts off at stimulation
//! onset, and second-order priming between free vesicles and free sites.

use crate::error::{CoreError, Result};
use crate::signal::ImpulseKernel;
use serde::{Deserialize, Serialize};

/// Shape of the time-dependent fusion rate
/// `k_F(t) = m0 / (1 + exp(-m1 (t - m2))) + sum_i a_i exp(-0.5 (t - t_stim_i)^2 / sigma^2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KfShape {
    /// Baseline supremum, 1/s.
    pub m0: f64,
    /// Baseline steepness, 1/s.
    pub m1: f64,
    /// Baseline midpoint time, s (absolute).
    pub m2: f64,
    /// Gaussian peak width, s.
    pub sigma: f64,
    /// Peak center times, s (absolute, strictly increasing).
    pub stim_times: Vec<f64>,
    /// Peak amplitudes, 1/s (same length as `stim_times`).
    pub amplitudes: Vec<f64>,
}

/// Shape of the time-dependent unpriming rate
/// `k_U(t) = kU_max (1 - 1 / (1 + exp(-m3 (t - m4)))) + kU_min`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KuShape {
    /// Sigmoid steepness, 1/s.
    pub m3: f64,
    /// Sigmoid midpoint time, s (absolute).
    pub m4: f64,
    /// Late-time floor, 1/s.
    #[serde(rename = "kU_min")]
    pub ku_min: f64,
    /// Pre-onset plateau above the floor, 1/s.
    #[serde(rename = "kU_max")]
    pub ku_max: f64,
}

/// Full parameter set of the recovery network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    /// Priming rate constant (per vesicle and site), 1/s.
    #[serde(rename = "k_R")]
    pub k_r: f64,
    /// Vesicle recovery rate, 1/s.
    #[serde(rename = "g_V")]
    pub g_v: f64,
    /// Release-site recovery rate, 1/s.
    #[serde(rename = "g_P")]
    pub g_p: f64,
    /// Total number of release sites.
    pub n_sites: u32,
    /// Total number of vesicles.
    pub n_ves: u32,
    /// Stimulation onset anchor, s.
    pub t_start: f64,
    #[serde(rename = "kF_shape")]
    pub kf_shape: KfShape,
    #[serde(rename = "kU_shape")]
    pub ku_shape: KuShape,
    /// Postsynaptic impulse response; defaults to the reference kernel.
    #[serde(default = "ImpulseKernel::paper_default")]
    pub impulse_kernel: ImpulseKernel,
}

/// Reference fusion-peak amplitudes `a_1 ... a_100` in 1/s.
pub const PAPER_AMPLITUDES: [f64; 100] = [
    2556.0, 2688.0, 2786.0, 2862.0, 2944.0, 3015.0, 3081.0, 3142.0, 3205.0, 3243.0,
    3290.0, 3323.0, 3365.0, 3382.0, 3375.0, 3387.0, 3392.0, 3367.0, 3355.0, 3342.0,
    3330.0, 3322.0, 3314.0, 3310.0, 3307.0, 3312.0, 3308.0, 3311.0, 3315.0, 3334.0,
    3327.0, 3330.0, 3332.0, 3335.0, 3338.0, 3345.0, 3355.0, 3350.0, 3351.0, 3352.0,
    3354.0, 3361.0, 3360.0, 3367.0, 3367.0, 3368.0, 3370.0, 3367.0, 3377.0, 3371.0,
    3373.0, 3377.0, 3379.0, 3370.0, 3372.0, 3375.0, 3372.0, 3377.0, 3373.0, 3373.0,
    3373.0, 3373.0, 3385.0, 3373.0, 3390.0, 3375.0, 3374.0, 3376.0, 3375.0, 3378.0,
    3375.0, 3375.0, 3377.0, 3377.0, 3382.0, 3375.0, 3375.0, 3377.0, 3375.0, 3383.0,
    3377.0, 3375.0, 3377.0, 3376.0, 3382.0, 3377.0, 3376.0, 3377.0, 3376.0, 3383.0,
    3378.0, 3396.0, 3376.0, 3377.0, 3376.0, 3377.0, 3383.0, 3378.0, 3376.0, 3377.0,
];

impl ModelParams {
    /// Reference parameter set (stimulation anchored at `t_start = 0.05 s`,
    /// one release site serving ten vesicles).
    ///
    /// Times derived from `t_start` (`m2 = t_start + 0.174`,
    /// `m4 = t_start - 0.0014`, `t_stim_i = t_start + i * 0.01`) are built on
    /// an exact millisecond grid so the stored values carry no summation
    /// residue and serialize as the plain decimals.
    pub fn paper_default() -> Self {
        let t_start = 0.05;
        let stim_times: Vec<f64> = (1..=100).map(|i| (50.0 + 10.0 * i as f64) / 1000.0).collect();
        ModelParams {
            k_r: 12.9,
            g_v: 0.4,
            g_p: 50.0,
            n_sites: 1,
            n_ves: 10,
            t_start,
            kf_shape: KfShape {
                m0: 397.0,
                m1: 33.3,
                m2: 0.224,
                sigma: 9.53e-4,
                stim_times,
                amplitudes: PAPER_AMPLITUDES.to_vec(),
            },
            ku_shape: KuShape {
                m3: 27318.0,
                m4: 0.0486,
                ku_min: 1.02e-8,
                ku_max: 334.0,
            },
            impulse_kernel: ImpulseKernel::paper_default(),
        }
    }

    /// Check all structural invariants, collecting every violation.
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        let positive = |v: f64, name: &str, bad: &mut Vec<String>| {
            if !(v > 0.0) || !v.is_finite() {
                bad.push(format!("{name} must be positive and finite (got {v})"));
            }
        };
        let nonneg = |v: f64, name: &str, bad: &mut Vec<String>| {
            if !(v >= 0.0) || !v.is_finite() {
                bad.push(format!("{name} must be nonnegative and finite (got {v})"));
            }
        };
        positive(self.k_r, "k_R", &mut bad);
        positive(self.g_v, "g_V", &mut bad);
        positive(self.g_p, "g_P", &mut bad);
        if self.n_sites < 1 {
            bad.push("n_sites must be >= 1".into());
        }
        if self.n_ves < 1 {
            bad.push("n_ves must be >= 1".into());
        }
        if !self.t_start.is_finite() {
            bad.push(format!("t_start must be finite (got {})", self.t_start));
        }
        nonneg(self.kf_shape.m0, "kF_shape.m0", &mut bad);
        nonneg(self.kf_shape.m1, "kF_shape.m1", &mut bad);
        if !self.kf_shape.m2.is_finite() {
            bad.push("kF_shape.m2 must be finite".into());
        }
        positive(self.kf_shape.sigma, "kF_shape.sigma", &mut bad);
        if self.kf_shape.amplitudes.len() != self.kf_shape.stim_times.len() {
            bad.push(format!(
                "kF_shape.amplitudes length {} does not match stim_times length {}",
                self.kf_shape.amplitudes.len(),
                self.kf_shape.stim_times.len()
            ));
        }
        for (i, a) in self.kf_shape.amplitudes.iter().enumerate() {
            if !(*a >= 0.0) || !a.is_finite() {
                bad.push(format!("kF_shape.amplitudes[{i}] must be nonnegative (got {a})"));
            }
        }
        for w in self.kf_shape.stim_times.windows(2) {
            if !(w[1] > w[0]) {
                bad.push(format!(
                    "kF_shape.stim_times must be strictly increasing ({} !< {})",
                    w[0], w[1]
                ));
                break;
            }
        }
        nonneg(self.ku_shape.m3, "kU_shape.m3", &mut bad);
        if !self.ku_shape.m4.is_finite() {
            bad.push("kU_shape.m4 must be finite".into());
        }
        nonneg(self.ku_shape.ku_min, "kU_shape.kU_min", &mut bad);
        nonneg(self.ku_shape.ku_max, "kU_shape.kU_max", &mut bad);
        if let Err(CoreError::InvalidParams(mut kernel_bad)) = self.impulse_kernel.validate() {
            bad.append(&mut kernel_bad);
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(CoreError::InvalidParams(bad))
        }
    }

    /// Population totals as floats, in (sites, vesicles) order.
    pub fn totals(&self) -> (f64, f64) {
        (f64::from(self.n_sites), f64::from(self.n_ves))
    }
}
