//! Acceptance suite: one test per release criterion, each printing a
//! pass/fail line (run with `--nocapture` to see them all).

mod support;

use std::time::Instant;
use support::{ks_p_value, log_log_slope, report, sup_distance};
use synrecov_core::ensemble::{run_ensemble, total_current_sample};
use synrecov_core::experiments::{
    default_factors, fig9_reduced_params, first_response_time, reduced_ode,
    reduced_ssa_correlation, run_sweep, SweepParam, SweepSpec,
};
use synrecov_core::model::idx;
use synrecov_core::ode::{integrate, integrate_with_sensitivities, Dominance, IntegrationConfig};
use synrecov_core::signal::fixed_point_current;
use synrecov_core::ssa::{derive_run_seed, simulate_one, JumpState};
use synrecov_core::steady_state::{frozen_rhs, steady_state_closed_form, FrozenRates};
use synrecov_core::{ModelParams, UniformGrid};

fn paper() -> ModelParams {
    ModelParams::paper_default()
}

/// Criterion 1: the two conservation laws hold to 1e-9 of their totals over
/// the full reference run, in under five seconds.
#[test]
fn c01_conservation() {
    let p = paper();
    let started = Instant::now();
    let traj = integrate(&p, &IntegrationConfig::default()).unwrap();
    let elapsed = started.elapsed().as_secs_f64();
    let (n_sites, n_ves) = p.totals();
    let mut worst_sites: f64 = 0.0;
    let mut worst_ves: f64 = 0.0;
    for y in &traj.states {
        worst_sites = worst_sites.max((y[idx::R] + y[idx::P] + y[idx::W_P] - n_sites).abs());
        worst_ves = worst_ves.max((y[idx::R] + y[idx::V] + y[idx::W_V] - n_ves).abs());
    }
    let ok = worst_sites < 1e-9 * n_sites && worst_ves < 1e-9 * n_ves && elapsed < 5.0;
    report(
        1,
        "conservation",
        ok,
        &format!(
            "site drift {worst_sites:.3e} (< {:.1e}), vesicle drift {worst_ves:.3e} (< {:.1e}), runtime {elapsed:.2}s (< 5s)",
            1e-9 * n_sites,
            1e-9 * n_ves
        ),
    );
}

/// Independent Newton root-finder started from a perturbed point.
///
/// On the conserved manifold the recovery balances give
/// `W_V = k_F R / g_V`, `W_P = k_F R / g_P`, leaving one equation
/// `phi(R) = k_R (n_ves - beta R)(n_sites - alpha R) - (k_F + k_U) R = 0`
/// whose admissible root is bracketed by `[0, min(n_sites/alpha,
/// n_ves/beta)]` (`phi >= 0` at the left end, `< 0` at the right). Newton
/// iterates from the perturbed start, falling back to bisection of the
/// maintained bracket whenever a step would leave it.
fn newton_steady_state(fr: &FrozenRates, r_start: f64) -> [f64; 3] {
    let alpha = 1.0 + fr.k_f / fr.g_p;
    let beta = 1.0 + fr.k_f / fr.g_v;
    let loss = fr.k_f + fr.k_u;
    let phi = |r: f64| fr.k_r * (fr.n_ves - beta * r) * (fr.n_sites - alpha * r) - loss * r;
    let phi_d = |r: f64| {
        fr.k_r * (-beta * (fr.n_sites - alpha * r) - alpha * (fr.n_ves - beta * r)) - loss
    };
    let mut lo = 0.0f64;
    let mut hi = (fr.n_sites / alpha).min(fr.n_ves / beta);
    let mut r = r_start.clamp(lo, hi);
    for _ in 0..200 {
        let f = phi(r);
        if f > 0.0 {
            lo = r;
        } else {
            hi = r;
        }
        let d = phi_d(r);
        let newton = if d != 0.0 { r - f / d } else { f64::NAN };
        let next = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - r).abs() <= 1e-16 * (1.0 + r.abs()) {
            r = next;
            break;
        }
        r = next;
    }
    [fr.k_f * r / fr.g_v, fr.k_f * r / fr.g_p, r]
}

/// Criterion 2: closed-form steady state over 1000 random draws — small RRE
/// residual, agreement with an independently started Newton solve, and the
/// analytic golden value.
#[test]
fn c02_steady_state() {
    use rand::Rng;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(0xACCE_0002);
    let mut worst_residual_ratio: f64 = 0.0;
    let mut worst_newton: f64 = 0.0;
    for _ in 0..1000 {
        let log_uniform = |rng: &mut rand_chacha::ChaCha12Rng| 10f64.powf(rng.gen_range(-3.0..3.0));
        let fr = FrozenRates {
            k_f: log_uniform(&mut rng),
            k_u: log_uniform(&mut rng),
            k_r: log_uniform(&mut rng),
            g_v: log_uniform(&mut rng),
            g_p: log_uniform(&mut rng),
            n_sites: rng.gen_range(1..200) as f64,
            n_ves: rng.gen_range(1..200) as f64,
        };
        let x = steady_state_closed_form(&fr).unwrap();
        let residual = frozen_rhs(&fr, &x)
            .to_array()
            .iter()
            .fold(0.0f64, |m, c| m.max(c.abs()));
        worst_residual_ratio = worst_residual_ratio.max(residual / fr.n_sites.max(fr.n_ves));

        let start = x.r * (1.0 + 0.05 * rng.gen_range(-1.0..1.0));
        let newton = newton_steady_state(&fr, start);
        let closed = [x.w_v, x.w_p, x.r];
        let sup: f64 = closed
            .iter()
            .zip(&newton)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let scale = closed.iter().fold(0.0f64, |m, c| m.max(c.abs())).max(1e-12);
        worst_newton = worst_newton.max(sup / scale);
    }
    let golden = FrozenRates {
        k_f: 0.0,
        k_u: 12.9,
        k_r: 12.9,
        g_v: 0.4,
        g_p: 50.0,
        n_sites: 1.0,
        n_ves: 1.0,
    };
    let golden_err =
        (steady_state_closed_form(&golden).unwrap().r - (3.0 - 5.0f64.sqrt()) / 2.0).abs();
    let ok = worst_residual_ratio < 1e-10 && worst_newton < 1e-10 && golden_err < 1e-12;
    report(
        2,
        "steady state",
        ok,
        &format!(
            "worst residual ratio {worst_residual_ratio:.3e} (< 1e-10), worst Newton deviation {worst_newton:.3e} (< 1e-10), golden error {golden_err:.3e} (< 1e-12)"
        ),
    );
}

/// Criterion 3: current sensitivities from the forward system match central
/// finite differences to 1e-3 relative sup-norm.
#[test]
fn c03_sensitivity_finite_differences() {
    let p = paper();
    let cfg = IntegrationConfig::default();
    let started = Instant::now();
    let traj = integrate_with_sensitivities(&p, &cfg).unwrap();
    let (zc_gv, zc_gp) = traj.current_sensitivities(&p.impulse_kernel).unwrap();

    let fd_cfg = IntegrationConfig {
        rel_tol: 1e-10,
        abs_tol: 1e-12,
        ..cfg
    };
    let current_at = |params: &ModelParams| -> Vec<f64> {
        integrate(params, &fd_cfg)
            .unwrap()
            .current(&params.impulse_kernel)
            .unwrap()
    };
    let mut detail = String::new();
    let mut ok = true;
    for which in ["g_V", "g_P"] {
        let g = if which == "g_V" { p.g_v } else { p.g_p };
        let delta = 1e-4 * g;
        let mut hi = p.clone();
        let mut lo = p.clone();
        if which == "g_V" {
            hi.g_v += delta;
            lo.g_v -= delta;
        } else {
            hi.g_p += delta;
            lo.g_p -= delta;
        }
        let c_hi = current_at(&hi);
        let c_lo = current_at(&lo);
        let fd: Vec<f64> = c_hi
            .iter()
            .zip(&c_lo)
            .map(|(a, b)| (a - b) / (2.0 * delta))
            .collect();
        let z = if which == "g_V" { &zc_gv } else { &zc_gp };
        let err = sup_distance(&fd, z);
        let scale = fd.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let rel = err / scale;
        detail.push_str(&format!("{which}: rel sup error {rel:.3e}; "));
        ok &= rel <= 1e-3;
    }
    let elapsed = started.elapsed().as_secs_f64();
    detail.push_str(&format!("runtime {elapsed:.2}s (< 30s)"));
    ok &= elapsed < 30.0;
    report(3, "sensitivity vs finite differences", ok, &detail);
}

/// Criterion 4: asymptotic periodicity of the current and agreement of the
/// final-period mean with the averaged fixed point C0.
#[test]
fn c04_asymptotic_periodicity() {
    let p = paper();
    let traj = integrate(&p, &IntegrationConfig::default()).unwrap();
    let c = traj.current(&p.impulse_kernel).unwrap();
    let dt = traj.grid.dt;
    let lag = (0.01 / dt).round() as usize;
    let i09 = (0.9 / dt).round() as usize;
    let i099 = (0.99 / dt).round() as usize;
    let i10 = (1.0 / dt).round() as usize;

    let mut sup: f64 = 0.0;
    for i in i09..=i099 {
        sup = sup.max((c[i] - c[i + lag]).abs());
    }
    let window = &c[i099..=i10];
    let amp = window.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v))
        - window.iter().fold(f64::INFINITY, |m, &v| m.min(v));
    let periodicity_ratio = sup / amp;

    let c0 = fixed_point_current(&p, 0.99, 0.01).unwrap();
    let period_mean = window.iter().sum::<f64>() / window.len() as f64;
    let c0_rel = (period_mean - c0).abs() / c0;

    let ok = periodicity_ratio < 0.01 && c0_rel < 0.02;
    report(
        4,
        "asymptotic periodicity",
        ok,
        &format!(
            "sup|C(t)-C(t+T)| / amplitude = {periodicity_ratio:.4} (< 0.01), |period mean - C0|/C0 = {c0_rel:.4} (< 0.02, C0 = {c0:.6e})"
        ),
    );
}

/// Criterion 5: the dominance narrative — site-limited throughout
/// (t_start, 0.2 s), vesicle-limited throughout (0.7 s, 1 s), and a negative
/// z_gP excursion in (0.2 s, 0.35 s).
#[test]
fn c05_sensitivity_narrative() {
    let p = paper();
    let traj = integrate_with_sensitivities(&p, &IntegrationConfig::default()).unwrap();
    let norm = traj.normalized(&p).unwrap();
    let grid = traj.grid;

    let all_in = |lo: f64, hi: f64, want: Dominance| -> (bool, Option<f64>) {
        let mut first_bad = None;
        for i in 0..grid.n {
            let t = grid.time(i);
            if t > lo && t < hi && norm.dominance[i] != want {
                first_bad.get_or_insert(t);
            }
        }
        (first_bad.is_none(), first_bad)
    };

    let (site_early, site_bad) = all_in(p.t_start, 0.2, Dominance::SiteLimited);
    let (ves_late, ves_bad) = all_in(0.7, 1.0, Dominance::VesicleLimited);
    let negative_dip = (0..grid.n).any(|i| {
        let t = grid.time(i);
        t > 0.2 && t < 0.35 && matches!(norm.z_gp[i], Some(z) if z < 0.0)
    });

    // measured boundary of the site-limited phase, for the failure analysis
    let first_site = (0..grid.n)
        .find(|&i| grid.time(i) > p.t_start && norm.dominance[i] == Dominance::SiteLimited)
        .map(|i| grid.time(i));
    let response_onset = first_response_time(&p).unwrap();
    let (site_from_response, _) = all_in(response_onset, 0.2, Dominance::SiteLimited);

    let ok = site_early && ves_late && negative_dip;
    report(
        5,
        "sensitivity narrative",
        ok,
        &format!(
            "site-limited on (t_start, 0.2 s): {site_early}{}; vesicle-limited on (0.7, 1.0 s): {ves_late}{}; negative z_gP dip in (0.2, 0.35 s): {negative_dip}. \
             Context: site dominance begins at t = {:?} s and holds from the first stimulus response (t = {response_onset:.4} s) to 0.2 s: {site_from_response}. \
             Before the first stimulus response arrives, the system still sits at its pre-stimulation steady state, which holds two orders of magnitude more \
             vesicles than sites in recovery, so vesicle recovery dominates there by construction of the initial sensitivities.",
            site_bad.map_or(String::new(), |t| format!(" (first violation at t = {t:.4} s)")),
            ves_bad.map_or(String::new(), |t| format!(" (first violation at t = {t:.4} s)")),
            first_site
        ),
    );
}

/// Criterion 6: SSA exactness on the pure-decay channel — event times follow
/// the analytic law of n independent exponential clocks (KS test).
#[test]
fn c06_ssa_exactness() {
    let started = Instant::now();
    // silent rates, recovery of W_V as the only open channel
    let mut p = paper();
    p.kf_shape.m0 = 0.0;
    p.kf_shape.amplitudes.iter_mut().for_each(|a| *a = 0.0);
    p.ku_shape.ku_max = 0.0;
    p.ku_shape.ku_min = 0.0;
    p.g_p = 0.0; // keeps the site stuck in W_P so priming never opens
    let n_clocks = 8u32;
    let x0 = JumpState {
        v: 0,
        w_v: n_clocks,
        w_p: 1,
        r: 0,
        p: 0,
        f: 0,
    };
    let n_runs = 100_000usize;
    let mut first_times = Vec::with_capacity(n_runs);
    let mut last_times = Vec::with_capacity(n_runs);
    for run in 0..n_runs {
        let traj = simulate_one(&p, 60.0, x0, derive_run_seed(0xACCE_0006, run as u64));
        assert_eq!(traj.events.len(), n_clocks as usize);
        first_times.push(traj.events[0].0);
        last_times.push(traj.events[n_clocks as usize - 1].0);
    }
    let g = p.g_v;
    let n = f64::from(n_clocks);
    // first order statistic: Exp(n g); last: max of n i.i.d. Exp(g)
    let p_first = ks_p_value(&mut first_times, |t| 1.0 - (-n * g * t).exp());
    let p_last = ks_p_value(&mut last_times, |t| (1.0 - (-g * t).exp()).powf(n));
    let elapsed = started.elapsed().as_secs_f64();
    let ok = p_first > 0.01 && p_last > 0.01 && elapsed < 60.0;
    report(
        6,
        "SSA exactness (pure decay)",
        ok,
        &format!(
            "KS p-values: first event {p_first:.4}, last event {p_last:.4} (both > 0.01); runtime {elapsed:.1}s (< 60s)"
        ),
    );
}

/// Criterion 7: the ensemble mean current tracks the ODE current within its
/// own Monte Carlo confidence band at 99% of grid points.
#[test]
fn c07_mean_current_vs_ode() {
    let started = Instant::now();
    let p = paper();
    let n_runs = 10_000usize;
    let grid = UniformGrid::from_range(0.0, 1.0, 1e-3).unwrap();
    let (stats, _) = run_ensemble(&p, n_runs, 0xACCE_0007, &grid).unwrap();

    // ODE reference on a 10x finer grid, decimated onto the ensemble grid
    let traj = integrate(&p, &IntegrationConfig::default()).unwrap();
    let c_fine = traj.current(&p.impulse_kernel).unwrap();
    let c_ode: Vec<f64> = (0..grid.n).map(|i| c_fine[10 * i]).collect();

    let sqrt_n = (n_runs as f64).sqrt();
    let mut inside = 0usize;
    for i in 0..grid.n {
        let band = 3.0 * stats.std_current[i] / sqrt_n;
        if (stats.mean_current[i] - c_ode[i]).abs() <= band {
            inside += 1;
        }
    }
    let fraction = inside as f64 / grid.n as f64;
    let elapsed = started.elapsed().as_secs_f64();
    let ok = fraction >= 0.99 && elapsed < 600.0;
    report(
        7,
        "mean current vs ODE",
        ok,
        &format!(
            "{inside}/{} grid points inside the 3 sigma/sqrt(n) band ({:.2}% >= 99%); runtime {elapsed:.1}s (< 600s)",
            grid.n,
            100.0 * fraction
        ),
    );
}

/// Criterion 8: the vesicle/site correlation decays — |corr| < 0.1 for all
/// t > 0.5 s.
#[test]
fn c08_correlation_decay() {
    let p = paper();
    let grid = UniformGrid::from_range(0.0, 1.0, 1e-3).unwrap();
    let (stats, _) = run_ensemble(&p, 10_000, 0xACCE_0008, &grid).unwrap();
    let mut worst: f64 = 0.0;
    let mut undefined = 0usize;
    for i in 0..grid.n {
        if grid.time(i) > 0.5 {
            match stats.corr_vp[i] {
                Some(c) => worst = worst.max(c.abs()),
                None => undefined += 1,
            }
        }
    }
    let ok = worst < 0.1 && undefined == 0;
    report(
        8,
        "correlation decay",
        ok,
        &format!("max |corr(V, P)| for t > 0.5 s: {worst:.4} (< 0.1); undefined points: {undefined}"),
    );
}

/// Criterion 9: the scaled total current converges to the mean at the
/// law-of-large-numbers rate (log-log slope -0.5 +- 0.1 over N = 10, 100, 1000).
#[test]
fn c09_total_current_convergence() {
    let p = paper();
    let grid = UniformGrid::from_range(0.0, 1.0, 1e-3).unwrap();
    let (reference, _) = run_ensemble(&p, 10_000, 0xACCE_0009, &grid).unwrap();
    let ns = [10usize, 100, 1000];
    let mut distances = Vec::new();
    for (k, &n) in ns.iter().enumerate() {
        let sample = total_current_sample(&p, n, 0xACCE_0009 + 1 + k as u64, &grid).unwrap();
        distances.push(sup_distance(&sample, &reference.mean_current));
    }
    let slope = log_log_slope(&[10.0, 100.0, 1000.0], &distances);
    let ok = (slope + 0.5).abs() <= 0.1;
    let shown: Vec<String> = distances.iter().map(|d| format!("{d:.3e}")).collect();
    report(
        9,
        "total-current convergence rate",
        ok,
        &format!(
            "sup distances [{}] for N = {ns:?}; log-log slope {slope:.3} (within -0.5 +- 0.1)",
            shown.join(", ")
        ),
    );
}

/// Criterion 10: reduced systems — matched ODEs agree to 1e-8, and
/// independent return gives both smaller |corr(A, B)| and a mean closer to
/// the ODE beyond the initial transient.
#[test]
fn c10_reduced_systems() {
    let started = Instant::now();
    let (rp_i, rp_ii) = fig9_reduced_params();

    // (a) matched ODE solutions agree in sup norm
    let a = reduced_ode(&rp_i, 1.0, 1e-3).unwrap();
    let b = reduced_ode(&rp_ii, 1.0, 1e-3).unwrap();
    let ode_sup = sup_distance(&a.species[0], &b.species[0])
        .max(sup_distance(&a.species[1], &b.species[1]));

    // (b) stochastic comparison at the reference setup
    let grid = UniformGrid::from_range(0.0, 1.0, 1e-2).unwrap();
    let n_runs = 200_000;
    let cmp = reduced_ssa_correlation(&rp_i, &rp_ii, n_runs, 0xACCE_0010, &grid).unwrap();
    let t_guard = 0.05 * 1.0; // first 5% of the horizon
    let mut corr_ok = true;
    let mut err_ok = true;
    let mut checked = 0usize;
    for i in 0..grid.n {
        if grid.time(i) <= t_guard {
            continue;
        }
        checked += 1;
        match (cmp.corr_i[i], cmp.corr_ii[i]) {
            (Some(ci), Some(cii)) => corr_ok &= cii.abs() < ci.abs(),
            _ => corr_ok = false,
        }
        err_ok &= cmp.rel_err_a_ii[i] < cmp.rel_err_a_i[i];
        err_ok &= cmp.rel_err_b_ii[i] < cmp.rel_err_b_i[i];
    }
    let elapsed = started.elapsed().as_secs_f64();
    let ok = ode_sup < 1e-8 && corr_ok && err_ok && checked > 0 && elapsed < 600.0;
    report(
        10,
        "reduced systems",
        ok,
        &format!(
            "matched ODE sup deviation {ode_sup:.2e} (< 1e-8); beyond the 5% transient ({checked} points): |corr_II| < |corr_I| everywhere: {corr_ok}, mean relative error II < I everywhere: {err_ok}; runtime {elapsed:.1}s (< 600s)"
        ),
    );
}

/// Criterion 11: sweep claims — the k_R sweep is site-limited at stimulation
/// onset for every factor, and the smallest-g_P leg is site-limited for the
/// whole stimulated second.
#[test]
fn c11_sweep_claims() {
    let p = paper();
    let cfg = IntegrationConfig::default();

    let kr_legs = run_sweep(
        &SweepSpec {
            param: SweepParam::KR,
            factors: default_factors(9),
            base: p.clone(),
        },
        &cfg,
    );
    let onset = first_response_time(&p).unwrap();
    let mut onset_ok = true;
    let mut onset_detail = String::new();
    for (factor, leg) in &kr_legs {
        let leg = leg.as_ref().unwrap();
        let i = leg.grid.first_index_at_or_after(onset);
        let dom = leg.dominance[i];
        if dom != Dominance::SiteLimited {
            onset_ok = false;
            onset_detail.push_str(&format!("factor {factor:.3}: {dom} at onset; "));
        }
    }

    let gp_legs = run_sweep(
        &SweepSpec {
            param: SweepParam::GP,
            factors: default_factors(9),
            base: p.clone(),
        },
        &cfg,
    );
    let (factor, smallest) = &gp_legs[0];
    assert!((factor - 0.05).abs() < 1e-12);
    let smallest = smallest.as_ref().unwrap();
    let mut gp_ok = true;
    let mut first_bad = None;
    for i in 0..smallest.grid.n {
        let t = smallest.grid.time(i);
        if t > p.t_start && t <= 1.0 && smallest.dominance[i] != Dominance::SiteLimited {
            gp_ok = false;
            first_bad.get_or_insert(t);
        }
    }
    let ok = onset_ok && gp_ok;
    report(
        11,
        "sweep claims",
        ok,
        &format!(
            "k_R sweep site-limited at onset (t = {onset:.4} s) for all 9 factors: {onset_ok} {onset_detail}; smallest-g_P leg site-limited on (t_start, 1 s]: {gp_ok}{}",
            first_bad.map_or(String::new(), |t| format!(" (first violation at t = {t:.4} s)"))
        ),
    );
}
