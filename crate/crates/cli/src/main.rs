//! `synrecov`: command-line front end for the recovery-network simulators.
//!
//! Exit codes: 0 success, 2 configuration/validation error, 3 numerical
//! failure, 4 I/O error. All stochastic subcommands take their randomness
//! exclusively from `--seed`.

mod io;
mod svg;

use clap::{Args, Parser, Subcommand};
use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use synrecov_core::ensemble::{run_ensemble, total_current_sample};
use synrecov_core::experiments::{
    calibrate, default_factors, fig9_reduced_params, reduced_ssa_correlation, run_sweep,
    NelderMeadOptions, SweepParam, SweepSpec, DEFAULT_PAIRED_PULSE_TARGET,
};
use synrecov_core::ode::{integrate, integrate_with_sensitivities, IntegrationConfig};
use synrecov_core::signal::current_from_events;
use synrecov_core::ssa::{run_rng, sample_stationary_initial, simulate_one_with_rng};
use synrecov_core::steady_state::{frozen_rhs, steady_state_closed_form, FrozenRates};
use synrecov_core::{CoreError, ModelParams, UniformGrid};

use crate::io::{load_params, Cell, Csv};
use crate::svg::{render_line_plot, Series};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numerics(String),
    Io(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) | CliError::Numerics(m) | CliError::Io(m) => f.write_str(m),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerics(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::InvalidParams(_)
            | CoreError::InvalidConfig(_)
            | CoreError::NonUniformGrid(_)
            | CoreError::NotEnoughRuns(_)
            | CoreError::InvalidSeries(_) => CliError::Config(e.to_string()),
            CoreError::DegenerateFrozenRates
            | CoreError::StepSizeUnderflow { .. }
            | CoreError::NegativeState { .. }
            | CoreError::TooFewPeaks { .. } => CliError::Numerics(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "synrecov",
    version,
    about = "Deterministic and stochastic simulation of a vesicle/release-site recovery network"
)]
struct Cli {
    /// Parameter file (JSON); defaults to the built-in reference set.
    #[arg(long, global = true, value_name = "PATH")]
    params: Option<PathBuf>,
    /// Output directory for generated files.
    #[arg(long, global = true, default_value = ".", value_name = "DIR")]
    out: PathBuf,
    /// Random seed; required by the stochastic subcommands.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Worker thread cap (overrides SYNRECOV_THREADS).
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct OdeOpts {
    /// End of the simulated window, s.
    #[arg(long = "t-end", default_value_t = 1.0)]
    t_end: f64,
    /// Reporting grid spacing, s.
    #[arg(long = "output-dt", default_value_t = 1e-4)]
    output_dt: f64,
    #[arg(long = "rel-tol", default_value_t = 1e-8)]
    rel_tol: f64,
    #[arg(long = "abs-tol", default_value_t = 1e-10)]
    abs_tol: f64,
    /// Step ceiling outside stimulation windows, s.
    #[arg(long = "max-step", default_value_t = 1e-2)]
    max_step: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form steady state of the frozen-rate system (CSV row on stdout).
    SteadyState {
        /// Freeze the time-varying rates at this time, s.
        #[arg(long, default_value_t = 0.0)]
        time: f64,
        /// Override the frozen fusion rate, 1/s.
        #[arg(long)]
        kf: Option<f64>,
        /// Override the frozen unpriming rate, 1/s.
        #[arg(long)]
        ku: Option<f64>,
    },
    /// Integrate the reaction rate equation (optionally with sensitivities).
    SimulateOde {
        #[command(flatten)]
        ode: OdeOpts,
        /// Also integrate the forward sensitivities and label dominance.
        #[arg(long)]
        sensitivities: bool,
        /// Emit a static SVG plot of the output current.
        #[arg(long)]
        svg: bool,
    },
    /// One exact realization of the reaction jump process.
    SimulateSsa {
        #[arg(long = "t-end", default_value_t = 1.0)]
        t_end: f64,
        #[arg(long = "output-dt", default_value_t = 1e-3)]
        output_dt: f64,
        #[arg(long)]
        svg: bool,
    },
    /// Monte Carlo ensemble statistics (means, deviations, correlation).
    Ensemble {
        #[arg(long, default_value_t = 10_000)]
        runs: usize,
        #[arg(long = "t-end", default_value_t = 1.0)]
        t_end: f64,
        #[arg(long = "output-dt", default_value_t = 1e-3)]
        output_dt: f64,
        /// Also report the deviation of the N-site average current.
        #[arg(long = "site-count")]
        site_count: Option<u64>,
        #[arg(long)]
        svg: bool,
    },
    /// One realization of the scaled total current over N sites.
    TotalCurrent {
        /// Number of independent release sites summed.
        #[arg(short = 'N', long = "N")]
        n_sites: usize,
        #[arg(long = "t-end", default_value_t = 1.0)]
        t_end: f64,
        #[arg(long = "output-dt", default_value_t = 1e-3)]
        output_dt: f64,
        #[arg(long)]
        svg: bool,
    },
    /// Sensitivity sweep of k_R, g_V or g_P over log-spaced factors.
    Sweep {
        /// Parameter to vary: k_R, g_V or g_P.
        #[arg(long)]
        param: String,
        /// Number of log-spaced factors between 1/20 and 20.
        #[arg(long, default_value_t = 9)]
        factors: usize,
        #[arg(long = "t-end", default_value_t = 1.0)]
        t_end: f64,
        #[arg(long = "output-dt", default_value_t = 1e-3)]
        output_dt: f64,
        #[arg(long)]
        svg: bool,
    },
    /// Reduced-system comparison (standard binding vs independent return).
    Reduced {
        /// Figure setup to reproduce (only 9 is defined).
        #[arg(long, default_value_t = 9)]
        figure: u32,
        #[arg(long, default_value_t = 200_000)]
        runs: usize,
        #[arg(long = "t-end", default_value_t = 1.0)]
        t_end: f64,
        #[arg(long = "output-dt", default_value_t = 1e-2)]
        output_dt: f64,
        #[arg(long)]
        svg: bool,
    },
    /// Fit (k_R, kU_max) to a paired-pulse target ratio.
    Calibrate {
        /// Target ratio of the second to first fusion-flux peak.
        #[arg(long, default_value_t = DEFAULT_PAIRED_PULSE_TARGET)]
        target: f64,
        #[arg(long = "k-r-min")]
        k_r_min: Option<f64>,
        #[arg(long = "k-r-max")]
        k_r_max: Option<f64>,
        #[arg(long = "ku-max-min")]
        ku_max_min: Option<f64>,
        #[arg(long = "ku-max-max")]
        ku_max_max: Option<f64>,
        #[arg(long = "max-iters", default_value_t = 200)]
        max_iters: usize,
    },
    /// Validate a parameter file and report every violated invariant.
    ValidateParams,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    init_threads(cli.threads)?;
    let params = match &cli.params {
        Some(path) => load_params(path)?,
        None => ModelParams::paper_default(),
    };
    match cli.command {
        Command::SteadyState { time, kf, ku } => cmd_steady_state(&params, time, kf, ku),
        Command::SimulateOde {
            ode,
            sensitivities,
            svg,
        } => cmd_simulate_ode(&params, &cli.out, &ode, sensitivities, svg),
        Command::SimulateSsa {
            t_end,
            output_dt,
            svg,
        } => cmd_simulate_ssa(&params, &cli.out, require_seed(&cli)?, t_end, output_dt, svg),
        Command::Ensemble {
            runs,
            t_end,
            output_dt,
            site_count,
            svg,
        } => cmd_ensemble(
            &params,
            &cli.out,
            require_seed(&cli)?,
            runs,
            t_end,
            output_dt,
            site_count,
            svg,
        ),
        Command::TotalCurrent {
            n_sites,
            t_end,
            output_dt,
            svg,
        } => cmd_total_current(
            &params,
            &cli.out,
            require_seed(&cli)?,
            n_sites,
            t_end,
            output_dt,
            svg,
        ),
        Command::Sweep {
            param,
            factors,
            t_end,
            output_dt,
            svg,
        } => cmd_sweep(&params, &cli.out, &param, factors, t_end, output_dt, svg),
        Command::Reduced {
            figure,
            runs,
            t_end,
            output_dt,
            svg,
        } => cmd_reduced(
            &cli.out,
            require_seed(&cli)?,
            figure,
            runs,
            t_end,
            output_dt,
            svg,
        ),
        Command::Calibrate {
            target,
            k_r_min,
            k_r_max,
            ku_max_min,
            ku_max_max,
            max_iters,
        } => cmd_calibrate(
            &params,
            &cli.out,
            target,
            (k_r_min, k_r_max),
            (ku_max_min, ku_max_max),
            max_iters,
        ),
        Command::ValidateParams => {
            let path = cli
                .params
                .as_ref()
                .ok_or_else(|| CliError::Config("validate-params requires --params".into()))?;
            println!("parameters OK: {}", path.display());
            Ok(())
        }
    }
}

fn require_seed(cli: &Cli) -> Result<u64, CliError> {
    cli.seed
        .ok_or_else(|| CliError::Config("--seed is required for stochastic subcommands".into()))
}

fn init_threads(flag: Option<usize>) -> Result<(), CliError> {
    let n = flag.or_else(|| {
        std::env::var("SYNRECOV_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(n) = n {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| CliError::Config(format!("cannot configure thread pool: {e}")))?;
    }
    Ok(())
}

fn cmd_steady_state(
    p: &ModelParams,
    time: f64,
    kf: Option<f64>,
    ku: Option<f64>,
) -> Result<(), CliError> {
    p.validate()?;
    let mut fr = FrozenRates::at_time(p, time);
    if let Some(kf) = kf {
        fr.k_f = kf;
    }
    if let Some(ku) = ku {
        fr.k_u = ku;
    }
    let x = steady_state_closed_form(&fr)?;
    let residual = frozen_rhs(&fr, &x)
        .to_array()
        .iter()
        .fold(0.0f64, |m, c| m.max(c.abs()));
    let mut csv = Csv::new(&["V", "W_V", "W_P", "R", "P", "residual_inf"]);
    csv.row(&[
        Cell::F(x.v),
        Cell::F(x.w_v),
        Cell::F(x.w_p),
        Cell::F(x.r),
        Cell::F(x.p),
        Cell::F(residual),
    ]);
    print!("{}", csv.into_string());
    Ok(())
}

fn ode_config(o: &OdeOpts) -> IntegrationConfig {
    IntegrationConfig {
        t_end: o.t_end,
        output_dt: o.output_dt,
        rel_tol: o.rel_tol,
        abs_tol: o.abs_tol,
        max_step: o.max_step,
    }
}

const STATE_COLS: [&str; 6] = ["V", "W_V", "W_P", "R", "P", "F"];

fn cmd_simulate_ode(
    p: &ModelParams,
    out: &Path,
    ode: &OdeOpts,
    sensitivities: bool,
    svg: bool,
) -> Result<(), CliError> {
    p.validate()?;
    let cfg = ode_config(ode);
    let mut header: Vec<String> = vec!["t".into()];
    header.extend(STATE_COLS.iter().map(|s| s.to_string()));
    header.push("dFdt".into());
    header.push("C".into());
    if sensitivities {
        for prefix in ["Z_gV", "Z_gP"] {
            for s in STATE_COLS {
                header.push(format!("{prefix}_{s}"));
            }
        }
        header.extend(["z_gV_C".into(), "z_gP_C".into(), "dominance".into()]);
    }
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut csv = Csv::new(&header_refs);

    let (grid, current);
    if sensitivities {
        let traj = integrate_with_sensitivities(p, &cfg)?;
        let c = traj.current(&p.impulse_kernel)?;
        let norm = traj.normalized(p)?;
        for i in 0..traj.grid.n {
            let mut row: Vec<Cell> = vec![Cell::F(traj.grid.time(i))];
            row.extend(traj.states[i].iter().map(|&v| Cell::F(v)));
            row.push(Cell::F(traj.flux[i]));
            row.push(Cell::F(c[i]));
            row.extend(traj.sensitivities[i].z_gv.iter().map(|&v| Cell::F(v)));
            row.extend(traj.sensitivities[i].z_gp.iter().map(|&v| Cell::F(v)));
            row.push(Cell::OptF(norm.z_gv[i]));
            row.push(Cell::OptF(norm.z_gp[i]));
            row.push(Cell::S(norm.dominance[i].as_str()));
            csv.row(&row);
        }
        grid = traj.grid;
        current = c;
    } else {
        let traj = integrate(p, &cfg)?;
        let c = traj.current(&p.impulse_kernel)?;
        for i in 0..traj.grid.n {
            let mut row: Vec<Cell> = vec![Cell::F(traj.grid.time(i))];
            row.extend(traj.states[i].iter().map(|&v| Cell::F(v)));
            row.push(Cell::F(traj.flux[i]));
            row.push(Cell::F(c[i]));
            csv.row(&row);
        }
        grid = traj.grid;
        current = c;
    }
    csv.write_to(&out.join("trajectory.csv"))?;
    if svg {
        let t = grid.times();
        render_line_plot(
            &[Series {
                label: "C".into(),
                x: &t,
                y: &current,
            }],
            "postsynaptic current",
            &out.join("simulate_ode.svg"),
        )?;
    }
    Ok(())
}

fn cmd_simulate_ssa(
    p: &ModelParams,
    out: &Path,
    seed: u64,
    t_end: f64,
    output_dt: f64,
    svg: bool,
) -> Result<(), CliError> {
    p.validate()?;
    let grid = UniformGrid::from_range(0.0, t_end, output_dt)?;
    let mut rng = run_rng(seed, 0);
    let x0 = sample_stationary_initial(p, &mut rng)?;
    let traj = simulate_one_with_rng(p, t_end, x0, &mut rng);

    let mut events = Csv::new(&["t", "reaction_id"]);
    for (t, r) in &traj.events {
        events.row(&[Cell::F(*t), Cell::S(r.as_str())]);
    }
    events.write_to(&out.join("events.csv"))?;

    let states = traj.sample_on_grid(&grid);
    let current = current_from_events(&traj.fusion_times(), &p.impulse_kernel, &grid);
    let mut csv = Csv::new(&["t", "V", "W_V", "W_P", "R", "P", "F", "C"]);
    for (i, s) in states.iter().enumerate() {
        csv.row(&[
            Cell::F(grid.time(i)),
            Cell::U(s.v.into()),
            Cell::U(s.w_v.into()),
            Cell::U(s.w_p.into()),
            Cell::U(s.r.into()),
            Cell::U(s.p.into()),
            Cell::U(s.f.into()),
            Cell::F(current[i]),
        ]);
    }
    csv.write_to(&out.join("states.csv"))?;
    if svg {
        let t = grid.times();
        render_line_plot(
            &[Series {
                label: "C".into(),
                x: &t,
                y: &current,
            }],
            "stochastic output current (single site)",
            &out.join("simulate_ssa.svg"),
        )?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_ensemble(
    p: &ModelParams,
    out: &Path,
    seed: u64,
    runs: usize,
    t_end: f64,
    output_dt: f64,
    site_count: Option<u64>,
    svg: bool,
) -> Result<(), CliError> {
    let grid = UniformGrid::from_range(0.0, t_end, output_dt)?;
    let (stats, _fusion) = run_ensemble(p, runs, seed, &grid)?;
    let mut header: Vec<String> = vec!["t".into()];
    for prefix in ["mean", "std"] {
        for s in STATE_COLS {
            header.push(format!("{prefix}_{s}"));
        }
    }
    header.extend(["mean_C".into(), "std_C".into(), "cov_VP".into(), "corr_VP".into()]);
    if site_count.is_some() {
        header.push("std_C_total_over_N".into());
    }
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut csv = Csv::new(&header_refs);
    for i in 0..grid.n {
        let mut row: Vec<Cell> = vec![Cell::F(grid.time(i))];
        row.extend(stats.mean[i].iter().map(|&v| Cell::F(v)));
        row.extend(stats.std[i].iter().map(|&v| Cell::F(v)));
        row.push(Cell::F(stats.mean_current[i]));
        row.push(Cell::F(stats.std_current[i]));
        row.push(Cell::F(stats.cov_vp[i]));
        row.push(Cell::OptF(stats.corr_vp[i]));
        if let Some(n) = site_count {
            // the N-site average of i.i.d. single-site currents
            row.push(Cell::F(stats.std_current[i] / (n as f64).sqrt()));
        }
        csv.row(&row);
    }
    csv.write_to(&out.join("ensemble.csv"))?;
    if svg {
        let t = grid.times();
        render_line_plot(
            &[
                Series {
                    label: "mean_C".into(),
                    x: &t,
                    y: &stats.mean_current,
                },
                Series {
                    label: "std_C".into(),
                    x: &t,
                    y: &stats.std_current,
                },
            ],
            "ensemble current moments",
            &out.join("ensemble.svg"),
        )?;
    }
    Ok(())
}

fn cmd_total_current(
    p: &ModelParams,
    out: &Path,
    seed: u64,
    n_sites: usize,
    t_end: f64,
    output_dt: f64,
    svg: bool,
) -> Result<(), CliError> {
    let grid = UniformGrid::from_range(0.0, t_end, output_dt)?;
    let series = total_current_sample(p, n_sites, seed, &grid)?;
    let mut csv = Csv::new(&["t", "C_total_over_N"]);
    for (i, v) in series.iter().enumerate() {
        csv.row(&[Cell::F(grid.time(i)), Cell::F(*v)]);
    }
    csv.write_to(&out.join("total_current.csv"))?;
    if svg {
        let t = grid.times();
        render_line_plot(
            &[Series {
                label: format!("C_total/N (N={n_sites})"),
                x: &t,
                y: &series,
            }],
            "scaled total junction current",
            &out.join("total_current.svg"),
        )?;
    }
    Ok(())
}

fn cmd_sweep(
    p: &ModelParams,
    out: &Path,
    param: &str,
    factors: usize,
    t_end: f64,
    output_dt: f64,
    svg: bool,
) -> Result<(), CliError> {
    let param = SweepParam::parse(param)
        .ok_or_else(|| CliError::Config(format!("unknown sweep parameter '{param}'")))?;
    if factors == 0 {
        return Err(CliError::Config("--factors must be at least 1".into()));
    }
    let spec = SweepSpec {
        param,
        factors: default_factors(factors),
        base: p.clone(),
    };
    let cfg = IntegrationConfig {
        t_end,
        output_dt,
        ..Default::default()
    };
    let legs = run_sweep(&spec, &cfg);
    let mut csv = Csv::new(&["factor", "t", "z_gV_C", "z_gP_C", "dominance"]);
    let mut ok = 0usize;
    let mut plots: Vec<(String, Vec<f64>, Vec<f64>)> = Vec::new();
    for (factor, leg) in &legs {
        match leg {
            Ok(leg) => {
                ok += 1;
                for i in 0..leg.grid.n {
                    csv.row(&[
                        Cell::F(*factor),
                        Cell::F(leg.grid.time(i)),
                        Cell::OptF(leg.z_gv[i]),
                        Cell::OptF(leg.z_gp[i]),
                        Cell::S(leg.dominance[i].as_str()),
                    ]);
                }
                if svg {
                    plots.push((
                        format!("x{factor:.3}"),
                        leg.grid.times(),
                        leg.z_gp
                            .iter()
                            .map(|z| z.unwrap_or(f64::NAN))
                            .collect::<Vec<_>>(),
                    ));
                }
            }
            Err(e) => eprintln!("warning: sweep leg factor {factor} failed: {e}"),
        }
    }
    if ok == 0 {
        return Err(CliError::Numerics("every sweep leg failed".into()));
    }
    csv.write_to(&out.join("sweep.csv"))?;
    if svg {
        let series: Vec<Series> = plots
            .iter()
            .map(|(label, x, y)| Series {
                label: label.clone(),
                x,
                y,
            })
            .collect();
        render_line_plot(
            &series,
            &format!("normalized sensitivity z_gP_C, {} sweep", param.as_str()),
            &out.join("sweep.svg"),
        )?;
    }
    Ok(())
}

fn cmd_reduced(
    out: &Path,
    seed: u64,
    figure: u32,
    runs: usize,
    t_end: f64,
    output_dt: f64,
    svg: bool,
) -> Result<(), CliError> {
    if figure != 9 {
        return Err(CliError::Config(format!(
            "only --figure 9 is defined (got {figure})"
        )));
    }
    let grid = UniformGrid::from_range(0.0, t_end, output_dt)?;
    let (rp_i, rp_ii) = fig9_reduced_params();
    let cmp = reduced_ssa_correlation(&rp_i, &rp_ii, runs, seed, &grid)?;
    let mut csv = Csv::new(&["t", "rel_err_A_I", "rel_err_A_II", "corr_I", "corr_II"]);
    for i in 0..grid.n {
        csv.row(&[
            Cell::F(grid.time(i)),
            Cell::F(cmp.rel_err_a_i[i]),
            Cell::F(cmp.rel_err_a_ii[i]),
            Cell::OptF(cmp.corr_i[i]),
            Cell::OptF(cmp.corr_ii[i]),
        ]);
    }
    csv.write_to(&out.join("reduced.csv"))?;
    if svg {
        let t = grid.times();
        let ci: Vec<f64> = cmp.corr_i.iter().map(|c| c.unwrap_or(f64::NAN)).collect();
        let cii: Vec<f64> = cmp.corr_ii.iter().map(|c| c.unwrap_or(f64::NAN)).collect();
        render_line_plot(
            &[
                Series {
                    label: "corr_I".into(),
                    x: &t,
                    y: &ci,
                },
                Series {
                    label: "corr_II".into(),
                    x: &t,
                    y: &cii,
                },
            ],
            "correlation of A and B",
            &out.join("reduced.svg"),
        )?;
    }
    Ok(())
}

fn cmd_calibrate(
    p: &ModelParams,
    out: &Path,
    target: f64,
    k_r_bounds: (Option<f64>, Option<f64>),
    ku_max_bounds: (Option<f64>, Option<f64>),
    max_iters: usize,
) -> Result<(), CliError> {
    p.validate()?;
    let k_r = (
        k_r_bounds.0.unwrap_or(p.k_r / 20.0),
        k_r_bounds.1.unwrap_or(p.k_r * 20.0),
    );
    let ku_max = (
        ku_max_bounds.0.unwrap_or(p.ku_shape.ku_max / 20.0),
        ku_max_bounds.1.unwrap_or(p.ku_shape.ku_max * 20.0),
    );
    let opts = NelderMeadOptions {
        max_iters,
        ..Default::default()
    };
    let result = calibrate(p, target, k_r, ku_max, opts)?;
    if !result.converged {
        eprintln!(
            "warning: simplex did not converge within {max_iters} iterations; best iterate returned"
        );
    }
    let json = serde_json::to_string_pretty(&result.params)
        .map_err(|e| CliError::Io(format!("cannot serialize parameters: {e}")))?;
    io::write_file(&out.join("calibrated.json"), json.as_bytes())?;
    println!(
        "loss={} k_R={} kU_max={} iterations={} converged={}",
        result.loss,
        result.params.k_r,
        result.params.ku_shape.ku_max,
        result.iterations,
        result.converged
    );
    Ok(())
}
