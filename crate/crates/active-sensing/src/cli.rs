//! Command-line front end: one subcommand per analysis, writing CSV or JSON
//! for downstream plotting.
//!
//! Every numeric flag may also come from an optional JSON config file
//! (`--config params.json`) whose keys mirror the flag names; explicit flags
//! override file values, which override built-in defaults. All parameters
//! are validated against the owning module's preconditions before any
//! computation starts. Exit codes: 0 success, 2 usage error, 3 validation
//! error, 4 I/O error.

use clap::{Args, Parser, Subcommand};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::doa::{compute_grid, uniform_t0_samples, DoaConfig, DoaGrid};
use crate::dynamics::{
    orbit_distance, HyperbolicGamma, LinearGamma, ScalarField, State, SystemParams,
    FORCING_PERIOD,
};
use crate::floquet::{find_critical_delta, sweep_delta, FloquetResult};
use crate::integrate::{integrate_closed_loop, Method, StepperConfig, Trajectory};
use crate::io::{
    write_doa_long_csv, write_doa_summary_csv, write_floquet_csv, write_json,
    write_trajectory_csv,
};
use crate::lyapunov::{analytic_bounds, certify};
use crate::observability::{impossibility_witness, observability_report, GenericFeedback};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;
pub const EXIT_IO: i32 = 4;

/// Active-sensing limit-cycle analysis toolkit.
#[derive(Parser, Debug)]
#[command(
    name = "active-sensing",
    version,
    about = "Simulation, stability certificates, and attraction maps for an \
             active-sensing output-feedback loop"
)]
pub struct Cli {
    /// Cap worker parallelism for grid and sweep computations.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// JSON config file; keys mirror the subcommand's flag names, flags win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Integrate the nonlinear closed loop and write the trajectory CSV.
    Simulate(SimulateArgs),
    /// Sweep the combined gain, writing multipliers and stability per point.
    Floquet(FloquetArgs),
    /// Sample the quadratic-certificate matrices and write a JSON verdict.
    Lyapunov(LyapunovArgs),
    /// Raster the domain of attraction over initial states and phases.
    Doa(DoaArgs),
    /// Observability diagnostics and the output-feedback impossibility check.
    Observability(ObservabilityArgs),
}

#[derive(Args, Debug, Default, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct SimulateArgs {
    /// Feedback gain k (default 1).
    #[arg(long, allow_negative_numbers = true)]
    k: Option<f64>,
    /// Active-sensing amplitude a (default 1/sqrt 2).
    #[arg(long, allow_negative_numbers = true)]
    a: Option<f64>,
    /// Initial position (default 1).
    #[arg(long, allow_negative_numbers = true)]
    x0: Option<f64>,
    /// Initial velocity (default 1).
    #[arg(long, allow_negative_numbers = true)]
    z0: Option<f64>,
    /// Initial time (default 0).
    #[arg(long, allow_negative_numbers = true)]
    t0: Option<f64>,
    /// Final time (default 60).
    #[arg(long, allow_negative_numbers = true)]
    t_end: Option<f64>,
    /// Integrator step (default 1e-3).
    #[arg(long, allow_negative_numbers = true)]
    step: Option<f64>,
    /// Escape radius truncating divergent runs (default 1e6).
    #[arg(long, allow_negative_numbers = true)]
    escape: Option<f64>,
    /// Integration method: rk4 or dp45 (default rk4).
    #[arg(long, allow_negative_numbers = true)]
    method: Option<String>,
    /// Output CSV path (default trajectory.csv).
    #[arg(long, allow_negative_numbers = true)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Default, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct FloquetArgs {
    /// Lower end of the gain grid (default 0).
    #[arg(long, allow_negative_numbers = true)]
    delta_min: Option<f64>,
    /// Upper end of the gain grid (default 4).
    #[arg(long, allow_negative_numbers = true)]
    delta_max: Option<f64>,
    /// Grid spacing (default 0.01).
    #[arg(long, allow_negative_numbers = true)]
    step: Option<f64>,
    /// Integrator step for each monodromy (default pi/2000).
    #[arg(long, allow_negative_numbers = true)]
    h: Option<f64>,
    /// Output CSV path (default floquet.csv).
    #[arg(long, allow_negative_numbers = true)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Default, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct LyapunovArgs {
    /// Combined gain delta to certify (required).
    #[arg(long, allow_negative_numbers = true)]
    delta: Option<f64>,
    /// Lyapunov weighting eta > 1, or "auto" for 1 + sqrt 7 (default auto).
    #[arg(long, allow_negative_numbers = true)]
    eta: Option<String>,
    /// Number of time samples over one period (default 10000, min 1000).
    #[arg(long, allow_negative_numbers = true)]
    samples: Option<usize>,
    /// Output JSON path (default lyapunov.json).
    #[arg(long, allow_negative_numbers = true)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Default, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct DoaArgs {
    /// Feedback gain k (default 1).
    #[arg(long, allow_negative_numbers = true)]
    k: Option<f64>,
    /// Active-sensing amplitude a (default 1/sqrt 2).
    #[arg(long, allow_negative_numbers = true)]
    a: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    x_min: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    x_max: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    z_min: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    z_max: Option<f64>,
    /// Grid cells along x (default 200).
    #[arg(long, allow_negative_numbers = true)]
    nx: Option<usize>,
    /// Grid cells along z (default 200).
    #[arg(long, allow_negative_numbers = true)]
    nz: Option<usize>,
    /// Number of uniform starting phases in [0, 2 pi) (default 16).
    #[arg(long, allow_negative_numbers = true)]
    t0_count: Option<usize>,
    /// Integration horizon per cell (default 200 pi).
    #[arg(long, allow_negative_numbers = true)]
    horizon: Option<f64>,
    /// Orbit-distance threshold for convergence (default 0.05 a).
    #[arg(long, allow_negative_numbers = true)]
    tol: Option<f64>,
    /// Norm threshold for divergence (default 1e3).
    #[arg(long, allow_negative_numbers = true)]
    escape: Option<f64>,
    /// Classification integrator step (default 0.02).
    #[arg(long, allow_negative_numbers = true)]
    step: Option<f64>,
    /// Long-format output CSV (default doa.csv).
    #[arg(long, allow_negative_numbers = true)]
    out: Option<PathBuf>,
    /// Per-cell summary CSV (default doa_summary.csv).
    #[arg(long, allow_negative_numbers = true)]
    summary_out: Option<PathBuf>,
}

#[derive(Args, Debug, Default, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ObservabilityArgs {
    /// Position of the evaluation point (default 1).
    #[arg(long, allow_negative_numbers = true)]
    x: Option<f64>,
    /// Velocity of the evaluation point (default 1).
    #[arg(long, allow_negative_numbers = true)]
    z: Option<f64>,
    /// Scene gradient: linear or hyperbolic (default linear).
    #[arg(long, allow_negative_numbers = true)]
    gamma: Option<String>,
    /// Hyperbolic scene offset c0 (default 1).
    #[arg(long, allow_negative_numbers = true)]
    c0: Option<f64>,
    /// Hyperbolic scene slope c1 (default 1).
    #[arg(long, allow_negative_numbers = true)]
    c1: Option<f64>,
    /// Number of random feedbacks for the impossibility check (default 100).
    #[arg(long, allow_negative_numbers = true)]
    feedbacks: Option<u64>,
    /// Random (shift, time) trials per feedback (default 100).
    #[arg(long, allow_negative_numbers = true)]
    trials: Option<u64>,
    /// Seed for the randomized checks (default 0).
    #[arg(long, allow_negative_numbers = true)]
    seed: Option<u64>,
    /// Output JSON path (default observability.json).
    #[arg(long, allow_negative_numbers = true)]
    out: Option<PathBuf>,
}

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Io(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "invalid parameters: {m}"),
            CliError::Io(m) => write!(f, "I/O failure: {m}"),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Io(_) => EXIT_IO,
        }
    }
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, CliError> {
    Err(CliError::Validation(msg.into()))
}

/// Parses arguments, dispatches, prints a one-line summary, and returns the
/// process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli) {
        Ok(summary) => {
            println!("{summary}");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli) -> Result<String, CliError> {
    let config = cli.config.as_deref();
    let body = move || -> Result<String, CliError> {
        match cli.command {
            Command::Simulate(args) => run_simulate(overlay(args, load_config(config)?)),
            Command::Floquet(args) => run_floquet(overlay_floquet(args, load_config(config)?)),
            Command::Lyapunov(args) => run_lyapunov(overlay_lyapunov(args, load_config(config)?)),
            Command::Doa(args) => run_doa(overlay_doa(args, load_config(config)?)),
            Command::Observability(args) => {
                run_observability(overlay_observability(args, load_config(config)?))
            }
        }
    };
    match cli.threads {
        None => body(),
        Some(0) => invalid("--threads must be at least 1"),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Io(format!("cannot build thread pool: {e}")))?
            .install(body),
    }
}

fn load_config<T: Default + serde::de::DeserializeOwned>(
    path: Option<&Path>,
) -> Result<T, CliError> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Validation(format!("config {}: {e}", path.display())))
}

// Flag values override config-file values field by field.

fn overlay(flags: SimulateArgs, file: SimulateArgs) -> SimulateArgs {
    SimulateArgs {
        k: flags.k.or(file.k),
        a: flags.a.or(file.a),
        x0: flags.x0.or(file.x0),
        z0: flags.z0.or(file.z0),
        t0: flags.t0.or(file.t0),
        t_end: flags.t_end.or(file.t_end),
        step: flags.step.or(file.step),
        escape: flags.escape.or(file.escape),
        method: flags.method.or(file.method),
        out: flags.out.or(file.out),
    }
}

fn overlay_floquet(flags: FloquetArgs, file: FloquetArgs) -> FloquetArgs {
    FloquetArgs {
        delta_min: flags.delta_min.or(file.delta_min),
        delta_max: flags.delta_max.or(file.delta_max),
        step: flags.step.or(file.step),
        h: flags.h.or(file.h),
        out: flags.out.or(file.out),
    }
}

fn overlay_lyapunov(flags: LyapunovArgs, file: LyapunovArgs) -> LyapunovArgs {
    LyapunovArgs {
        delta: flags.delta.or(file.delta),
        eta: flags.eta.or(file.eta),
        samples: flags.samples.or(file.samples),
        out: flags.out.or(file.out),
    }
}

fn overlay_doa(flags: DoaArgs, file: DoaArgs) -> DoaArgs {
    DoaArgs {
        k: flags.k.or(file.k),
        a: flags.a.or(file.a),
        x_min: flags.x_min.or(file.x_min),
        x_max: flags.x_max.or(file.x_max),
        z_min: flags.z_min.or(file.z_min),
        z_max: flags.z_max.or(file.z_max),
        nx: flags.nx.or(file.nx),
        nz: flags.nz.or(file.nz),
        t0_count: flags.t0_count.or(file.t0_count),
        horizon: flags.horizon.or(file.horizon),
        tol: flags.tol.or(file.tol),
        escape: flags.escape.or(file.escape),
        step: flags.step.or(file.step),
        out: flags.out.or(file.out),
        summary_out: flags.summary_out.or(file.summary_out),
    }
}

fn overlay_observability(flags: ObservabilityArgs, file: ObservabilityArgs) -> ObservabilityArgs {
    ObservabilityArgs {
        x: flags.x.or(file.x),
        z: flags.z.or(file.z),
        gamma: flags.gamma.or(file.gamma),
        c0: flags.c0.or(file.c0),
        c1: flags.c1.or(file.c1),
        feedbacks: flags.feedbacks.or(file.feedbacks),
        trials: flags.trials.or(file.trials),
        seed: flags.seed.or(file.seed),
        out: flags.out.or(file.out),
    }
}

fn create_output(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", path.display())))
}

fn io_err(path: &Path) -> impl Fn(crate::io::IoError) -> CliError + '_ {
    move |e| CliError::Io(format!("writing {}: {e}", path.display()))
}

fn params_from(k: Option<f64>, a: Option<f64>) -> Result<SystemParams, CliError> {
    SystemParams::new(
        k.unwrap_or(1.0),
        a.unwrap_or(std::f64::consts::FRAC_1_SQRT_2),
    )
    .map_err(|e| CliError::Validation(e.to_string()))
}

fn run_simulate(args: SimulateArgs) -> Result<String, CliError> {
    let params = params_from(args.k, args.a)?;
    let s0 = State::new(args.x0.unwrap_or(1.0), args.z0.unwrap_or(1.0));
    if !s0.is_finite() {
        return invalid("initial state must be finite");
    }
    let t0 = args.t0.unwrap_or(0.0);
    let t_end = args.t_end.unwrap_or(60.0);
    if !(t_end > t0) {
        return invalid(format!("t-end {t_end} must exceed t0 {t0}"));
    }
    let mut cfg = StepperConfig::new(args.step.unwrap_or(1e-3));
    if let Some(escape) = args.escape {
        cfg.escape_radius = escape;
    }
    cfg.method = match args.method.as_deref().unwrap_or("rk4") {
        "rk4" => Method::Rk4,
        "dp45" => Method::Dp45,
        other => return invalid(format!("unknown method {other:?}, expected rk4 or dp45")),
    };
    if !(cfg.h > 0.0 && cfg.escape_radius > 0.0) {
        return invalid("step and escape radius must be positive");
    }

    let traj = integrate_closed_loop(&params, s0, t0, t_end, &cfg)
        .map_err(|e| CliError::Validation(e.to_string()))?;

    let out = args.out.unwrap_or_else(|| PathBuf::from("trajectory.csv"));
    let mut w = create_output(&out)?;
    write_trajectory_csv(&mut w, &traj, &params).map_err(io_err(&out))?;
    w.flush().map_err(|e| io_err(&out)(e.into()))?;

    Ok(simulate_summary(&traj, &params, &out))
}

fn simulate_summary(traj: &Trajectory, params: &SystemParams, out: &Path) -> String {
    let (t_final, s_final) = traj.final_sample();
    let tail_start = t_final - FORCING_PERIOD;
    let tail_dist = traj
        .samples
        .iter()
        .filter(|(t, _)| *t >= tail_start)
        .map(|&(t, s)| orbit_distance(s, t, params.a()))
        .fold(0.0f64, f64::max);
    if traj.truncated_by_escape {
        format!(
            "simulate: escaped at t={:.6} with |state|={:.3e}; {} samples -> {}",
            t_final,
            s_final.norm(),
            traj.len(),
            out.display()
        )
    } else {
        format!(
            "simulate: {} samples to t={}; final state ({:.6}, {:.6}); \
             max orbit distance over final period {:.3e} -> {}",
            traj.len(),
            t_final,
            s_final.x,
            s_final.z,
            tail_dist,
            out.display()
        )
    }
}

fn run_floquet(args: FloquetArgs) -> Result<String, CliError> {
    let delta_min = args.delta_min.unwrap_or(0.0);
    let delta_max = args.delta_max.unwrap_or(4.0);
    let step = args.step.unwrap_or(0.01);
    if !(delta_min >= 0.0 && delta_min < delta_max && step > 0.0) {
        return invalid(format!(
            "need 0 <= delta-min < delta-max and step > 0, got [{delta_min}, {delta_max}] \
             step {step}"
        ));
    }
    let mut cfg = StepperConfig::monodromy_default();
    if let Some(h) = args.h {
        if !(h > 0.0) {
            return invalid(format!("integrator step must be positive, got {h}"));
        }
        cfg.h = h;
    }

    let points = sweep_delta(delta_min, delta_max, step, &cfg);
    let mut ok: Vec<FloquetResult> = Vec::with_capacity(points.len());
    let mut failures = 0usize;
    for point in points {
        match point {
            Ok(r) => ok.push(r),
            Err(e) => {
                failures += 1;
                eprintln!("warning: {e}");
            }
        }
    }

    let out = args.out.unwrap_or_else(|| PathBuf::from("floquet.csv"));
    let mut w = create_output(&out)?;
    write_floquet_csv(&mut w, &ok).map_err(io_err(&out))?;
    w.flush().map_err(|e| io_err(&out)(e.into()))?;

    // Refine the stability boundary when the grid brackets it.
    let critical = ok
        .windows(2)
        .find(|w| w[0].stable && !w[1].stable)
        .map(|w| find_critical_delta(w[0].delta, w[1].delta, 1e-6, &cfg))
        .transpose()
        .map_err(|e| CliError::Validation(e.to_string()))?;
    let critical_text = match critical {
        Some(c) => format!("critical delta {c:.4}"),
        None => "no stability boundary in range".to_string(),
    };

    let complex: Vec<f64> = ok
        .iter()
        .filter(|r| r.multipliers.0.im != 0.0)
        .map(|r| r.delta)
        .collect();
    let window_text = match (complex.first(), complex.last()) {
        (Some(first), Some(last)) => format!("complex multipliers on [{first:.2}, {last:.2}]"),
        _ => "multipliers real everywhere".to_string(),
    };
    let failure_text = if failures > 0 {
        format!("; {failures} points failed")
    } else {
        String::new()
    };

    Ok(format!(
        "floquet: {} gains in [{delta_min}, {delta_max}] step {step}; {critical_text}; \
         {window_text}{failure_text} -> {}",
        ok.len(),
        out.display()
    ))
}

fn run_lyapunov(args: LyapunovArgs) -> Result<String, CliError> {
    let Some(delta) = args.delta else {
        return invalid("delta is required (flag --delta or config key \"delta\")");
    };
    let eta = match args.eta.as_deref().unwrap_or("auto") {
        "auto" => analytic_bounds().1,
        text => match text.parse::<f64>() {
            Ok(v) => v,
            Err(_) => return invalid(format!("eta must be a number or \"auto\", got {text:?}")),
        },
    };
    let samples = args.samples.unwrap_or(10_000);

    let cert = certify(delta, eta, samples).map_err(|e| CliError::Validation(e.to_string()))?;

    let out = args.out.unwrap_or_else(|| PathBuf::from("lyapunov.json"));
    let mut w = create_output(&out)?;
    write_json(&mut w, &cert).map_err(io_err(&out))?;
    w.flush().map_err(|e| io_err(&out)(e.into()))?;

    Ok(format!(
        "lyapunov: delta={} eta={} verified={} worst det Q {:.3e} worst trace Q {:.3e} -> {}",
        cert.delta,
        cert.eta,
        cert.verified,
        cert.worst_det_q,
        cert.worst_trace_q,
        out.display()
    ))
}

fn run_doa(args: DoaArgs) -> Result<String, CliError> {
    let params = params_from(args.k, args.a)?;
    let defaults = DoaConfig::default();
    let cfg = DoaConfig {
        x_range: (args.x_min.unwrap_or(-4.0), args.x_max.unwrap_or(4.0)),
        z_range: (args.z_min.unwrap_or(-4.0), args.z_max.unwrap_or(4.0)),
        nx: args.nx.unwrap_or(defaults.nx),
        nz: args.nz.unwrap_or(defaults.nz),
        t0_samples: uniform_t0_samples(args.t0_count.unwrap_or(16)),
        horizon: args.horizon.unwrap_or(defaults.horizon),
        convergence_tol: args.tol.unwrap_or(0.05 * params.a()),
        escape_radius: args.escape.unwrap_or(defaults.escape_radius),
        step: args.step.unwrap_or(defaults.step),
        params,
    };
    cfg.validate().map_err(|e| CliError::Validation(e.to_string()))?;

    let grid = compute_grid(&cfg).map_err(|e| CliError::Validation(e.to_string()))?;

    let out = args.out.unwrap_or_else(|| PathBuf::from("doa.csv"));
    let mut w = create_output(&out)?;
    write_doa_long_csv(&mut w, &grid).map_err(io_err(&out))?;
    w.flush().map_err(|e| io_err(&out)(e.into()))?;

    let summary_out = args
        .summary_out
        .unwrap_or_else(|| PathBuf::from("doa_summary.csv"));
    let mut w = create_output(&summary_out)?;
    write_doa_summary_csv(&mut w, &grid).map_err(io_err(&summary_out))?;
    w.flush().map_err(|e| io_err(&summary_out)(e.into()))?;

    Ok(format!(
        "doa: {}x{} cells, {} phases: conservative {}, always-diverges {}, \
         phase-dependent {}, undecided {} -> {}, {}",
        cfg.nx,
        cfg.nz,
        cfg.t0_samples.len(),
        DoaGrid::count(&grid.conservative),
        DoaGrid::count(&grid.always_diverges),
        DoaGrid::count(&grid.t0_dependent),
        DoaGrid::count(&grid.undecided),
        out.display(),
        summary_out.display()
    ))
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct ImpossibilitySummary {
    feedbacks: u64,
    trials_per_feedback: u64,
    seed: u64,
    max_discrepancy: f64,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct ObservabilityOutput {
    report: crate::observability::ObservabilityReport,
    impossibility: ImpossibilitySummary,
}

fn run_observability(args: ObservabilityArgs) -> Result<String, CliError> {
    let point = State::new(args.x.unwrap_or(1.0), args.z.unwrap_or(1.0));
    if !point.is_finite() {
        return invalid("evaluation point must be finite");
    }
    let gamma: Box<dyn ScalarField> = match args.gamma.as_deref().unwrap_or("linear") {
        "linear" => Box::new(LinearGamma),
        "hyperbolic" => {
            let (c0, c1) = (args.c0.unwrap_or(1.0), args.c1.unwrap_or(1.0));
            if (c1 * point.x + c0).abs() < 1e-9 {
                return invalid("hyperbolic scene gradient is singular at the evaluation point");
            }
            Box::new(HyperbolicGamma { c0, c1 })
        }
        other => {
            return invalid(format!(
                "unknown scene gradient {other:?}, expected linear or hyperbolic"
            ))
        }
    };
    let feedbacks = args.feedbacks.unwrap_or(100);
    let trials = args.trials.unwrap_or(100);
    if feedbacks == 0 || trials == 0 {
        return invalid("feedbacks and trials must be at least 1");
    }
    let seed = args.seed.unwrap_or(0);

    let report = observability_report(point, gamma.as_ref());

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_discrepancy = 0.0f64;
    for i in 0..feedbacks {
        let fb = GenericFeedback::random(seed.wrapping_add(i));
        for _ in 0..trials {
            let x_shift = rng.random_range(-10.0..10.0);
            let t = rng.random_range(-10.0..10.0);
            max_discrepancy = max_discrepancy.max(impossibility_witness(&fb, x_shift, t));
        }
    }

    let output = ObservabilityOutput {
        report,
        impossibility: ImpossibilitySummary {
            feedbacks,
            trials_per_feedback: trials,
            seed,
            max_discrepancy,
        },
    };

    let out = args
        .out
        .unwrap_or_else(|| PathBuf::from("observability.json"));
    let mut w = create_output(&out)?;
    write_json(&mut w, &output).map_err(io_err(&out))?;
    w.flush().map_err(|e| io_err(&out)(e.into()))?;

    Ok(format!(
        "observability: point ({}, {}) gamma {} rank {} condition {:.6e} observable {}; \
         impossibility max discrepancy {:.1e} over {}x{} trials -> {}",
        output.report.point.x,
        output.report.point.z,
        output.report.gamma,
        output.report.linear_rank,
        output.report.nonlinear_condition,
        output.report.locally_observable,
        output.impossibility.max_discrepancy,
        feedbacks,
        trials,
        out.display()
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(list: &[&str]) -> Vec<String> {
        std::iter::once("active-sensing")
            .chain(list.iter().copied())
            .map(String::from)
            .collect()
    }

    #[test]
    fn validation_failures_exit_with_code_three() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("t.csv");
        let code = run(args(&[
            "simulate",
            "--a",
            "-1.0",
            "--out",
            out.to_str().unwrap(),
        ]));
        assert_eq!(code, EXIT_VALIDATION);
        assert!(!out.exists(), "no output on validation failure");

        let code = run(args(&["lyapunov", "--delta", "0.4", "--eta", "0.5"]));
        assert_eq!(code, EXIT_VALIDATION);

        let code = run(args(&["floquet", "--delta-min", "2.0", "--delta-max", "1.0"]));
        assert_eq!(code, EXIT_VALIDATION);
    }

    #[test]
    fn usage_errors_exit_with_code_two() {
        assert_eq!(run(args(&["no-such-command"])), EXIT_USAGE);
        assert_eq!(run(args(&["simulate", "--bogus-flag", "1"])), EXIT_USAGE);
    }

    #[test]
    fn io_failures_exit_with_code_four() {
        let code = run(args(&[
            "lyapunov",
            "--delta",
            "0.4",
            "--out",
            "/nonexistent-dir/x.json",
        ]));
        assert_eq!(code, EXIT_IO);
    }

    #[test]
    fn config_file_fills_gaps_and_flags_win() {
        let dir = tempfile::tempdir().unwrap();
        let cfg_path = dir.path().join("cfg.json");
        let out = dir.path().join("lyap.json");
        std::fs::write(&cfg_path, r#"{"delta": 1.0, "samples": 2000}"#).unwrap();
        // Flag --delta overrides the file's 1.0; samples come from the file.
        let code = run(args(&[
            "--config",
            cfg_path.to_str().unwrap(),
            "lyapunov",
            "--delta",
            "0.4",
            "--out",
            out.to_str().unwrap(),
        ]));
        assert_eq!(code, EXIT_OK);
        let text = std::fs::read_to_string(&out).unwrap();
        let json: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(json["delta"], 0.4);
        assert_eq!(json["verified"], true);

        // Unknown keys are rejected.
        std::fs::write(&cfg_path, r#"{"delta": 0.4, "nope": 1}"#).unwrap();
        let code = run(args(&["--config", cfg_path.to_str().unwrap(), "lyapunov"]));
        assert_eq!(code, EXIT_VALIDATION);
    }
}
