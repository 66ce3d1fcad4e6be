//! Command-line front end.
//!
//! Exit codes: 0 success, 2 usage, 3 configuration, 4 I/O, 5 blow-up
//! dominated run (outputs still written), 6 numerical failure.

mod config;

pub use config::{
    parse_config, AnalysisConfig, ConfigError, GridConfig, NoiseConfig, OrderConfig, PointCount,
    ProblemConfig, RunConfig, SchemeSection,
};

use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use thiserror::Error;

use crate::analysis::{
    constants_for, estimate_m, evaluate_predicates, AnalysisConstants, AnalysisError, NoiseClass,
};
use crate::exec::{with_threads, Execution};
use crate::experiments::{
    format_csv, plot_script, run_dx_sweep, run_msd, strong_order_with_reference, ExperimentError,
    RunOptions,
};
use crate::grid::spectral_norm;
use crate::integrators::simulate_pair;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_IO: i32 = 4;
pub const EXIT_BLOWUP: i32 = 5;
pub const EXIT_NUMERICAL: i32 = 6;

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "SPDE_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "spde-msd",
    version,
    about = "Mean-square deviation experiments for stochastic reaction-diffusion equations"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate the contractivity coefficients and stepsize conditions.
    Analyze(CommonArgs),
    /// Mean-square deviation on the first configured grid.
    Msd(CommonArgs),
    /// Mean-square deviation on every configured grid.
    Sweep(CommonArgs),
    /// Empirical strong order of convergence.
    Order(CommonArgs),
    /// Dump one coupled pair of trajectories.
    Simulate(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// JSON configuration file.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (overrides `output_dir`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Number of Monte Carlo paths (overrides `n_paths`).
    #[arg(long)]
    pub paths: Option<usize>,
    /// Random seed (overrides `seed`).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Omit the timestamp comment line from CSV output.
    #[arg(long)]
    pub no_timestamp: bool,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    BlowUp(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => EXIT_CONFIG,
            Self::Io { .. } => EXIT_IO,
            Self::BlowUp(_) => EXIT_BLOWUP,
            Self::Numerical(_) => EXIT_NUMERICAL,
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::AllPathsBlewUp { .. } => Self::BlowUp(e.to_string()),
            ExperimentError::Io(source) => Self::Io {
                path: PathBuf::new(),
                source,
            },
            ExperimentError::InvalidInput(m) => Self::Config(ConfigError::Invalid(m)),
            ExperimentError::Problem(p) => Self::Config(ConfigError::Invalid(p.to_string())),
            other => Self::Numerical(other.to_string()),
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        Self::Numerical(e.to_string())
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let threads = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse().ok());
    match with_threads(threads, || dispatch(&cli.command)) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

struct Context {
    cfg: RunConfig,
    out: PathBuf,
    stamp: Option<String>,
}

impl Context {
    fn load(args: &CommonArgs) -> Result<Self, CliError> {
        let text = fs::read_to_string(&args.config).map_err(|source| CliError::Io {
            path: args.config.clone(),
            source,
        })?;
        let mut cfg = parse_config(&text)?;
        if let Some(p) = args.paths {
            cfg.n_paths = p;
        }
        if let Some(s) = args.seed {
            cfg.seed = s;
        }
        cfg.validate()?;
        let out = args
            .out
            .clone()
            .unwrap_or_else(|| PathBuf::from(&cfg.output_dir));
        fs::create_dir_all(&out).map_err(|source| CliError::Io {
            path: out.clone(),
            source,
        })?;
        let stamp = (!args.no_timestamp).then(|| {
            let secs = SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0);
            format!("at unix time {secs}")
        });
        Ok(Self { cfg, out, stamp })
    }

    fn write(&self, name: &str, contents: &str) -> Result<PathBuf, CliError> {
        let path = self.out.join(name);
        fs::write(&path, contents).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        })?;
        Ok(path)
    }

    fn write_json(&self, name: &str, value: &serde_json::Value) -> Result<PathBuf, CliError> {
        let text = serde_json::to_string_pretty(value).expect("JSON values always serialize");
        self.write(name, &(text + "\n"))
    }

    fn options(&self) -> RunOptions {
        RunOptions {
            norm_scaling: self.cfg.norm_scaling,
            execution: Execution::Parallel,
        }
    }

    fn config_json(&self) -> serde_json::Value {
        serde_json::to_value(&self.cfg).expect("config always serializes")
    }
}

fn dispatch(cmd: &Command) -> Result<i32, CliError> {
    match cmd {
        Command::Analyze(a) => cmd_analyze(&Context::load(a)?),
        Command::Msd(a) => cmd_msd(&Context::load(a)?),
        Command::Sweep(a) => cmd_sweep(&Context::load(a)?),
        Command::Order(a) => cmd_order(&Context::load(a)?),
        Command::Simulate(a) => cmd_simulate(&Context::load(a)?),
    }
}

fn scheme_config(cfg: &RunConfig) -> Result<crate::integrators::SchemeConfig, CliError> {
    cfg.scheme_config()
        .map_err(|e| CliError::Config(ConfigError::Invalid(e.to_string())))
}

fn first_problem(cfg: &RunConfig) -> Result<crate::problems::SemiDiscreteProblem, CliError> {
    let grid = cfg.grids()?[0];
    cfg.problem
        .family()
        .build(&grid, cfg.noise.kind(), cfg.noise_scaling)
        .map_err(|e| CliError::Config(ConfigError::Invalid(e.to_string())))
}

fn cmd_analyze(ctx: &Context) -> Result<i32, CliError> {
    let cfg = &ctx.cfg;
    let sc = scheme_config(cfg)?;
    let problem = first_problem(cfg)?;
    let family = cfg.problem.family();
    let x0 = cfg.initial.u0.sample(&problem)?;

    let (constants, m_estimate) = match cfg.analysis.m {
        Some(m) => {
            let norm_a = spectral_norm(problem.operator(), 1e-10)
                .map_err(|e| CliError::Numerical(e.to_string()))?;
            let mu = cfg
                .analysis
                .mu
                .or(problem.reaction_term().one_sided_lipschitz())
                .ok_or_else(|| {
                    CliError::Config(ConfigError::Invalid(
                        "analysis.mu is required when M is given for this problem".into(),
                    ))
                })?;
            let radius = x0.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
            let l_g = cfg
                .analysis
                .l_g
                .unwrap_or(problem.diffusion_lipschitz(radius));
            let c = AnalysisConstants::new(norm_a, m, cfg.m_variant, l_g, mu, l_g * l_g)?;
            (c, None)
        }
        None => {
            let paths = cfg.analysis.m_paths.unwrap_or(cfg.n_paths);
            let est = estimate_m(
                &problem,
                &sc,
                &x0,
                paths,
                cfg.m_variant,
                Execution::Parallel,
            )?;
            let mut c = constants_for(&problem, &est)?;
            if let Some(mu) = cfg.analysis.mu {
                c = AnalysisConstants::new(c.norm_a, c.m, c.m_variant, c.l_g, mu, c.l)?;
            }
            if let Some(l_g) = cfg.analysis.l_g {
                c = AnalysisConstants::new(c.norm_a, c.m, c.m_variant, l_g, c.mu, l_g * l_g)?;
            }
            (c, Some(est))
        }
    };
    let noise = if problem.noise().is_additive() {
        NoiseClass::Additive
    } else {
        NoiseClass::Multiplicative
    };
    let report = evaluate_predicates(
        &constants,
        sc.scheme,
        noise,
        sc.theta,
        sc.dt,
        problem.grid().dx,
        family.operator_order(),
    )?
    .with_window(sc.n_steps);

    println!("{}", report.summary());
    if let Some(e) = &m_estimate {
        println!(
            "  M = {:e} +- {:e} ({} paths, blow-up fraction {}{})",
            e.value,
            e.stderr,
            e.n_paths,
            e.blowup_fraction,
            if e.unreliable { ", unreliable" } else { "" }
        );
    }
    let path = ctx.write_json(
        "analyze.json",
        &json!({ "report": report, "m_estimate": m_estimate, "config": ctx.config_json() }),
    )?;
    println!("wrote {}", path.display());
    Ok(EXIT_OK)
}

fn cmd_msd(ctx: &Context) -> Result<i32, CliError> {
    let cfg = &ctx.cfg;
    let sc = scheme_config(cfg)?;
    let problem = first_problem(cfg)?;
    let u0 = cfg.initial.u0.sample(&problem)?;
    let y0 = cfg.initial.y0.sample(&problem)?;
    let (mut est, code) = match run_msd(&problem, &sc, &u0, &y0, cfg.n_paths, &ctx.options()) {
        Ok(e) => (e, EXIT_OK),
        Err(ExperimentError::AllPathsBlewUp { partial, .. }) => (*partial, EXIT_BLOWUP),
        Err(e) => return Err(e.into()),
    };
    est.config_echo = ctx.config_json();
    let csv = ctx.write("msd.csv", &format_csv(&est, ctx.stamp.as_deref())?)?;
    ctx.write(
        "msd.gp",
        &plot_script(
            &[(est.label.clone(), "msd.csv".into())],
            &est.label,
            "msd.png",
        ),
    )?;
    ctx.write_json("msd.json", &summary_json(&est))?;
    println!(
        "msd[0] = {:e}, msd[N] = {:e}, ratio {:e}, blow-up fraction {}",
        est.msd[0],
        est.msd[est.len() - 1],
        est.decay_ratio(),
        est.blowup_fraction
    );
    println!("wrote {}", csv.display());
    if code == EXIT_BLOWUP {
        eprintln!("error: every path blew up");
    }
    Ok(code)
}

fn summary_json(est: &crate::experiments::MsdEstimate) -> serde_json::Value {
    json!({
        "label": est.label,
        "n_paths": est.n_paths,
        "blowup_fraction": est.blowup_fraction,
        "steps_recorded": est.len(),
        "final_alive": est.n_alive.last(),
        "decay_ratio": est.decay_ratio(),
        "config": est.config_echo,
    })
}

fn cmd_sweep(ctx: &Context) -> Result<i32, CliError> {
    let cfg = &ctx.cfg;
    let sc = scheme_config(cfg)?;
    let grids = cfg.grids()?;
    let ests = run_dx_sweep(
        &cfg.problem.family(),
        &cfg.noise.kind(),
        cfg.noise_scaling,
        &sc,
        &grids,
        &cfg.initial,
        cfg.n_paths,
        &ctx.options(),
    )?;
    let mut curves = Vec::new();
    let mut summaries = Vec::new();
    let mut dominated = false;
    for (g, est) in grids.iter().zip(&ests) {
        let name = format!("sweep_{}.csv", g.n_points);
        ctx.write(&name, &format_csv(est, ctx.stamp.as_deref())?)?;
        curves.push((format!("n_points = {}", g.n_points), name));
        summaries.push(summary_json(est));
        dominated |= est.blowup_fraction > 0.5;
        println!(
            "n_points = {:4}: msd[N]/msd[0] = {:e}, blow-up fraction {}",
            g.n_points,
            est.decay_ratio(),
            est.blowup_fraction
        );
    }
    ctx.write(
        "sweep.gp",
        &plot_script(&curves, cfg.problem.family().name(), "sweep.png"),
    )?;
    ctx.write_json(
        "sweep.json",
        &json!({ "runs": summaries, "config": ctx.config_json() }),
    )?;
    if dominated {
        eprintln!("error: more than half of the paths blew up on at least one grid");
        return Ok(EXIT_BLOWUP);
    }
    Ok(EXIT_OK)
}

fn cmd_order(ctx: &Context) -> Result<i32, CliError> {
    let cfg = &ctx.cfg;
    let sc = scheme_config(cfg)?;
    let problem = first_problem(cfg)?;
    let x0 = cfg.initial.u0.sample(&problem)?;
    let t = sc.final_time();
    let dts: Vec<f64> = cfg
        .order
        .dt_exponents
        .iter()
        .map(|&k| t * 0.5f64.powi(k as i32))
        .collect();
    let o = strong_order_with_reference(
        &problem,
        &sc,
        &dts,
        cfg.order.reference_refinement,
        &x0,
        cfg.n_paths,
        Execution::Parallel,
    )?;
    for (dt, e) in o.dts.iter().zip(&o.errors) {
        println!("dt = {dt:e}: error {e:e}");
    }
    println!("slope = {}", o.slope);
    ctx.write_json(
        "order.json",
        &json!({ "order": o, "config": ctx.config_json() }),
    )?;
    Ok(EXIT_OK)
}

fn cmd_simulate(ctx: &Context) -> Result<i32, CliError> {
    let cfg = &ctx.cfg;
    let sc = scheme_config(cfg)?;
    let problem = first_problem(cfg)?;
    let u0 = cfg.initial.u0.sample(&problem)?;
    let y0 = cfg.initial.y0.sample(&problem)?;
    let t = simulate_pair(&problem, &sc, &u0, &y0, 0, true)
        .map_err(|e| CliError::Numerical(e.to_string()))?;
    let path = ctx.write_json(
        "simulate.json",
        &json!({
            "nodes": problem.grid().interior_nodes(),
            "times": t.times,
            "z_sqnorms": t.z_sqnorms,
            "u_states": t.u_states,
            "y_states": t.y_states,
            "newton_iters": t.newton_iters,
            "blowup_step": t.blowup_step,
            "config": ctx.config_json(),
        }),
    )?;
    println!("wrote {}", path.display());
    Ok(if t.blowup_step.is_some() {
        EXIT_BLOWUP
    } else {
        EXIT_OK
    })
}
