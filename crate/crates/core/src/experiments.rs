//! Monte Carlo estimates of `E‖U_n - Y_n‖²`, grid sweeps, empirical strong
//! order, and CSV / gnuplot export.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::{map_indexed, Execution};
use crate::grid::GridSpec;
use crate::integrators::{
    fill_wiener_increments, path_rng, simulate_pair_with, SchemeConfig, StepError, Stepper,
};
use crate::problems::{NoiseKind, NoiseScaling, ProblemError, ProblemFamily, SemiDiscreteProblem};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("every path blew up (first at step {first_step})")]
    AllPathsBlewUp {
        first_step: usize,
        partial: Box<MsdEstimate>,
    },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("estimate is empty")]
    EmptyEstimate,
    #[error("regression needs at least two finite positive errors, got {0}")]
    DegenerateRegression(usize),
    #[error(transparent)]
    Step(#[from] StepError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Norm used for reported deviations. The dynamics never see this.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormScaling {
    /// Euclidean norm of the state vector.
    #[default]
    None,
    /// Discrete `L²` norm, `sqrt(dx) ‖·‖`.
    SqrtDx,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RunOptions {
    pub norm_scaling: NormScaling,
    pub execution: Execution,
}

/// Nodal initial data on the unit-normalized domain, applied to every
/// component of a system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialCondition {
    /// `amplitude * sin(mode * π x̂)`.
    Sine {
        amplitude: f64,
        mode: u32,
    },
    Constant(f64),
    /// Raw state vector; only valid for a grid of matching size.
    Values(Vec<f64>),
}

impl InitialCondition {
    pub fn sample(&self, problem: &SemiDiscreteProblem) -> Result<Vec<f64>, ExperimentError> {
        let g = problem.grid();
        let nodal = match self {
            Self::Sine { amplitude, mode } => {
                let k = *mode as f64 * std::f64::consts::PI;
                g.sample(|x| amplitude * (k * g.unit(x)).sin())
            }
            Self::Constant(c) => vec![*c; g.n_unknowns()],
            Self::Values(v) => {
                if v.len() != problem.state_dim() {
                    return Err(ExperimentError::InvalidInput(format!(
                        "initial state has {} entries, problem needs {}",
                        v.len(),
                        problem.state_dim()
                    )));
                }
                return Ok(v.clone());
            }
        };
        let comps = vec![nodal; problem.n_components()];
        Ok(problem.interleave(&comps))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialPair {
    pub u0: InitialCondition,
    pub y0: InitialCondition,
}

impl Default for InitialPair {
    fn default() -> Self {
        Self {
            u0: InitialCondition::Sine {
                amplitude: 1.0,
                mode: 1,
            },
            y0: InitialCondition::Sine {
                amplitude: -1.0,
                mode: 1,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MsdEstimate {
    pub label: String,
    pub times: Vec<f64>,
    /// Sample mean of `‖U_n - Y_n‖²` over the paths still alive at step `n`.
    pub msd: Vec<f64>,
    pub stderr: Vec<f64>,
    pub n_alive: Vec<usize>,
    pub n_paths: usize,
    pub blowup_fraction: f64,
    pub config_echo: serde_json::Value,
}

impl MsdEstimate {
    pub fn len(&self) -> usize {
        self.msd.len()
    }

    pub fn is_empty(&self) -> bool {
        self.msd.is_empty()
    }

    /// `msd[last] / msd[0]`.
    pub fn decay_ratio(&self) -> f64 {
        match (self.msd.first(), self.msd.last()) {
            (Some(a), Some(b)) => b / a,
            _ => f64::NAN,
        }
    }
}

fn echo(problem: &SemiDiscreteProblem, cfg: &SchemeConfig, opts: &RunOptions) -> serde_json::Value {
    serde_json::json!({
        "problem": problem.name(),
        "grid": problem.grid(),
        "noise": problem.noise().label(),
        "noise_scale": problem.noise_scale(),
        "scheme": cfg,
        "norm_scaling": opts.norm_scaling,
    })
}

/// Mean and standard error of the squared deviations of `n_paths` coupled
/// pairs. A path stops contributing at its blow-up step.
pub fn run_msd(
    problem: &SemiDiscreteProblem,
    cfg: &SchemeConfig,
    u0: &[f64],
    y0: &[f64],
    n_paths: usize,
    opts: &RunOptions,
) -> Result<MsdEstimate, ExperimentError> {
    if n_paths < 2 {
        return Err(ExperimentError::InvalidInput(
            "n_paths must be at least 2".into(),
        ));
    }
    let stepper = Stepper::new(problem, *cfg)?;
    let trajs = map_indexed(n_paths, opts.execution, |p| {
        simulate_pair_with(&stepper, u0, y0, p as u64, false).map(|t| (t.z_sqnorms, t.blowup_step))
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;

    let scale = match opts.norm_scaling {
        NormScaling::None => 1.0,
        NormScaling::SqrtDx => problem.grid().dx,
    };
    let mut est = MsdEstimate {
        label: format!("{} n_points={}", problem.name(), problem.grid().n_points),
        times: Vec::with_capacity(cfg.n_steps + 1),
        msd: Vec::with_capacity(cfg.n_steps + 1),
        stderr: Vec::with_capacity(cfg.n_steps + 1),
        n_alive: Vec::with_capacity(cfg.n_steps + 1),
        n_paths,
        blowup_fraction: 0.0,
        config_echo: echo(problem, cfg, opts),
    };
    for n in 0..=cfg.n_steps {
        // fixed path order keeps the sums independent of scheduling
        let mut k = 0usize;
        let mut sum = 0.0;
        for (z, _) in &trajs {
            if let Some(v) = z.get(n) {
                sum += scale * v;
                k += 1;
            }
        }
        if k == 0 {
            break;
        }
        let mean = sum / k as f64;
        let se = if k > 1 {
            let ss: f64 = trajs
                .iter()
                .filter_map(|(z, _)| z.get(n))
                .map(|v| (scale * v - mean).powi(2))
                .sum();
            (ss / (k - 1) as f64 / k as f64).sqrt()
        } else {
            0.0
        };
        est.times.push(n as f64 * cfg.dt);
        est.msd.push(mean);
        est.stderr.push(se);
        est.n_alive.push(k);
    }
    let blown: Vec<usize> = trajs.iter().filter_map(|(_, b)| *b).collect();
    est.blowup_fraction = blown.len() as f64 / n_paths as f64;
    if blown.len() == n_paths {
        return Err(ExperimentError::AllPathsBlewUp {
            first_step: blown.iter().copied().min().unwrap_or(0),
            partial: Box::new(est),
        });
    }
    Ok(est)
}

/// One [`run_msd`] per grid with shared time stepping. Runs in which every
/// path blew up are returned as their partial estimates.
#[allow(clippy::too_many_arguments)]
pub fn run_dx_sweep(
    family: &ProblemFamily,
    noise: &NoiseKind,
    noise_scaling: NoiseScaling,
    cfg: &SchemeConfig,
    grids: &[GridSpec],
    initial: &InitialPair,
    n_paths: usize,
    opts: &RunOptions,
) -> Result<Vec<MsdEstimate>, ExperimentError> {
    if grids.is_empty() {
        return Err(ExperimentError::InvalidInput("no grids given".into()));
    }
    let mut out = Vec::with_capacity(grids.len());
    for g in grids {
        let problem = family.build(g, noise.clone(), noise_scaling)?;
        let u0 = initial.u0.sample(&problem)?;
        let y0 = initial.y0.sample(&problem)?;
        match run_msd(&problem, cfg, &u0, &y0, n_paths, opts) {
            Ok(e) => out.push(e),
            Err(ExperimentError::AllPathsBlewUp { partial, .. }) => out.push(*partial),
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderEstimate {
    /// Least-squares slope of `log(error)` against `log(dt)`.
    pub slope: f64,
    pub reference_dt: f64,
    pub dts: Vec<f64>,
    /// Root-mean-square endpoint error against the reference solution.
    pub errors: Vec<f64>,
    pub n_paths: usize,
    /// Paths dropped because some step size blew up on them.
    pub n_discarded: usize,
}

fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Empirical strong order at the final time `cfg.final_time()`.
///
/// `dts` must form a refinement chain: every step is an integer multiple of
/// the smallest one, whose solution serves as the reference. Coarse steps
/// use sums of the reference increments, so every step size sees the same
/// Brownian path. `cfg.dt` and `cfg.n_steps` only fix the final time.
pub fn strong_order(
    problem: &SemiDiscreteProblem,
    cfg: &SchemeConfig,
    dts: &[f64],
    x0: &[f64],
    n_paths: usize,
    exec: Execution,
) -> Result<OrderEstimate, ExperimentError> {
    strong_order_with_reference(problem, cfg, dts, 1, x0, n_paths, exec)
}

/// [`strong_order`] against a reference step `refine` times smaller than the
/// smallest of `dts`. With `refine > 1` every step in `dts` enters the fit.
#[allow(clippy::too_many_arguments)]
pub fn strong_order_with_reference(
    problem: &SemiDiscreteProblem,
    cfg: &SchemeConfig,
    dts: &[f64],
    refine: usize,
    x0: &[f64],
    n_paths: usize,
    exec: Execution,
) -> Result<OrderEstimate, ExperimentError> {
    let t_end = cfg.final_time();
    let finest = dts.iter().copied().fold(f64::INFINITY, f64::min);
    if refine == 0 {
        return Err(ExperimentError::InvalidInput(
            "reference refinement must be >= 1".into(),
        ));
    }
    let fine = finest / refine as f64;
    if dts.len() + usize::from(refine > 1) < 3 || !(fine > 0.0) || n_paths == 0 {
        return Err(ExperimentError::InvalidInput(
            "need at least three positive step sizes and one path".into(),
        ));
    }
    let steps_of = |dt: f64| -> Result<usize, ExperimentError> {
        let n = (t_end / dt).round();
        if n < 1.0 || (n * dt - t_end).abs() > 1e-9 * t_end {
            return Err(ExperimentError::InvalidInput(format!(
                "dt = {dt} does not divide the final time {t_end}"
            )));
        }
        Ok(n as usize)
    };
    let n_fine = steps_of(fine)?;
    let mut coarse: Vec<(f64, usize, usize)> = Vec::new();
    for &dt in dts {
        if refine == 1 && dt == fine {
            continue;
        }
        let n = steps_of(dt)?;
        if n_fine % n != 0 {
            return Err(ExperimentError::InvalidInput(format!(
                "dt = {dt} is not a multiple of the reference step {fine}"
            )));
        }
        coarse.push((dt, n, n_fine / n));
    }
    let make = |dt: f64, n: usize| SchemeConfig {
        dt,
        n_steps: n,
        ..*cfg
    };
    let fine_stepper = Stepper::new(problem, make(fine, n_fine))?;
    let steppers = coarse
        .iter()
        .map(|&(dt, n, _)| Stepper::new(problem, make(dt, n)))
        .collect::<Result<Vec<_>, _>>()?;
    let dim = problem.state_dim();

    // per path: squared endpoint error for each coarse step, or None on blow-up
    let per_path = map_indexed(n_paths, exec, |p| -> Option<Vec<f64>> {
        let mut rng = path_rng(cfg.seed, p as u64);
        let mut incs = vec![0.0; n_fine * dim];
        for chunk in incs.chunks_exact_mut(dim) {
            fill_wiener_increments(&mut rng, fine, chunk);
        }
        let run = |stepper: &Stepper<'_>, ratio: usize| -> Option<Vec<f64>> {
            let mut x = x0.to_vec();
            let mut next = vec![0.0; dim];
            let mut dw = vec![0.0; dim];
            for block in incs.chunks_exact(dim * ratio) {
                dw.fill(0.0);
                for sub in block.chunks_exact(dim) {
                    for (d, s) in dw.iter_mut().zip(sub) {
                        *d += s;
                    }
                }
                stepper.step(&x, &dw, &mut next).ok()?;
                std::mem::swap(&mut x, &mut next);
            }
            Some(x)
        };
        let reference = run(&fine_stepper, 1)?;
        coarse
            .iter()
            .zip(&steppers)
            .map(|(&(_, _, ratio), st)| {
                run(st, ratio).map(|x| x.iter().zip(&reference).map(|(a, b)| (a - b).powi(2)).sum())
            })
            .collect()
    });
    let kept: Vec<Vec<f64>> = per_path.into_iter().flatten().collect();
    let n_discarded = n_paths - kept.len();
    let errors: Vec<f64> = (0..coarse.len())
        .map(|i| (kept.iter().map(|e| e[i]).sum::<f64>() / kept.len() as f64).sqrt())
        .collect();
    let pts: Vec<(f64, f64)> = coarse
        .iter()
        .zip(&errors)
        .filter(|(_, e)| e.is_finite() && **e > 0.0)
        .map(|(c, e)| (c.0.ln(), e.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(ExperimentError::DegenerateRegression(pts.len()));
    }
    let (lx, ly): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
    Ok(OrderEstimate {
        slope: ls_slope(&lx, &ly),
        reference_dt: fine,
        dts: coarse.iter().map(|c| c.0).collect(),
        errors,
        n_paths,
        n_discarded,
    })
}

/// CSV text with header `step,time,msd,stderr`, preceded by a `#` comment
/// line when `stamp` is given.
pub fn format_csv(est: &MsdEstimate, stamp: Option<&str>) -> Result<String, ExperimentError> {
    if est.is_empty() {
        return Err(ExperimentError::EmptyEstimate);
    }
    let mut s = String::new();
    if let Some(t) = stamp {
        let _ = writeln!(s, "# generated {t}");
    }
    s.push_str("step,time,msd,stderr\n");
    for n in 0..est.len() {
        let _ = writeln!(
            s,
            "{n},{:e},{:e},{:e}",
            est.times[n], est.msd[n], est.stderr[n]
        );
    }
    Ok(s)
}

pub fn write_csv(
    est: &MsdEstimate,
    path: &Path,
    stamp: Option<&str>,
) -> Result<(), ExperimentError> {
    let text = format_csv(est, stamp)?;
    fs::write(path, text)?;
    Ok(())
}

/// Writes `est` without a timestamp line.
pub fn export_csv(est: &MsdEstimate, path: &Path) -> Result<(), ExperimentError> {
    write_csv(est, path, None)
}

/// Parses CSV written by [`format_csv`] back into `(step, time, msd, stderr)` rows.
pub fn parse_csv(text: &str) -> Result<Vec<(usize, f64, f64, f64)>, ExperimentError> {
    let bad = |l: &str| ExperimentError::InvalidInput(format!("malformed CSV line {l:?}"));
    let mut rows = Vec::new();
    for line in text.lines().filter(|l| !l.starts_with('#')).skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(bad(line));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad(line));
        rows.push((
            f[0].parse().map_err(|_| bad(line))?,
            num(f[1])?,
            num(f[2])?,
            num(f[3])?,
        ));
    }
    Ok(rows)
}

/// Gnuplot script drawing each `(label, csv file)` as one curve on a
/// logarithmic y axis.
pub fn plot_script(curves: &[(String, String)], title: &str, image: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "set terminal pngcairo size 900,600");
    let _ = writeln!(s, "set output '{image}'");
    let _ = writeln!(s, "set datafile separator ','");
    let _ = writeln!(s, "set title '{title}'");
    let _ = writeln!(s, "set xlabel 't'");
    let _ = writeln!(s, "set ylabel 'E|U_n - Y_n|^2'");
    let _ = writeln!(s, "set logscale y");
    let _ = writeln!(s, "set format y '10^{{%L}}'");
    let _ = writeln!(s, "set key top right");
    let parts: Vec<String> = curves
        .iter()
        .map(|(label, file)| format!("'{file}' every ::1 using 2:3 with lines title '{label}'"))
        .collect();
    let _ = writeln!(s, "plot {}", parts.join(", \\\n     "));
    s
}

/// Writes a plot script for `est` next to its CSV at `csv`.
pub fn export_plot_script(
    est: &MsdEstimate,
    csv: &Path,
    path: &Path,
) -> Result<(), ExperimentError> {
    if est.is_empty() {
        return Err(ExperimentError::EmptyEstimate);
    }
    let file = csv
        .file_name()
        .map(|f| f.to_string_lossy().into_owned())
        .unwrap_or_default();
    let image = path.with_extension("png");
    let image = image
        .file_name()
        .map(|f| f.to_string_lossy().into_owned())
        .unwrap_or_default();
    fs::write(
        path,
        plot_script(&[(est.label.clone(), file)], &est.label, &image),
    )?;
    Ok(())
}
