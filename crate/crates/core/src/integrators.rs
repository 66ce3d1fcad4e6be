//! Stochastic θ-Maruyama and θ-IMEX time stepping.
//!
//! θ-Maruyama treats the whole drift `f(X) = -A X + R(X)` with θ-weighting and
//! solves the implicit stage by Newton's method with the exact Jacobian
//! `I + θ dt (A - R'(X))`. θ-IMEX applies the θ-weighting to the linear
//! operator only and takes the reaction explicitly, so every step is one
//! banded solve with the fixed matrix `I + θ dt A`. Diffusion is explicit in
//! both schemes.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{BandLu, BandMatrix, GridError};
use crate::problems::SemiDiscreteProblem;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StepError {
    #[error("Newton iteration stalled after {iterations} iterations (residual {residual:e})")]
    NewtonDivergence { iterations: usize, residual: f64 },
    #[error("non-finite value in the state")]
    NonFinite,
    #[error(transparent)]
    Linear(#[from] GridError),
    #[error("invalid scheme configuration: {0}")]
    InvalidConfig(String),
    #[error("state has length {found}, problem expects {expected}")]
    DimensionMismatch { expected: usize, found: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    ThetaMaruyama,
    ThetaImex,
}

/// Weight of the explicit reaction term in a θ-IMEX step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImexReactionWeight {
    /// `dt R(X_n)`.
    #[default]
    Dt,
    /// `θ dt R(X_n)`.
    ThetaDt,
}

pub const DEFAULT_NEWTON_TOL: f64 = 1e-10;
pub const DEFAULT_NEWTON_MAX_ITER: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeConfig {
    pub theta: f64,
    pub dt: f64,
    pub n_steps: usize,
    pub scheme: Scheme,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub seed: u64,
    pub imex_reaction_weight: ImexReactionWeight,
}

impl SchemeConfig {
    pub fn new(theta: f64, dt: f64, n_steps: usize, scheme: Scheme) -> Result<Self, StepError> {
        let cfg = Self {
            theta,
            dt,
            n_steps,
            scheme,
            newton_tol: DEFAULT_NEWTON_TOL,
            newton_max_iter: DEFAULT_NEWTON_MAX_ITER,
            seed: 0,
            imex_reaction_weight: ImexReactionWeight::Dt,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// `N` steps of size `T / N`.
    pub fn over(
        theta: f64,
        final_time: f64,
        n_steps: usize,
        scheme: Scheme,
    ) -> Result<Self, StepError> {
        if n_steps == 0 {
            return Err(StepError::InvalidConfig("n_steps must be positive".into()));
        }
        Self::new(theta, final_time / n_steps as f64, n_steps, scheme)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), StepError> {
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(StepError::InvalidConfig(format!(
                "theta must lie in [0, 1], got {}",
                self.theta
            )));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(StepError::InvalidConfig(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if !(self.newton_tol > 0.0) {
            return Err(StepError::InvalidConfig(
                "newton_tol must be positive".into(),
            ));
        }
        if self.newton_max_iter == 0 {
            return Err(StepError::InvalidConfig(
                "newton_max_iter must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn final_time(&self) -> f64 {
        self.dt * self.n_steps as f64
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|n| n as f64 * self.dt).collect()
    }
}

/// Independent random stream for path `path_id` under `seed`.
pub fn path_rng(seed: u64, path_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path_id);
    rng
}

/// Fills `out` with independent `N(0, dt)` draws.
pub fn fill_wiener_increments<R: rand::Rng + ?Sized>(rng: &mut R, dt: f64, out: &mut [f64]) {
    let s = dt.sqrt();
    for o in out.iter_mut() {
        let z: f64 = StandardNormal.sample(rng);
        *o = s * z;
    }
}

pub fn sample_wiener_increments<R: rand::Rng + ?Sized>(
    rng: &mut R,
    dim: usize,
    dt: f64,
) -> Vec<f64> {
    let mut out = vec![0.0; dim];
    fill_wiener_increments(rng, dt, &mut out);
    out
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// One-step map of a configured scheme, with the θ-independent matrix work
/// done once up front. Shareable across threads.
#[derive(Debug)]
pub struct Stepper<'a> {
    problem: &'a SemiDiscreteProblem,
    cfg: SchemeConfig,
    // I + θ dt A
    shifted: BandMatrix,
    imex_lu: Option<BandLu>,
}

impl<'a> Stepper<'a> {
    pub fn new(problem: &'a SemiDiscreteProblem, cfg: SchemeConfig) -> Result<Self, StepError> {
        cfg.validate()?;
        let shifted = problem.operator().identity_plus(cfg.theta * cfg.dt);
        let imex_lu = match cfg.scheme {
            Scheme::ThetaImex => Some(BandLu::factor(&shifted)?),
            Scheme::ThetaMaruyama => None,
        };
        Ok(Self {
            problem,
            cfg,
            shifted,
            imex_lu,
        })
    }

    pub fn config(&self) -> &SchemeConfig {
        &self.cfg
    }

    pub fn problem(&self) -> &SemiDiscreteProblem {
        self.problem
    }

    /// Advances `x` by one step driven by the increment `dw`; returns the
    /// number of Newton iterations used (zero for explicit and IMEX steps).
    pub fn step(&self, x: &[f64], dw: &[f64], out: &mut [f64]) -> Result<usize, StepError> {
        let n = self.problem.state_dim();
        for len in [x.len(), dw.len(), out.len()] {
            if len != n {
                return Err(StepError::DimensionMismatch {
                    expected: n,
                    found: len,
                });
            }
        }
        let iters = match self.cfg.scheme {
            Scheme::ThetaMaruyama => self.theta_maruyama(x, dw, out)?,
            Scheme::ThetaImex => {
                self.theta_imex(x, dw, out);
                0
            }
        };
        if !all_finite(out) {
            return Err(StepError::NonFinite);
        }
        Ok(iters)
    }

    /// `X_n + (1 - θ) dt f(X_n) + G(X_n) ⊙ dW`.
    fn explicit_part(&self, x: &[f64], dw: &[f64]) -> Vec<f64> {
        let (theta, dt) = (self.cfg.theta, self.cfg.dt);
        let mut rhs = self.problem.diffusion(x);
        for (r, w) in rhs.iter_mut().zip(dw) {
            *r *= w;
        }
        if theta < 1.0 {
            let mut f = vec![0.0; x.len()];
            self.problem.drift_into(x, &mut f);
            for ((r, xi), fi) in rhs.iter_mut().zip(x).zip(&f) {
                *r += xi + (1.0 - theta) * dt * fi;
            }
        } else {
            for (r, xi) in rhs.iter_mut().zip(x) {
                *r += xi;
            }
        }
        rhs
    }

    fn theta_maruyama(&self, x: &[f64], dw: &[f64], out: &mut [f64]) -> Result<usize, StepError> {
        let rhs = self.explicit_part(x, dw);
        if self.cfg.theta == 0.0 {
            out.copy_from_slice(&rhs);
            return Ok(0);
        }
        let c = self.cfg.theta * self.cfg.dt;
        let target = self.cfg.newton_tol * (1.0 + norm(&rhs));
        out.copy_from_slice(x);
        let n = x.len();
        let mut f = vec![0.0; n];
        let mut r = vec![0.0; n];
        for it in 0..=self.cfg.newton_max_iter {
            // F(x) = (I + c A) x - c R(x) - rhs
            self.shifted.mul_vec_into(out, &mut f);
            self.problem.reaction_into(out, &mut r);
            for ((fi, ri), bi) in f.iter_mut().zip(&r).zip(&rhs) {
                *fi -= c * ri + bi;
            }
            let res = norm(&f);
            if !res.is_finite() {
                return Err(StepError::NonFinite);
            }
            if res <= target {
                return Ok(it);
            }
            if it == self.cfg.newton_max_iter {
                return Err(StepError::NewtonDivergence {
                    iterations: it,
                    residual: res,
                });
            }
            let jac = self
                .shifted
                .lin_comb(1.0, &self.problem.reaction_jacobian(out), -c);
            BandLu::factor(&jac)?.solve_in_place(&mut f);
            for (o, d) in out.iter_mut().zip(&f) {
                *o -= d;
            }
        }
        unreachable!("loop returns on its last iteration")
    }

    fn theta_imex(&self, x: &[f64], dw: &[f64], out: &mut [f64]) {
        let (theta, dt) = (self.cfg.theta, self.cfg.dt);
        let w = match self.cfg.imex_reaction_weight {
            ImexReactionWeight::Dt => dt,
            ImexReactionWeight::ThetaDt => theta * dt,
        };
        let ax = self.problem.operator().mul_vec(x);
        let r = self.problem.reaction(x);
        self.problem.diffusion_into(x, out);
        for i in 0..x.len() {
            out[i] = x[i] - (1.0 - theta) * dt * ax[i] + w * r[i] + out[i] * dw[i];
        }
        self.imex_lu
            .as_ref()
            .expect("IMEX stepper factors its matrix on construction")
            .solve_in_place(out);
    }
}

/// One θ-Maruyama step; returns the new state and the Newton iteration count.
pub fn theta_maruyama_step(
    problem: &SemiDiscreteProblem,
    cfg: &SchemeConfig,
    x_n: &[f64],
    dw: &[f64],
) -> Result<(Vec<f64>, usize), StepError> {
    let cfg = SchemeConfig {
        scheme: Scheme::ThetaMaruyama,
        ..*cfg
    };
    let stepper = Stepper::new(problem, cfg)?;
    let mut out = vec![0.0; x_n.len()];
    let it = stepper.step(x_n, dw, &mut out)?;
    Ok((out, it))
}

/// One θ-IMEX step.
pub fn theta_imex_step(
    problem: &SemiDiscreteProblem,
    cfg: &SchemeConfig,
    x_n: &[f64],
    dw: &[f64],
) -> Result<Vec<f64>, StepError> {
    let cfg = SchemeConfig {
        scheme: Scheme::ThetaImex,
        ..*cfg
    };
    let stepper = Stepper::new(problem, cfg)?;
    let mut out = vec![0.0; x_n.len()];
    stepper.step(x_n, dw, &mut out)?;
    Ok(out)
}

/// Two solutions driven by one noise path.
#[derive(Debug, Clone, PartialEq)]
pub struct PairTrajectory {
    pub times: Vec<f64>,
    pub u_states: Option<Vec<Vec<f64>>>,
    pub y_states: Option<Vec<Vec<f64>>>,
    /// `‖U_n - Y_n‖²` for every completed step, starting at `n = 0`.
    pub z_sqnorms: Vec<f64>,
    /// Newton iterations `[U, Y]` per step.
    pub newton_iters: Vec<[u32; 2]>,
    /// Largest `|U_i|`, `|Y_i|` seen along the path.
    pub max_abs_state: f64,
    /// Step index at which the path stopped being finite (or Newton failed).
    pub blowup_step: Option<usize>,
}

fn sqdist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// Advances `u0` and `y0` for `cfg.n_steps` steps with the same increments.
/// The random stream is fixed by `(cfg.seed, path_id)`.
pub fn simulate_pair(
    problem: &SemiDiscreteProblem,
    cfg: &SchemeConfig,
    u0: &[f64],
    y0: &[f64],
    path_id: u64,
    record_states: bool,
) -> Result<PairTrajectory, StepError> {
    let stepper = Stepper::new(problem, *cfg)?;
    simulate_pair_with(&stepper, u0, y0, path_id, record_states)
}

pub fn simulate_pair_with(
    stepper: &Stepper<'_>,
    u0: &[f64],
    y0: &[f64],
    path_id: u64,
    record_states: bool,
) -> Result<PairTrajectory, StepError> {
    let cfg = *stepper.config();
    let n = stepper.problem().state_dim();
    for len in [u0.len(), y0.len()] {
        if len != n {
            return Err(StepError::DimensionMismatch {
                expected: n,
                found: len,
            });
        }
    }
    let mut rng = path_rng(cfg.seed, path_id);
    let (mut u, mut y) = (u0.to_vec(), y0.to_vec());
    let (mut un, mut yn) = (vec![0.0; n], vec![0.0; n]);
    let mut dw = vec![0.0; n];

    let cap = cfg.n_steps + 1;
    let mut traj = PairTrajectory {
        times: Vec::with_capacity(cap),
        u_states: record_states.then(|| Vec::with_capacity(cap)),
        y_states: record_states.then(|| Vec::with_capacity(cap)),
        z_sqnorms: Vec::with_capacity(cap),
        newton_iters: Vec::with_capacity(cfg.n_steps),
        max_abs_state: max_abs(&u).max(max_abs(&y)),
        blowup_step: None,
    };
    let push = |t: &mut PairTrajectory, step: usize, u: &[f64], y: &[f64]| {
        t.times.push(step as f64 * cfg.dt);
        t.z_sqnorms.push(sqdist(u, y));
        if let (Some(us), Some(ys)) = (t.u_states.as_mut(), t.y_states.as_mut()) {
            us.push(u.to_vec());
            ys.push(y.to_vec());
        }
    };
    push(&mut traj, 0, &u, &y);

    for step in 1..=cfg.n_steps {
        fill_wiener_increments(&mut rng, cfg.dt, &mut dw);
        let iu = stepper.step(&u, &dw, &mut un);
        let iy = iu.as_ref().ok().map(|_| stepper.step(&y, &dw, &mut yn));
        match (iu, iy) {
            (Ok(a), Some(Ok(b))) if sqdist(&un, &yn).is_finite() => {
                std::mem::swap(&mut u, &mut un);
                std::mem::swap(&mut y, &mut yn);
                traj.newton_iters.push([a as u32, b as u32]);
                traj.max_abs_state = traj.max_abs_state.max(max_abs(&u)).max(max_abs(&y));
                push(&mut traj, step, &u, &y);
            }
            // non-finite states, stalled Newton and singular Newton matrices
            // all mean the path has left the regime the scheme can follow
            _ => {
                traj.blowup_step = Some(step);
                break;
            }
        }
    }
    Ok(traj)
}

/// Advances a single solution from `x0`; `observe(n, X_n)` sees every
/// finite state starting at `n = 0`. Returns the blow-up step, if any. The
/// increments are those [`simulate_pair_with`] uses for the same path.
pub fn simulate_path_with(
    stepper: &Stepper<'_>,
    x0: &[f64],
    path_id: u64,
    mut observe: impl FnMut(usize, &[f64]),
) -> Result<Option<usize>, StepError> {
    let cfg = *stepper.config();
    let n = stepper.problem().state_dim();
    if x0.len() != n {
        return Err(StepError::DimensionMismatch {
            expected: n,
            found: x0.len(),
        });
    }
    let mut rng = path_rng(cfg.seed, path_id);
    let mut x = x0.to_vec();
    let mut next = vec![0.0; n];
    let mut dw = vec![0.0; n];
    observe(0, &x);
    for step in 1..=cfg.n_steps {
        fill_wiener_increments(&mut rng, cfg.dt, &mut dw);
        match stepper.step(&x, &dw, &mut next) {
            Ok(_) => {
                std::mem::swap(&mut x, &mut next);
                observe(step, &x);
            }
            Err(_) => return Ok(Some(step)),
        }
    }
    Ok(None)
}
