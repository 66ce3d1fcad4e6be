//! Mean-square contractivity coefficients, stepsize predicates and the
//! constants they depend on.
//!
//! For θ-Maruyama the one-step growth factor of `E‖U_n - Y_n‖²` is bounded by
//! `α` built from `‖A‖ + M`; for θ-IMEX the reaction is explicit and `M`
//! enters the numerator only. Under a one-sided Lipschitz reaction the bound
//! is `γ` instead. Every coefficient is evaluated exactly as written, without
//! clamping or rearrangement.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::{map_indexed, Execution};
use crate::grid::{
    extreme_eigenvalues, operator_norm, spectral_norm, BandLu, BandMatrix, GridError,
};
use crate::integrators::{simulate_path_with, Scheme, SchemeConfig, StepError, Stepper};
use crate::problems::SemiDiscreteProblem;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("invalid constants: {0}")]
    InvalidConstants(String),
    #[error("vanishing denominator in {0}")]
    DivisionByZero(&'static str),
    #[error("unsupported combination: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Step(#[from] StepError),
}

/// Which moment of `‖R'(U(t))‖` defines `M`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MVariant {
    /// `sup_t E‖R'(U(t))‖`: multiplicative θ-Maruyama and both θ-IMEX bounds.
    ExpectationOfNorm,
    /// `sup_t E‖R'(U(t))‖²`: additive θ-Maruyama bound.
    #[default]
    ExpectationOfNormSquared,
}

/// Problem constants entering the coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConstants {
    #[serde(rename = "norm_A")]
    pub norm_a: f64,
    #[serde(rename = "M")]
    pub m: f64,
    pub m_variant: MVariant,
    /// Lipschitz constant of the diffusion `G`.
    #[serde(rename = "L_g")]
    pub l_g: f64,
    /// One-sided Lipschitz constant of the reaction.
    pub mu: f64,
    /// `norm_A + mu`.
    pub mu_star: f64,
    /// Squared-form Lipschitz constant of `G`: `‖G(u) - G(v)‖² <= L ‖u - v‖²`.
    #[serde(rename = "L")]
    pub l: f64,
}

impl AnalysisConstants {
    pub fn new(
        norm_a: f64,
        m: f64,
        m_variant: MVariant,
        l_g: f64,
        mu: f64,
        l: f64,
    ) -> Result<Self, AnalysisError> {
        let c = Self {
            norm_a,
            m,
            m_variant,
            l_g,
            mu,
            mu_star: norm_a + mu,
            l,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), AnalysisError> {
        let named = [
            ("norm_A", self.norm_a),
            ("M", self.m),
            ("L_g", self.l_g),
            ("L", self.l),
        ];
        for (name, v) in named {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(AnalysisError::InvalidConstants(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        if !self.mu.is_finite() {
            return Err(AnalysisError::InvalidConstants(format!(
                "mu must be finite, got {}",
                self.mu
            )));
        }
        if self.mu_star != self.norm_a + self.mu {
            return Err(AnalysisError::InvalidConstants(
                "mu_star must equal norm_A + mu".into(),
            ));
        }
        Ok(())
    }
}

/// Applies `(I + θ dt A)^{-1}` by banded solves.
#[derive(Debug, Clone)]
pub struct Resolvent {
    lu: Option<BandLu>,
    dim: usize,
}

impl Resolvent {
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.dim, "vector length mismatch");
        match &self.lu {
            Some(lu) => lu.solve(v),
            None => v.to_vec(),
        }
    }
}

/// Factors `D = (I + θ dt A)^{-1}`; the identity at `θ dt = 0`.
pub fn resolvent(a: &BandMatrix, theta: f64, dt: f64) -> Result<Resolvent, GridError> {
    let c = theta * dt;
    let lu = if c == 0.0 {
        None
    } else {
        Some(BandLu::factor(&a.identity_plus(c))?)
    };
    Ok(Resolvent { lu, dim: a.dim() })
}

/// Norm bounds on `D = (I + θ dt A)^{-1}` and `C = D (I - (1 - θ) dt A)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LemmaBounds {
    pub resolvent: f64,
    pub propagator: f64,
    /// False once `θ dt ‖A‖ >= 1`, where both bounds lose meaning.
    pub valid: bool,
}

pub fn lemma_bounds(norm_a: f64, theta: f64, dt: f64) -> LemmaBounds {
    let den = 1.0 - theta * dt * norm_a;
    LemmaBounds {
        resolvent: 1.0 / den,
        propagator: (1.0 + (1.0 - theta) * dt * norm_a) / den,
        valid: den > 0.0,
    }
}

fn checked_ratio(num: f64, den: f64, what: &'static str) -> Result<f64, AnalysisError> {
    if den == 0.0 {
        return Err(AnalysisError::DivisionByZero(what));
    }
    Ok(num / den)
}

/// θ-Maruyama, additive noise. Pairs with [`MVariant::ExpectationOfNormSquared`].
pub fn alpha_theta_additive(
    c: &AnalysisConstants,
    theta: f64,
    dt: f64,
) -> Result<f64, AnalysisError> {
    let s = c.norm_a + c.m;
    let r = checked_ratio(
        1.0 + (1.0 - theta) * dt * s,
        1.0 - theta * dt * s,
        "alpha_theta_additive",
    )?;
    Ok(r * r)
}

/// θ-Maruyama, multiplicative noise. Pairs with [`MVariant::ExpectationOfNorm`].
pub fn alpha_theta_multiplicative(
    c: &AnalysisConstants,
    theta: f64,
    dt: f64,
) -> Result<f64, AnalysisError> {
    let s = c.norm_a + c.m;
    let num = 1.0 + (1.0 - theta) * dt * s;
    let den = 1.0 - theta * dt * s;
    checked_ratio(
        num * num + c.l_g * c.l_g * dt,
        den * den,
        "alpha_theta_multiplicative",
    )
}

/// θ-IMEX, additive noise. Pairs with [`MVariant::ExpectationOfNorm`].
pub fn alpha_imex_additive(
    c: &AnalysisConstants,
    theta: f64,
    dt: f64,
) -> Result<f64, AnalysisError> {
    let r = checked_ratio(
        1.0 + (1.0 - theta) * dt * c.norm_a + dt * c.m,
        1.0 - theta * dt * c.norm_a,
        "alpha_imex_additive",
    )?;
    Ok(r * r)
}

/// θ-IMEX, multiplicative noise. Pairs with [`MVariant::ExpectationOfNorm`].
pub fn alpha_imex_multiplicative(
    c: &AnalysisConstants,
    theta: f64,
    dt: f64,
) -> Result<f64, AnalysisError> {
    let num = 1.0 + (1.0 - theta) * dt * c.norm_a + dt * c.m;
    let den = 1.0 - theta * dt * c.norm_a;
    checked_ratio(
        num * num + c.l_g * c.l_g * dt,
        den * den,
        "alpha_imex_multiplicative",
    )
}

/// Growth factor for a one-sided Lipschitz reaction (θ-Maruyama).
/// The `‖A‖² + M + 2‖A‖μ` group is used as written, even though `M` does not
/// carry the units of the other two terms.
pub fn gamma_monotonicity(
    c: &AnalysisConstants,
    theta: f64,
    dt: f64,
) -> Result<f64, AnalysisError> {
    let a = c.norm_a;
    let num = 1.0
        + (1.0 - theta).powi(2) * dt * dt * (a * a + c.m + 2.0 * a * c.mu)
        + c.l * dt
        + (1.0 - theta) * dt * c.mu_star;
    checked_ratio(
        num,
        1.0 - 2.0 * theta * dt * c.mu_star,
        "gamma_monotonicity",
    )
}

/// `2 μ* + L < 0`: mean-square dissipativity of the semi-discrete problem.
pub fn problem_dissipativity(c: &AnalysisConstants) -> bool {
    2.0 * c.mu_star + c.l < 0.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseClass {
    Additive,
    Multiplicative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Contractive,
    NotContractive,
    Indeterminate,
}

/// One-sided bound on the time step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepBound {
    /// `dt < value`.
    Max(f64),
    /// `dt > value`.
    Min(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractivityReport {
    pub scheme: Scheme,
    pub noise: NoiseClass,
    pub theta: f64,
    pub dt: f64,
    pub dx: f64,
    /// One-step coefficient.
    pub alpha: f64,
    /// `alpha^n_steps`, once a time window is attached.
    pub alpha_over_window: Option<f64>,
    pub n_steps: Option<usize>,
    /// `γ` and whether it is below one.
    pub gamma: Option<f64>,
    /// False when a denominator `1 - θ dt (...)` is not positive.
    pub valid: bool,
    pub dissipative_problem: bool,
    #[serde(flatten)]
    pub predicates: BTreeMap<String, bool>,
    pub dt_bound: Option<StepBound>,
    pub dx_bound: Option<f64>,
    pub verdict: Verdict,
    /// Name of the inequality the verdict rests on.
    pub decided_by: String,
    pub note: Option<String>,
    pub constants: AnalysisConstants,
}

impl ContractivityReport {
    pub fn with_window(mut self, n_steps: usize) -> Self {
        self.n_steps = Some(n_steps);
        self.alpha_over_window = Some(self.alpha.powi(n_steps.min(i32::MAX as usize) as i32));
        self
    }

    pub fn predicate(&self, name: &str) -> Option<bool> {
        self.predicates.get(name).copied()
    }

    /// Human-readable summary.
    pub fn summary(&self) -> String {
        let mut s = format!(
            "{:?} / {:?}: theta = {}, dt = {:e}, dx = {:e}\n  alpha = {:e} ({}), verdict: {:?} by {}",
            self.scheme,
            self.noise,
            self.theta,
            self.dt,
            self.dx,
            self.alpha,
            if self.valid { "valid" } else { "estimate not valid" },
            self.verdict,
            self.decided_by,
        );
        for (k, v) in &self.predicates {
            s.push_str(&format!("\n  {k}: {v}"));
        }
        if let Some(g) = self.gamma {
            s.push_str(&format!("\n  gamma = {g:e}"));
        }
        match self.dt_bound {
            Some(StepBound::Max(v)) => s.push_str(&format!("\n  requires dt < {v:e}")),
            Some(StepBound::Min(v)) => s.push_str(&format!("\n  requires dt > {v:e}")),
            None => {}
        }
        if let Some(v) = self.dx_bound {
            s.push_str(&format!("\n  requires dx < {v:e}"));
        }
        if let Some(n) = &self.note {
            s.push_str(&format!("\n  note: {n}"));
        }
        s
    }
}

/// Evaluates the coefficient and stepsize conditions matching `scheme` and
/// `noise`. `p` is the order of the operator (`A = B / dx^p`).
#[allow(clippy::too_many_arguments)]
pub fn evaluate_predicates(
    c: &AnalysisConstants,
    scheme: Scheme,
    noise: NoiseClass,
    theta: f64,
    dt: f64,
    dx: f64,
    p: u32,
) -> Result<ContractivityReport, AnalysisError> {
    c.validate()?;
    if !(0.0..=1.0).contains(&theta) || !(dt > 0.0) || !(dx > 0.0) || p == 0 {
        return Err(AnalysisError::Unsupported(format!(
            "theta = {theta}, dt = {dt}, dx = {dx}, p = {p}"
        )));
    }
    let a = c.norm_a;
    let m = c.m;
    let lg2 = c.l_g * c.l_g;
    let one_m2t = 1.0 - 2.0 * theta;
    let norm_b = a * dx.powi(p as i32);
    let mut preds = BTreeMap::new();
    let mut dt_bound = None;
    let mut dx_bound = None;
    let mut note = None;

    let (alpha, den, decided_by) = match (scheme, noise) {
        (Scheme::ThetaMaruyama, NoiseClass::Additive) => {
            let s = a + m;
            preds.insert("eqpar".into(), one_m2t * dt * s < -2.0);
            if theta > 0.5 {
                dt_bound = Some(StepBound::Min(-2.0 / (one_m2t * s)));
            }
            (
                alpha_theta_additive(c, theta, dt),
                1.0 - theta * dt * s,
                "eqpar",
            )
        }
        (Scheme::ThetaMaruyama, NoiseClass::Multiplicative) => {
            let s = a + m;
            preds.insert(
                "eqpar2multheta".into(),
                dt * (2.0 * s + dt * one_m2t * s * s + lg2) < 0.0,
            );
            if theta > 0.5 {
                dt_bound = Some(StepBound::Min(-(2.0 * s + lg2) / (one_m2t * s * s)));
            }
            (
                alpha_theta_multiplicative(c, theta, dt),
                1.0 - theta * dt * s,
                "eqpar2multheta",
            )
        }
        (Scheme::ThetaImex, NoiseClass::Additive) => {
            preds.insert(
                "eqpar3".into(),
                dt * (2.0 * (1.0 - theta * dt * a) + dt * (a + m)) < 0.0,
            );
            preds.insert("eqpar2bis".into(), 2.0 + dt * (m + one_m2t * a) < 0.0);
            if theta < 0.5 {
                dt_bound = Some(StepBound::Max(-2.0 / (one_m2t * a + m)));
            } else if m > 0.0 {
                let rhs = -one_m2t * norm_b / m;
                if rhs > 0.0 {
                    dx_bound = Some(rhs.powf(1.0 / p as f64));
                }
            }
            (
                alpha_imex_additive(c, theta, dt),
                1.0 - theta * dt * a,
                "eqpar2bis",
            )
        }
        (Scheme::ThetaImex, NoiseClass::Multiplicative) => {
            let q = m * m + one_m2t * a * a + 2.0 * (1.0 - theta) * m * a;
            preds.insert(
                "eqpar2".into(),
                dt * (dt * q + 2.0 * m + 2.0 * a + lg2) < 0.0,
            );
            if theta < 0.5 {
                dt_bound = Some(StepBound::Max(-(2.0 * (m + a) + lg2) / q));
            } else {
                note = Some("for theta >= 1/2 the admissible dx interval is empty".into());
            }
            (
                alpha_imex_multiplicative(c, theta, dt),
                1.0 - theta * dt * a,
                "eqpar2",
            )
        }
    };

    // one-sided Lipschitz route, reported alongside for the theta-method
    let mut gamma = None;
    if scheme == Scheme::ThetaMaruyama {
        let lhs = (1.0 - theta).powi(2) * dt * (a * a + m + 2.0 * a * c.mu)
            + c.l
            + (1.0 - theta) * c.mu_star;
        preds.insert("condcontr".into(), lhs < -2.0 * theta * c.mu_star);
        gamma = gamma_monotonicity(c, theta, dt).ok();
    }

    let alpha = alpha.unwrap_or(f64::INFINITY);
    let valid = den > 0.0;
    let verdict = if scheme == Scheme::ThetaMaruyama && theta == 0.5 {
        note = Some(
            "theta = 1/2 lies outside the theta-method estimates; see condcontr and gamma".into(),
        );
        Verdict::Indeterminate
    } else if !alpha.is_finite() {
        Verdict::Indeterminate
    } else if alpha < 1.0 {
        Verdict::Contractive
    } else {
        Verdict::NotContractive
    };
    if !valid && note.is_none() {
        note = Some(format!(
            "denominator {den:e} is not positive; the norm estimates behind alpha do not apply"
        ));
    }

    Ok(ContractivityReport {
        scheme,
        noise,
        theta,
        dt,
        dx,
        alpha,
        alpha_over_window: None,
        n_steps: None,
        gamma,
        valid,
        dissipative_problem: problem_dissipativity(c),
        predicates: preds,
        dt_bound,
        dx_bound,
        verdict,
        decided_by: decided_by.into(),
        note,
        constants: *c,
    })
}

/// Monte Carlo estimate of `M` and of the local constants observed along the
/// way.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MEstimate {
    pub value: f64,
    pub variant: MVariant,
    /// Standard error of the mean at the maximizing step.
    pub stderr: f64,
    pub argmax_step: usize,
    pub n_paths: usize,
    pub blowup_fraction: f64,
    /// More than half the paths blew up.
    pub unreliable: bool,
    /// Largest `|U_i|` seen on any path.
    pub max_abs_state: f64,
    /// Largest eigenvalue of the symmetric part of `R'` seen on any path.
    pub max_sym_eigenvalue: f64,
}

struct PathSamples {
    norms: Vec<f64>,
    max_abs: f64,
    max_sym: f64,
    blew_up: bool,
}

/// Largest eigenvalue of `(J + J^T) / 2`.
fn sym_part_max(j: &BandMatrix) -> Result<f64, GridError> {
    if j.is_diagonal() {
        return Ok(j.diagonal().into_iter().fold(f64::NEG_INFINITY, f64::max));
    }
    let s = if j.is_symmetric() {
        j.clone()
    } else {
        j.lin_comb(0.5, &j.transpose(), 0.5)
    };
    Ok(extreme_eigenvalues(&s, 1e-8)?.1)
}

/// Simulates `n_paths` trajectories from `x0` and returns
/// `max_n mean_paths ‖R'(X_n)‖` (or its square, per `variant`).
pub fn estimate_m(
    problem: &SemiDiscreteProblem,
    cfg: &SchemeConfig,
    x0: &[f64],
    n_paths: usize,
    variant: MVariant,
    exec: Execution,
) -> Result<MEstimate, AnalysisError> {
    if n_paths == 0 {
        return Err(AnalysisError::InvalidConstants(
            "n_paths must be >= 1".into(),
        ));
    }
    let stepper = Stepper::new(problem, *cfg)?;
    let results = map_indexed(n_paths, exec, |p| -> Result<PathSamples, AnalysisError> {
        let mut s = PathSamples {
            norms: Vec::with_capacity(cfg.n_steps + 1),
            max_abs: 0.0,
            max_sym: f64::NEG_INFINITY,
            blew_up: false,
        };
        let mut err = None;
        let blow = simulate_path_with(&stepper, x0, p as u64, |_, x| {
            if err.is_some() {
                return;
            }
            let j = problem.reaction_jacobian(x);
            let r = operator_norm(&j, 1e-8).and_then(|n| Ok((n, sym_part_max(&j)?)));
            match r {
                Ok((n, e)) => {
                    s.norms.push(match variant {
                        MVariant::ExpectationOfNorm => n,
                        MVariant::ExpectationOfNormSquared => n * n,
                    });
                    s.max_sym = s.max_sym.max(e);
                    s.max_abs = x.iter().fold(s.max_abs, |m, v| m.max(v.abs()));
                }
                Err(e) => err = Some(e),
            }
        })?;
        if let Some(e) = err {
            return Err(e.into());
        }
        s.blew_up = blow.is_some();
        Ok(s)
    });
    let paths = results.into_iter().collect::<Result<Vec<_>, _>>()?;

    let blown = paths.iter().filter(|p| p.blew_up).count();
    let mut best = (f64::NEG_INFINITY, 0.0, 0usize);
    for step in 0..=cfg.n_steps {
        let vals: Vec<f64> = paths
            .iter()
            .filter_map(|p| p.norms.get(step).copied())
            .collect();
        if vals.is_empty() {
            break;
        }
        let k = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / k;
        let se = if vals.len() > 1 {
            (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0) / k).sqrt()
        } else {
            0.0
        };
        if mean > best.0 {
            best = (mean, se, step);
        }
    }
    let blowup_fraction = blown as f64 / n_paths as f64;
    Ok(MEstimate {
        value: best.0,
        variant,
        stderr: best.1,
        argmax_step: best.2,
        n_paths,
        blowup_fraction,
        unreliable: blowup_fraction > 0.5,
        max_abs_state: paths.iter().fold(0.0, |m, p| m.max(p.max_abs)),
        max_sym_eigenvalue: paths
            .iter()
            .fold(f64::NEG_INFINITY, |m, p| m.max(p.max_sym)),
    })
}

/// Assembles [`AnalysisConstants`] for `problem`: `‖A‖` from the operator, `M`
/// and the local constants from `estimate`. Analytic one-sided Lipschitz
/// constants take precedence over sampled ones.
pub fn constants_for(
    problem: &SemiDiscreteProblem,
    estimate: &MEstimate,
) -> Result<AnalysisConstants, AnalysisError> {
    let norm_a = spectral_norm(problem.operator(), 1e-10)?;
    let mu = problem
        .reaction_term()
        .one_sided_lipschitz()
        .unwrap_or(estimate.max_sym_eigenvalue);
    let l_g = problem.diffusion_lipschitz(estimate.max_abs_state);
    if !l_g.is_finite() {
        return Err(AnalysisError::InvalidConstants(
            "the diffusion has no known Lipschitz constant".into(),
        ));
    }
    AnalysisConstants::new(
        norm_a,
        estimate.value.max(0.0),
        estimate.variant,
        l_g,
        mu,
        l_g * l_g,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{assemble_neg_laplacian, build_grid};
    use crate::problems::{make_ginzburg_landau, FnReaction, NoiseKind};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn consts(norm_a: f64, m: f64, l_g: f64, mu: f64, l: f64) -> AnalysisConstants {
        AnalysisConstants::new(norm_a, m, MVariant::ExpectationOfNorm, l_g, mu, l).unwrap()
    }

    #[test]
    fn resolvent_examples() {
        let a = BandMatrix::toeplitz(6, &[-1.0, 2.0, -1.0]);
        let v = vec![1.0, -2.0, 0.5, 3.0, 0.0, 1.0];
        assert_eq!(resolvent(&a, 0.0, 0.3).unwrap().apply(&v), v);
        let d = resolvent(&a, 0.7, 0.3).unwrap();
        let back = a.identity_plus(0.21).mul_vec(&d.apply(&v));
        for (x, y) in back.iter().zip(&v) {
            assert!((x - y).abs() <= 1e-10 * y.abs().max(1.0));
        }
        let one = BandMatrix::from_diagonal(&[4.0]);
        assert_eq!(resolvent(&one, 0.5, 0.5).unwrap().apply(&[3.0]), vec![1.5]);
    }

    #[test]
    fn lemma_bound_examples() {
        let b = lemma_bounds(7.0, 0.0, 0.2);
        assert_eq!((b.resolvent, b.valid), (1.0, true));
        assert!((b.propagator - 2.4).abs() < 1e-15);
        let z = lemma_bounds(7.0, 0.6, 0.0);
        assert_eq!((z.resolvent, z.propagator), (1.0, 1.0));
        assert!(!lemma_bounds(4.0, 1.0, 0.5).valid);
    }

    #[test]
    fn coefficient_examples() {
        // norm_A + M = 2
        let c = consts(1.5, 0.5, 1.0, 0.0, 0.0);
        let c0 = consts(1.5, 0.5, 0.0, 0.0, 0.0);
        assert!((alpha_theta_additive(&c, 1.0, 0.1).unwrap() - 1.5625).abs() < 1e-14);
        assert!((alpha_theta_additive(&c, 0.0, 0.1).unwrap() - 1.44).abs() < 1e-14);
        assert!((alpha_theta_multiplicative(&c, 1.0, 0.1).unwrap() - 1.71875).abs() < 1e-14);
        let (m0, a0) = (
            alpha_theta_multiplicative(&c0, 0.3, 0.1).unwrap(),
            alpha_theta_additive(&c0, 0.3, 0.1).unwrap(),
        );
        assert!((m0 - a0).abs() <= 1e-15 * a0);
        let d = consts(2.0, 1.0, 1.0, 0.0, 0.0);
        assert!((alpha_imex_additive(&d, 1.0, 0.1).unwrap() - 1.890625).abs() < 1e-14);
        assert!((alpha_imex_multiplicative(&d, 1.0, 0.1).unwrap() - 2.046875).abs() < 1e-14);
        let nom = consts(2.0, 0.0, 0.0, 0.0, 0.0);
        let (i0, t0) = (
            alpha_imex_additive(&nom, 0.4, 0.3).unwrap(),
            alpha_theta_additive(&nom, 0.4, 0.3).unwrap(),
        );
        assert!((i0 - t0).abs() <= 1e-15 * t0);
        let g = consts(1.0, 1.0, 0.0, -3.0, 0.5);
        assert!((gamma_monotonicity(&g, 0.0, 0.1).unwrap() - 0.81).abs() < 1e-14);
        let g1 = gamma_monotonicity(&g, 1.0, 0.1).unwrap();
        assert!((g1 - (1.0 + 0.05) / (1.0 + 0.4)).abs() < 1e-14);
        let sing = consts(9.0, 1.0, 0.0, 0.0, 0.0);
        assert!(matches!(
            alpha_theta_additive(&sing, 1.0, 0.1),
            Err(AnalysisError::DivisionByZero(_))
        ));
    }

    #[test]
    fn all_coefficients_are_one_at_zero_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let c = consts(
                rng.random_range(0.0..1e4),
                rng.random_range(0.0..1e2),
                rng.random_range(0.0..5.0),
                rng.random_range(-10.0..10.0),
                rng.random_range(0.0..5.0),
            );
            let th = rng.random_range(0.0..=1.0);
            assert_eq!(alpha_theta_additive(&c, th, 0.0).unwrap(), 1.0);
            assert_eq!(alpha_theta_multiplicative(&c, th, 0.0).unwrap(), 1.0);
            assert_eq!(alpha_imex_additive(&c, th, 0.0).unwrap(), 1.0);
            assert_eq!(alpha_imex_multiplicative(&c, th, 0.0).unwrap(), 1.0);
            assert_eq!(gamma_monotonicity(&c, th, 0.0).unwrap(), 1.0);
        }
    }

    #[test]
    fn multiplicative_dominates_additive() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let (a, m) = (rng.random_range(0.0..100.0), rng.random_range(0.0..10.0));
            let lg = rng.random_range(0.0..3.0);
            let c = consts(a, m, lg, 0.0, 0.0);
            let (th, dt) = (rng.random_range(0.0..=1.0), rng.random_range(1e-4..1.0));
            let (Ok(add), Ok(mul)) = (
                alpha_theta_additive(&c, th, dt),
                alpha_theta_multiplicative(&c, th, dt),
            ) else {
                continue;
            };
            assert!(mul >= add);
            let (ia, im) = (
                alpha_imex_additive(&c, th, dt).unwrap(),
                alpha_imex_multiplicative(&c, th, dt).unwrap(),
            );
            assert!(im >= ia);
            if lg > 0.0 {
                assert!(mul > add && im > ia);
            }
        }
    }

    #[test]
    fn explicit_side_grows_from_zero_step() {
        let c = consts(50.0, 2.0, 0.0, 0.0, 0.0);
        for th in [0.0, 0.2, 0.49] {
            let h = 1e-7;
            let slope = (alpha_theta_additive(&c, th, h).unwrap() - 1.0) / h;
            assert!(slope > 0.0);
        }
    }

    #[test]
    fn backward_euler_gamma_matches_continuous_condition() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let mu = rng.random_range(-20.0..5.0);
            let l = rng.random_range(0.0..10.0);
            let c = consts(0.0, 0.0, 0.0, mu, l);
            for dt in [1e-4, 1e-3, 1e-2, 0.05, 0.1] {
                if 1.0 - 2.0 * dt * c.mu_star <= 0.0 {
                    continue;
                }
                let g = gamma_monotonicity(&c, 1.0, dt).unwrap();
                assert_eq!(g < 1.0, l + 2.0 * c.mu_star < 0.0, "mu {mu} l {l} dt {dt}");
            }
        }
    }

    #[test]
    fn dissipativity_examples() {
        assert!(problem_dissipativity(&consts(0.0, 0.0, 0.0, -1.0, 0.0)));
        assert!(!problem_dissipativity(&consts(0.0, 0.0, 0.0, 0.0, 0.0)));
        assert!(problem_dissipativity(&consts(0.0, 0.0, 0.0, -2.0, 3.0)));
    }

    #[test]
    fn predicate_examples() {
        let c = consts(2.0, 1.0, 0.0, 0.0, 0.0);
        let r = evaluate_predicates(
            &c,
            Scheme::ThetaMaruyama,
            NoiseClass::Additive,
            1.0,
            1.0,
            0.1,
            2,
        )
        .unwrap();
        assert_eq!(r.predicate("eqpar"), Some(true));
        assert_eq!(r.verdict, Verdict::Contractive);
        let r0 = evaluate_predicates(
            &c,
            Scheme::ThetaMaruyama,
            NoiseClass::Additive,
            0.0,
            0.01,
            0.1,
            2,
        )
        .unwrap();
        assert_eq!(r0.predicate("eqpar"), Some(false));
        assert_eq!(r0.verdict, Verdict::NotContractive);
        let half = evaluate_predicates(
            &c,
            Scheme::ThetaMaruyama,
            NoiseClass::Additive,
            0.5,
            0.1,
            0.1,
            2,
        )
        .unwrap();
        assert_eq!(half.verdict, Verdict::Indeterminate);
        assert!(half.note.is_some());
        // condcontr at theta = 1 is L + 2 mu* < 0
        let d = consts(1.0, 0.0, 0.0, -3.0, 1.0);
        let r1 = evaluate_predicates(
            &d,
            Scheme::ThetaMaruyama,
            NoiseClass::Multiplicative,
            1.0,
            0.3,
            0.1,
            2,
        )
        .unwrap();
        assert_eq!(r1.predicate("condcontr"), Some(1.0 + 2.0 * -2.0 < 0.0));
    }

    #[test]
    fn report_serializes_flat() {
        let c = consts(2.0, 1.0, 0.0, 0.0, 0.0);
        let r = evaluate_predicates(
            &c,
            Scheme::ThetaImex,
            NoiseClass::Additive,
            0.2,
            0.1,
            0.1,
            2,
        )
        .unwrap()
        .with_window(10);
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        assert!(v.get("eqpar2bis").unwrap().is_boolean());
        assert!(v.get("eqpar3").unwrap().is_boolean());
        assert_eq!(v["verdict"], "not_contractive");
        assert_eq!(v["constants"]["norm_A"], 2.0);
        let back: ContractivityReport = serde_json::from_value(v).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn verdict_tracks_alpha_on_random_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let schemes = [Scheme::ThetaMaruyama, Scheme::ThetaImex];
        let noises = [NoiseClass::Additive, NoiseClass::Multiplicative];
        for _ in 0..10_000 {
            let c = consts(
                rng.random_range(0.0..1e3),
                rng.random_range(0.0..10.0),
                rng.random_range(0.0..3.0),
                rng.random_range(-5.0..5.0),
                rng.random_range(0.0..3.0),
            );
            let th = if rng.random_bool(0.1) {
                0.5
            } else {
                rng.random_range(0.0..=1.0)
            };
            let dt = 10f64.powf(rng.random_range(-5.0..0.0));
            let s = schemes[rng.random_range(0..2)];
            let n = noises[rng.random_range(0..2)];
            let r = evaluate_predicates(&c, s, n, th, dt, 0.05, 2).unwrap();
            assert_eq!(
                r.verdict == Verdict::Contractive,
                r.alpha < 1.0 && r.verdict != Verdict::Indeterminate
            );
            if r.verdict != Verdict::Indeterminate {
                assert_eq!(r.verdict == Verdict::Contractive, r.alpha < 1.0);
            }
        }
    }

    #[test]
    fn estimate_m_constant_and_zero_jacobians() {
        let g = build_grid(0.0, 1.0, 16).unwrap();
        let lin = SemiDiscreteProblem::custom(
            "lin",
            g,
            assemble_neg_laplacian(&g),
            Arc::new(FnReaction {
                eval: |u: &[f64], out: &mut [f64]| out.copy_from_slice(u),
                jacobian: |u: &[f64]| BandMatrix::identity(u.len()),
                one_sided_lipschitz: Some(1.0),
            }),
            NoiseKind::MultiplicativeLinear,
            1,
        )
        .unwrap();
        let cfg = SchemeConfig::new(1.0, 0.01, 20, Scheme::ThetaMaruyama).unwrap();
        let x0 = g.sample(|x| x.sin());
        for v in [
            MVariant::ExpectationOfNorm,
            MVariant::ExpectationOfNormSquared,
        ] {
            let e = estimate_m(&lin, &cfg, &x0, 8, v, Execution::Sequential).unwrap();
            assert_eq!(e.value, 1.0);
            assert_eq!(e.stderr, 0.0);
        }
        let zero = SemiDiscreteProblem::custom(
            "zero",
            g,
            assemble_neg_laplacian(&g),
            Arc::new(FnReaction {
                eval: |_: &[f64], out: &mut [f64]| out.fill(0.0),
                jacobian: |u: &[f64]| BandMatrix::zeros(u.len(), 0),
                one_sided_lipschitz: Some(0.0),
            }),
            NoiseKind::additive(0.1).unwrap(),
            1,
        )
        .unwrap();
        let e = estimate_m(
            &zero,
            &cfg,
            &x0,
            4,
            MVariant::ExpectationOfNorm,
            Execution::Parallel,
        )
        .unwrap();
        assert_eq!(e.value, 0.0);
    }

    #[test]
    fn estimate_m_on_bounded_gl_paths() {
        let g = build_grid(0.0, 1.0, 16).unwrap();
        let p = make_ginzburg_landau(&g, NoiseKind::additive(0.1).unwrap()).unwrap();
        let cfg = SchemeConfig::over(1.0, 1.0, 100, Scheme::ThetaMaruyama).unwrap();
        let x0 = g.sample(|x| (std::f64::consts::PI * x).sin());
        let e = estimate_m(
            &p,
            &cfg,
            &x0,
            16,
            MVariant::ExpectationOfNorm,
            Execution::Parallel,
        )
        .unwrap();
        // |1 - 3u^2| <= 2 whenever |u| <= 1
        if e.max_abs_state <= 1.0 {
            assert!(e.value <= 2.0);
        }
        assert!(e.value >= 1.0 - 1e-12 && e.value <= 1.0 + 3.0 * e.max_abs_state.powi(2));
        assert!(!e.unreliable);
        let c = constants_for(&p, &e).unwrap();
        assert_eq!(c.mu, 1.0);
        assert_eq!(c.l_g, 0.0);
    }
}
