//! Semi-discrete SDE systems `dU = (-A U + R(U)) dt + G(U) dW`.
//!
//! Multi-component problems store their state node-major: component `c` of
//! node `i` sits at index `n_components * i + c`. Block-diagonal operators are
//! interleaved the same way, which keeps them (and the pointwise-coupled
//! reaction Jacobians) banded.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{assemble_biharmonic, assemble_neg_laplacian, BandMatrix, GridError, GridSpec};

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("invalid noise: {0}")]
    InvalidNoise(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("operator has order {found}, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
}

/// Reaction term `R` together with its Jacobian.
pub trait Reaction: Send + Sync {
    fn eval_into(&self, u: &[f64], out: &mut [f64]);

    fn jacobian(&self, u: &[f64]) -> BandMatrix;

    /// Analytic one-sided Lipschitz constant, when one is known.
    fn one_sided_lipschitz(&self) -> Option<f64> {
        None
    }
}

/// User-supplied scalar diffusion map for [`NoiseKind::Custom`].
#[derive(Clone)]
pub struct CustomNoise {
    pub tag: String,
    pub g: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    /// Global Lipschitz constant of `g`, if known.
    pub lipschitz: Option<f64>,
}

/// Pointwise diffusion coefficient `g`, applied to every state entry.
#[derive(Clone)]
pub enum NoiseKind {
    Additive { epsilon: f64 },
    MultiplicativeLinear,
    MultiplicativeQuadratic,
    Custom(CustomNoise),
}

impl fmt::Debug for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Additive { epsilon } => write!(f, "Additive({epsilon})"),
            Self::MultiplicativeLinear => f.write_str("MultiplicativeLinear"),
            Self::MultiplicativeQuadratic => f.write_str("MultiplicativeQuadratic"),
            Self::Custom(c) => write!(f, "Custom({})", c.tag),
        }
    }
}

impl NoiseKind {
    pub fn additive(epsilon: f64) -> Result<Self, ProblemError> {
        let n = Self::Additive { epsilon };
        n.validate()?;
        Ok(n)
    }

    pub fn validate(&self) -> Result<(), ProblemError> {
        match self {
            Self::Additive { epsilon } if !(*epsilon >= 0.0 && epsilon.is_finite()) => Err(
                ProblemError::InvalidNoise(format!("additive epsilon must be >= 0, got {epsilon}")),
            ),
            _ => Ok(()),
        }
    }

    #[inline]
    pub fn g(&self, u: f64) -> f64 {
        match self {
            Self::Additive { epsilon } => *epsilon,
            Self::MultiplicativeLinear => u,
            Self::MultiplicativeQuadratic => u * u,
            Self::Custom(c) => (c.g)(u),
        }
    }

    pub fn is_additive(&self) -> bool {
        matches!(self, Self::Additive { .. })
    }

    /// Lipschitz constant of `g` on `|u| <= radius` (`NaN` when unknown).
    pub fn lipschitz(&self, radius: f64) -> f64 {
        match self {
            Self::Additive { .. } => 0.0,
            Self::MultiplicativeLinear => 1.0,
            Self::MultiplicativeQuadratic => 2.0 * radius,
            Self::Custom(c) => c.lipschitz.unwrap_or(f64::NAN),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Self::Additive { epsilon } => format!("additive(eps={epsilon})"),
            Self::MultiplicativeLinear => "linear".into(),
            Self::MultiplicativeQuadratic => "quadratic".into(),
            Self::Custom(c) => format!("custom({})", c.tag),
        }
    }
}

/// Spatial scaling of the nodal Brownian increments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseScaling {
    /// Independent unit-variance Brownian motion per node.
    #[default]
    None,
    /// Space-time white noise: increments scaled by `1/sqrt(dx)`.
    InvSqrtDx,
}

/// Parameters of the DIB electrodeposition model. None has a default.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DibParams {
    pub d1: f64,
    pub d2: f64,
    pub rho: f64,
    #[serde(rename = "A1")]
    pub a1: f64,
    #[serde(rename = "A2")]
    pub a2: f64,
    #[serde(rename = "B")]
    pub b: f64,
    pub alpha: f64,
    #[serde(rename = "C")]
    pub c: f64,
    #[serde(rename = "D")]
    pub d: f64,
    pub gamma: f64,
    pub k2: f64,
    pub k3: f64,
}

impl DibParams {
    pub fn validate(&self) -> Result<(), ProblemError> {
        let all = [
            self.d1, self.d2, self.rho, self.a1, self.a2, self.b, self.alpha, self.c, self.d,
            self.gamma, self.k2, self.k3,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(ProblemError::InvalidParams(
                "DIB parameters must be finite".into(),
            ));
        }
        if !(self.d1 > 0.0 && self.d2 > 0.0 && self.rho > 0.0) {
            return Err(ProblemError::InvalidParams(
                "DIB requires d1 > 0, d2 > 0 and rho > 0".into(),
            ));
        }
        Ok(())
    }

    /// Pointwise reaction `(R_u, R_v)`.
    pub fn reaction(&self, u: f64, v: f64) -> (f64, f64) {
        let p = self;
        let ru = p.a1 * (1.0 - v) * u - p.a2 * u * u * u - p.b * (v - p.alpha);
        let rv = p.c * (1.0 + p.k2 * u) * (1.0 - v) * (1.0 - p.gamma * (1.0 - v))
            - p.d * v * (1.0 + p.k3 * u) * (1.0 + p.gamma * v);
        (p.rho * ru, p.rho * rv)
    }

    /// Pointwise Jacobian `[[dRu/du, dRu/dv], [dRv/du, dRv/dv]]`.
    pub fn jacobian(&self, u: f64, v: f64) -> [[f64; 2]; 2] {
        let p = self;
        let f = (1.0 - v) * (1.0 - p.gamma * (1.0 - v));
        let df = -1.0 + 2.0 * p.gamma * (1.0 - v);
        let h = v * (1.0 + p.gamma * v);
        let dh = 1.0 + 2.0 * p.gamma * v;
        [
            [
                p.rho * (p.a1 * (1.0 - v) - 3.0 * p.a2 * u * u),
                p.rho * (-p.a1 * u - p.b),
            ],
            [
                p.rho * (p.c * p.k2 * f - p.d * p.k3 * h),
                p.rho * (p.c * (1.0 + p.k2 * u) * df - p.d * (1.0 + p.k3 * u) * dh),
            ],
        ]
    }
}

struct GinzburgLandauReaction;

impl Reaction for GinzburgLandauReaction {
    fn eval_into(&self, u: &[f64], out: &mut [f64]) {
        for (o, &x) in out.iter_mut().zip(u) {
            *o = x - x * x * x;
        }
    }

    fn jacobian(&self, u: &[f64]) -> BandMatrix {
        BandMatrix::from_diagonal(&u.iter().map(|x| 1.0 - 3.0 * x * x).collect::<Vec<_>>())
    }

    fn one_sided_lipschitz(&self) -> Option<f64> {
        Some(1.0)
    }
}

// R(U) = L_h V'(U), V'(u) = 1 - 3u^2, L_h = -A
struct CahnHilliardReaction {
    lap: BandMatrix,
}

impl Reaction for CahnHilliardReaction {
    fn eval_into(&self, u: &[f64], out: &mut [f64]) {
        let vp: Vec<f64> = u.iter().map(|x| 1.0 - 3.0 * x * x).collect();
        self.lap.mul_vec_into(&vp, out);
    }

    fn jacobian(&self, u: &[f64]) -> BandMatrix {
        let d: Vec<f64> = u.iter().map(|x| -6.0 * x).collect();
        self.lap.mul_diag_right(&d)
    }
}

// (u - u^3, v), interleaved
struct UncoupledReaction;

impl Reaction for UncoupledReaction {
    fn eval_into(&self, u: &[f64], out: &mut [f64]) {
        for (i, (o, &x)) in out.iter_mut().zip(u).enumerate() {
            *o = if i % 2 == 0 { x - x * x * x } else { x };
        }
    }

    fn jacobian(&self, u: &[f64]) -> BandMatrix {
        let d: Vec<f64> = u
            .iter()
            .enumerate()
            .map(|(i, x)| if i % 2 == 0 { 1.0 - 3.0 * x * x } else { 1.0 })
            .collect();
        BandMatrix::from_diagonal(&d)
    }

    fn one_sided_lipschitz(&self) -> Option<f64> {
        Some(1.0)
    }
}

struct DibReaction {
    params: DibParams,
}

impl Reaction for DibReaction {
    fn eval_into(&self, u: &[f64], out: &mut [f64]) {
        for (o, s) in out.chunks_exact_mut(2).zip(u.chunks_exact(2)) {
            let (ru, rv) = self.params.reaction(s[0], s[1]);
            o[0] = ru;
            o[1] = rv;
        }
    }

    fn jacobian(&self, u: &[f64]) -> BandMatrix {
        let mut j = BandMatrix::zeros(u.len(), 1);
        for (i, s) in u.chunks_exact(2).enumerate() {
            let b = self.params.jacobian(s[0], s[1]);
            let (r, c) = (2 * i, 2 * i + 1);
            j.set(r, r, b[0][0]);
            j.set(r, c, b[0][1]);
            j.set(c, r, b[1][0]);
            j.set(c, c, b[1][1]);
        }
        j
    }
}

/// Closure-backed reaction for user-defined problems.
pub struct FnReaction<F, J>
where
    F: Fn(&[f64], &mut [f64]) + Send + Sync,
    J: Fn(&[f64]) -> BandMatrix + Send + Sync,
{
    pub eval: F,
    pub jacobian: J,
    pub one_sided_lipschitz: Option<f64>,
}

impl<F, J> Reaction for FnReaction<F, J>
where
    F: Fn(&[f64], &mut [f64]) + Send + Sync,
    J: Fn(&[f64]) -> BandMatrix + Send + Sync,
{
    fn eval_into(&self, u: &[f64], out: &mut [f64]) {
        (self.eval)(u, out)
    }

    fn jacobian(&self, u: &[f64]) -> BandMatrix {
        (self.jacobian)(u)
    }

    fn one_sided_lipschitz(&self) -> Option<f64> {
        self.one_sided_lipschitz
    }
}

/// Immutable semi-discrete problem; cheap to clone and share across workers.
#[derive(Clone)]
pub struct SemiDiscreteProblem {
    name: String,
    grid: GridSpec,
    operator: BandMatrix,
    reaction: Arc<dyn Reaction>,
    noise: NoiseKind,
    noise_scale: f64,
    n_components: usize,
}

impl fmt::Debug for SemiDiscreteProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SemiDiscreteProblem")
            .field("name", &self.name)
            .field("grid", &self.grid)
            .field("noise", &self.noise)
            .field("n_components", &self.n_components)
            .finish()
    }
}

impl SemiDiscreteProblem {
    /// Registers a user-defined problem. The operator must act on the
    /// node-major state of length `n_components * grid.n_unknowns()`.
    pub fn custom(
        name: impl Into<String>,
        grid: GridSpec,
        operator: BandMatrix,
        reaction: Arc<dyn Reaction>,
        noise: NoiseKind,
        n_components: usize,
    ) -> Result<Self, ProblemError> {
        noise.validate()?;
        let expected = n_components * grid.n_unknowns();
        if operator.dim() != expected || n_components == 0 {
            return Err(ProblemError::DimensionMismatch {
                expected,
                found: operator.dim(),
            });
        }
        Ok(Self {
            name: name.into(),
            grid,
            operator,
            reaction,
            noise,
            noise_scale: 1.0,
            n_components,
        })
    }

    pub fn with_noise_scaling(mut self, scaling: NoiseScaling) -> Self {
        self.noise_scale = match scaling {
            NoiseScaling::None => 1.0,
            NoiseScaling::InvSqrtDx => 1.0 / self.grid.dx.sqrt(),
        };
        self
    }

    /// Same problem with a different diffusion coefficient.
    pub fn with_noise(mut self, noise: NoiseKind) -> Result<Self, ProblemError> {
        noise.validate()?;
        self.noise = noise;
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn operator(&self) -> &BandMatrix {
        &self.operator
    }

    pub fn noise(&self) -> &NoiseKind {
        &self.noise
    }

    pub fn noise_scale(&self) -> f64 {
        self.noise_scale
    }

    pub fn n_components(&self) -> usize {
        self.n_components
    }

    pub fn state_dim(&self) -> usize {
        self.operator.dim()
    }

    pub fn reaction_term(&self) -> &dyn Reaction {
        self.reaction.as_ref()
    }

    pub fn reaction_into(&self, u: &[f64], out: &mut [f64]) {
        self.reaction.eval_into(u, out)
    }

    pub fn reaction(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; u.len()];
        self.reaction.eval_into(u, &mut out);
        out
    }

    pub fn reaction_jacobian(&self, u: &[f64]) -> BandMatrix {
        self.reaction.jacobian(u)
    }

    /// `G(U)`, the entrywise diffusion coefficient.
    pub fn diffusion_into(&self, u: &[f64], out: &mut [f64]) {
        for (o, &x) in out.iter_mut().zip(u) {
            *o = self.noise_scale * self.noise.g(x);
        }
    }

    pub fn diffusion(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; u.len()];
        self.diffusion_into(u, &mut out);
        out
    }

    /// Lipschitz constant of `G` on states with `max|U_i| <= radius`.
    pub fn diffusion_lipschitz(&self, radius: f64) -> f64 {
        self.noise_scale * self.noise.lipschitz(radius)
    }

    /// Drift `f(U) = -A U + R(U)`.
    pub fn drift_into(&self, u: &[f64], out: &mut [f64]) {
        self.reaction.eval_into(u, out);
        let au = self.operator.mul_vec(u);
        for (o, a) in out.iter_mut().zip(au) {
            *o -= a;
        }
    }

    /// Extracts component `c` from a node-major state.
    pub fn component(&self, state: &[f64], c: usize) -> Vec<f64> {
        state
            .iter()
            .skip(c)
            .step_by(self.n_components)
            .copied()
            .collect()
    }

    /// Builds a node-major state from per-component nodal vectors.
    pub fn interleave(&self, components: &[Vec<f64>]) -> Vec<f64> {
        assert_eq!(components.len(), self.n_components);
        let n = self.grid.n_unknowns();
        let mut out = vec![0.0; n * self.n_components];
        for (c, comp) in components.iter().enumerate() {
            assert_eq!(comp.len(), n);
            for (i, v) in comp.iter().enumerate() {
                out[i * self.n_components + c] = *v;
            }
        }
        out
    }
}

/// `du = (Δu + u - u^3) dt + g(u) dW`: `A = -Δ_h`, `R(u) = u - u^3`.
pub fn make_ginzburg_landau(
    grid: &GridSpec,
    noise: NoiseKind,
) -> Result<SemiDiscreteProblem, ProblemError> {
    SemiDiscreteProblem::custom(
        "ginzburg_landau",
        *grid,
        assemble_neg_laplacian(grid),
        Arc::new(GinzburgLandauReaction),
        noise,
        1,
    )
}

/// `du = (-Δ²u + Δ V'(u)) dt + g(u) dW` with `V(u) = u - u^3`:
/// `A = Δ_h²` and `R(U) = L_h V'(U)` with `L_h = -A_lap` (zero boundary data).
pub fn make_cahn_hilliard(
    grid: &GridSpec,
    noise: NoiseKind,
) -> Result<SemiDiscreteProblem, ProblemError> {
    let op = assemble_biharmonic(grid)?;
    let lap = assemble_neg_laplacian(grid).scaled(-1.0);
    SemiDiscreteProblem::custom(
        "cahn_hilliard",
        *grid,
        op,
        Arc::new(CahnHilliardReaction { lap }),
        noise,
        1,
    )
}

/// Two uncoupled fields, `A = diag(-Δ_h, -Δ_h)`, `R(u, v) = (u - u^3, v)`.
pub fn make_uncoupled_system(
    grid: &GridSpec,
    noise: NoiseKind,
) -> Result<SemiDiscreteProblem, ProblemError> {
    let a = assemble_neg_laplacian(grid);
    SemiDiscreteProblem::custom(
        "uncoupled",
        *grid,
        BandMatrix::interleave_blocks(&[&a, &a]),
        Arc::new(UncoupledReaction),
        noise,
        2,
    )
}

/// DIB morphochemical model: `A = diag(-d1 Δ_h, -d2 Δ_h)`.
pub fn make_dib(
    grid: &GridSpec,
    params: DibParams,
    noise: NoiseKind,
) -> Result<SemiDiscreteProblem, ProblemError> {
    params.validate()?;
    let a = assemble_neg_laplacian(grid);
    let op = BandMatrix::interleave_blocks(&[&a.scaled(params.d1), &a.scaled(params.d2)]);
    SemiDiscreteProblem::custom("dib", *grid, op, Arc::new(DibReaction { params }), noise, 2)
}

/// Built-in problem, independent of the grid it is discretized on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProblemFamily {
    GinzburgLandau,
    CahnHilliard,
    Uncoupled,
    Dib(DibParams),
}

impl ProblemFamily {
    pub fn name(&self) -> &'static str {
        match self {
            Self::GinzburgLandau => "ginzburg_landau",
            Self::CahnHilliard => "cahn_hilliard",
            Self::Uncoupled => "uncoupled",
            Self::Dib(_) => "dib",
        }
    }

    /// Order `p` of the spatial operator, `A = B / dx^p`.
    pub fn operator_order(&self) -> u32 {
        match self {
            Self::CahnHilliard => 4,
            _ => 2,
        }
    }

    pub fn build(
        &self,
        grid: &GridSpec,
        noise: NoiseKind,
        scaling: NoiseScaling,
    ) -> Result<SemiDiscreteProblem, ProblemError> {
        let p = match self {
            Self::GinzburgLandau => make_ginzburg_landau(grid, noise),
            Self::CahnHilliard => make_cahn_hilliard(grid, noise),
            Self::Uncoupled => make_uncoupled_system(grid, noise),
            Self::Dib(params) => make_dib(grid, *params, noise),
        }?;
        Ok(p.with_noise_scaling(scaling))
    }
}
