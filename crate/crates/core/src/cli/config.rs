//! JSON run configuration. Unknown keys are rejected everywhere; every other
//! key has a default except the DIB parameters.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::MVariant;
use crate::experiments::{InitialPair, NormScaling};
use crate::grid::{build_grid, GridSpec};
use crate::integrators::{
    ImexReactionWeight, Scheme, SchemeConfig, DEFAULT_NEWTON_MAX_ITER, DEFAULT_NEWTON_TOL,
};
use crate::problems::{DibParams, NoiseKind, NoiseScaling, ProblemFamily};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown key at line {line}, column {column}: {message}")]
    UnknownKey {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("missing required key at line {line}, column {column}: {message}")]
    MissingKey {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemConfig {
    GinzburgLandau,
    CahnHilliard,
    Uncoupled,
    Dib { params: DibParams },
}

impl ProblemConfig {
    pub fn family(&self) -> ProblemFamily {
        match self {
            Self::GinzburgLandau => ProblemFamily::GinzburgLandau,
            Self::CahnHilliard => ProblemFamily::CahnHilliard,
            Self::Uncoupled => ProblemFamily::Uncoupled,
            Self::Dib { params } => ProblemFamily::Dib(*params),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PointCount {
    One(usize),
    Many(Vec<usize>),
}

impl PointCount {
    pub fn as_vec(&self) -> Vec<usize> {
        match self {
            Self::One(n) => vec![*n],
            Self::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub x_left: f64,
    pub x_right: f64,
    pub n_points: PointCount,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            x_left: 0.0,
            x_right: 1.0,
            n_points: PointCount::One(32),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchemeSection {
    pub kind: Scheme,
    pub theta: f64,
    pub n_steps: usize,
    pub final_time: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub imex_reaction_weight: ImexReactionWeight,
}

impl Default for SchemeSection {
    fn default() -> Self {
        Self {
            kind: Scheme::ThetaMaruyama,
            theta: 1.0,
            n_steps: 500,
            final_time: 1.0,
            newton_tol: DEFAULT_NEWTON_TOL,
            newton_max_iter: DEFAULT_NEWTON_MAX_ITER,
            imex_reaction_weight: ImexReactionWeight::Dt,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseConfig {
    Additive { epsilon: f64 },
    Linear,
    Quadratic,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self::Additive { epsilon: 0.1 }
    }
}

impl NoiseConfig {
    pub fn kind(&self) -> NoiseKind {
        match self {
            Self::Additive { epsilon } => NoiseKind::Additive { epsilon: *epsilon },
            Self::Linear => NoiseKind::MultiplicativeLinear,
            Self::Quadratic => NoiseKind::MultiplicativeQuadratic,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OrderConfig {
    /// Step sizes are `final_time * 2^-k` for each `k`.
    pub dt_exponents: Vec<u32>,
    /// Reference step is the smallest step divided by this. At 1 the
    /// smallest step is the reference and is left out of the fit.
    pub reference_refinement: usize,
}

impl Default for OrderConfig {
    fn default() -> Self {
        Self {
            dt_exponents: vec![6, 7, 8, 9, 10],
            reference_refinement: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Known `M`; estimated by Monte Carlo when absent.
    #[serde(rename = "M")]
    pub m: Option<f64>,
    /// Paths for the `M` estimate (defaults to `n_paths`).
    pub m_paths: Option<usize>,
    /// Overrides the one-sided Lipschitz constant of the reaction.
    pub mu: Option<f64>,
    /// Overrides the Lipschitz constant of the diffusion.
    #[serde(rename = "L_g")]
    pub l_g: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Free text, ignored by every command.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comment: Option<String>,
    pub problem: ProblemConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub scheme: SchemeSection,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default = "default_paths")]
    pub n_paths: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub noise_scaling: NoiseScaling,
    #[serde(default)]
    pub norm_scaling: NormScaling,
    #[serde(default)]
    pub m_variant: MVariant,
    #[serde(default)]
    pub initial: InitialPair,
    #[serde(default)]
    pub order: OrderConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default = "default_out")]
    pub output_dir: String,
}

fn default_paths() -> usize {
    500
}

fn default_out() -> String {
    "out".into()
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.n_paths < 2 {
            return bad(format!("n_paths must be at least 2, got {}", self.n_paths));
        }
        if self.scheme.n_steps == 0 || !(self.scheme.final_time > 0.0) {
            return bad("scheme.n_steps and scheme.final_time must be positive".into());
        }
        self.scheme_config()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.noise
            .kind()
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if let ProblemConfig::Dib { params } = &self.problem {
            params
                .validate()
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        if self.grid.n_points.as_vec().is_empty() {
            return bad("grid.n_points must not be empty".into());
        }
        self.grids()?;
        if self.order.dt_exponents.len() < 3 {
            return bad("order.dt_exponents needs at least three entries".into());
        }
        if self.order.reference_refinement == 0 {
            return bad("order.reference_refinement must be at least 1".into());
        }
        Ok(())
    }

    pub fn scheme_config(&self) -> Result<SchemeConfig, crate::integrators::StepError> {
        let s = &self.scheme;
        let mut cfg = SchemeConfig::over(s.theta, s.final_time, s.n_steps, s.kind)?;
        cfg.newton_tol = s.newton_tol;
        cfg.newton_max_iter = s.newton_max_iter;
        cfg.imex_reaction_weight = s.imex_reaction_weight;
        cfg.seed = self.seed;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn grids(&self) -> Result<Vec<GridSpec>, ConfigError> {
        self.grid
            .n_points
            .as_vec()
            .into_iter()
            .map(|n| {
                build_grid(self.grid.x_left, self.grid.x_right, n)
                    .map_err(|e| ConfigError::Invalid(e.to_string()))
            })
            .collect()
    }
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let cfg: RunConfig = serde_json::from_str(text).map_err(|e| {
        let (line, column, message) = (e.line(), e.column(), e.to_string());
        if message.contains("unknown field") || message.contains("unknown variant") {
            ConfigError::UnknownKey {
                line,
                column,
                message,
            }
        } else if message.contains("missing field") {
            ConfigError::MissingKey {
                line,
                column,
                message,
            }
        } else {
            ConfigError::Parse {
                line,
                column,
                message,
            }
        }
    })?;
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_takes_defaults() {
        let c = parse_config(r#"{"problem": {"name": "ginzburg_landau"}}"#).unwrap();
        assert_eq!(c.scheme.theta, 1.0);
        assert_eq!(c.scheme.n_steps, 500);
        assert_eq!(c.scheme.final_time, 1.0);
        assert_eq!(c.n_paths, 500);
        assert_eq!(c.noise, NoiseConfig::Additive { epsilon: 0.1 });
        let s = c.scheme_config().unwrap();
        assert_eq!(s.dt, 0.002);
    }

    #[test]
    fn dib_requires_params() {
        let e = parse_config(r#"{"problem": {"name": "dib"}}"#).unwrap_err();
        assert!(matches!(e, ConfigError::MissingKey { .. }), "{e}");
        let partial = r#"{"problem": {"name": "dib", "params": {"d1": 1.0}}}"#;
        assert!(matches!(
            parse_config(partial),
            Err(ConfigError::MissingKey { .. })
        ));
    }

    #[test]
    fn typos_are_rejected() {
        let e =
            parse_config(r#"{"problem": {"name": "ginzburg_landau"}, "scheme": {"thteta": 1.0}}"#)
                .unwrap_err();
        assert!(matches!(e, ConfigError::UnknownKey { .. }), "{e}");
        assert!(e.to_string().contains("thteta"));
        let top = parse_config(r#"{"problem": {"name": "ginzburg_landau"}, "pahts": 3}"#);
        assert!(matches!(top, Err(ConfigError::UnknownKey { .. })));
    }

    #[test]
    fn syntax_errors_carry_position() {
        match parse_config("{\n  \"problem\": \n}") {
            Err(ConfigError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn grid_lists_and_validation() {
        let c = parse_config(
            r#"{"problem": {"name": "cahn_hilliard"}, "grid": {"n_points": [16, 32]},
                "noise": {"kind": "linear"}, "scheme": {"kind": "theta_imex", "theta": 0.5}}"#,
        )
        .unwrap();
        assert_eq!(c.grids().unwrap().len(), 2);
        assert_eq!(c.scheme_config().unwrap().scheme, Scheme::ThetaImex);
        let bad =
            parse_config(r#"{"problem": {"name": "ginzburg_landau"}, "scheme": {"theta": 2.0}}"#);
        assert!(matches!(bad, Err(ConfigError::Invalid(_))));
        let bad =
            parse_config(r#"{"problem": {"name": "ginzburg_landau"}, "grid": {"n_points": 2}}"#);
        assert!(matches!(bad, Err(ConfigError::Invalid(_))));
    }
}
