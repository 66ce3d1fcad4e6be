//! Time integration of dissipative stochastic reaction-diffusion equations.
//!
//! Space is discretized by centered finite differences ([`grid`]), turning the
//! SPDE into a system of SDEs ([`problems`]) which is advanced by stochastic
//! θ-Maruyama or θ-IMEX steps ([`integrators`]). [`analysis`] evaluates the
//! mean-square contractivity coefficients of both schemes and [`experiments`]
//! measures `E‖U_n - Y_n‖²` by Monte Carlo over coupled solution pairs.

// `!(x > 0.0)` is the intended spelling wherever NaN has to be rejected
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli;
pub mod exec;
pub mod experiments;
pub mod grid;
pub mod integrators;
pub mod problems;

pub use analysis::{AnalysisConstants, ContractivityReport, MVariant, Verdict};
pub use experiments::{MsdEstimate, RunOptions};
pub use grid::{build_grid, BandMatrix, GridSpec};
pub use integrators::{PairTrajectory, Scheme, SchemeConfig};
pub use problems::{NoiseKind, SemiDiscreteProblem};
