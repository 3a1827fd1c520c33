//! Per-eigenmode numerics: the bounded variation-of-parameters solution of
//! `−λ_l v_l + N v_l = F_l`, a Picard iteration for the full model equation,
//! and remainder-order fits against the formal expansion.

use thiserror::Error;

use crate::formal::FormalError;
use crate::indices::IndexError;
use crate::series::SeriesError;

pub mod fit;
pub mod grid;
pub mod picard;
pub mod quadrature;
pub mod solve;
pub mod theta;

pub use fit::{fit_remainder, ExpansionReport, FitOptions};
pub use grid::Grid;
pub use picard::{picard_solve, PicardOptions, PicardSolution};
pub use solve::{ode_residual, solve_mode_ode, ForcingMonomial, ModeForcing, ModeSolution, TailModel};
pub use theta::{average_theta, ThetaAverage};

#[derive(Debug, Error)]
pub enum ModeOdeError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("non-finite input or output")]
    NonFinite,
    #[error("forcing behaves like x^{exponent} near 0, faster than the integrable limit x^{limit}")]
    NonIntegrable { exponent: f64, limit: f64 },
    #[error("no convergence after {iterations} iterations (last change {defect:e})")]
    NonConvergence { iterations: usize, defect: f64 },
    #[error("blow-up at iteration {iteration}: |v| = {value:e}")]
    BlowUp { iteration: usize, value: f64 },
    #[error("germ series does not converge at |w| = {0}")]
    GermDivergence(f64),
    #[error("boundary data has {got} entries, model has {expected} modes")]
    BoundaryData { got: usize, expected: usize },
    #[error("fit window holds {points} usable points, need {needed}")]
    FitWindow { points: usize, needed: usize },
    #[error("least squares failed: {0}")]
    LeastSquares(String),
    #[error(transparent)]
    Formal(#[from] FormalError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Series(#[from] SeriesError),
}
