//! Index set, formal expansion, Picard oracle and remainder fit in one run.

use super::config::{load_model, load_source, RunConfig};
use super::HarnessError;
use crate::formal::{formal_expansion, ModelProblem};
use crate::indices::build_index_set;
use crate::modeode::fit::{CheckOutcome, Comparison, RemainderFit};
use crate::modeode::{fit_remainder, picard_solve, ExpansionReport, FitOptions, Grid, PicardOptions, PicardSolution};
use crate::series::PhgSeries;
use crate::spectral::SpectralModel;
use crate::Result;

/// Largest relative formal/oracle discrepancy a run accepts.
pub const AGREEMENT_TOLERANCE: f64 = 0.02;

/// Margin between the requested order and the index-set cutoff. The fit
/// expands two levels beyond the order and regresses the truncation error on
/// the indices up to one unit above that.
pub const CUTOFF_MARGIN: f64 = 3.5;

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineOptions {
    pub grid: Grid,
    pub picard: PicardOptions,
    pub fit: FitOptions,
    /// `v(x₀)` per mode; `None` evaluates the formal series at `x₀`.
    pub boundary: Option<Vec<f64>>,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            grid: Grid::default(),
            picard: PicardOptions {
                tol: 1e-14,
                max_iter: 200,
                ..Default::default()
            },
            fit: FitOptions::default(),
            boundary: None,
        }
    }
}

pub struct PipelineRun {
    pub boundary: Vec<f64>,
    pub picard: PicardSolution,
    pub fit: RemainderFit,
}

impl PipelineRun {
    pub fn report(&self) -> &ExpansionReport {
        &self.fit.report
    }
}

/// Builds the problem with an index set reaching `order + CUTOFF_MARGIN`.
pub fn build_problem(
    model: SpectralModel,
    source: PhgSeries,
    c0: f64,
    germ: crate::series::AnalyticGerm,
    order: f64,
) -> Result<ModelProblem> {
    let indices = build_index_set(&model, order + CUTOFF_MARGIN)?;
    if !indices.contains(order) {
        return Err(HarnessError::OrderNotInIndexSet(order).into());
    }
    Ok(ModelProblem::new(model, indices, source, c0, germ, None)?)
}

/// Boundary data from `options`, or the formal series one level above
/// `order` evaluated at `x₀`.
pub fn boundary_data(p: &ModelProblem, order: f64, options: &PipelineOptions) -> Result<Vec<f64>> {
    if let Some(b) = &options.boundary {
        return Ok(b.clone());
    }
    let k = p.indices.next_index(order)?;
    let psi = formal_expansion(p, k)?.psi;
    Ok((0..p.model.len())
        .map(|l| psi.evaluate_mode(l, options.grid.x0))
        .collect())
}

/// Picard oracle only, as used by `phg solve`.
pub fn solve_problem(p: &ModelProblem, order: f64, options: &PipelineOptions) -> Result<(Vec<f64>, PicardSolution)> {
    if !p.indices.contains(order) {
        return Err(HarnessError::OrderNotInIndexSet(order).into());
    }
    let boundary = boundary_data(p, order, options)?;
    let picard = picard_solve(p, &options.grid, &boundary, &options.picard)?;
    Ok((boundary, picard))
}

/// Runs Picard and the remainder fit for `p` up to `order`.
pub fn run_problem(p: &ModelProblem, order: f64, options: &PipelineOptions) -> Result<PipelineRun> {
    let (boundary, picard) = solve_problem(p, order, options)?;
    let mut fit = fit_remainder(p, &options.grid, &picard.solutions, order, &options.fit)?;
    fit.report.picard_iterations = picard.iterations;
    fit.report.picard_defect = picard.defect;
    let worst = fit
        .report
        .discrepancies
        .iter()
        .filter_map(|d| d.relative)
        .fold(0.0, f64::max);
    fit.report.checks.push(CheckOutcome::new(
        "formal/oracle agreement",
        Comparison::Below,
        AGREEMENT_TOLERANCE,
        worst,
        0.0,
        "constructed",
    ));
    Ok(PipelineRun { boundary, picard, fit })
}

/// Builds the problem described by `cfg`.
pub fn problem_from_config(cfg: &RunConfig) -> Result<ModelProblem> {
    cfg.validate()?;
    let model_spec = cfg
        .model_file
        .as_deref()
        .ok_or_else(|| HarnessError::Config("no model given".into()))?;
    let model = load_model(model_spec)?;
    let source = load_source(cfg.source_file.as_deref(), model.len())?;
    build_problem(model, source, cfg.c0, cfg.germ()?, cfg.order)
}

pub fn options_from_config(cfg: &RunConfig) -> Result<PipelineOptions> {
    Ok(PipelineOptions {
        grid: cfg.grid()?,
        picard: cfg.picard_options(),
        fit: cfg.fit_options(),
        boundary: cfg.boundary.clone(),
    })
}

/// Files → problem → report.
pub fn run_pipeline(cfg: &RunConfig) -> Result<ExpansionReport> {
    let p = problem_from_config(cfg)?;
    Ok(run_problem(&p, cfg.order, &options_from_config(cfg)?)?.fit.report)
}
