//! Fixed-point iteration for the model equation on the grid.
//!
//! Each sweep solves every mode against the nonlinearity of the previous
//! iterate. The forcing splits into the source `g = f + c0`, integrated in
//! closed form, and the sampled remainder `−q(w) − p·Lv`, where
//! `w = (1+p)Lv` and `q(t) = G(t) − t`. Since the solve enforces
//! `Lv = v + F` exactly, no numerical derivatives are needed.

use rayon::prelude::*;

use super::grid::Grid;
use super::solve::{solve_mode_ode, ForcingMonomial, ModeForcing, ModeSolution, TailModel};
use super::ModeOdeError;
use crate::formal::ModelProblem;
use crate::series::{PhgSeries, SpectralFunction};
use crate::spectral::SpectralModel;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PicardOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub tail: TailModel,
    /// Iterates larger than this abort the run.
    pub blowup: f64,
}

impl Default for PicardOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 50,
            tail: TailModel::Fitted,
            blowup: 1e12,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PicardSolution {
    pub solutions: Vec<ModeSolution>,
    pub iterations: usize,
    /// Sup-norm change of the last sweep.
    pub defect: f64,
    pub history: Vec<f64>,
}

/// Per-mode analytic forcing from a series with only non-negative exponents.
pub fn series_forcing(series: &PhgSeries, mode: usize) -> Vec<ForcingMonomial> {
    series
        .terms()
        .filter(|(_, c)| c.get(mode) != 0.0)
        .map(|(k, c)| ForcingMonomial {
            exponent: k.exponent,
            log_power: k.log_power,
            coeff: c.get(mode),
        })
        .collect()
}

/// Sup-norm bound of a function from its coefficients.
fn sup_bound(model: &SpectralModel, w: &SpectralFunction) -> f64 {
    let v = model.volume();
    let basis_sup = if model.len() == 1 {
        v.powf(-0.5)
    } else {
        (2.0 / v).sqrt().max(v.powf(-0.5))
    };
    w.as_slice().iter().map(|c| c.abs()).sum::<f64>() * basis_sup
}

/// `q(w) = Σ_{k>=2} a_k w^k` in the spectral basis.
fn germ_remainder(p: &ModelProblem, w: &SpectralFunction) -> Result<SpectralFunction, ModeOdeError> {
    let r = sup_bound(&p.model, w);
    let len = w.len();
    if r == 0.0 {
        return Ok(SpectralFunction::zeros(len));
    }
    let degree = match p.germ.polynomial_degree() {
        Some(d) => d,
        None => {
            let mut d = 2;
            let mut power = r * r;
            loop {
                let next = p.germ.coefficient(d + 1).abs() * power * r;
                if next <= 1e-18 * r {
                    break d;
                }
                d += 1;
                power *= r;
                if d > 400 {
                    return Err(ModeOdeError::GermDivergence(r));
                }
            }
        }
    };
    if degree < 2 {
        return Ok(SpectralFunction::zeros(len));
    }
    // q = w² (a_2 + w (a_3 + …))
    let one = p.model.constant_function(1.0);
    let mut inner = one.scaled(p.germ.coefficient(degree));
    for k in (2..degree).rev() {
        inner = p.model.multiply_functions(w, &inner);
        inner.axpy(p.germ.coefficient(k), &one);
    }
    let w2 = p.model.multiply_functions(w, w);
    Ok(p.model.multiply_functions(&w2, &inner))
}

/// Sampled part of the forcing, `−q(w) − p·Lv`, from `Lv` on the grid.
fn nonlinear_samples(p: &ModelProblem, grid: &Grid, lv: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, ModeOdeError> {
    let len = p.model.len();
    let columns: Vec<Vec<f64>> = (0..grid.count)
        .into_par_iter()
        .map(|k| {
            let x = grid.x(k);
            let lvk = SpectralFunction::new((0..len).map(|l| lv[l][k]).collect());
            let plv = match &p.perturbation {
                Some(pert) => {
                    let pk = SpectralFunction::new((0..len).map(|l| pert.evaluate_mode(l, x)).collect());
                    p.model.multiply_functions(&pk, &lvk)
                }
                None => SpectralFunction::zeros(len),
            };
            let w = lvk.plus(&plv);
            let q = germ_remainder(p, &w)?;
            Ok(q.plus(&plv).scaled(-1.0).into_vec())
        })
        .collect::<Result<_, ModeOdeError>>()?;
    Ok((0..len).map(|l| columns.iter().map(|c| c[l]).collect()).collect())
}

/// Iterates `v^{(m+1)}_l = solve(λ_l, F_l(v^{(m)}), v_l(x₀))` from `v^{(0)} = 0`.
pub fn picard_solve(
    p: &ModelProblem,
    grid: &Grid,
    boundary: &[f64],
    options: &PicardOptions,
) -> Result<PicardSolution, ModeOdeError> {
    grid.validate()?;
    let len = p.model.len();
    if boundary.len() != len {
        return Err(ModeOdeError::BoundaryData {
            got: boundary.len(),
            expected: len,
        });
    }
    let g = p.forcing();
    let analytic: Vec<Vec<ForcingMonomial>> = (0..len).map(|l| series_forcing(&g, l)).collect();
    let mut nonlinear = vec![vec![0.0; grid.count]; len];
    let mut previous: Option<Vec<ModeSolution>> = None;
    let mut history = Vec::new();

    for iteration in 1..=options.max_iter {
        let solutions: Vec<ModeSolution> = (0..len)
            .into_par_iter()
            .map(|l| {
                let forcing = ModeForcing {
                    samples: Some(nonlinear[l].clone()),
                    monomials: analytic[l].clone(),
                };
                let mut s = solve_mode_ode(p.model.eigenvalues()[l], &forcing, boundary[l], grid, options.tail)?;
                s.mode = l;
                Ok(s)
            })
            .collect::<Result<_, ModeOdeError>>()?;

        let peak = solutions
            .iter()
            .flat_map(|s| s.values.iter())
            .fold(0.0_f64, |m, v| m.max(v.abs()));
        if !(peak <= options.blowup) {
            return Err(ModeOdeError::BlowUp { iteration, value: peak });
        }
        let change = match &previous {
            Some(prev) => prev
                .iter()
                .zip(&solutions)
                .flat_map(|(a, b)| a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()))
                .fold(0.0, f64::max),
            None => peak,
        };
        history.push(change);

        // Lv = v + F for the forcing just used
        let lv: Vec<Vec<f64>> = (0..len)
            .map(|l| {
                let f = ModeForcing {
                    samples: Some(nonlinear[l].clone()),
                    monomials: analytic[l].clone(),
                }
                .values(grid);
                solutions[l].values.iter().zip(&f).map(|(v, f)| v + f).collect()
            })
            .collect();
        if change < options.tol {
            return Ok(PicardSolution {
                solutions,
                iterations: iteration,
                defect: change,
                history,
            });
        }
        nonlinear = nonlinear_samples(p, grid, &lv)?;
        previous = Some(solutions);
    }
    Err(ModeOdeError::NonConvergence {
        iterations: options.max_iter,
        defect: history.last().copied().unwrap_or(f64::INFINITY),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formal::formal_expansion;
    use crate::indices::build_index_set;
    use crate::series::{AnalyticGerm, LogMonomial};
    use crate::spectral::ModelKind;

    fn point_problem(a: f64) -> ModelProblem {
        let model = SpectralModel::builtin(ModelKind::Point).unwrap();
        let indices = build_index_set(&model, 5.0).unwrap();
        let source =
            PhgSeries::from_terms(1, 5.0, [(LogMonomial::new(1.0, 0), SpectralFunction::new(vec![a]))]).unwrap();
        ModelProblem::new(model, indices, source, 0.5, AnalyticGerm::Log1p, None).unwrap()
    }

    #[test]
    fn trivial_problem_is_a_fixed_point() {
        let p = point_problem(0.0);
        let s = picard_solve(&p, &Grid::default(), &[0.0], &PicardOptions::default()).unwrap();
        assert_eq!(s.iterations, 1);
        assert!(s.solutions[0].values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn converges_for_small_data() {
        let p = point_problem(0.09);
        let psi = formal_expansion(&p, 3.0).unwrap().psi;
        let grid = Grid::default();
        let datum = psi.evaluate_mode(0, grid.x0);
        let s = picard_solve(&p, &grid, &[datum], &PicardOptions::default()).unwrap();
        assert!(s.iterations <= 50);
        // near x₀ the solution follows the formal series
        let v = &s.solutions[0].values;
        let k = grid.count - 40;
        assert!((v[k] - psi.evaluate_mode(0, grid.x(k))).abs() < 1e-4 * v[k].abs());
    }

    #[test]
    fn grid_refinement_is_stable() {
        let p = point_problem(0.06);
        let psi = formal_expansion(&p, 3.0).unwrap().psi;
        let grid = Grid::default();
        let datum = [psi.evaluate_mode(0, grid.x0)];
        let opts = PicardOptions {
            tol: 1e-13,
            ..Default::default()
        };
        let a = picard_solve(&p, &grid, &datum, &opts).unwrap();
        let fine = grid.refined();
        let b = picard_solve(&p, &fine, &datum, &opts).unwrap();
        let diff = (0..grid.count)
            .map(|k| (a.solutions[0].values[k] - b.solutions[0].values[2 * k]).abs())
            .fold(0.0, f64::max);
        assert!(diff < 1e-6, "{diff}");
    }

    #[test]
    fn germ_remainder_matches_log1p() {
        let p = point_problem(0.0);
        let w = SpectralFunction::new(vec![0.3]);
        let q = germ_remainder(&p, &w).unwrap();
        assert!((q.get(0) - (0.3f64.ln_1p() - 0.3)).abs() < 1e-15);
    }

    #[test]
    fn boundary_length_checked() {
        let p = point_problem(0.0);
        assert!(matches!(
            picard_solve(&p, &Grid::default(), &[0.0, 1.0], &PicardOptions::default()),
            Err(ModeOdeError::BoundaryData { .. })
        ));
    }

    #[test]
    fn large_data_blows_up_or_fails() {
        let p = point_problem(50.0);
        let r = picard_solve(
            &p,
            &Grid::default(),
            &[3.0],
            &PicardOptions {
                max_iter: 30,
                ..Default::default()
            },
        );
        assert!(r.is_err());
    }
}
