//! The formal recursion: starting from `ψ = 0`, repeatedly cancel the leading
//! term of the model residual `Q(ψ) = G((1+p)Lψ) − ψ − (f + c0)`, inserting a
//! log correction whenever the leading index is resonant.

use thiserror::Error;

use crate::indices::{indicial_shift, IndexError, IndexSet};
use crate::series::{
    AnalyticGerm, LogMonomial, PhgSeries, SeriesError, SeriesRing, SpectralFunction, EXPONENT_TOLERANCE,
};
use crate::spectral::{SpectralError, SpectralModel};

/// Residual coefficients at most `ZERO_TOLERANCE · scale` count as cancelled.
pub const ZERO_TOLERANCE: f64 = 1e-13;

#[derive(Debug, Error)]
pub enum FormalError {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error(transparent)]
    Series(#[from] SeriesError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error("residual exponent {0} is not in the index set")]
    NotInIndexSet(f64),
    #[error("order {order} needs terms beyond the truncation {truncation}")]
    TruncationExceeded { order: f64, truncation: f64 },
    #[error("iteration cap {0} exceeded")]
    IterationCap(usize),
}

/// The model equation on a spectral model.
#[derive(Clone, Debug)]
pub struct ModelProblem {
    pub model: SpectralModel,
    pub indices: IndexSet,
    /// Expansion of `f`, including its exponent-0 term `−c0`.
    pub source: PhgSeries,
    pub c0: f64,
    pub germ: AnalyticGerm,
    /// Multiplier `p` of the operator correction `(1 + p)L`, `O(x)`.
    pub perturbation: Option<PhgSeries>,
    /// Truncation order of every series the recursion handles.
    pub truncation: f64,
}

impl ModelProblem {
    /// Validates the problem; a missing exponent-0 source term is filled in as `−c0`.
    pub fn new(
        model: SpectralModel,
        indices: IndexSet,
        source: PhgSeries,
        c0: f64,
        germ: AnalyticGerm,
        perturbation: Option<PhgSeries>,
    ) -> Result<Self, FormalError> {
        let invalid = |m: String| Err(FormalError::InvalidProblem(m));
        germ.validate()?;
        let truncation = indices.cutoff();
        if source.dim() != model.len() {
            return invalid(format!("source has {} modes, model has {}", source.dim(), model.len()));
        }
        let expected = model.constant_function(-c0);
        let mut source = source.truncated(truncation);
        match source.coefficient(0.0, 0) {
            Some(c) => {
                let err = c.minus(&expected).max_abs();
                if err > 1e-12 * c0.abs().max(1.0) {
                    return invalid("exponent-0 source term must be the constant −c0".into());
                }
            }
            None => {
                if c0 != 0.0 {
                    source.accumulate(LogMonomial::new(0.0, 0), &expected, 1.0);
                }
            }
        }
        for (k, c) in source.terms() {
            if k.log_power != 0 {
                return invalid(format!("source term at x^{} carries a log power", k.exponent));
            }
            if !indices.contains(k.exponent) {
                return invalid(format!("source exponent {} is not in the index set", k.exponent));
            }
            if !c.is_finite() {
                return invalid("non-finite source coefficient".into());
            }
        }
        if let Some(p) = &perturbation {
            if p.dim() != model.len() {
                return invalid("operator correction has the wrong number of modes".into());
            }
            if p.min_exponent().is_some_and(|e| e < 1.0 - EXPONENT_TOLERANCE) {
                return invalid("operator correction must be O(x)".into());
            }
            if p.terms().any(|(k, _)| !indices.contains(k.exponent)) {
                return invalid("operator correction exponent outside the index set".into());
            }
        }
        Ok(Self {
            model,
            indices,
            source,
            c0,
            germ,
            perturbation: perturbation.map(|p| p.truncated(truncation)),
            truncation,
        })
    }

    pub fn ring(&self) -> SeriesRing<'_> {
        SeriesRing::new(&self.model, &self.indices)
    }

    /// `g = f + c0`: the source without its exponent-0 term.
    pub fn forcing(&self) -> PhgSeries {
        let mut g = self.source.clone();
        g.accumulate(LogMonomial::new(0.0, 0), &self.model.constant_function(self.c0), 1.0);
        g
    }

    /// Magnitude used to judge cancellation: the largest source coefficient.
    pub fn scale(&self) -> f64 {
        self.forcing().terms().map(|(_, c)| c.max_abs()).fold(0.0, f64::max)
    }

    /// `L = Δ_D + Ñ`.
    pub fn apply_l(&self, psi: &PhgSeries) -> Result<PhgSeries, FormalError> {
        Ok(psi.apply_laplacian(&self.model).add(&psi.apply_n_tilde())?)
    }

    /// `(1 + p)Lψ`.
    pub fn apply_operator(&self, psi: &PhgSeries) -> Result<PhgSeries, FormalError> {
        let l = self.apply_l(psi)?;
        match &self.perturbation {
            Some(p) => Ok(l.add(&self.ring().multiply(p, &l)?)?),
            None => Ok(l),
        }
    }
}

/// `Q(ψ) = G((1+p)Lψ) − ψ − (f + c0)` to the problem's truncation order.
pub fn residual(p: &ModelProblem, psi: &PhgSeries) -> Result<PhgSeries, FormalError> {
    if psi.min_exponent().is_some_and(|e| e <= EXPONENT_TOLERANCE) {
        return Err(FormalError::InvalidProblem("ψ must vanish at x = 0".into()));
    }
    let psi = psi.truncated(p.truncation);
    let w = p.apply_operator(&psi)?;
    let gw = p.ring().compose(&p.germ, &w)?;
    Ok(gw.sub(&psi)?.sub(&p.forcing())?)
}

/// Leading term of a residual after dropping coefficients at noise level.
fn leading(r: &PhgSeries, tol: f64) -> Option<(LogMonomial, SpectralFunction)> {
    r.terms().find(|(_, c)| c.max_abs() > tol).map(|(k, c)| (*k, c.clone()))
}

/// One elimination step, as recorded by [`formal_expansion`].
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub exponent: f64,
    pub log_power: u32,
    pub resonant: bool,
    /// Terms added to `ψ`: `(i, j, coefficient)`.
    pub added: Vec<(f64, u32, SpectralFunction)>,
    /// Sup-norm of the targeted residual coefficient before and after.
    pub target_before: f64,
    pub target_after: f64,
    /// Leading residual position after the step.
    pub next_leading: Option<(f64, u32)>,
}

fn correction(
    p: &ModelProblem,
    key: LogMonomial,
    d: &SpectralFunction,
) -> Result<Vec<(f64, u32, SpectralFunction)>, FormalError> {
    let i = p
        .indices
        .snap(key.exponent)
        .ok_or(FormalError::NotInIndexSet(key.exponent))?;
    let j = key.log_power;
    let mu = indicial_shift(i);
    let modes = p.indices.resonant_modes(i);
    if modes.is_empty() {
        let c = p.model.solve_shifted_poisson(&d.scaled(-1.0), mu)?;
        return Ok(vec![(i, j, c)]);
    }
    let lambda = p.model.eigenvalues()[modes[0]];
    let (d0, perp) = p.model.project_onto_eigenspace(d, lambda);
    let rho = d0.scaled(-1.0 / ((j as f64 + 1.0) * (i + 0.5)));
    let c = p.model.solve_shifted_poisson(&perp.scaled(-1.0), mu)?;
    let mut added = Vec::new();
    if !rho.is_zero() {
        added.push((i, j + 1, rho));
    }
    if !c.is_zero() {
        added.push((i, j, c));
    }
    Ok(added)
}

fn apply_added(psi: &PhgSeries, added: &[(f64, u32, SpectralFunction)]) -> PhgSeries {
    let mut out = psi.clone();
    for (i, j, c) in added {
        out.accumulate(LogMonomial::new(*i, *j), c, 1.0);
    }
    out
}

/// Cancels the leading residual term of `ψ`; returns `ψ` unchanged when the
/// residual vanishes below the truncation.
pub fn step_correction(p: &ModelProblem, psi: &PhgSeries) -> Result<PhgSeries, FormalError> {
    let r = residual(p, psi)?;
    match leading(&r, ZERO_TOLERANCE * p.scale()) {
        None => Ok(psi.clone()),
        Some((key, d)) => Ok(apply_added(psi, &correction(p, key, &d)?)),
    }
}

/// Kernel component of a resonant coefficient `c_{i,0}`, fixed to `value`.
#[derive(Clone, Debug, PartialEq)]
pub struct FreeComponent {
    pub exponent: f64,
    pub modes: Vec<usize>,
    pub value: SpectralFunction,
}

#[derive(Clone, Debug)]
pub struct FormalSolution {
    pub psi: PhgSeries,
    pub order: f64,
    /// `(i, N_i)` for every index carrying a term.
    pub log_bounds: Vec<(f64, u32)>,
    pub free_components: Vec<FreeComponent>,
    pub steps: Vec<StepRecord>,
    /// Leading residual position once the order is reached.
    pub residual_leading: Option<(f64, u32)>,
}

/// Runs the recursion until the residual's leading exponent exceeds `order`,
/// with every free component set to zero.
pub fn formal_expansion(p: &ModelProblem, order: f64) -> Result<FormalSolution, FormalError> {
    formal_expansion_with_gauge(p, order, &[])
}

/// As [`formal_expansion`], with prescribed kernel components `(i, value)`
/// for resonant coefficients `c_{i,0}`. Components outside the kernel of
/// `Δ_D + μ(i)` are rejected.
pub fn formal_expansion_with_gauge(
    p: &ModelProblem,
    order: f64,
    gauge: &[(f64, SpectralFunction)],
) -> Result<FormalSolution, FormalError> {
    if !p.indices.contains(order) {
        return Err(FormalError::InvalidProblem(format!(
            "order {order} is not in the index set"
        )));
    }
    if order >= p.truncation - EXPONENT_TOLERANCE {
        return Err(FormalError::TruncationExceeded {
            order,
            truncation: p.truncation,
        });
    }
    let mut psi = PhgSeries::zero(p.model.len(), p.truncation);
    let mut scale = p.scale();
    for (i, value) in gauge {
        let modes = p.indices.resonant_modes(*i);
        if modes.is_empty() || *i > order + EXPONENT_TOLERANCE {
            return Err(FormalError::InvalidProblem(format!("no free component at x^{i}")));
        }
        let (_, off) = p.model.project_onto_eigenspace(value, p.model.eigenvalues()[modes[0]]);
        if !off.is_zero() {
            return Err(FormalError::InvalidProblem(format!(
                "gauge at x^{i} leaves the resonant eigenspace"
            )));
        }
        psi.accumulate(LogMonomial::new(p.indices.snap(*i).unwrap(), 0), value, 1.0);
        scale = scale.max(value.max_abs());
    }
    let tol = ZERO_TOLERANCE * scale;

    let count = p.indices.up_to(order).len();
    let mut steps = Vec::new();
    let mut r = residual(p, &psi)?;
    loop {
        let cap = 10 * count * psi.max_log_power().max(1) as usize;
        let Some((key, d)) = leading(&r, tol) else { break };
        if key.exponent > order + EXPONENT_TOLERANCE {
            break;
        }
        if steps.len() >= cap {
            return Err(FormalError::IterationCap(cap));
        }
        let added = correction(p, key, &d)?;
        psi = apply_added(&psi, &added);
        r = residual(p, &psi)?;
        let target_after = r
            .coefficient(key.exponent, key.log_power)
            .map(SpectralFunction::max_abs)
            .unwrap_or(0.0);
        steps.push(StepRecord {
            exponent: key.exponent,
            log_power: key.log_power,
            resonant: p.indices.is_resonant(key.exponent),
            added,
            target_before: d.max_abs(),
            target_after,
            next_leading: leading(&r, tol).map(|(k, _)| (k.exponent, k.log_power)),
        });
    }

    let psi = psi.partial_sum(order);
    let free_components = p
        .indices
        .up_to(order)
        .iter()
        .filter(|&&i| i > 0.0 && p.indices.is_resonant(i))
        .map(|&i| {
            let modes = p.indices.resonant_modes(i).to_vec();
            let mut value = SpectralFunction::zeros(p.model.len());
            if let Some(c) = psi.coefficient(i, 0) {
                for &l in &modes {
                    value.as_mut_slice()[l] = c.get(l);
                }
            }
            FreeComponent {
                exponent: i,
                modes,
                value,
            }
        })
        .collect();
    Ok(FormalSolution {
        log_bounds: psi.log_bounds(),
        residual_leading: leading(&r, tol).map(|(k, _)| (k.exponent, k.log_power)),
        psi,
        order,
        free_components,
        steps,
    })
}

/// `c_{1,1} = (2/3)·mean(f̃_1)`.
pub fn first_log_coefficient(p: &ModelProblem) -> f64 {
    let mean = p.source.coefficient(1.0, 0).map(|c| p.model.mean(c)).unwrap_or(0.0);
    2.0 / 3.0 * mean
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::indices::build_index_set;
    use crate::spectral::ModelKind;
    use proptest::prelude::*;

    fn point_problem(terms: &[(f64, f64)], cutoff: f64) -> ModelProblem {
        let model = SpectralModel::builtin(ModelKind::Point).unwrap();
        let indices = build_index_set(&model, cutoff).unwrap();
        let source = PhgSeries::from_terms(
            1,
            cutoff,
            terms
                .iter()
                .map(|&(i, a)| (LogMonomial::new(i, 0), SpectralFunction::new(vec![a]))),
        )
        .unwrap();
        ModelProblem::new(model, indices, source, 0.7, AnalyticGerm::Log1p, None).unwrap()
    }

    fn circle_problem(terms: &[(f64, usize, f64)], modes: usize, cutoff: f64) -> ModelProblem {
        let model = SpectralModel::builtin(ModelKind::Circle { radius: 1.0, modes }).unwrap();
        let indices = build_index_set(&model, cutoff).unwrap();
        let mut source = PhgSeries::zero(modes, cutoff);
        for &(i, l, a) in terms {
            source.accumulate(LogMonomial::new(i, 0), &SpectralFunction::unit(modes, l), a);
        }
        ModelProblem::new(model, indices, source, 1.0, AnalyticGerm::Log1p, None).unwrap()
    }

    #[test]
    fn residual_examples() {
        let p = point_problem(&[], 4.0);
        assert!(residual(&p, &PhgSeries::zero(1, 4.0)).unwrap().is_empty());

        let p = point_problem(&[(1.0, 0.2)], 4.0);
        let r = residual(&p, &PhgSeries::zero(1, 4.0)).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r.coefficient(1.0, 0).unwrap().get(0), -0.2);

        // ψ = c·x: the linear part vanishes at x (resonance), leaving −a·x
        let psi = PhgSeries::scalar(1.0, 0, 0.5, 4.0);
        let r = residual(&p, &psi).unwrap();
        assert!((r.coefficient(1.0, 0).unwrap().get(0) + 0.2).abs() < 1e-15);
        // quadratic part: Lψ = ψ, so G(ψ) − ψ starts with −½c²x²
        assert!((r.coefficient(2.0, 0).unwrap().get(0) + 0.125).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_sources() {
        let model = SpectralModel::builtin(ModelKind::Point).unwrap();
        let indices = build_index_set(&model, 3.0).unwrap();
        let logged = PhgSeries::scalar(1.0, 1, 1.0, 3.0);
        assert!(ModelProblem::new(model.clone(), indices.clone(), logged, 0.0, AnalyticGerm::Log1p, None).is_err());
        let wrong_c0 = PhgSeries::scalar(0.0, 0, 1.0, 3.0);
        assert!(ModelProblem::new(model.clone(), indices.clone(), wrong_c0, 0.0, AnalyticGerm::Log1p, None).is_err());
        let half = PhgSeries::scalar(0.5, 0, 1.0, 3.0);
        assert!(ModelProblem::new(model, indices, half, 0.0, AnalyticGerm::Log1p, None).is_err());
    }

    #[test]
    fn resonant_step_at_one() {
        let a = 0.09;
        let p = point_problem(&[(1.0, a)], 4.0);
        let psi = step_correction(&p, &PhgSeries::zero(1, 4.0)).unwrap();
        assert_eq!(psi.len(), 1);
        assert!((psi.coefficient(1.0, 1).unwrap().get(0) - 2.0 / 3.0 * a).abs() < 1e-15);
        // residual zero: unchanged
        let p0 = point_problem(&[], 4.0);
        let z = PhgSeries::zero(1, 4.0);
        assert_eq!(step_correction(&p0, &z).unwrap(), z);
    }

    #[test]
    fn nonresonant_step_matches_substitution() {
        // circle, mean-free cos forcing at x²: μ(2) = 2, λ_1 = 1, λ_3 = 4
        let p = circle_problem(&[(2.0, 1, 0.3)], 5, 4.0);
        let psi = step_correction(&p, &PhgSeries::zero(5, 4.0)).unwrap();
        let c = psi.coefficient(2.0, 0).unwrap();
        // residual d = −0.3 at x², c = d/(λ − μ)
        assert!((c.get(1) - (-0.3) / (1.0 - 2.0)).abs() < 1e-15);
        // (Δ + N)(c x²) must equal the forcing at x²
        let lin = psi.apply_laplacian(&p.model).add(&psi.apply_n()).unwrap();
        assert!((lin.coefficient(2.0, 0).unwrap().get(1) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn point_expansion_to_order_one() {
        let a = 0.06;
        let p = point_problem(&[(1.0, a)], 4.0);
        let sol = formal_expansion(&p, 1.0).unwrap();
        assert_eq!(sol.psi.len(), 1);
        assert!((sol.psi.coefficient(1.0, 1).unwrap().get(0) - 2.0 / 3.0 * a).abs() < 1e-15);
        assert!(sol.psi.coefficient(1.0, 0).is_none());
        assert_eq!(sol.free_components.len(), 1);
        assert!(sol.free_components[0].value.is_zero());
        assert!((first_log_coefficient(&p) - 2.0 / 3.0 * a).abs() < 1e-15);
        assert_eq!(sol.log_bounds, vec![(1.0, 1)]);
    }

    #[test]
    fn trivial_source_gives_zero_series() {
        let p = point_problem(&[], 5.0);
        for k in [1.0, 2.0, 4.0] {
            let sol = formal_expansion(&p, k).unwrap();
            assert!(sol.psi.is_empty());
            assert!(sol.steps.is_empty());
        }
    }

    #[test]
    fn first_log_coefficient_examples() {
        let p = point_problem(&[(1.0, 3.0)], 3.0);
        assert!((first_log_coefficient(&p) - 2.0).abs() < 1e-15);
        let c = circle_problem(&[(1.0, 1, 0.4)], 5, 3.0);
        assert_eq!(first_log_coefficient(&c), 0.0);
        let sol = formal_expansion(&c, 1.0).unwrap();
        assert!(sol.psi.coefficient(1.0, 1).is_none());
        let c10 = sol.psi.coefficient(1.0, 0).unwrap();
        assert!((c10.get(1) - (-0.4) / (1.0 - 0.0)).abs() < 1e-15);
    }

    #[test]
    fn descent_and_cancellation() {
        let problems = [
            point_problem(&[(1.0, 0.2), (2.0, -0.1), (3.0, 0.05)], 4.0),
            circle_problem(&[(1.0, 0, 0.3), (1.0, 1, 0.2), (2.0, 3, 0.1)], 7, 4.0),
        ];
        for p in &problems {
            let sol = formal_expansion(p, 3.0).unwrap();
            let scale = p.scale();
            let mut prev: Option<LogMonomial> = None;
            for s in &sol.steps {
                let here = LogMonomial::new(s.exponent, s.log_power);
                if let Some(prev) = prev {
                    assert!(here.is_after(&prev));
                }
                assert!(s.target_after <= 1e-11 * scale);
                if let Some((e, j)) = s.next_leading {
                    assert!(LogMonomial::new(e, j).is_after(&here));
                }
                prev = Some(here);
            }
            assert!(sol.residual_leading.is_none_or(|(e, _)| e > 3.0));
        }
    }

    #[test]
    fn gauge_keeps_residual_order() {
        let p = point_problem(&[(1.0, 0.1)], 4.0);
        let base = formal_expansion(&p, 2.0).unwrap();
        let gauged = formal_expansion_with_gauge(&p, 2.0, &[(1.0, SpectralFunction::new(vec![0.05]))]).unwrap();
        assert!((gauged.psi.coefficient(1.0, 0).unwrap().get(0) - 0.05).abs() < 1e-15);
        assert_eq!(base.residual_leading.map(|l| l.0), gauged.residual_leading.map(|l| l.0));
        let gauged_at_one = formal_expansion_with_gauge(&p, 1.0, &[(1.0, SpectralFunction::new(vec![0.05]))]).unwrap();
        let r = residual(&p, &gauged_at_one.psi).unwrap();
        assert!(r.pruned(1e-15).leading().unwrap().0.exponent > 1.0);
        let off_kernel = SpectralFunction::new(vec![0.0, 1.0, 0.0]);
        let c = circle_problem(&[], 3, 3.0);
        assert!(formal_expansion_with_gauge(&c, 2.0, &[(1.0, off_kernel)]).is_err());
    }

    #[test]
    fn perturbation_enters_at_next_order() {
        let model = SpectralModel::builtin(ModelKind::Point).unwrap();
        let indices = build_index_set(&model, 4.0).unwrap();
        let source = PhgSeries::scalar(1.0, 0, 0.1, 4.0);
        let pert = PhgSeries::scalar(1.0, 0, 0.5, 4.0);
        let plain = ModelProblem::new(
            model.clone(),
            indices.clone(),
            source.clone(),
            0.0,
            AnalyticGerm::Log1p,
            None,
        )
        .unwrap();
        let perturbed = ModelProblem::new(model, indices, source, 0.0, AnalyticGerm::Log1p, Some(pert)).unwrap();
        let a = formal_expansion(&plain, 2.0).unwrap();
        let b = formal_expansion(&perturbed, 2.0).unwrap();
        assert_eq!(a.psi.partial_sum(1.0), b.psi.partial_sum(1.0));
        assert_ne!(a.psi, b.psi);
    }

    proptest! {
        #[test]
        fn order_one_scales_linearly(a in -0.5f64..0.5, s in -3.0f64..3.0) {
            let p = point_problem(&[(1.0, a)], 3.0);
            let q = point_problem(&[(1.0, s * a)], 3.0);
            let c = formal_expansion(&p, 1.0).unwrap().psi;
            let cs = formal_expansion(&q, 1.0).unwrap().psi;
            let c11 = c.coefficient(1.0, 1).map(|v| v.get(0)).unwrap_or(0.0);
            let cs11 = cs.coefficient(1.0, 1).map(|v| v.get(0)).unwrap_or(0.0);
            prop_assert!((cs11 - s * c11).abs() <= 1e-12 * (1.0 + c11.abs()));
        }

        #[test]
        fn log_powers_only_grow_from_resonance(a in 0.01f64..0.3, b in -0.3f64..0.3) {
            // every log power at index i is at most the number of resonant
            // generators used to reach i
            let p = circle_problem(&[(1.0, 0, a), (2.0, 1, b)], 5, 4.0);
            let sol = formal_expansion(&p, 3.0).unwrap();
            for (i, n) in sol.log_bounds {
                prop_assert!(n as f64 <= i + EXPONENT_TOLERANCE);
            }
        }
    }
}
