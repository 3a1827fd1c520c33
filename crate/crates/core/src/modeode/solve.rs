//! Bounded solution of `−λv + ½x²v″ + xv′ − v = F` by variation of parameters.
//!
//! With `c = 2/(m̄ − m̲)` and `a = |m̲|`, the bounded solution with `v(x₀) = v₀` is
//!
//! ```text
//! v(x) = (x/x₀)^{m̄} [v₀ + c J(x₀)] − c K(x) − c J(x),
//! J(x) = ∫_0^x F(s) (s/x)^{a} ds/s,   K(x) = ∫_x^{x₀} F(s) (x/s)^{m̄} ds/s.
//! ```
//!
//! `J` and `K` are accumulated panel by panel in `t = log x` with decaying
//! factors only, so nothing overflows for large eigenvalues.

use serde::{Deserialize, Serialize};

use super::grid::Grid;
use super::quadrature::{panel_weights, stencil_start, STENCIL};
use super::ModeOdeError;
use crate::indices::{characteristic_roots, IndicialRoots};
use crate::series::integrate_monomial;

/// One analytic forcing term `coeff · x^exponent (log x)^log_power`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForcingMonomial {
    pub exponent: f64,
    pub log_power: u32,
    pub coeff: f64,
}

impl ForcingMonomial {
    pub fn value(&self, x: f64) -> f64 {
        self.coeff * x.powf(self.exponent) * x.ln().powi(self.log_power as i32)
    }
}

/// Forcing of one mode: grid samples plus analytic monomials, integrated in
/// closed form.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ModeForcing {
    pub samples: Option<Vec<f64>>,
    pub monomials: Vec<ForcingMonomial>,
}

impl ModeForcing {
    pub fn samples(values: Vec<f64>) -> Self {
        Self {
            samples: Some(values),
            monomials: Vec::new(),
        }
    }

    pub fn monomials(monomials: Vec<ForcingMonomial>) -> Self {
        Self {
            samples: None,
            monomials,
        }
    }

    /// Total forcing on the grid.
    pub fn values(&self, grid: &Grid) -> Vec<f64> {
        (0..grid.count)
            .map(|k| {
                let x = grid.x(k);
                let s = self.samples.as_ref().map(|v| v[k]).unwrap_or(0.0);
                s + self.monomials.iter().map(|m| m.value(x)).sum::<f64>()
            })
            .collect()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            samples: self.samples.as_ref().map(|v| v.iter().map(|y| y * s).collect()),
            monomials: self
                .monomials
                .iter()
                .map(|m| ForcingMonomial {
                    coeff: m.coeff * s,
                    ..*m
                })
                .collect(),
        }
    }

    pub fn plus(&self, other: &ModeForcing) -> Self {
        let samples = match (&self.samples, &other.samples) {
            (Some(a), Some(b)) => Some(a.iter().zip(b).map(|(x, y)| x + y).collect()),
            (Some(a), None) | (None, Some(a)) => Some(a.clone()),
            (None, None) => None,
        };
        let mut monomials = self.monomials.clone();
        monomials.extend_from_slice(&other.monomials);
        Self { samples, monomials }
    }
}

/// How sampled forcing is continued below `xMin`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub enum TailModel {
    /// Power law fitted to the first two samples.
    #[default]
    Fitted,
    /// `F(x) = F(xMin)·(x/xMin)^p` with the given `p`.
    Power(f64),
    /// No contribution below `xMin`.
    Zero,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeSolution {
    pub mode: usize,
    pub eigenvalue: f64,
    pub m_bar: f64,
    pub m_under: f64,
    pub boundary_datum: f64,
    pub values: Vec<f64>,
    /// Exponent of the tail used below `xMin`, if any.
    pub tail_exponent: Option<f64>,
}

/// Samples below this fraction of the largest one are treated as zero when
/// fitting the tail.
const TAIL_NOISE: f64 = 1e-14;

fn tail_exponent(samples: &[f64], h: f64, model: TailModel) -> Option<f64> {
    let (f0, f1) = (samples[0], samples[1]);
    let scale = samples.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return None;
    }
    match model {
        TailModel::Zero => None,
        TailModel::Power(p) => (f0 != 0.0).then_some(p),
        TailModel::Fitted => {
            if f0.abs() <= TAIL_NOISE * scale {
                return None;
            }
            if f1.abs() <= TAIL_NOISE * scale || f0.signum() != f1.signum() {
                // no usable trend: continue as a constant
                return Some(0.0);
            }
            Some((f1 / f0).ln() / h)
        }
    }
}

/// Solves the mode equation for eigenvalue `lambda` with `v(x₀) = datum`.
pub fn solve_mode_ode(
    lambda: f64,
    forcing: &ModeForcing,
    datum: f64,
    grid: &Grid,
    tail: TailModel,
) -> Result<ModeSolution, ModeOdeError> {
    grid.validate()?;
    let roots = characteristic_roots(lambda)?;
    let n = grid.count;
    if !datum.is_finite() {
        return Err(ModeOdeError::NonFinite);
    }
    if let Some(s) = &forcing.samples {
        if s.len() != n {
            return Err(ModeOdeError::InvalidGrid(format!(
                "forcing has {} samples, grid has {n} points",
                s.len()
            )));
        }
        if s.iter().any(|v| !v.is_finite()) {
            return Err(ModeOdeError::NonFinite);
        }
    }
    if forcing
        .monomials
        .iter()
        .any(|m| !(m.coeff.is_finite() && m.exponent >= 0.0))
    {
        return Err(ModeOdeError::NonFinite);
    }

    let IndicialRoots { m_bar: b, m_under, .. } = roots;
    let a = -m_under;
    let c = 2.0 / (b - m_under);
    let h = grid.step();
    let t_end = grid.t(n - 1);

    let mut j = vec![0.0; n];
    let mut k = vec![0.0; n];
    let mut tail_p = None;
    if let Some(f) = &forcing.samples {
        tail_p = tail_exponent(f, h, tail);
        if let Some(p) = tail_p {
            if p < m_under + 1.0 {
                return Err(ModeOdeError::NonIntegrable {
                    exponent: p,
                    limit: m_under + 1.0,
                });
            }
            // ∫_{−∞}^{t_0} F_0 e^{p(s−t_0)} e^{a(s−t_0)} ds
            j[0] = f[0] / (p + a);
        }
        let wj = panel_weights(h, a, true);
        let wk = panel_weights(h, b, false);
        let (dj, dk) = ((-a * h).exp(), (-b * h).exp());
        let panel = |w: &[[f64; STENCIL]], p: usize| {
            let start = stencil_start(p, n);
            let row = &w[p - start];
            (0..STENCIL).map(|m| row[m] * f[start + m]).sum::<f64>()
        };
        for p in 0..n - 1 {
            j[p + 1] = dj * j[p] + panel(&wj, p);
        }
        for p in (0..n - 1).rev() {
            k[p] = dk * k[p + 1] + panel(&wk, p);
        }
    }

    // closed forms for the analytic terms
    let ln_x0 = grid.x0.ln();
    for m in &forcing.monomials {
        let jt = integrate_monomial(m.exponent + a, m.log_power);
        let kt = integrate_monomial(m.exponent - b, m.log_power);
        let k_at_x0: Vec<f64> = kt
            .iter()
            .map(|t| t.coeff * grid.x0.powf(b + t.exponent) * ln_x0.powi(t.log_power as i32))
            .collect();
        for idx in 0..n {
            let x = grid.x(idx);
            let lx = grid.t(idx);
            let xe = x.powf(m.exponent);
            j[idx] += m.coeff
                * jt.iter()
                    .map(|t| t.coeff * xe * lx.powi(t.log_power as i32))
                    .sum::<f64>();
            let ratio = ((grid.t(idx) - t_end) * b).exp();
            k[idx] += m.coeff
                * kt.iter()
                    .zip(&k_at_x0)
                    .map(|(t, at_x0)| ratio * at_x0 - t.coeff * x.powf(b + t.exponent) * lx.powi(t.log_power as i32))
                    .sum::<f64>();
        }
    }

    let boundary = datum + c * j[n - 1];
    let values: Vec<f64> = (0..n)
        .map(|idx| ((grid.t(idx) - t_end) * b).exp() * boundary - c * k[idx] - c * j[idx])
        .collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(ModeOdeError::NonFinite);
    }
    Ok(ModeSolution {
        mode: 0,
        eigenvalue: lambda,
        m_bar: b,
        m_under,
        boundary_datum: datum,
        values,
        tail_exponent: tail_p,
    })
}

/// Relative residual `|½v_tt + ½v_t − (1+λ)v − F|` over the interior two
/// thirds of the grid, with 4th-order central differences in `t`.
pub fn ode_residual(solution: &ModeSolution, forcing: &[f64], grid: &Grid) -> f64 {
    let v = &solution.values;
    let h = grid.step();
    let n = grid.count;
    let (lo, hi) = (n / 6, n - n / 6);
    let mut worst: f64 = 0.0;
    for k in lo.max(2)..hi.min(n - 2) {
        let vt = (-v[k + 2] + 8.0 * v[k + 1] - 8.0 * v[k - 1] + v[k - 2]) / (12.0 * h);
        let vtt = (-v[k + 2] + 16.0 * v[k + 1] - 30.0 * v[k] + 16.0 * v[k - 1] - v[k - 2]) / (12.0 * h * h);
        let r = 0.5 * vtt + 0.5 * vt - (1.0 + solution.eigenvalue) * v[k] - forcing[k];
        let scale = forcing[k].abs() + (1.0 + solution.eigenvalue) * v[k].abs() + 0.5 * vtt.abs() + 0.5 * vt.abs();
        if scale > 0.0 {
            worst = worst.max(r.abs() / scale);
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid() -> Grid {
        Grid::default()
    }

    #[test]
    fn homogeneous_branch() {
        let g = grid();
        let s = solve_mode_ode(0.0, &ModeForcing::default(), 0.3, &g, TailModel::Fitted).unwrap();
        for k in 0..g.count {
            assert!((s.values[k] - 0.3 * g.x(k) / 0.1).abs() < 1e-15);
        }
    }

    #[test]
    fn constant_forcing() {
        let g = grid();
        let c = 0.7;
        let f = ModeForcing::samples(vec![c; g.count]);
        let s = solve_mode_ode(0.0, &f, -c + g.x0, &g, TailModel::Fitted).unwrap();
        for k in 0..g.count {
            assert!((s.values[k] - (-c + g.x(k))).abs() < 1e-13, "{k}");
        }
        let m = ModeForcing::monomials(vec![ForcingMonomial {
            exponent: 0.0,
            log_power: 0,
            coeff: c,
        }]);
        let s = solve_mode_ode(0.0, &m, -c + g.x0, &g, TailModel::Fitted).unwrap();
        for k in 0..g.count {
            assert!((s.values[k] - (-c + g.x(k))).abs() < 1e-14);
        }
    }

    #[test]
    fn resonant_monomial_produces_log() {
        // λ = 5, m̄ = 3, F = x³: the particular solution is (1/(m̄ + ½))·x³ log x
        // since N(x³ log x) + λ... = (2m̄+1)/2 · x³
        let g = grid();
        let f = ModeForcing::monomials(vec![ForcingMonomial {
            exponent: 3.0,
            log_power: 0,
            coeff: 1.0,
        }]);
        let s = solve_mode_ode(5.0, &f, 0.0, &g, TailModel::Fitted).unwrap();
        let rho = 1.0 / 3.5;
        let x0 = g.x0;
        for k in 0..g.count {
            let x = g.x(k);
            let exact = rho * x.powi(3) * x.ln() - rho * x0.ln() * x.powi(3);
            assert!((s.values[k] - exact).abs() < 1e-15 + 1e-12 * exact.abs(), "{k}");
        }
    }

    #[test]
    fn sampled_forcing_matches_closed_form() {
        let g = grid();
        let mono = vec![
            ForcingMonomial {
                exponent: 1.0,
                log_power: 1,
                coeff: 0.4,
            },
            ForcingMonomial {
                exponent: 2.5,
                log_power: 2,
                coeff: -0.2,
            },
        ];
        let analytic = ModeForcing::monomials(mono.clone());
        let sampled = ModeForcing::samples(analytic.values(&g));
        for lambda in [0.0, 1.0, 7.3] {
            let a = solve_mode_ode(lambda, &analytic, 0.01, &g, TailModel::Fitted).unwrap();
            let b = solve_mode_ode(lambda, &sampled, 0.01, &g, TailModel::Fitted).unwrap();
            let scale = a.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            let lo = g.count / 4;
            for k in lo..g.count {
                assert!((a.values[k] - b.values[k]).abs() < 1e-9 * scale, "λ={lambda} k={k}");
            }
        }
    }

    #[test]
    fn boundedness_selection() {
        let g = grid();
        for lambda in [0.0, 2.0, 30.0] {
            let s = solve_mode_ode(lambda, &ModeForcing::default(), 1.3, &g, TailModel::Fitted).unwrap();
            let at_x0 = s.values[g.count - 1] * g.x0.powf(-s.m_bar);
            for k in 0..g.count / 4 {
                let r = s.values[k] * g.x(k).powf(-s.m_bar);
                assert!((r - at_x0).abs() < 1e-4 * at_x0.abs());
            }
        }
    }

    #[test]
    fn rejects_non_integrable_forcing() {
        let g = grid();
        let f = ModeForcing::samples(g.points().iter().map(|x| x.powf(-2.5)).collect());
        assert!(matches!(
            solve_mode_ode(0.0, &f, 0.0, &g, TailModel::Fitted),
            Err(ModeOdeError::NonIntegrable { .. })
        ));
    }

    #[test]
    fn quadrature_converges_at_high_order() {
        let lambda = 2.0;
        // a pure power keeps the fitted tail exact, isolating the panel error
        let exact_forcing = ModeForcing::monomials(vec![ForcingMonomial {
            exponent: 1.3,
            log_power: 0,
            coeff: 1.0,
        }]);
        let mut defects = Vec::new();
        let mut g = Grid::new(0.1, 1e-4, 12).unwrap();
        for _ in 0..3 {
            let exact = solve_mode_ode(lambda, &exact_forcing, 0.0, &g, TailModel::Fitted).unwrap();
            let sampled = ModeForcing::samples(exact_forcing.values(&g));
            let s = solve_mode_ode(lambda, &sampled, 0.0, &g, TailModel::Fitted).unwrap();
            let lo = g.count / 2;
            let scale = exact.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            let d = (lo..g.count)
                .map(|k| (exact.values[k] - s.values[k]).abs())
                .fold(0.0, f64::max)
                / scale;
            defects.push(d);
            g = g.refined();
        }
        assert!(defects[0] / defects[1] >= 8.0, "{defects:?}");
        assert!(defects[1] / defects[2] >= 8.0, "{defects:?}");
    }

    #[test]
    fn residual_contract() {
        let g = Grid {
            count: 2048,
            ..Grid::default()
        };
        let f = ModeForcing::monomials(vec![
            ForcingMonomial {
                exponent: 1.0,
                log_power: 1,
                coeff: 0.3,
            },
            ForcingMonomial {
                exponent: 2.0,
                log_power: 0,
                coeff: -1.0,
            },
        ]);
        let sampled = ModeForcing::samples(f.values(&g));
        let s = solve_mode_ode(3.0, &sampled, 0.05, &g, TailModel::Fitted).unwrap();
        assert!(ode_residual(&s, &f.values(&g), &g) < 1e-6);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn superposition(
            a in prop::collection::vec(-1.0f64..1.0, 3),
            b in prop::collection::vec(-1.0f64..1.0, 3),
            da in -1.0f64..1.0,
            db in -1.0f64..1.0,
            lambda in 0.0f64..20.0,
        ) {
            let g = Grid { count: 128, ..Grid::default() };
            let make = |c: &[f64]| {
                let mono = ModeForcing::monomials(vec![
                    ForcingMonomial { exponent: 1.0, log_power: 0, coeff: c[0] },
                    ForcingMonomial { exponent: 2.0, log_power: 1, coeff: c[1] },
                ]);
                let samples = ModeForcing::samples(g.points().iter().map(|x| c[2] * x * x * x.ln().cos()).collect());
                mono.plus(&samples)
            };
            let (fa, fb) = (make(&a), make(&b));
            let tail = TailModel::Power(2.0);
            let sa = solve_mode_ode(lambda, &fa, da, &g, tail).unwrap();
            let sb = solve_mode_ode(lambda, &fb, db, &g, tail).unwrap();
            let sab = solve_mode_ode(lambda, &fa.scaled(2.0).plus(&fb.scaled(-3.0)), 2.0 * da - 3.0 * db, &g, tail).unwrap();
            let scale = sab.values.iter().chain(&sa.values).chain(&sb.values).fold(1e-300_f64, |m, v| m.max(v.abs()));
            for k in 0..g.count {
                let lin = 2.0 * sa.values[k] - 3.0 * sb.values[k];
                prop_assert!((sab.values[k] - lin).abs() <= 1e-12 * scale);
            }
        }
    }
}
