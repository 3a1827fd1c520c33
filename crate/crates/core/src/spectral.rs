//! Finite spectral models of the divisor: eigenvalues of `−Δ_D`, the
//! triple-product tensor `T[i][j][k] = ∫ φ_i φ_j φ_k`, eigenspace projection
//! and shifted Poisson solves.
//!
//! The built-in circle and torus models use a real Fourier basis on flat tori
//! of side `2π·radius`; the point model is the zero-dimensional divisor.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::series::SpectralFunction;

/// Relative tolerance for deciding `λ_l = μ`.
pub const KERNEL_TOLERANCE: f64 = 1e-9;

/// Kernel components of a shifted-Poisson right-hand side larger than
/// `SOLVABILITY_TOLERANCE · max(1, |d|∞)` are rejected.
pub const SOLVABILITY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("unsupported model: {0}")]
    Unsupported(String),
    #[error("invalid model: {0}")]
    Invalid(String),
    #[error("kernel component {component:e} on mode {mode} violates solvability at shift {shift}")]
    SolvabilityViolation { mode: usize, component: f64, shift: f64 },
    #[error("model file: {0}")]
    File(String),
}

/// Which built-in model to construct.
#[derive(Clone, Debug, PartialEq)]
pub enum ModelKind {
    Point,
    /// Fourier basis on a circle of length `2π·radius`, first `modes` real modes.
    Circle {
        radius: f64,
        modes: usize,
    },
    /// Flat square torus of real dimension `2n−2` and side `2π·radius`,
    /// keeping all lattice vectors with `|ξ|² <= lattice_cutoff`.
    Torus {
        n: usize,
        lattice_cutoff: u32,
        radius: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Trig {
    Const,
    Cos,
    Sin,
}

/// A real Fourier eigenfunction `cos(ξ·θ)` / `sin(ξ·θ)` (or the constant).
#[derive(Clone, Debug, PartialEq)]
struct FourierMode {
    xi: Vec<i64>,
    trig: Trig,
}

impl FourierMode {
    fn norm_sq(&self) -> i64 {
        self.xi.iter().map(|v| v * v).sum()
    }

    /// Complex exponential expansion: list of (frequency, coefficient).
    fn exponentials(&self) -> Vec<(Vec<i64>, (f64, f64))> {
        let neg: Vec<i64> = self.xi.iter().map(|v| -v).collect();
        match self.trig {
            Trig::Const => vec![(self.xi.clone(), (1.0, 0.0))],
            Trig::Cos => vec![(self.xi.clone(), (0.5, 0.0)), (neg, (0.5, 0.0))],
            // sin = (e^{iξθ} − e^{−iξθ}) / 2i
            Trig::Sin => vec![(self.xi.clone(), (0.0, -0.5)), (neg, (0.0, 0.5))],
        }
    }
}

/// Sparse storage of the fully symmetric triple-product tensor: every
/// nonzero `(i, j, k)` entry, all permutations included.
#[derive(Clone, Debug, PartialEq)]
pub struct TripleProduct {
    len: usize,
    entries: Vec<(u32, u32, u32, f64)>,
}

impl TripleProduct {
    pub fn from_dense(len: usize, data: &[f64]) -> Result<Self, SpectralError> {
        if data.len() != len * len * len {
            return Err(SpectralError::Invalid(format!(
                "dense triple product needs {} entries, got {}",
                len * len * len,
                data.len()
            )));
        }
        let mut entries = Vec::new();
        for i in 0..len {
            for j in 0..len {
                for k in 0..len {
                    let v = data[(i * len + j) * len + k];
                    if !v.is_finite() {
                        return Err(SpectralError::Invalid("non-finite tensor entry".into()));
                    }
                    if v != 0.0 {
                        entries.push((i as u32, j as u32, k as u32, v));
                    }
                }
            }
        }
        Ok(Self { len, entries })
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.entries
            .iter()
            .find(|(a, b, c, _)| (*a as usize, *b as usize, *c as usize) == (i, j, k))
            .map(|e| e.3)
            .unwrap_or(0.0)
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.len;
        let mut out = vec![0.0; n * n * n];
        for &(i, j, k, v) in &self.entries {
            out[(i as usize * n + j as usize) * n + k as usize] = v;
        }
        out
    }

    pub fn nonzeros(&self) -> usize {
        self.entries.len()
    }
}

/// Eigen-data of `(D, ω_D)` truncated to `L` modes.
#[derive(Clone, Debug)]
pub struct SpectralModel {
    dim_d: usize,
    eigenvalues: Vec<f64>,
    volume: f64,
    triple: TripleProduct,
    kind: Option<ModelKind>,
    basis: Option<Vec<FourierMode>>,
}

impl SpectralModel {
    pub fn builtin(kind: ModelKind) -> Result<Self, SpectralError> {
        match &kind {
            ModelKind::Point => Ok(Self {
                dim_d: 0,
                eigenvalues: vec![0.0],
                volume: 1.0,
                triple: TripleProduct {
                    len: 1,
                    entries: vec![(0, 0, 0, 1.0)],
                },
                kind: Some(kind),
                basis: None,
            }),
            ModelKind::Circle { radius, modes } => {
                if *modes < 1 {
                    return Err(SpectralError::Unsupported("circle needs at least one mode".into()));
                }
                let basis = circle_basis(*modes);
                Self::fourier(1, *radius, basis, kind)
            }
            ModelKind::Torus {
                n,
                lattice_cutoff,
                radius,
            } => {
                if *n < 1 {
                    return Err(SpectralError::Unsupported("torus needs n >= 1".into()));
                }
                if *lattice_cutoff < 1 {
                    return Err(SpectralError::Unsupported("lattice cutoff must be >= 1".into()));
                }
                let d = 2 * n - 2;
                if d == 0 {
                    return Self::builtin(ModelKind::Point);
                }
                let basis = torus_basis(d, *lattice_cutoff);
                Self::fourier(d, *radius, basis, kind)
            }
        }
    }

    fn fourier(d: usize, radius: f64, basis: Vec<FourierMode>, kind: ModelKind) -> Result<Self, SpectralError> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(SpectralError::Invalid("radius must be positive".into()));
        }
        let volume = (2.0 * PI * radius).powi(d as i32);
        let eigenvalues = basis.iter().map(|m| m.norm_sq() as f64 / (radius * radius)).collect();
        let triple = fourier_triple_product(&basis, volume);
        Ok(Self {
            dim_d: d,
            eigenvalues,
            volume,
            triple,
            kind: Some(kind),
            basis: Some(basis),
        })
    }

    /// A user-supplied model with an explicit dense tensor.
    pub fn from_dense(dim_d: usize, eigenvalues: Vec<f64>, volume: f64, dense: &[f64]) -> Result<Self, SpectralError> {
        let triple = TripleProduct::from_dense(eigenvalues.len(), dense)?;
        let model = Self {
            dim_d,
            eigenvalues,
            volume,
            triple,
            kind: None,
            basis: None,
        };
        model.validate()?;
        Ok(model)
    }

    /// Checks the structural invariants: `λ_0 = 0`, ascending eigenvalues,
    /// positive volume, symmetric tensor with `T[0][j][k] = V^{-1/2} δ_jk`.
    pub fn validate(&self) -> Result<(), SpectralError> {
        let l = self.len();
        if l == 0 {
            return Err(SpectralError::Invalid("empty eigenvalue list".into()));
        }
        if !(self.volume > 0.0 && self.volume.is_finite()) {
            return Err(SpectralError::Invalid("volume must be positive".into()));
        }
        if self.eigenvalues[0] != 0.0 {
            return Err(SpectralError::Invalid("λ_0 must be 0".into()));
        }
        if self
            .eigenvalues
            .windows(2)
            .any(|w| !(w[1] >= w[0]) || !w[1].is_finite())
        {
            return Err(SpectralError::Invalid(
                "eigenvalues must be finite and ascending".into(),
            ));
        }
        let dense = self.triple.to_dense();
        let at = |i: usize, j: usize, k: usize| dense[(i * l + j) * l + k];
        let scale = dense.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1.0);
        for i in 0..l {
            for j in 0..l {
                for k in 0..l {
                    let v = at(i, j, k);
                    if (v - at(j, i, k)).abs() > 1e-12 * scale || (v - at(i, k, j)).abs() > 1e-12 * scale {
                        return Err(SpectralError::Invalid(format!(
                            "triple product not symmetric at ({i},{j},{k})"
                        )));
                    }
                }
            }
        }
        let c = self.volume.powf(-0.5);
        for j in 0..l {
            for k in 0..l {
                let expect = if j == k { c } else { 0.0 };
                if (at(0, j, k) - expect).abs() > 1e-9 * c.max(1.0) {
                    return Err(SpectralError::Invalid(format!(
                        "T[0][{j}][{k}] must equal volume^(-1/2)·δ"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn dim_d(&self) -> usize {
        self.dim_d
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn volume(&self) -> f64 {
        self.volume
    }

    pub fn kind(&self) -> Option<&ModelKind> {
        self.kind.as_ref()
    }

    pub fn triple_product(&self) -> &TripleProduct {
        &self.triple
    }

    /// Coefficient vector of the constant function `c` (`c·√V·e_0`).
    pub fn constant_function(&self, c: f64) -> SpectralFunction {
        let mut v = SpectralFunction::zeros(self.len());
        v.as_mut_slice()[0] = c * self.volume.sqrt();
        v
    }

    /// Mean of `f` over `D`.
    pub fn mean(&self, f: &SpectralFunction) -> f64 {
        f.get(0) / self.volume.sqrt()
    }

    /// `c_k = Σ_{i,j} T[i][j][k] a_i b_j`, band-limited to the model's modes.
    pub fn multiply_functions(&self, a: &SpectralFunction, b: &SpectralFunction) -> SpectralFunction {
        let mut out = vec![0.0; self.len()];
        let (a, b) = (a.as_slice(), b.as_slice());
        for &(i, j, k, t) in &self.triple.entries {
            out[k as usize] += t * a[i as usize] * b[j as usize];
        }
        SpectralFunction::new(out)
    }

    pub fn apply_laplacian(&self, f: &SpectralFunction) -> SpectralFunction {
        SpectralFunction::new(
            f.as_slice()
                .iter()
                .zip(&self.eigenvalues)
                .map(|(c, l)| -l * c)
                .collect(),
        )
    }

    fn matches(&self, l: usize, mu: f64) -> bool {
        (self.eigenvalues[l] - mu).abs() <= KERNEL_TOLERANCE * mu.abs().max(1.0)
    }

    /// Modes whose eigenvalue equals `mu` within [`KERNEL_TOLERANCE`].
    pub fn kernel_indices(&self, mu: f64) -> Vec<usize> {
        (0..self.len()).filter(|&l| self.matches(l, mu)).collect()
    }

    /// Orthogonal split `d = d0 + d⊥` against the eigenspace `E_λ`.
    pub fn project_onto_eigenspace(&self, d: &SpectralFunction, lambda: f64) -> (SpectralFunction, SpectralFunction) {
        let mut d0 = SpectralFunction::zeros(self.len());
        let mut perp = d.clone();
        for l in self.kernel_indices(lambda) {
            d0.as_mut_slice()[l] = d.get(l);
            perp.as_mut_slice()[l] = 0.0;
        }
        (d0, perp)
    }

    /// Solves `(Δ_D + μ) c = d` with zero kernel components.
    pub fn solve_shifted_poisson(&self, d: &SpectralFunction, mu: f64) -> Result<SpectralFunction, SpectralError> {
        let tol = SOLVABILITY_TOLERANCE * d.max_abs().max(1.0);
        let mut c = SpectralFunction::zeros(self.len());
        for l in 0..self.len() {
            if self.matches(l, mu) {
                if d.get(l).abs() > tol {
                    return Err(SpectralError::SolvabilityViolation {
                        mode: l,
                        component: d.get(l),
                        shift: mu,
                    });
                }
            } else {
                c.as_mut_slice()[l] = d.get(l) / (mu - self.eigenvalues[l]);
            }
        }
        Ok(c)
    }

    /// Pointwise value of `φ_l` at angular coordinates `theta` (Fourier models).
    pub fn eval_basis(&self, l: usize, theta: &[f64]) -> Option<f64> {
        if matches!(self.kind, Some(ModelKind::Point)) {
            return Some(1.0);
        }
        let mode = self.basis.as_ref()?.get(l)?;
        let phase: f64 = mode.xi.iter().zip(theta).map(|(k, t)| *k as f64 * t).sum();
        let v = self.volume;
        Some(match mode.trig {
            Trig::Const => v.powf(-0.5),
            Trig::Cos => (2.0 / v).sqrt() * phase.cos(),
            Trig::Sin => (2.0 / v).sqrt() * phase.sin(),
        })
    }

    /// Coefficients `∫ w φ_l dv` of a function given pointwise in angular
    /// coordinates, by the trapezoid rule on `samples` points per circle factor.
    pub fn project_samples<F>(&self, samples: usize, w: F) -> Option<SpectralFunction>
    where
        F: Fn(&[f64]) -> f64,
    {
        if matches!(self.kind, Some(ModelKind::Point)) {
            return Some(SpectralFunction::new(vec![w(&[])]));
        }
        let basis = self.basis.as_ref()?;
        let d = self.dim_d;
        let total = samples.checked_pow(d as u32)?;
        let cell = self.volume / total as f64;
        let mut out = vec![0.0; self.len()];
        let mut theta = vec![0.0; d];
        for idx in 0..total {
            let mut r = idx;
            for t in theta.iter_mut() {
                *t = 2.0 * PI * (r % samples) as f64 / samples as f64;
                r /= samples;
            }
            let value = w(&theta);
            for (l, _) in basis.iter().enumerate() {
                out[l] += value * self.eval_basis(l, &theta).unwrap() * cell;
            }
        }
        Some(SpectralFunction::new(out))
    }

    pub fn to_document(&self) -> ModelDocument {
        let triple_product = match &self.kind {
            Some(ModelKind::Circle { .. }) => TripleProductDocument::Circle,
            Some(ModelKind::Torus { lattice_cutoff, .. }) => TripleProductDocument::Torus {
                lattice_cutoff: *lattice_cutoff,
            },
            _ => TripleProductDocument::Dense {
                data: self.triple.to_dense(),
            },
        };
        ModelDocument {
            dim_d: self.dim_d,
            eigenvalues: self.eigenvalues.clone(),
            volume: self.volume,
            triple_product,
        }
    }

    pub fn from_document(doc: &ModelDocument) -> Result<Self, SpectralError> {
        let model = match &doc.triple_product {
            TripleProductDocument::Dense { data } => {
                return Self::from_dense(doc.dim_d, doc.eigenvalues.clone(), doc.volume, data)
            }
            TripleProductDocument::Circle => {
                if doc.dim_d != 1 {
                    return Err(SpectralError::File("circle model needs dimD = 1".into()));
                }
                Self::builtin(ModelKind::Circle {
                    radius: doc.volume / (2.0 * PI),
                    modes: doc.eigenvalues.len(),
                })?
            }
            TripleProductDocument::Torus { lattice_cutoff } => {
                if doc.dim_d == 0 || !doc.dim_d.is_multiple_of(2) {
                    return Err(SpectralError::File("torus model needs even dimD >= 2".into()));
                }
                let radius = doc.volume.powf(1.0 / doc.dim_d as f64) / (2.0 * PI);
                Self::builtin(ModelKind::Torus {
                    n: doc.dim_d / 2 + 1,
                    lattice_cutoff: *lattice_cutoff,
                    radius,
                })?
            }
        };
        if model.len() != doc.eigenvalues.len()
            || model
                .eigenvalues
                .iter()
                .zip(&doc.eigenvalues)
                .any(|(a, b)| (a - b).abs() > 1e-9 * a.abs().max(1.0))
        {
            return Err(SpectralError::File(format!(
                "eigenvalues do not match the built-in model (expected {:?})",
                model.eigenvalues
            )));
        }
        Ok(model)
    }

    pub fn from_json(text: &str) -> Result<Self, SpectralError> {
        let doc: ModelDocument = serde_json::from_str(text).map_err(|e| SpectralError::File(e.to_string()))?;
        Self::from_document(&doc)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("model serializes")
    }
}

/// Model file layout.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ModelDocument {
    #[serde(rename = "dimD")]
    pub dim_d: usize,
    pub eigenvalues: Vec<f64>,
    pub volume: f64,
    pub triple_product: TripleProductDocument,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TripleProductDocument {
    Dense { data: Vec<f64> },
    Circle,
    Torus { lattice_cutoff: u32 },
}

fn circle_basis(modes: usize) -> Vec<FourierMode> {
    let mut basis = vec![FourierMode {
        xi: vec![0],
        trig: Trig::Const,
    }];
    let mut k = 1;
    while basis.len() < modes {
        for trig in [Trig::Cos, Trig::Sin] {
            if basis.len() < modes {
                basis.push(FourierMode { xi: vec![k], trig });
            }
        }
        k += 1;
    }
    basis
}

/// Lattice representatives (first nonzero component positive) with
/// `|ξ|² <= cutoff`, sorted by `|ξ|²` then lexicographically.
fn torus_basis(d: usize, cutoff: u32) -> Vec<FourierMode> {
    let r = (cutoff as f64).sqrt().floor() as i64;
    let side = (2 * r + 1) as usize;
    let mut reps: Vec<Vec<i64>> = Vec::new();
    for idx in 0..side.pow(d as u32) {
        let mut rem = idx;
        let mut xi = Vec::with_capacity(d);
        for _ in 0..d {
            xi.push((rem % side) as i64 - r);
            rem /= side;
        }
        let norm: i64 = xi.iter().map(|v| v * v).sum();
        if norm == 0 || norm > cutoff as i64 {
            continue;
        }
        if xi.iter().find(|v| **v != 0).copied().unwrap_or(0) > 0 {
            reps.push(xi);
        }
    }
    reps.sort_by(|a, b| {
        let na: i64 = a.iter().map(|v| v * v).sum();
        let nb: i64 = b.iter().map(|v| v * v).sum();
        na.cmp(&nb).then_with(|| b.cmp(a))
    });
    let mut basis = vec![FourierMode {
        xi: vec![0; d],
        trig: Trig::Const,
    }];
    for xi in reps {
        basis.push(FourierMode {
            xi: xi.clone(),
            trig: Trig::Cos,
        });
        basis.push(FourierMode { xi, trig: Trig::Sin });
    }
    basis
}

fn fourier_triple_product(basis: &[FourierMode], volume: f64) -> TripleProduct {
    let norms: Vec<f64> = basis
        .iter()
        .map(|m| match m.trig {
            Trig::Const => volume.powf(-0.5),
            _ => (2.0 / volume).sqrt(),
        })
        .collect();
    let expansions: Vec<_> = basis.iter().map(FourierMode::exponentials).collect();
    let mut entries = Vec::new();
    let n = basis.len();
    for a in 0..n {
        for b in a..n {
            for c in b..n {
                // ∫ e^{i(ξ1+ξ2+ξ3)·θ} dv = V when the frequencies cancel
                let mut re = 0.0;
                for (fa, ca) in &expansions[a] {
                    for (fb, cb) in &expansions[b] {
                        let ab = cmul(*ca, *cb);
                        for (fc, cc) in &expansions[c] {
                            if fa.iter().zip(fb).zip(fc).all(|((x, y), z)| x + y + z == 0) {
                                re += cmul(ab, *cc).0;
                            }
                        }
                    }
                }
                let v = re * volume * norms[a] * norms[b] * norms[c];
                if v.abs() > 1e-14 * volume.powf(-0.5) {
                    let mut perms = vec![(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)];
                    perms.sort();
                    perms.dedup();
                    for (i, j, k) in perms {
                        entries.push((i as u32, j as u32, k as u32, v));
                    }
                }
            }
        }
    }
    entries.sort_by_key(|x| (x.0, x.1, x.2));
    TripleProduct { len: n, entries }
}

fn cmul(a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    (a.0 * b.0 - a.1 * b.1, a.0 * b.1 + a.1 * b.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn circle(m: usize) -> SpectralModel {
        SpectralModel::builtin(ModelKind::Circle { radius: 1.0, modes: m }).unwrap()
    }

    #[test]
    fn point_model() {
        let p = SpectralModel::builtin(ModelKind::Point).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p.eigenvalues(), &[0.0]);
        assert_eq!(p.volume(), 1.0);
        assert_eq!(p.triple_product().get(0, 0, 0), 1.0);
        let a = SpectralFunction::new(vec![3.0]);
        let b = SpectralFunction::new(vec![-2.0]);
        assert_eq!(p.multiply_functions(&a, &b).get(0), -6.0);
    }

    #[test]
    fn circle_eigenvalues() {
        assert_eq!(circle(5).eigenvalues(), &[0.0, 1.0, 1.0, 4.0, 4.0]);
        let r2 = SpectralModel::builtin(ModelKind::Circle { radius: 2.0, modes: 3 }).unwrap();
        assert_eq!(r2.eigenvalues(), &[0.0, 0.25, 0.25]);
        assert!((r2.volume() - 4.0 * PI).abs() < 1e-14);
    }

    #[test]
    fn torus_lattice_count_matches_enumeration() {
        let t = SpectralModel::builtin(ModelKind::Torus {
            n: 2,
            lattice_cutoff: 2,
            radius: 1.0,
        })
        .unwrap();
        // brute force: ξ ∈ Z² with |ξ|² <= 2
        let mut count = 0;
        let mut lambdas = Vec::new();
        for a in -2i64..=2 {
            for b in -2i64..=2 {
                if a * a + b * b <= 2 {
                    count += 1;
                    lambdas.push((a * a + b * b) as f64);
                }
            }
        }
        lambdas.sort_by(f64::total_cmp);
        assert_eq!(t.len(), count);
        assert_eq!(t.eigenvalues(), lambdas.as_slice());
        assert_eq!(&t.eigenvalues()[..6], &[0.0, 1.0, 1.0, 1.0, 1.0, 2.0]);
        let p = SpectralModel::builtin(ModelKind::Torus {
            n: 1,
            lattice_cutoff: 3,
            radius: 1.0,
        })
        .unwrap();
        assert_eq!(p.len(), 1);
    }

    #[test]
    fn constant_one_is_identity() {
        for m in [
            circle(7),
            SpectralModel::builtin(ModelKind::Torus {
                n: 2,
                lattice_cutoff: 4,
                radius: 1.3,
            })
            .unwrap(),
        ] {
            let one = m.constant_function(1.0);
            let f = SpectralFunction::new((0..m.len()).map(|i| (i as f64 * 0.37).sin()).collect());
            let g = m.multiply_functions(&one, &f);
            for (x, y) in f.as_slice().iter().zip(g.as_slice()) {
                assert!((x - y).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn cos_squared_product_to_sum() {
        let m = circle(5);
        let v = m.volume();
        // cos θ = sqrt(V/2) φ_1
        let cos = SpectralFunction::unit(5, 1).scaled((v / 2.0).sqrt());
        let p = m.multiply_functions(&cos, &cos);
        // ½ + ½cos 2θ
        let expect = m
            .constant_function(0.5)
            .plus(&SpectralFunction::unit(5, 3).scaled(0.5 * (v / 2.0).sqrt()));
        for (x, y) in p.as_slice().iter().zip(expect.as_slice()) {
            assert!((x - y).abs() < 1e-14, "{x} vs {y}");
        }
    }

    #[test]
    fn orthonormality_row() {
        for m in [
            circle(9),
            SpectralModel::builtin(ModelKind::Torus {
                n: 2,
                lattice_cutoff: 5,
                radius: 0.7,
            })
            .unwrap(),
        ] {
            let s = m.volume().sqrt();
            for j in 0..m.len() {
                for k in 0..m.len() {
                    let expect = (j == k) as u8 as f64;
                    assert!((m.triple_product().get(0, j, k) * s - expect).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn projection_examples() {
        let m = circle(5);
        let d = SpectralFunction::new(vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        let (d0, perp) = m.project_onto_eigenspace(&d, 2.5);
        assert!(d0.is_zero());
        assert_eq!(perp, d);
        let (d0, perp) = m.project_onto_eigenspace(&d, 0.0);
        assert_eq!(d0.as_slice(), &[1.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(perp.as_slice(), &[0.0, 2.0, 3.0, 4.0, 5.0]);
        let e = SpectralFunction::new(vec![0.0, 2.0, -1.0, 0.0, 0.0]);
        let (d0, perp) = m.project_onto_eigenspace(&e, 1.0);
        assert_eq!(d0, e);
        assert!(perp.is_zero());
    }

    #[test]
    fn shifted_poisson_examples() {
        let p = SpectralModel::builtin(ModelKind::Point).unwrap();
        let c = p.solve_shifted_poisson(&SpectralFunction::new(vec![0.9]), 1.5).unwrap();
        assert!((c.get(0) - 0.6).abs() < 1e-15);
        assert!(p
            .solve_shifted_poisson(&SpectralFunction::zeros(1), 1.5)
            .unwrap()
            .is_zero());

        let m = circle(5);
        let d = SpectralFunction::unit(5, 3).scaled(2.0);
        let c = m.solve_shifted_poisson(&d, 2.0).unwrap();
        assert!((c.get(3) - 2.0 / (2.0 - 4.0)).abs() < 1e-15);

        let bad = SpectralFunction::unit(5, 1);
        assert!(matches!(
            m.solve_shifted_poisson(&bad, 1.0),
            Err(SpectralError::SolvabilityViolation { mode: 1, .. })
        ));
    }

    #[test]
    fn dense_model_file_round_trip() {
        let m = circle(3);
        let doc = ModelDocument {
            dim_d: 1,
            eigenvalues: m.eigenvalues().to_vec(),
            volume: m.volume(),
            triple_product: TripleProductDocument::Dense {
                data: m.triple_product().to_dense(),
            },
        };
        let text = serde_json::to_string(&doc).unwrap();
        let back = SpectralModel::from_json(&text).unwrap();
        assert_eq!(back.eigenvalues(), m.eigenvalues());
        assert_eq!(back.triple_product(), m.triple_product());

        let circle_doc = m.to_json();
        assert!(circle_doc.contains("\"circle\""));
        let back = SpectralModel::from_json(&circle_doc).unwrap();
        assert_eq!(back.triple_product(), m.triple_product());
    }

    #[test]
    fn dense_model_rejects_bad_tensor() {
        let err = SpectralModel::from_dense(0, vec![0.0], 1.0, &[2.0]).unwrap_err();
        assert!(matches!(err, SpectralError::Invalid(_)));
        let err = SpectralModel::from_dense(0, vec![1.0], 1.0, &[1.0]).unwrap_err();
        assert!(matches!(err, SpectralError::Invalid(_)));
    }

    #[test]
    fn circle_file_rejects_wrong_eigenvalues() {
        let text = r#"{"dimD":1,"eigenvalues":[0,2,2],"volume":6.283185307179586,"triple_product":{"kind":"circle"}}"#;
        assert!(matches!(SpectralModel::from_json(text), Err(SpectralError::File(_))));
    }
}
