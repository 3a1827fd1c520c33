//! Polyhomogeneous series `Σ c_{i,j} x^i (log x)^j` with coefficients in a
//! truncated eigenbasis of the divisor Laplacian.
//!
//! Invariants:
//! - terms are ordered by exponent ascending, then log power descending
//! - exponents closer than [`EXPONENT_TOLERANCE`] share one key
//! - no stored coefficient is identically zero
//! - every coefficient has the same spectral length `L`

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::ops::Bound;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::indices::IndexSet;
use crate::spectral::SpectralModel;

/// Coincidence tolerance for exponents (absolute).
pub const EXPONENT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SeriesError {
    #[error("spectral dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("exponent {0} is not an element of the index monoid")]
    ExponentNotInMonoid(f64),
    #[error("composition needs a strictly positive minimal exponent, found {0}")]
    ConstantTerm(f64),
    #[error("germ must satisfy G(0)=0 and G'(0)=1")]
    InvalidGerm,
    #[error("non-finite value in series data")]
    NonFinite,
    #[error("malformed series document: {0}")]
    Json(String),
}

/// Coefficients of a function on `D` in the eigenbasis `φ_0..φ_{L-1}`.
///
/// Component 0 multiplies the constant eigenfunction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SpectralFunction(Vec<f64>);

impl SpectralFunction {
    pub fn new(coefficients: Vec<f64>) -> Self {
        Self(coefficients)
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    /// Unit coefficient on mode `l`.
    pub fn unit(len: usize, l: usize) -> Self {
        let mut v = vec![0.0; len];
        v[l] = 1.0;
        Self(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn get(&self, l: usize) -> f64 {
        self.0[l]
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|v| *v == 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self(self.0.iter().map(|v| v * s).collect())
    }

    /// `self += s * other`
    pub fn axpy(&mut self, s: f64, other: &SpectralFunction) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += s * b;
        }
    }

    pub fn plus(&self, other: &SpectralFunction) -> Self {
        let mut out = self.clone();
        out.axpy(1.0, other);
        out
    }

    pub fn minus(&self, other: &SpectralFunction) -> Self {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }
}

/// The monomial `x^exponent (log x)^log_power`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct LogMonomial {
    pub exponent: f64,
    pub log_power: u32,
}

impl LogMonomial {
    pub fn new(exponent: f64, log_power: u32) -> Self {
        Self { exponent, log_power }
    }

    pub fn evaluate(&self, x: f64) -> f64 {
        x.powf(self.exponent) * x.ln().powi(self.log_power as i32)
    }

    /// Position in the well-order used by the formal recursion: `true` when
    /// `self` comes strictly after `other`.
    pub fn is_after(&self, other: &LogMonomial) -> bool {
        if self.exponent > other.exponent + EXPONENT_TOLERANCE {
            return true;
        }
        if (self.exponent - other.exponent).abs() <= EXPONENT_TOLERANCE {
            return self.log_power < other.log_power;
        }
        false
    }
}

impl PartialEq for LogMonomial {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for LogMonomial {}

impl PartialOrd for LogMonomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for LogMonomial {
    fn cmp(&self, other: &Self) -> Ordering {
        self.exponent
            .total_cmp(&other.exponent)
            .then_with(|| other.log_power.cmp(&self.log_power))
    }
}

/// A truncated polyhomogeneous series. Exponents above `truncation` are
/// discarded by every operation.
#[derive(Clone, Debug, PartialEq)]
pub struct PhgSeries {
    dim: usize,
    truncation: f64,
    terms: BTreeMap<LogMonomial, SpectralFunction>,
}

impl PhgSeries {
    pub fn zero(dim: usize, truncation: f64) -> Self {
        Self {
            dim,
            truncation,
            terms: BTreeMap::new(),
        }
    }

    pub fn monomial(exponent: f64, log_power: u32, coeff: SpectralFunction, truncation: f64) -> Self {
        let mut s = Self::zero(coeff.len(), truncation);
        s.accumulate(LogMonomial::new(exponent, log_power), &coeff, 1.0);
        s
    }

    /// Scalar monomial on a one-mode model.
    pub fn scalar(exponent: f64, log_power: u32, value: f64, truncation: f64) -> Self {
        Self::monomial(exponent, log_power, SpectralFunction::new(vec![value]), truncation)
    }

    pub fn from_terms<I>(dim: usize, truncation: f64, terms: I) -> Result<Self, SeriesError>
    where
        I: IntoIterator<Item = (LogMonomial, SpectralFunction)>,
    {
        let mut s = Self::zero(dim, truncation);
        for (key, coeff) in terms {
            if coeff.len() != dim {
                return Err(SeriesError::DimensionMismatch {
                    left: dim,
                    right: coeff.len(),
                });
            }
            if !coeff.is_finite() || !key.exponent.is_finite() {
                return Err(SeriesError::NonFinite);
            }
            s.accumulate(key, &coeff, 1.0);
        }
        Ok(s)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn truncation(&self) -> f64 {
        self.truncation
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&LogMonomial, &SpectralFunction)> {
        self.terms.iter()
    }

    pub fn coefficient(&self, exponent: f64, log_power: u32) -> Option<&SpectralFunction> {
        self.find_key(LogMonomial::new(exponent, log_power))
            .and_then(|k| self.terms.get(&k))
    }

    /// First term in the well-order (smallest exponent, then largest log power).
    pub fn leading(&self) -> Option<(&LogMonomial, &SpectralFunction)> {
        self.terms.iter().next()
    }

    pub fn min_exponent(&self) -> Option<f64> {
        self.leading().map(|(k, _)| k.exponent)
    }

    pub fn max_log_power(&self) -> u32 {
        self.terms.keys().map(|k| k.log_power).max().unwrap_or(0)
    }

    /// Largest log power per exponent.
    pub fn log_bounds(&self) -> Vec<(f64, u32)> {
        let mut out: Vec<(f64, u32)> = Vec::new();
        for key in self.terms.keys() {
            match out.last_mut() {
                Some((e, n)) if (*e - key.exponent).abs() <= EXPONENT_TOLERANCE => *n = (*n).max(key.log_power),
                _ => out.push((key.exponent, key.log_power)),
            }
        }
        out
    }

    fn find_key(&self, key: LogMonomial) -> Option<LogMonomial> {
        let lo = LogMonomial::new(key.exponent - EXPONENT_TOLERANCE, u32::MAX);
        let hi = LogMonomial::new(key.exponent + EXPONENT_TOLERANCE, 0);
        self.terms
            .range((Bound::Included(lo), Bound::Included(hi)))
            .map(|(k, _)| *k)
            .find(|k| k.log_power == key.log_power)
    }

    /// `self[key] += s * coeff`, merging with an existing exponent within
    /// tolerance and dropping exact zeros.
    pub(crate) fn accumulate(&mut self, key: LogMonomial, coeff: &SpectralFunction, s: f64) {
        if key.exponent > self.truncation + EXPONENT_TOLERANCE {
            return;
        }
        let key = self.find_key(key).unwrap_or(key);
        let entry = self
            .terms
            .entry(key)
            .or_insert_with(|| SpectralFunction::zeros(coeff.len()));
        entry.axpy(s, coeff);
        if entry.is_zero() {
            self.terms.remove(&key);
        }
    }

    fn check_dim(&self, other: &PhgSeries) -> Result<(), SeriesError> {
        if self.dim != other.dim {
            return Err(SeriesError::DimensionMismatch {
                left: self.dim,
                right: other.dim,
            });
        }
        Ok(())
    }

    /// Termwise sum; the result truncates at the smaller truncation order.
    pub fn add(&self, other: &PhgSeries) -> Result<PhgSeries, SeriesError> {
        self.check_dim(other)?;
        let mut out = self.truncated(self.truncation.min(other.truncation));
        for (k, c) in &other.terms {
            out.accumulate(*k, c, 1.0);
        }
        Ok(out)
    }

    pub fn sub(&self, other: &PhgSeries) -> Result<PhgSeries, SeriesError> {
        self.add(&other.scaled(-1.0))
    }

    pub fn scaled(&self, s: f64) -> PhgSeries {
        let mut out = PhgSeries::zero(self.dim, self.truncation);
        for (k, c) in &self.terms {
            out.accumulate(*k, c, s);
        }
        out
    }

    pub fn truncated(&self, truncation: f64) -> PhgSeries {
        PhgSeries {
            dim: self.dim,
            truncation,
            terms: self
                .terms
                .iter()
                .filter(|(k, _)| k.exponent <= truncation + EXPONENT_TOLERANCE)
                .map(|(k, c)| (*k, c.clone()))
                .collect(),
        }
    }

    /// Terms with exponent `<= k` (the partial sum `ψ_k`), keeping truncation.
    pub fn partial_sum(&self, k: f64) -> PhgSeries {
        PhgSeries {
            dim: self.dim,
            truncation: self.truncation,
            terms: self
                .terms
                .iter()
                .filter(|(key, _)| key.exponent <= k + EXPONENT_TOLERANCE)
                .map(|(key, c)| (*key, c.clone()))
                .collect(),
        }
    }

    /// Drops terms whose coefficient sup-norm is at most `tol`.
    pub fn pruned(&self, tol: f64) -> PhgSeries {
        PhgSeries {
            dim: self.dim,
            truncation: self.truncation,
            terms: self
                .terms
                .iter()
                .filter(|(_, c)| c.max_abs() > tol)
                .map(|(k, c)| (*k, c.clone()))
                .collect(),
        }
    }

    /// Exact action of `N = ½x²∂²_x + x∂_x − 1`.
    pub fn apply_n(&self) -> PhgSeries {
        self.apply_euler(-1.0)
    }

    /// Exact action of `½x²∂²_x + x∂_x` (that is, `N + 1`).
    pub fn apply_n_tilde(&self) -> PhgSeries {
        self.apply_euler(0.0)
    }

    fn apply_euler(&self, shift: f64) -> PhgSeries {
        let mut out = PhgSeries::zero(self.dim, self.truncation);
        for (k, c) in &self.terms {
            let i = k.exponent;
            let j = k.log_power;
            let indicial = 0.5 * i * i + 0.5 * i + shift;
            out.accumulate(*k, c, indicial);
            if j >= 1 {
                out.accumulate(LogMonomial::new(i, j - 1), c, j as f64 * (i + 0.5));
            }
            if j >= 2 {
                out.accumulate(LogMonomial::new(i, j - 2), c, 0.5 * (j * (j - 1)) as f64);
            }
        }
        out
    }

    /// Applies `Δ_D`, which multiplies component `l` by `−λ_l`.
    pub fn apply_laplacian(&self, model: &SpectralModel) -> PhgSeries {
        let mut out = PhgSeries::zero(self.dim, self.truncation);
        for (k, c) in &self.terms {
            out.accumulate(*k, &model.apply_laplacian(c), 1.0);
        }
        out
    }

    /// Value of mode `l` at `x > 0`.
    pub fn evaluate_mode(&self, l: usize, x: f64) -> f64 {
        let lx = x.ln();
        self.terms
            .iter()
            .map(|(k, c)| c.get(l) * x.powf(k.exponent) * lx.powi(k.log_power as i32))
            .sum()
    }

    pub fn to_document(&self) -> SeriesDocument {
        SeriesDocument {
            truncation: self.truncation.is_finite().then_some(self.truncation),
            terms: self
                .terms
                .iter()
                .map(|(k, c)| TermDocument {
                    i: k.exponent,
                    j: k.log_power,
                    coeff: c.as_slice().to_vec(),
                })
                .collect(),
        }
    }

    pub fn from_document(doc: &SeriesDocument) -> Result<PhgSeries, SeriesError> {
        let dim = doc.terms.first().map(|t| t.coeff.len()).unwrap_or(1);
        let truncation = doc.truncation.unwrap_or(f64::INFINITY);
        PhgSeries::from_terms(
            dim,
            truncation,
            doc.terms
                .iter()
                .map(|t| (LogMonomial::new(t.i, t.j), SpectralFunction::new(t.coeff.clone()))),
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_document()).expect("series document serializes")
    }

    pub fn from_json(text: &str) -> Result<PhgSeries, SeriesError> {
        let doc: SeriesDocument = serde_json::from_str(text).map_err(|e| SeriesError::Json(e.to_string()))?;
        Self::from_document(&doc)
    }
}

/// JSON form: `{"truncation": A | null, "terms": [{"i", "j", "coeff"}]}`.
/// A `null` truncation stands for `+∞`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SeriesDocument {
    pub truncation: Option<f64>,
    pub terms: Vec<TermDocument>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct TermDocument {
    pub i: f64,
    pub j: u32,
    pub coeff: Vec<f64>,
}

/// Taylor germ at 0 of an analytic scalar nonlinearity with `G(0)=0`, `G'(0)=1`.
#[derive(Clone, Debug, PartialEq)]
pub enum AnalyticGerm {
    Identity,
    /// `log(1+t)`
    Log1p,
    /// `exp(t) − 1`
    ExpM1,
    /// Explicit coefficients `[a_0, a_1, a_2, …]` of `Σ a_k t^k`.
    Taylor(Vec<f64>),
}

impl AnalyticGerm {
    pub fn taylor(coefficients: Vec<f64>) -> Result<Self, SeriesError> {
        let germ = AnalyticGerm::Taylor(coefficients);
        germ.validate()?;
        Ok(germ)
    }

    pub fn validate(&self) -> Result<(), SeriesError> {
        if let AnalyticGerm::Taylor(c) = self {
            let a0 = c.first().copied().unwrap_or(0.0);
            let a1 = c.get(1).copied().unwrap_or(0.0);
            if a0 != 0.0 || a1 != 1.0 || c.iter().any(|v| !v.is_finite()) {
                return Err(SeriesError::InvalidGerm);
            }
        }
        Ok(())
    }

    /// Taylor coefficient of `t^k`.
    pub fn coefficient(&self, k: usize) -> f64 {
        match self {
            AnalyticGerm::Identity => (k == 1) as u8 as f64,
            AnalyticGerm::Log1p => {
                if k == 0 {
                    0.0
                } else {
                    let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
                    sign / k as f64
                }
            }
            AnalyticGerm::ExpM1 => {
                if k == 0 {
                    0.0
                } else {
                    (1..=k).fold(1.0, |acc, m| acc / m as f64)
                }
            }
            AnalyticGerm::Taylor(c) => c.get(k).copied().unwrap_or(0.0),
        }
    }

    /// Highest nonzero degree, if the germ is a polynomial.
    pub fn polynomial_degree(&self) -> Option<usize> {
        match self {
            AnalyticGerm::Identity => Some(1),
            AnalyticGerm::Taylor(c) => Some(c.iter().rposition(|v| *v != 0.0).unwrap_or(1)),
            _ => None,
        }
    }

    /// Parses `identity`, `log1p`, `expm1` or `taylor:a0,a1,a2,...`.
    pub fn parse(text: &str) -> Result<Self, SeriesError> {
        match text.trim() {
            "identity" => Ok(AnalyticGerm::Identity),
            "log1p" => Ok(AnalyticGerm::Log1p),
            "expm1" => Ok(AnalyticGerm::ExpM1),
            other => {
                let body = other
                    .strip_prefix("taylor:")
                    .ok_or_else(|| SeriesError::Json(format!("unknown germ `{other}`")))?;
                let coeffs = body
                    .split(',')
                    .map(|s| s.trim().parse::<f64>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| SeriesError::Json(e.to_string()))?;
                AnalyticGerm::taylor(coeffs)
            }
        }
    }

    pub fn name(&self) -> String {
        match self {
            AnalyticGerm::Identity => "identity".into(),
            AnalyticGerm::Log1p => "log1p".into(),
            AnalyticGerm::ExpM1 => "expm1".into(),
            AnalyticGerm::Taylor(c) => {
                let parts: Vec<String> = c.iter().map(|v| v.to_string()).collect();
                format!("taylor:{}", parts.join(","))
            }
        }
    }
}

/// Products and compositions of series over a spectral model, with result
/// exponents snapped onto the index monoid.
#[derive(Clone, Copy)]
pub struct SeriesRing<'a> {
    pub model: &'a SpectralModel,
    pub indices: &'a IndexSet,
}

impl<'a> SeriesRing<'a> {
    pub fn new(model: &'a SpectralModel, indices: &'a IndexSet) -> Self {
        Self { model, indices }
    }

    /// The constant function 1 at exponent 0.
    pub fn one(&self, truncation: f64) -> PhgSeries {
        PhgSeries::monomial(0.0, 0, self.model.constant_function(1.0), truncation)
    }

    pub fn multiply(&self, a: &PhgSeries, b: &PhgSeries) -> Result<PhgSeries, SeriesError> {
        a.check_dim(b)?;
        self.multiply_to(a, b, a.truncation.min(b.truncation))
    }

    fn multiply_to(&self, a: &PhgSeries, b: &PhgSeries, limit: f64) -> Result<PhgSeries, SeriesError> {
        let mut out = PhgSeries::zero(a.dim, limit);
        for (ka, ca) in &a.terms {
            for (kb, cb) in &b.terms {
                let e = ka.exponent + kb.exponent;
                if e > limit + EXPONENT_TOLERANCE {
                    // b is sorted by exponent, later terms only grow
                    break;
                }
                let snapped = self.indices.snap(e).ok_or(SeriesError::ExponentNotInMonoid(e))?;
                let product = self.model.multiply_functions(ca, cb);
                out.accumulate(LogMonomial::new(snapped, ka.log_power + kb.log_power), &product, 1.0);
            }
        }
        Ok(out)
    }

    /// `G(s)` by Horner evaluation in the series ring.
    pub fn compose(&self, germ: &AnalyticGerm, s: &PhgSeries) -> Result<PhgSeries, SeriesError> {
        germ.validate()?;
        let Some(e_min) = s.min_exponent() else {
            return Ok(PhgSeries::zero(s.dim, s.truncation));
        };
        if e_min <= EXPONENT_TOLERANCE {
            return Err(SeriesError::ConstantTerm(e_min));
        }
        let limit = s.truncation;
        let mut degree = ((limit + EXPONENT_TOLERANCE) / e_min).floor().max(1.0) as usize;
        if let Some(d) = germ.polynomial_degree() {
            degree = degree.min(d.max(1));
        }
        // inner_k = a_k + s * inner_{k+1}; only exponents <= limit - k*e_min matter
        let mut inner = self.one(limit).scaled(germ.coefficient(degree));
        for k in (1..degree).rev() {
            let room = limit - k as f64 * e_min;
            let mut next = self.multiply_to(s, &inner, room)?;
            next.truncation = limit;
            inner = next.add(&self.one(limit).scaled(germ.coefficient(k)))?;
        }
        let mut out = self.multiply_to(s, &inner, limit)?;
        out.truncation = s.truncation;
        Ok(out)
    }
}

/// One term `coeff · x^exponent (log x)^log_power` of an antiderivative.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AntiderivativeTerm {
    pub exponent: f64,
    pub log_power: u32,
    pub coeff: f64,
}

/// Antiderivative of `x^{a−1} (log x)^j`.
pub fn integrate_monomial(a: f64, j: u32) -> Vec<AntiderivativeTerm> {
    if a.abs() <= EXPONENT_TOLERANCE {
        return vec![AntiderivativeTerm {
            exponent: 0.0,
            log_power: j + 1,
            coeff: 1.0 / (j as f64 + 1.0),
        }];
    }
    // Σ_{m=0}^{j} (−1)^{j−m} (j!/m!) a^{−(j−m+1)} x^a (log x)^m
    let mut terms = Vec::with_capacity(j as usize + 1);
    let mut coeff = 1.0 / a; // m = j
    for m in (0..=j).rev() {
        terms.push(AntiderivativeTerm {
            exponent: a,
            log_power: m,
            coeff,
        });
        coeff *= -(m as f64) / a;
    }
    terms.reverse();
    terms
}

/// Exact-rational counterpart of [`integrate_monomial`].
pub fn integrate_monomial_exact(a: Ratio<i64>, j: u32) -> Vec<(Ratio<i64>, u32, Ratio<i64>)> {
    let zero = Ratio::from_integer(0);
    if a == zero {
        return vec![(zero, j + 1, Ratio::new(1, j as i64 + 1))];
    }
    let mut terms = Vec::with_capacity(j as usize + 1);
    let mut coeff = a.recip();
    for m in (0..=j).rev() {
        terms.push((a, m, coeff));
        coeff = -coeff * Ratio::from_integer(m as i64) / a;
    }
    terms.reverse();
    terms
}
