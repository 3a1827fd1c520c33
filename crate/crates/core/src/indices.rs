//! Indicial roots of the mode equation and the index monoid generated by
//! `{1} ∪ {m̄_k}`.

use num_rational::Ratio;
use thiserror::Error;

use crate::series::EXPONENT_TOLERANCE;
use crate::spectral::{SpectralModel, KERNEL_TOLERANCE};

/// Largest denominator tried when recognising a rational discriminant root.
const MAX_DENOMINATOR: i64 = 16;
const RATIONAL_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("eigenvalue {0} is negative")]
    NegativeEigenvalue(f64),
    #[error("cutoff {0} must be positive and finite")]
    InvalidCutoff(f64),
    #[error("generators {0} and {1} are closer than the coincidence tolerance")]
    DegenerateGenerators(f64, f64),
    #[error("{0} is not an element of the index set")]
    NotAnElement(f64),
    #[error("{0} is the last index below the cutoff")]
    NoNextIndex(f64),
    #[error("gap ledger: non-positive epsilon after index {0}")]
    NonPositiveGap(f64),
    #[error("csv: {0}")]
    Csv(String),
}

/// Roots `m̄ >= 1`, `m̲ <= −2` of `½m² + ½m − 1 = λ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IndicialRoots {
    pub m_bar: f64,
    pub m_under: f64,
    pub eigenvalue: f64,
    /// Exact values when `√(9+8λ)` is a small-denominator rational.
    pub exact: Option<(Ratio<i64>, Ratio<i64>)>,
}

impl IndicialRoots {
    /// `½m² + ½m − 1 − λ` at `m`.
    pub fn indicial(&self, m: f64) -> f64 {
        0.5 * m * m + 0.5 * m - 1.0 - self.eigenvalue
    }
}

/// `μ(i) = ½i² + ½i − 1`, the shift of the Poisson problem at index `i`.
pub fn indicial_shift(i: f64) -> f64 {
    0.5 * i * i + 0.5 * i - 1.0
}

fn rational_sqrt(v: f64) -> Option<Ratio<i64>> {
    let s = v.sqrt();
    for d in 1..=MAX_DENOMINATOR {
        let p = (s * d as f64).round();
        let q = p / d as f64;
        if (q - s).abs() <= RATIONAL_TOLERANCE * s.max(1.0) && (q * q - v).abs() <= RATIONAL_TOLERANCE * v.max(1.0) {
            return Some(Ratio::new(p as i64, d));
        }
    }
    None
}

pub fn characteristic_roots(lambda: f64) -> Result<IndicialRoots, IndexError> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(IndexError::NegativeEigenvalue(lambda));
    }
    let disc = 9.0 + 8.0 * lambda;
    if let Some(s) = rational_sqrt(disc) {
        let one = Ratio::from_integer(1);
        let two = Ratio::from_integer(2);
        let bar = (s - one) / two;
        let under = (-s - one) / two;
        return Ok(IndicialRoots {
            m_bar: ratio_to_f64(bar),
            m_under: ratio_to_f64(under),
            eigenvalue: lambda,
            exact: Some((bar, under)),
        });
    }
    let s = disc.sqrt();
    let m_under = -(1.0 + s) / 2.0;
    // m̄ from the product of the roots avoids cancellation for large λ
    let m_bar = (4.0 + 4.0 * lambda) / (1.0 + s);
    Ok(IndicialRoots {
        m_bar,
        m_under,
        eigenvalue: lambda,
        exact: None,
    })
}

pub fn ratio_to_f64(r: Ratio<i64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// The sorted monoid `I ∩ [0, A]` with resonance marks.
#[derive(Clone, Debug)]
pub struct IndexSet {
    cutoff: f64,
    elements: Vec<f64>,
    exact: Vec<Option<Ratio<i64>>>,
    resonant: Vec<Vec<usize>>,
    generators: Vec<f64>,
    mode_roots: Vec<IndicialRoots>,
}

/// Breadth-first enumeration of all generator sums `<= cutoff`.
pub fn build_index_set(model: &SpectralModel, cutoff: f64) -> Result<IndexSet, IndexError> {
    if !(cutoff > 0.0) || !cutoff.is_finite() {
        return Err(IndexError::InvalidCutoff(cutoff));
    }
    let mode_roots = model
        .eigenvalues()
        .iter()
        .map(|&l| characteristic_roots(l))
        .collect::<Result<Vec<_>, _>>()?;

    // (value, exact, eigenvalue it came from)
    let mut gens: Vec<(f64, Option<Ratio<i64>>, f64)> = vec![(1.0, Some(Ratio::from_integer(1)), 0.0)];
    for r in &mode_roots {
        if r.m_bar > cutoff + EXPONENT_TOLERANCE {
            continue;
        }
        let mut merged = false;
        for g in &gens {
            if (g.0 - r.m_bar).abs() <= EXPONENT_TOLERANCE {
                let same = (g.2 - r.eigenvalue).abs() <= KERNEL_TOLERANCE * r.eigenvalue.max(1.0);
                if !same {
                    return Err(IndexError::DegenerateGenerators(g.0, r.m_bar));
                }
                merged = true;
                break;
            }
        }
        if !merged {
            gens.push((r.m_bar, r.exact.map(|e| e.0), r.eigenvalue));
        }
    }
    gens.sort_by(|a, b| a.0.total_cmp(&b.0));
    let generators: Vec<f64> = gens.iter().map(|g| g.0).collect();

    let mut elements: Vec<(f64, Option<Ratio<i64>>)> = vec![(0.0, Some(Ratio::from_integer(0)))];
    let mut queue = std::collections::VecDeque::from([(0.0, Some(Ratio::from_integer(0)))]);
    while let Some((e, ex)) = queue.pop_front() {
        for (g, gx, _) in &gens {
            let sum_exact = match (ex, gx) {
                (Some(a), Some(b)) => Some(a + *b),
                _ => None,
            };
            let sum = sum_exact.map(ratio_to_f64).unwrap_or(e + g);
            if sum > cutoff + EXPONENT_TOLERANCE {
                continue;
            }
            let pos = elements.partition_point(|(v, _)| *v < sum - EXPONENT_TOLERANCE);
            if pos < elements.len() && (elements[pos].0 - sum).abs() <= EXPONENT_TOLERANCE {
                if elements[pos].1.is_none() && sum_exact.is_some() {
                    elements[pos] = (sum, sum_exact);
                }
                continue;
            }
            elements.insert(pos, (sum, sum_exact));
            queue.push_back((sum, sum_exact));
        }
    }

    let resonant = elements
        .iter()
        .map(|(e, _)| {
            mode_roots
                .iter()
                .enumerate()
                .filter(|(_, r)| (r.m_bar - e).abs() <= EXPONENT_TOLERANCE)
                .map(|(l, _)| l)
                .collect()
        })
        .collect();

    Ok(IndexSet {
        cutoff,
        exact: elements.iter().map(|e| e.1).collect(),
        elements: elements.into_iter().map(|e| e.0).collect(),
        resonant,
        generators,
        mode_roots,
    })
}

impl IndexSet {
    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn elements(&self) -> &[f64] {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn generators(&self) -> &[f64] {
        &self.generators
    }

    pub fn exact(&self, pos: usize) -> Option<Ratio<i64>> {
        self.exact[pos]
    }

    /// Roots of every mode of the model the set was built from.
    pub fn mode_roots(&self) -> &[IndicialRoots] {
        &self.mode_roots
    }

    /// Position of the element within tolerance of `e`.
    pub fn position(&self, e: f64) -> Option<usize> {
        let pos = self.elements.partition_point(|v| *v < e - EXPONENT_TOLERANCE);
        (pos < self.elements.len() && (self.elements[pos] - e).abs() <= EXPONENT_TOLERANCE).then_some(pos)
    }

    /// The stored element matching `e`, if any.
    pub fn snap(&self, e: f64) -> Option<f64> {
        self.position(e).map(|p| self.elements[p])
    }

    pub fn contains(&self, e: f64) -> bool {
        self.position(e).is_some()
    }

    /// Modes `l` with `m̄_l = e` (empty when `e` is not resonant).
    pub fn resonant_modes(&self, e: f64) -> &[usize] {
        self.position(e).map(|p| self.resonant[p].as_slice()).unwrap_or(&[])
    }

    pub fn is_resonant(&self, e: f64) -> bool {
        !self.resonant_modes(e).is_empty()
    }

    /// `k_+`, the smallest element strictly after `k`.
    pub fn next_index(&self, k: f64) -> Result<f64, IndexError> {
        let pos = self.position(k).ok_or(IndexError::NotAnElement(k))?;
        self.elements.get(pos + 1).copied().ok_or(IndexError::NoNextIndex(k))
    }

    /// Elements `<= k`.
    pub fn up_to(&self, k: f64) -> &[f64] {
        let n = self.elements.partition_point(|v| *v <= k + EXPONENT_TOLERANCE);
        &self.elements[..n]
    }

    /// `ε_k` for every consecutive pair `(k, k_+)`.
    pub fn epsilon_ledger(&self) -> Result<Vec<GapEntry>, IndexError> {
        let mut out = Vec::new();
        for w in self.elements.windows(2) {
            let (k, kp) = (w[0], w[1]);
            let mut gap = kp - k;
            for (e, marks) in self.elements.iter().zip(&self.resonant) {
                if !marks.is_empty() && *e > kp + EXPONENT_TOLERANCE {
                    gap = gap.min(e - kp);
                }
            }
            let epsilon = gap / 2.0;
            if !(epsilon > 0.0) {
                return Err(IndexError::NonPositiveGap(k));
            }
            out.push(GapEntry { k, next: kp, epsilon });
        }
        Ok(out)
    }

    /// Element/resonance table: `index,value,exact,resonant_modes`.
    pub fn to_csv(&self) -> Result<String, IndexError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| IndexError::Csv(e.to_string());
        w.write_record(["index", "value", "exact", "resonant_modes"])
            .map_err(csv_err)?;
        for (p, e) in self.elements.iter().enumerate() {
            let exact = self.exact[p].map(|r| r.to_string()).unwrap_or_default();
            let modes = self.resonant[p]
                .iter()
                .map(|l| l.to_string())
                .collect::<Vec<_>>()
                .join(" ");
            w.write_record([p.to_string(), format!("{e:.12}"), exact, modes])
                .map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| IndexError::Csv(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GapEntry {
    pub k: f64,
    pub next: f64,
    pub epsilon: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::ModelKind;
    use proptest::prelude::*;

    #[test]
    fn root_examples() {
        let r = characteristic_roots(0.0).unwrap();
        assert_eq!((r.m_bar, r.m_under), (1.0, -2.0));
        assert!(r.exact.is_some());
        let r = characteristic_roots(5.0).unwrap();
        assert_eq!((r.m_bar, r.m_under), (3.0, -4.0));
        let r = characteristic_roots(1e6).unwrap();
        assert!((r.m_bar / (2e6_f64).sqrt() - 1.0).abs() < 1e-3);
        assert!(characteristic_roots(-1.0).is_err());
    }

    #[test]
    fn rational_fast_path_for_half_integer_roots() {
        // 9 + 8λ = 16 → √ = 4, m̄ = 3/2
        let r = characteristic_roots(7.0 / 8.0).unwrap();
        assert_eq!(r.exact.unwrap().0, Ratio::new(3, 2));
        assert!(characteristic_roots(1.0).unwrap().exact.is_none());
    }

    proptest! {
        #[test]
        fn roots_satisfy_vieta(lambda in 0.0f64..1e4) {
            let r = characteristic_roots(lambda).unwrap();
            let scale = lambda.max(1.0);
            prop_assert!(r.indicial(r.m_bar).abs() <= 1e-12 * scale);
            prop_assert!(r.indicial(r.m_under).abs() <= 1e-12 * scale);
            prop_assert!((r.m_bar + r.m_under + 1.0).abs() <= 1e-12 * r.m_bar.max(1.0));
            prop_assert!((r.m_bar * r.m_under + 2.0 + 2.0 * lambda).abs() <= 1e-12 * scale);
            prop_assert!(r.m_bar >= 1.0 && r.m_under <= -2.0);
        }
    }

    #[test]
    fn point_index_set() {
        let m = SpectralModel::builtin(ModelKind::Point).unwrap();
        let i = build_index_set(&m, 3.0).unwrap();
        assert_eq!(i.elements(), &[0.0, 1.0, 2.0, 3.0]);
        assert_eq!(i.resonant_modes(1.0), &[0]);
        assert!(!i.is_resonant(2.0));
        assert_eq!(i.next_index(1.0).unwrap(), 2.0);
        assert!(matches!(i.next_index(3.0), Err(IndexError::NoNextIndex(_))));
    }

    #[test]
    fn circle_index_set() {
        let m = SpectralModel::builtin(ModelKind::Circle { radius: 1.0, modes: 3 }).unwrap();
        let i = build_index_set(&m, 3.2).unwrap();
        let g = (-1.0 + 17f64.sqrt()) / 2.0;
        let expect = [0.0, 1.0, g, 2.0, 1.0 + g, 3.0, 2.0 * g];
        assert_eq!(i.len(), expect.len());
        for (a, b) in i.elements().iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(i.resonant_modes(g), &[1, 2]);
        assert!((i.next_index(1.0).unwrap() - g).abs() < 1e-12);
    }

    #[test]
    fn integer_monoid_with_resonance_at_three() {
        let m = SpectralModel::from_dense(0, vec![0.0, 5.0], 1.0, &dense_two_mode()).unwrap();
        let i = build_index_set(&m, 4.0).unwrap();
        assert_eq!(i.elements(), &[0.0, 1.0, 2.0, 3.0, 4.0]);
        assert_eq!(i.resonant_modes(3.0), &[1]);
        assert_eq!(i.exact(3), Some(Ratio::from_integer(3)));
    }

    fn dense_two_mode() -> Vec<f64> {
        // φ_0 = 1, φ_1 with φ_1² = 1 (a two-point space of unit volume)
        let mut t = vec![0.0; 8];
        let mut set = |i: usize, j: usize, k: usize, v: f64| t[(i * 2 + j) * 2 + k] = v;
        set(0, 0, 0, 1.0);
        set(0, 1, 1, 1.0);
        set(1, 0, 1, 1.0);
        set(1, 1, 0, 1.0);
        t
    }

    #[test]
    fn degenerate_generators_rejected() {
        let lam = 1.0;
        let m = SpectralModel::from_dense(0, vec![0.0, lam, lam + 1.4e-9], 1.0, &{
            let mut t = vec![0.0; 27];
            for j in 0..3 {
                t[j * 3 + j] = 1.0;
                t[(j * 3) * 3 + j] = 1.0;
                t[(j * 3 + j) * 3] = 1.0;
            }
            t
        })
        .unwrap();
        assert!(matches!(
            build_index_set(&m, 2.0),
            Err(IndexError::DegenerateGenerators(..))
        ));
    }

    #[test]
    fn closure_and_gaps() {
        let m = SpectralModel::builtin(ModelKind::Torus {
            n: 2,
            lattice_cutoff: 5,
            radius: 1.0,
        })
        .unwrap();
        let i = build_index_set(&m, 6.0).unwrap();
        let e = i.elements();
        for w in e.windows(2) {
            assert!(w[1] - w[0] > EXPONENT_TOLERANCE);
        }
        for a in e {
            for b in e {
                if a + b <= 6.0 {
                    assert!(i.contains(a + b), "{a} + {b}");
                }
            }
        }
        for g in i.epsilon_ledger().unwrap() {
            assert!(g.epsilon > 0.0 && g.epsilon <= (g.next - g.k) / 2.0);
        }
    }

    #[test]
    fn csv_table() {
        let m = SpectralModel::builtin(ModelKind::Point).unwrap();
        let csv = build_index_set(&m, 2.0).unwrap().to_csv().unwrap();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], "index,value,exact,resonant_modes");
        assert_eq!(lines[2], "1,1.000000000000,1,0");
    }
}
