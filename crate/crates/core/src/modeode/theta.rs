//! Trapezoidal averages over the circle fibre.

use std::f64::consts::PI;

use super::grid::Grid;

/// Per-mode θ-averages on a grid, with an aliasing diagnostic.
#[derive(Clone, Debug, PartialEq)]
pub struct ThetaAverage {
    /// `values[l][k]`: average of mode `l` at grid point `k`.
    pub values: Vec<Vec<f64>>,
    /// Largest difference between the `M`- and `2M`-point averages.
    pub alias_defect: f64,
    pub aliased: bool,
}

/// Averages `u(θ, x, l)` over `θ ∈ [0, 2π)` with `samples` uniform points.
///
/// The rule is exact for harmonics below `samples`; the average is recomputed
/// with twice as many points and a mismatch flags aliasing.
pub fn average_theta<F>(u: F, grid: &Grid, modes: usize, samples: usize) -> ThetaAverage
where
    F: Fn(f64, f64, usize) -> f64,
{
    let average =
        |m: usize, x: f64, l: usize| (0..m).map(|q| u(2.0 * PI * q as f64 / m as f64, x, l)).sum::<f64>() / m as f64;
    let mut values = vec![vec![0.0; grid.count]; modes];
    let mut alias_defect: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for (l, row) in values.iter_mut().enumerate() {
        for (k, slot) in row.iter_mut().enumerate() {
            let x = grid.x(k);
            let coarse = average(samples, x, l);
            let fine = average(2 * samples, x, l);
            alias_defect = alias_defect.max((coarse - fine).abs());
            scale = scale.max(fine.abs());
            *slot = coarse;
        }
    }
    ThetaAverage {
        aliased: alias_defect > 1e-12 * scale.max(1.0),
        values,
        alias_defect,
    }
}
