//! Gauss–Legendre rules and the per-panel weights used by the mode solver.

/// Nodes per panel.
pub const NODES: usize = 8;
/// Interpolation stencil width (degree 7 in `t`).
pub const STENCIL: usize = 8;

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[−1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Chebyshev guess, then Newton on P_n
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, z);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// `(P_n(z), P_n'(z))` by the three-term recurrence.
fn legendre(n: usize, z: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, z);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Lagrange basis values at `u` for the nodes `0, 1, …, m−1`.
pub fn lagrange_weights(m: usize, u: f64) -> Vec<f64> {
    (0..m)
        .map(|j| {
            (0..m)
                .filter(|&k| k != j)
                .map(|k| (u - k as f64) / (j as f64 - k as f64))
                .product()
        })
        .collect()
}

/// First sample of the stencil used for panel `[t_k, t_{k+1}]`.
pub fn stencil_start(k: usize, n: usize) -> usize {
    k.saturating_sub(3).min(n - STENCIL)
}

/// Weights `W[off][m]` such that
/// `∫_{t_k}^{t_{k+1}} F(s) e^{−rate·h·φ(s)} ds ≈ Σ_m W[off][m] F[start + m]`,
/// where `φ` is the distance to the panel end (`to_end`) or start in units of `h`
/// and `off = k − start`.
pub fn panel_weights(h: f64, rate: f64, to_end: bool) -> Vec<[f64; STENCIL]> {
    let (nodes, weights) = gauss_legendre(NODES);
    (0..STENCIL - 1)
        .map(|off| {
            let mut row = [0.0; STENCIL];
            for (xi, w) in nodes.iter().zip(&weights) {
                let s = 0.5 * (1.0 + xi);
                let dist = if to_end { 1.0 - s } else { s };
                let factor = 0.5 * h * w * (-rate * h * dist).exp();
                for (m, l) in lagrange_weights(STENCIL, off as f64 + s).into_iter().enumerate() {
                    row[m] += factor * l;
                }
            }
            row
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rule_integrates_degree_fifteen() {
        let (x, w) = gauss_legendre(8);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        for p in 0..16 {
            let exact = if p % 2 == 0 { 2.0 / (p as f64 + 1.0) } else { 0.0 };
            let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(p)).sum();
            assert!((q - exact).abs() < 1e-14, "degree {p}");
        }
    }

    #[test]
    fn lagrange_reproduces_cubics() {
        let u = 3.37;
        let l = lagrange_weights(8, u);
        let f = |t: f64| 2.0 - t + 0.5 * t * t * t;
        let v: f64 = l.iter().enumerate().map(|(m, w)| w * f(m as f64)).sum();
        assert!((v - f(u)).abs() < 1e-11);
    }

    #[test]
    fn panel_weights_integrate_exponentials() {
        // ∫_0^h e^{−r(h−s)} ds = (1 − e^{−rh})/r for F ≡ 1
        let (h, r) = (0.1, 3.0);
        let rows = panel_weights(h, r, true);
        let exact = (1.0 - (-r * h).exp()) / r;
        for row in &rows {
            assert!((row.iter().sum::<f64>() - exact).abs() < 1e-15);
        }
    }
}
