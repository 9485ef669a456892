//! Gauss quadrature: fixed Gauss–Legendre rules and adaptive Gauss–Kronrod.

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// 15-point Kronrod estimate and the difference to the embedded 7-point
/// Gauss rule on `[a, b]`.
fn kronrod15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let centre = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(centre);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(centre - dx) + f(centre + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

/// Adaptive Gauss–Kronrod integration of `f` over `[a, b]`.
///
/// Subdivides by bisection until each panel's error estimate is below its
/// share of `max(abs_tol, rel_tol * |integral|)`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    if b < a {
        return integrate(f, b, a, abs_tol, rel_tol).map(|v| -v);
    }
    const MAX_PANELS: usize = 20_000;
    let (v0, e0) = kronrod15(&f, a, b);
    if !v0.is_finite() {
        return Err(Error::Quadrature(format!("non-finite integrand on [{a}, {b}]")));
    }
    let mut panels = vec![(a, b, v0, e0)];
    loop {
        let total: f64 = panels.iter().map(|p| p.2).sum();
        let err: f64 = panels.iter().map(|p| p.3).sum();
        let target = abs_tol.max(rel_tol * total.abs());
        if err <= target {
            return Ok(total);
        }
        if panels.len() >= MAX_PANELS {
            return Err(Error::Quadrature(format!(
                "no convergence on [{a}, {b}] (error estimate {err:e})"
            )));
        }
        let (idx, _) = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("at least one panel");
        let (lo, hi, _, _) = panels.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            // Panel cannot be split further; accept what we have.
            let total: f64 = panels.iter().map(|p| p.2).sum::<f64>() + kronrod15(&f, lo, hi).0;
            return Ok(total);
        }
        for (x0, x1) in [(lo, mid), (mid, hi)] {
            let (v, e) = kronrod15(&f, x0, x1);
            if !v.is_finite() {
                return Err(Error::Quadrature(format!("non-finite integrand on [{x0}, {x1}]")));
            }
            panels.push((x0, x1, v, e));
        }
    }
}

/// Nodes and weights of the `order`-point Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(order >= 1);
    let n = order;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Composite Gauss–Legendre rule with `panels` equal panels.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(order: usize) -> Self {
        let (nodes, weights) = gauss_legendre(order);
        Self { nodes, weights }
    }

    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F, a: f64, b: f64, panels: usize) -> f64 {
        let panels = panels.max(1);
        let width = (b - a) / panels as f64;
        let mut total = 0.0;
        for p in 0..panels {
            let lo = a + width * p as f64;
            let centre = lo + 0.5 * width;
            let half = 0.5 * width;
            let s: f64 = self
                .nodes
                .iter()
                .zip(&self.weights)
                .map(|(x, w)| w * f(centre + half * x))
                .sum();
            total += s * half;
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kronrod_integrates_exponential() {
        let v = integrate(|x: f64| x.exp(), 0.0, 3.0, 1e-14, 1e-14).unwrap();
        assert!((v - (3.0f64.exp() - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn reversed_limits_flip_sign() {
        let a = integrate(|x: f64| x.sin(), 0.0, 2.0, 1e-14, 1e-14).unwrap();
        let b = integrate(|x: f64| x.sin(), 2.0, 0.0, 1e-14, 1e-14).unwrap();
        assert_eq!(a, -b);
    }

    #[test]
    fn legendre_rules_are_exact_for_polynomials() {
        for order in [1, 2, 5, 8, 20] {
            let gl = GaussLegendre::new(order);
            let deg = 2 * order - 1;
            let v = gl.integrate(|x: f64| x.powi(deg as i32) + 1.0, 0.0, 1.0, 1);
            let exact = 1.0 / (deg as f64 + 1.0) + 1.0;
            assert!((v - exact).abs() < 1e-13, "order {order}: {v} vs {exact}");
        }
    }

    #[test]
    fn legendre_weights_sum_to_two() {
        for order in [3, 7, 16, 40] {
            let (_, w) = gauss_legendre(order);
            assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-13);
        }
    }
}
