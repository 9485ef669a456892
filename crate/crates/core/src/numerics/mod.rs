pub mod banded;
pub mod quadrature;
pub mod stencil;

/// Local Lagrange interpolation of uniformly sampled data using `points`
/// nodes around `x`. Caller guarantees `x` lies inside the grid.
pub(crate) fn lagrange_interpolate(grid: &[f64], values: &[f64], x: f64, points: usize) -> f64 {
    let n = grid.len();
    let points = points.min(n);
    let h = (grid[n - 1] - grid[0]) / (n - 1) as f64;
    let pos = ((x - grid[0]) / h).clamp(0.0, (n - 1) as f64);
    let nearest = pos.round() as usize;
    if (pos - nearest as f64).abs() < 1e-12 {
        return values[nearest];
    }
    let start = (pos.floor() as isize - (points as isize - 1) / 2).clamp(0, (n - points) as isize) as usize;
    let mut total = 0.0;
    for j in start..start + points {
        let mut basis = 1.0;
        for m in start..start + points {
            if m != j {
                basis *= (pos - m as f64) / (j as f64 - m as f64);
            }
        }
        total += basis * values[j];
    }
    total
}
