//! Finite-difference stencils on uniform grids.
//!
//! Interior nodes use centred stencils; nodes too close to an end use a
//! one-sided window of the same formal order anchored at that end. Weights come
//! from Fornberg's recursion, so any derivative order is available.

use crate::error::{Error, Result};

/// Formal accuracy of every stencil built here.
pub const ACCURACY: usize = 4;

/// Fornberg weights: `w[k][j]` approximates the k-th derivative at `x0` from
/// the value at `nodes[j]`, for k up to `max_order`.
pub fn fornberg_weights(x0: f64, nodes: &[f64], max_order: usize) -> Vec<Vec<f64>> {
    let n = nodes.len();
    let mut c = vec![vec![0.0; n]; max_order + 1];
    if n == 0 {
        return c;
    }
    let mut c1 = 1.0;
    let mut c4 = nodes[0] - x0;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(max_order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = nodes[i] - x0;
        for j in 0..i {
            let c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

/// Checks that `grid` is uniform and returns its spacing.
pub fn uniform_spacing(grid: &[f64]) -> Result<f64> {
    if grid.len() < 2 {
        return Err(Error::GridTooSmall {
            min: 2,
            got: grid.len(),
        });
    }
    let n = grid.len();
    let h = (grid[n - 1] - grid[0]) / (n - 1) as f64;
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidGrid("grid must be strictly increasing".into()));
    }
    let tol = 1e-9 * h;
    for (i, &r) in grid.iter().enumerate() {
        let expected = grid[0] + h * i as f64;
        if (r - expected).abs() > tol.max(1e-12 * expected.abs()) {
            return Err(Error::NonUniformGrid { index: i });
        }
    }
    Ok(h)
}

/// A differentiation operator of fixed order on a uniform grid, stored as one
/// stencil row per node.
#[derive(Debug, Clone)]
pub struct Differentiator {
    order: usize,
    rows: Vec<(usize, Vec<f64>)>,
}

impl Differentiator {
    pub fn new(order: usize, nodes: usize, spacing: f64) -> Self {
        assert!(order >= 1, "derivative order must be positive");
        let central = 2 * order.div_ceil(2) + ACCURACY - 1;
        let one_sided = (order + ACCURACY).min(nodes);
        let half = (central - 1) / 2;
        let scale = spacing.powi(order as i32);

        let mut rows = Vec::with_capacity(nodes);
        for i in 0..nodes {
            let (start, width) = if i >= half && i + half < nodes && central <= nodes {
                (i - half, central)
            } else if i < nodes / 2 {
                (0, one_sided)
            } else {
                (nodes - one_sided, one_sided)
            };
            let offsets: Vec<f64> = (start..start + width)
                .map(|j| j as f64 - i as f64)
                .collect();
            let w = fornberg_weights(0.0, &offsets, order);
            let weights = w[order].iter().map(|x| x / scale).collect();
            rows.push((start, weights));
        }
        Self { order, rows }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Stencil of node `i` as (first column, weights).
    pub fn row(&self, i: usize) -> (usize, &[f64]) {
        let (start, ref w) = self.rows[i];
        (start, w)
    }

    /// Largest distance between a node and a column of its stencil.
    pub fn half_bandwidth(&self) -> usize {
        self.rows
            .iter()
            .enumerate()
            .map(|(i, (start, w))| {
                let lo = i.saturating_sub(*start);
                let hi = (start + w.len() - 1).saturating_sub(i);
                lo.max(hi)
            })
            .max()
            .unwrap_or(0)
    }

    pub fn apply(&self, values: &[f64]) -> Vec<f64> {
        assert_eq!(values.len(), self.rows.len());
        self.rows
            .iter()
            .map(|(start, w)| {
                w.iter()
                    .zip(&values[*start..*start + w.len()])
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }
}

/// First derivative of samples on a uniform grid: fourth-order centred
/// differences inside, fourth-order one-sided stencils at the two nodes
/// nearest each end.
pub fn differentiate(values: &[f64], grid: &[f64]) -> Result<Vec<f64>> {
    derivative(values, grid, 1)
}

/// Derivative of arbitrary order with the same stencil policy as
/// [`differentiate`].
pub fn derivative(values: &[f64], grid: &[f64], order: usize) -> Result<Vec<f64>> {
    if grid.len() < 5 {
        return Err(Error::GridTooSmall {
            min: 5,
            got: grid.len(),
        });
    }
    if values.len() != grid.len() {
        return Err(Error::LengthMismatch {
            expected: grid.len(),
            got: values.len(),
        });
    }
    let h = uniform_spacing(grid)?;
    Ok(Differentiator::new(order, grid.len(), h).apply(values))
}
