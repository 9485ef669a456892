//! Banded LU factorisation with partial pivoting.

use crate::error::{Error, Result};

/// Square band matrix with `lower` sub-diagonals and `upper` super-diagonals.
///
/// Each row keeps room for the `lower` extra super-diagonals that row
/// interchanges can create during factorisation.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    lower: usize,
    upper: usize,
    width: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, lower: usize, upper: usize) -> Self {
        let width = 2 * lower + upper + 1;
        Self {
            n,
            lower,
            upper,
            width,
            data: vec![0.0; n * width],
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + self.lower >= i && j <= i + self.lower + self.upper);
        i * self.width + (j + self.lower - i)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j + self.lower < i || j > i + self.upper {
            0.0
        } else {
            self.data[self.slot(i, j)]
        }
    }

    /// Adds `value` to entry (i, j); panics outside the declared band.
    pub fn add(&mut self, i: usize, j: usize, value: f64) {
        assert!(
            j + self.lower >= i && j <= i + self.upper,
            "entry ({i}, {j}) outside band"
        );
        let s = self.slot(i, j);
        self.data[s] += value;
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.lower);
                let hi = (i + self.upper).min(self.n - 1);
                (lo..=hi).map(|j| self.get(i, j) * x[j]).sum()
            })
            .collect()
    }

    /// Factorises in place and returns the factors.
    pub fn factor(mut self) -> Result<BandLu> {
        let n = self.n;
        let kl = self.lower;
        let span = kl + self.upper;
        let mut pivots = vec![0usize; n];
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = self.data[self.slot(k, k)].abs();
            for r in k + 1..=last {
                let v = self.data[self.slot(r, k)].abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return Err(Error::SingularMatrix(k));
            }
            pivots[k] = p;
            let col_hi = (k + span).min(n - 1);
            if p != k {
                for c in k..=col_hi {
                    let a = self.slot(k, c);
                    let b = self.slot(p, c);
                    self.data.swap(a, b);
                }
            }
            let diag = self.data[self.slot(k, k)];
            for r in k + 1..=last {
                let srk = self.slot(r, k);
                let l = self.data[srk] / diag;
                self.data[srk] = l;
                if l != 0.0 {
                    for c in k + 1..=col_hi {
                        let u = self.data[self.slot(k, c)];
                        let s = self.slot(r, c);
                        self.data[s] -= l * u;
                    }
                }
            }
        }
        Ok(BandLu {
            m: self,
            pivots,
        })
    }
}

#[derive(Debug, Clone)]
pub struct BandLu {
    m: BandMatrix,
    pivots: Vec<usize>,
}

impl BandLu {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let m = &self.m;
        let n = m.n;
        let kl = m.lower;
        let span = kl + m.upper;
        let mut x = b.to_vec();
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                x.swap(k, p);
            }
            let xk = x[k];
            for r in k + 1..=(k + kl).min(n - 1) {
                x[r] -= m.data[m.slot(r, k)] * xk;
            }
        }
        for k in (0..n).rev() {
            let mut s = x[k];
            for c in k + 1..=(k + span).min(n - 1) {
                s -= m.data[m.slot(k, c)] * x[c];
            }
            x[k] = s / m.data[m.slot(k, k)];
        }
        x
    }
}
