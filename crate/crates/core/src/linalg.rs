//! Banded LU with row partial pivoting and a small dense LU.
//!
//! The band factorisation follows the LAPACK `gbtrf` layout: every row keeps
//! a window of `2 kl + ku + 1` columns so that pivoting fill-in (up to
//! `kl + ku` above the diagonal) has room.

use crate::error::{BvpError, Result};

/// Relative pivot threshold, in multiples of machine epsilon times the
/// largest entry of the pivot row.
const PIVOT_FACTOR: f64 = 1e3;

fn pivot_too_small(pivot: f64, row_max: f64) -> bool {
    row_max == 0.0 || pivot.abs() < PIVOT_FACTOR * f64::EPSILON * row_max
}

#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        BandMatrix {
            n,
            kl,
            ku,
            width,
            data: vec![0.0; n * width],
        }
    }

    #[inline]
    fn slot(&self, row: usize, col: usize) -> usize {
        debug_assert!(col + self.kl >= row && col <= row + self.kl + self.ku);
        row * self.width + col + self.kl - row
    }

    pub fn in_band(&self, row: usize, col: usize) -> bool {
        row < self.n && col < self.n && col + self.kl >= row && col <= row + self.ku
    }

    #[cfg(test)]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        if self.in_band(row, col) {
            self.data[self.slot(row, col)]
        } else {
            0.0
        }
    }

    /// Sets an entry; returns `false` (and changes nothing) outside the band.
    pub fn set(&mut self, row: usize, col: usize, value: f64) -> bool {
        if !self.in_band(row, col) {
            return false;
        }
        let s = self.slot(row, col);
        self.data[s] = value;
        true
    }

    #[cfg(test)]
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|r| {
                let lo = r.saturating_sub(self.kl);
                let hi = (r + self.ku).min(self.n - 1);
                (lo..=hi).map(|c| self.data[self.slot(r, c)] * x[c]).sum()
            })
            .collect()
    }

    pub fn factor(mut self) -> Result<BandLu> {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        let mut pivots = Vec::with_capacity(n);
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let last_col = (k + kl + ku).min(n - 1);
            let mut p = k;
            let mut best = self.data[self.slot(k, k)].abs();
            for r in k + 1..=last_row {
                let v = self.data[self.slot(r, k)].abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            let row_max = (k..=last_col)
                .map(|c| self.data[self.slot(p, c)].abs())
                .fold(0.0, f64::max);
            if pivot_too_small(best, row_max) {
                return Err(BvpError::SingularJacobian { index: k });
            }
            pivots.push(p);
            if p != k {
                for c in k..=last_col {
                    let (a, b) = (self.slot(k, c), self.slot(p, c));
                    self.data.swap(a, b);
                }
            }
            let pivot = self.data[self.slot(k, k)];
            for r in k + 1..=last_row {
                let s = self.slot(r, k);
                let m = self.data[s] / pivot;
                self.data[s] = m;
                if m == 0.0 {
                    continue;
                }
                for c in k + 1..=last_col {
                    let src = self.data[self.slot(k, c)];
                    let dst = self.slot(r, c);
                    self.data[dst] -= m * src;
                }
            }
        }
        Ok(BandLu {
            band: self,
            pivots,
        })
    }
}

/// Factorised band matrix.
#[derive(Debug, Clone)]
pub struct BandLu {
    band: BandMatrix,
    pivots: Vec<usize>,
}

impl BandLu {
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let a = &self.band;
        let (n, kl, ku) = (a.n, a.kl, a.ku);
        for k in 0..n {
            b.swap(k, self.pivots[k]);
            let bk = b[k];
            if bk != 0.0 {
                for r in k + 1..=(k + kl).min(n - 1) {
                    b[r] -= a.data[a.slot(r, k)] * bk;
                }
            }
        }
        for k in (0..n).rev() {
            let mut s = b[k];
            for c in k + 1..=(k + kl + ku).min(n - 1) {
                s -= a.data[a.slot(k, c)] * b[c];
            }
            b[k] = s / a.data[a.slot(k, k)];
        }
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut x = rhs.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

/// Solves a dense row-major `n x n` system with partial pivoting.
pub fn dense_solve(mut a: Vec<f64>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    debug_assert_eq!(a.len(), n * n);
    for k in 0..n {
        let p = (k..n)
            .max_by(|&i, &j| a[i * n + k].abs().total_cmp(&a[j * n + k].abs()))
            .unwrap_or(k);
        let row_max = (k..n).map(|c| a[p * n + c].abs()).fold(0.0, f64::max);
        if pivot_too_small(a[p * n + k], row_max) {
            return Err(BvpError::SingularJacobian { index: k });
        }
        if p != k {
            for c in 0..n {
                a.swap(k * n + c, p * n + c);
            }
            b.swap(k, p);
        }
        let pivot = a[k * n + k];
        for r in k + 1..n {
            let m = a[r * n + k] / pivot;
            if m == 0.0 {
                continue;
            }
            for c in k + 1..n {
                a[r * n + c] -= m * a[k * n + c];
            }
            b[r] -= m * b[k];
        }
    }
    for k in (0..n).rev() {
        let s: f64 = b[k] - (k + 1..n).map(|c| a[k * n + c] * b[c]).sum::<f64>();
        b[k] = s / a[k * n + k];
    }
    Ok(b)
}
