//! Banded symmetric positive-definite systems, factored by Cholesky.

use crate::error::{Error, Result};

/// Lower band of an SPD matrix: entry (i, i − k) for k ≤ `bandwidth`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedSpd {
    n: usize,
    bandwidth: usize,
    data: Vec<f64>,
}

impl BandedSpd {
    pub fn zeros(n: usize, bandwidth: usize) -> Self {
        Self { n, bandwidth, data: vec![0.0; n * (bandwidth + 1)] }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.bandwidth);
        i * (self.bandwidth + 1) + (i - j)
    }

    /// Adds `v` to entry (i, j) of the symmetric matrix.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
        let s = self.slot(hi, lo);
        self.data[s] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
        if hi - lo > self.bandwidth {
            0.0
        } else {
            self.data[self.slot(hi, lo)]
        }
    }

    /// y = A·x.
    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bandwidth);
            for j in lo..=i {
                let a = self.data[self.slot(i, j)];
                y[i] += a * x[j];
                if j != i {
                    y[j] += a * x[i];
                }
            }
        }
        y
    }

    /// In-place Cholesky factorisation A = L·Lᵀ.
    pub fn factor(mut self) -> Result<CholeskyBand> {
        let b = self.bandwidth;
        let w = b + 1;
        for i in 0..self.n {
            let lo = i.saturating_sub(b);
            for j in lo..=i {
                let mlo = lo.max(j.saturating_sub(b));
                let mut sum = self.data[i * w + (i - j)];
                for m in mlo..j {
                    sum -= self.data[i * w + (i - m)] * self.data[j * w + (j - m)];
                }
                if i == j {
                    if sum <= 0.0 || !sum.is_finite() {
                        return Err(Error::Validation(format!("matrix not positive definite at row {i}")));
                    }
                    self.data[i * w] = sum.sqrt();
                } else {
                    self.data[i * w + (i - j)] = sum / self.data[j * w];
                }
            }
        }
        Ok(CholeskyBand { inner: self })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CholeskyBand {
    inner: BandedSpd,
}

impl CholeskyBand {
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let a = &self.inner;
        let (n, b, w) = (a.n, a.bandwidth, a.bandwidth + 1);
        let mut y = rhs.to_vec();
        for i in 0..n {
            let lo = i.saturating_sub(b);
            let mut s = y[i];
            for m in lo..i {
                s -= a.data[i * w + (i - m)] * y[m];
            }
            y[i] = s / a.data[i * w];
        }
        for i in (0..n).rev() {
            let hi = (i + b).min(n - 1);
            let mut s = y[i];
            for m in i + 1..=hi {
                s -= a.data[m * w + (m - i)] * y[m];
            }
            y[i] = s / a.data[i * w];
        }
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_tridiagonal_laplacian() {
        let n = 50;
        let mut a = BandedSpd::zeros(n, 1);
        for i in 0..n {
            a.add(i, i, 2.0);
            if i > 0 {
                a.add(i, i - 1, -1.0);
            }
        }
        let x_true: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).sin()).collect();
        let rhs = a.mul(&x_true);
        let x = a.clone().factor().unwrap().solve(&rhs);
        for (p, q) in x.iter().zip(&x_true) {
            assert!((p - q).abs() < 1e-10);
        }
    }

    #[test]
    fn rejects_indefinite() {
        let mut a = BandedSpd::zeros(2, 1);
        a.add(0, 0, 1.0);
        a.add(1, 1, 1.0);
        a.add(1, 0, 2.0);
        assert!(a.factor().is_err());
    }
}
