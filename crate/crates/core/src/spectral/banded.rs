//! Symmetric banded matrices stored by their lower band, with Cholesky.

use alloc::vec;
use alloc::vec::Vec;

use crate::math;

/// Symmetric `n × n` matrix with half-bandwidth `w`; row `i` stores columns
/// `i-w ..= i` contiguously.
#[derive(Debug, Clone, PartialEq)]
pub struct Banded {
    n: usize,
    w: usize,
    data: Vec<f64>,
}

impl Banded {
    pub fn zeros(n: usize, w: usize) -> Self {
        Banded { n, w, data: vec![0.0; n * (w + 1)] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn half_bandwidth(&self) -> usize {
        self.w
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.w);
        i * (self.w + 1) + (j + self.w - i)
    }

    /// Entry `(i, j)` of the full symmetric matrix.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j > self.w {
            0.0
        } else {
            self.data[self.idx(i, j)]
        }
    }

    /// Adds `v` to entry `(i, j)` (and implicitly `(j, i)`).
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * (self.w + 1)..(i + 1) * (self.w + 1)]
    }

    /// `y = A x`.
    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        let w = self.w;
        y.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..self.n {
            let row = self.row(i);
            let j0 = i.saturating_sub(w);
            let off = j0 + w - i;
            let mut acc = row[w] * x[i];
            for (t, j) in (j0..i).enumerate() {
                let a = row[off + t];
                acc += a * x[j];
                y[j] += a * x[i];
            }
            y[i] += acc;
        }
    }

    pub fn quadratic_form(&self, x: &[f64], z: &[f64]) -> f64 {
        let mut y = vec![0.0; self.n];
        self.mul_vec(z, &mut y);
        x.iter().zip(&y).map(|(a, b)| a * b).sum()
    }

    pub fn cholesky(&self) -> Option<BandedCholesky> {
        let (n, w) = (self.n, self.w);
        let mut l = self.data.clone();
        for i in 0..n {
            let j0 = i.saturating_sub(w);
            for j in j0..=i {
                let k0 = j0.max(j.saturating_sub(w));
                let ri = i * (w + 1) + w - i;
                let rj = j * (w + 1) + w - j;
                let mut s = l[ri + j];
                for k in k0..j {
                    s -= l[ri + k] * l[rj + k];
                }
                if i == j {
                    if !(s > 0.0) {
                        return None;
                    }
                    l[ri + i] = math::sqrt(s);
                } else {
                    l[ri + j] = s / l[rj + j];
                }
            }
        }
        Some(BandedCholesky { n, w, l })
    }
}

/// Lower factor `L` with `A = L Lᵀ`, same band layout.
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    w: usize,
    l: Vec<f64>,
}

impl BandedCholesky {
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    fn base(&self, i: usize) -> usize {
        i * (self.w + 1) + self.w - i
    }

    /// `y = L x`.
    pub fn mul_l(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let b = self.base(i);
            let j0 = i.saturating_sub(self.w);
            let mut s = 0.0;
            for j in j0..=i {
                s += self.l[b + j] * x[j];
            }
            y[i] = s;
        }
    }

    /// `y = Lᵀ x`.
    pub fn mul_lt(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..self.n {
            let b = self.base(i);
            let j0 = i.saturating_sub(self.w);
            let xi = x[i];
            for j in j0..=i {
                y[j] += self.l[b + j] * xi;
            }
        }
    }

    /// Solves `L y = b` in place.
    pub fn solve_l(&self, b: &mut [f64]) {
        for i in 0..self.n {
            let base = self.base(i);
            let j0 = i.saturating_sub(self.w);
            let mut s = b[i];
            for j in j0..i {
                s -= self.l[base + j] * b[j];
            }
            b[i] = s / self.l[base + i];
        }
    }

    /// Solves `Lᵀ x = y` in place.
    pub fn solve_lt(&self, y: &mut [f64]) {
        for i in (0..self.n).rev() {
            let base = self.base(i);
            let xi = y[i] / self.l[base + i];
            y[i] = xi;
            let j0 = i.saturating_sub(self.w);
            for j in j0..i {
                y[j] -= self.l[base + j] * xi;
            }
        }
    }

    /// Solves `A x = b` in place.
    pub fn solve(&self, b: &mut [f64]) {
        self.solve_l(b);
        self.solve_lt(b);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(n: usize, w: usize) -> Banded {
        let mut a = Banded::zeros(n, w);
        for i in 0..n {
            a.add(i, i, 4.0 + i as f64 * 0.01);
            for d in 1..=w.min(i) {
                a.add(i, i - d, -1.0 / (d as f64 + 1.0));
            }
        }
        a
    }

    #[test]
    fn cholesky_solves_against_dense_product() {
        let a = sample(40, 5);
        let ch = a.cholesky().unwrap();
        let x: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut b = vec![0.0; 40];
        a.mul_vec(&x, &mut b);
        // dense check of A x
        for i in 0..40 {
            let s: f64 = (0..40).map(|j| a.get(i, j) * x[j]).sum();
            assert!((s - b[i]).abs() < 1e-13);
        }
        ch.solve(&mut b);
        for i in 0..40 {
            assert!((b[i] - x[i]).abs() < 1e-12);
        }
        let mut y = vec![0.0; 40];
        let mut z = vec![0.0; 40];
        ch.mul_lt(&x, &mut y);
        ch.mul_l(&y, &mut z);
        let mut ax = vec![0.0; 40];
        a.mul_vec(&x, &mut ax);
        for i in 0..40 {
            assert!((z[i] - ax[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn indefinite_matrix_is_rejected() {
        let mut a = Banded::zeros(3, 1);
        a.add(0, 0, 1.0);
        a.add(1, 1, -1.0);
        a.add(2, 2, 1.0);
        assert!(a.cholesky().is_none());
    }
}
