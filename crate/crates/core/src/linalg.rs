// Copyright 2026 The qoc Authors
// SPDX-License-Identifier: Apache-2.0

//! Small dense kernels used by the time stepper.
//!
//! The implicit stages of the integrator solve `(I ± h/2 S) x = b` with a
//! skew-symmetric `S`. These matrices are tiny (the composite dimension of a
//! few qudits), so a row-major dense LU with partial pivoting is all we need.

use crate::error::{Error, Result};

/// Row-major LU factorization with partial pivoting, reusable across steps.
#[derive(Debug, Clone)]
pub struct DenseLu {
    n: usize,
    lu: Vec<f64>,
    piv: Vec<usize>,
}

impl DenseLu {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            lu: vec![0.0; n * n],
            piv: (0..n).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Mutable access to the matrix storage; fill it, then call [`DenseLu::factor_in_place`].
    pub fn matrix_mut(&mut self) -> &mut [f64] {
        &mut self.lu
    }

    /// Factor a copy of `a` (row-major, `n*n`).
    pub fn factor(&mut self, a: &[f64]) -> Result<()> {
        debug_assert_eq!(a.len(), self.n * self.n);
        self.lu.copy_from_slice(a);
        self.factor_in_place()
    }

    /// Factor whatever currently sits in the storage.
    pub fn factor_in_place(&mut self) -> Result<()> {
        let n = self.n;
        let a = &mut self.lu;
        for k in 0..n {
            let mut p = k;
            let mut best = a[k * n + k].abs();
            for i in k + 1..n {
                let v = a[i * n + k].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return Err(Error::Solver(format!("singular pivot at column {k}")));
            }
            self.piv[k] = p;
            if p != k {
                for j in 0..n {
                    a.swap(k * n + j, p * n + j);
                }
            }
            let inv = 1.0 / a[k * n + k];
            for i in k + 1..n {
                let l = a[i * n + k] * inv;
                a[i * n + k] = l;
                if l != 0.0 {
                    for j in k + 1..n {
                        a[i * n + j] -= l * a[k * n + j];
                    }
                }
            }
        }
        Ok(())
    }

    /// Solve `A x = b`, overwriting `b` with `x`.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        let a = &self.lu;
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                b.swap(k, p);
            }
        }
        for i in 0..n {
            let mut s = b[i];
            for j in 0..i {
                s -= a[i * n + j] * b[j];
            }
            b[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for j in i + 1..n {
                s -= a[i * n + j] * b[j];
            }
            b[i] = s / a[i * n + i];
        }
    }

    /// Solve `Aᵀ x = b`, overwriting `b` with `x`.
    pub fn solve_transpose_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        let a = &self.lu;
        // Uᵀ z = b
        for i in 0..n {
            let mut s = b[i];
            for j in 0..i {
                s -= a[j * n + i] * b[j];
            }
            b[i] = s / a[i * n + i];
        }
        // Lᵀ y = z
        for i in (0..n).rev() {
            let mut s = b[i];
            for j in i + 1..n {
                s -= a[j * n + i] * b[j];
            }
            b[i] = s;
        }
        for k in (0..n).rev() {
            let p = self.piv[k];
            if p != k {
                b.swap(k, p);
            }
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matvec(a: &[f64], x: &[f64], n: usize) -> Vec<f64> {
        (0..n).map(|i| dot(&a[i * n..(i + 1) * n], x)).collect()
    }

    #[test]
    fn solves_pivoting_system() {
        let a = [0.0, 2.0, 1.0, 1.0, 1.0, 0.0, 3.0, 0.0, 1.0];
        let mut lu = DenseLu::new(3);
        lu.factor(&a).unwrap();
        let x = [1.0, -2.0, 0.5];
        let mut b = matvec(&a, &x, 3);
        lu.solve_in_place(&mut b);
        for (u, v) in b.iter().zip(&x) {
            assert!((u - v).abs() < 1e-14);
        }
    }

    #[test]
    fn transpose_solve_matches() {
        let a = [4.0, -1.0, 0.5, 2.0, 3.0, -2.0, 0.1, 0.7, 5.0];
        let at = [4.0, 2.0, 0.1, -1.0, 3.0, 0.7, 0.5, -2.0, 5.0];
        let mut lu = DenseLu::new(3);
        lu.factor(&a).unwrap();
        let x = [0.3, 1.1, -0.7];
        let mut b = matvec(&at, &x, 3);
        lu.solve_transpose_in_place(&mut b);
        for (u, v) in b.iter().zip(&x) {
            assert!((u - v).abs() < 1e-14);
        }
    }

    #[test]
    fn singular_is_reported() {
        let mut lu = DenseLu::new(2);
        assert!(lu.factor(&[1.0, 2.0, 2.0, 4.0]).is_err());
    }
}
