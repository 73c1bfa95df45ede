//! Dense symmetric solves for the Newton systems of the barrier method.

use crate::scalar::Scalar;

/// Row-major square matrix.
#[derive(Debug, Clone)]
pub(crate) struct SymMatrix<S> {
    n: usize,
    data: Vec<S>,
}

impl<S: Scalar> SymMatrix<S> {
    pub(crate) fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![S::zero(); n * n],
        }
    }

    pub(crate) fn get(&self, i: usize, j: usize) -> S {
        self.data[i * self.n + j]
    }

    pub(crate) fn add(&mut self, i: usize, j: usize, v: S) {
        self.data[i * self.n + j] = self.data[i * self.n + j] + v;
    }

    /// `self += scale * v v^T` over the sparse vector `v`.
    pub(crate) fn add_outer(&mut self, v: &[(usize, S)], scale: S) {
        for &(i, a) in v {
            for &(j, b) in v {
                self.add(i, j, scale * a * b);
            }
        }
    }

    /// Solves `(self + shift I) x = rhs`; `None` if the shifted matrix is not
    /// numerically positive definite.
    pub(crate) fn cholesky_solve(&self, rhs: &[S], shift: S) -> Option<Vec<S>> {
        let n = self.n;
        let mut l = vec![S::zero(); n * n];
        for j in 0..n {
            let mut d = self.get(j, j) + shift;
            for k in 0..j {
                d = d - l[j * n + k] * l[j * n + k];
            }
            if !(d > S::zero()) || !d.is_finite() {
                return None;
            }
            let d = d.sqrt();
            l[j * n + j] = d;
            for i in (j + 1)..n {
                let mut s = self.get(i, j);
                for k in 0..j {
                    s = s - l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / d;
            }
        }
        let mut y = rhs.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s = s - l[i * n + k] * y[k];
            }
            y[i] = s / l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s = s - l[k * n + i] * y[k];
            }
            y[i] = s / l[i * n + i];
        }
        Some(y)
    }

    pub(crate) fn max_abs_diag(&self) -> S {
        (0..self.n)
            .map(|i| self.get(i, i).abs())
            .fold(S::zero(), S::max)
    }
}
