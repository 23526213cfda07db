//! Dense symmetric positive-definite factorization used by the closed-form
//! regressors, the kernel methods and the discriminant classifiers.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::scalar::Real;

/// Lower-triangular Cholesky factor `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky<T> {
    l: Array2<T>,
}

impl<T: Real> Cholesky<T> {
    /// Factors a symmetric matrix. Returns `None` when a pivot falls below
    /// `n · eps · max|diag|`, i.e. the matrix is not numerically positive
    /// definite.
    pub fn factor(a: ArrayView2<'_, T>) -> Option<Self> {
        let n = a.nrows();
        assert_eq!(n, a.ncols(), "Cholesky needs a square matrix");
        let scale = (0..n)
            .map(|i| a[[i, i]].abs())
            .fold(T::zero(), T::max)
            .max(T::min_positive_value());
        let floor = T::from_usize_lossy(n.max(1)) * T::epsilon() * scale;
        let mut l = Array2::<T>::zeros((n, n));
        for j in 0..n {
            let mut d = a[[j, j]];
            for k in 0..j {
                d = d - l[[j, k]] * l[[j, k]];
            }
            if !(d > floor) {
                return None;
            }
            let d = d.sqrt();
            l[[j, j]] = d;
            for i in (j + 1)..n {
                let mut s = a[[i, j]];
                for k in 0..j {
                    s = s - l[[i, k]] * l[[j, k]];
                }
                l[[i, j]] = s / d;
            }
        }
        Some(Cholesky { l })
    }

    /// Factors `A + jitter·I`, trying each jitter of the ladder in turn
    /// (an initial attempt with no jitter is always made). Returns the factor
    /// and the jitter that succeeded.
    pub fn factor_with_jitter(a: ArrayView2<'_, T>, ladder: &[f64]) -> Option<(Self, T)> {
        if let Some(f) = Self::factor(a) {
            return Some((f, T::zero()));
        }
        let n = a.nrows();
        for &j in ladder {
            let jitter = T::lit(j);
            let mut shifted = a.to_owned();
            for i in 0..n {
                shifted[[i, i]] = shifted[[i, i]] + jitter;
            }
            if let Some(f) = Self::factor(shifted.view()) {
                return Some((f, jitter));
            }
        }
        None
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    pub fn lower(&self) -> &Array2<T> {
        &self.l
    }

    /// Solves `L z = b`.
    pub fn forward(&self, b: ArrayView1<'_, T>) -> Array1<T> {
        let n = self.dim();
        let mut z = b.to_owned();
        for i in 0..n {
            let mut s = z[i];
            for k in 0..i {
                s = s - self.l[[i, k]] * z[k];
            }
            z[i] = s / self.l[[i, i]];
        }
        z
    }

    /// Solves `Lᵀ x = z`.
    pub fn backward(&self, z: ArrayView1<'_, T>) -> Array1<T> {
        let n = self.dim();
        let mut x = z.to_owned();
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n {
                s = s - self.l[[k, i]] * x[k];
            }
            x[i] = s / self.l[[i, i]];
        }
        x
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: ArrayView1<'_, T>) -> Array1<T> {
        let z = self.forward(b);
        self.backward(z.view())
    }

    /// `log det A`.
    pub fn log_det(&self) -> T {
        let two = T::lit(2.0);
        (0..self.dim()).map(|i| two * self.l[[i, i]].ln()).sum()
    }

    /// `A⁻¹` (dense). Only used for small systems.
    pub fn inverse(&self) -> Array2<T> {
        let n = self.dim();
        let mut inv = Array2::<T>::zeros((n, n));
        let mut e = Array1::<T>::zeros(n);
        for j in 0..n {
            e.fill(T::zero());
            e[j] = T::one();
            let col = self.solve(e.view());
            inv.column_mut(j).assign(&col);
        }
        inv
    }
}

/// `Xᵀ X` for a row-major design matrix.
pub fn gram<T: Real>(x: ArrayView2<'_, T>) -> Array2<T> {
    let p = x.ncols();
    let mut g = Array2::<T>::zeros((p, p));
    for row in x.rows() {
        for i in 0..p {
            let ri = row[i];
            if ri == T::zero() {
                continue;
            }
            for j in i..p {
                g[[i, j]] = g[[i, j]] + ri * row[j];
            }
        }
    }
    for i in 0..p {
        for j in 0..i {
            g[[i, j]] = g[[j, i]];
        }
    }
    g
}

/// `Xᵀ y`.
pub fn xt_y<T: Real>(x: ArrayView2<'_, T>, y: ArrayView1<'_, T>) -> Array1<T> {
    let p = x.ncols();
    let mut out = Array1::<T>::zeros(p);
    for (row, &yi) in x.rows().into_iter().zip(y.iter()) {
        for j in 0..p {
            out[j] = out[j] + row[j] * yi;
        }
    }
    out
}

pub fn dot<T: Real>(a: ArrayView1<'_, T>, b: ArrayView1<'_, T>) -> T {
    a.iter().zip(b.iter()).map(|(&x, &y)| x * y).sum()
}
