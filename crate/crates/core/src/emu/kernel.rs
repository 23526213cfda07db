//! RBF kernel ridge regression with dense dual coefficients.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};
use crate::linalg::Cholesky;

pub const DEFAULT_ROW_CAP: usize = 20_000;

/// `exp(−λ‖a − b‖²)`.
pub fn rbf(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>, lambda: f64) -> f64 {
    let d2: f64 = a.iter().zip(b.iter()).map(|(u, v)| (u - v) * (u - v)).sum();
    (-lambda * d2).exp()
}

/// Kernel matrix between the rows of `a` and the rows of `b`.
pub fn rbf_matrix(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>, lambda: f64) -> Array2<f64> {
    let mut k = Array2::zeros((a.nrows(), b.nrows()));
    for (i, ra) in a.rows().into_iter().enumerate() {
        for (j, rb) in b.rows().into_iter().enumerate() {
            k[[i, j]] = rbf(ra, rb, lambda);
        }
    }
    k
}

pub(crate) fn check_cap(rows: usize, cap: usize) -> Result<()> {
    if rows > cap {
        return Err(Error::Capacity { rows, cap });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelRidgeModel {
    pub x_train: Array2<f64>,
    pub dual: Array1<f64>,
    pub alpha: f64,
    pub lambda: f64,
}

/// Dual coefficients `(K + αI)⁻¹ y`.
pub fn fit_kernel_ridge(x: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>, alpha: f64, lambda: f64, cap: usize) -> Result<KernelRidgeModel> {
    if x.nrows() != y.len() || y.is_empty() {
        return Err(Error::invalid("rows and targets differ or are empty"));
    }
    if !(alpha >= 0.0 && lambda > 0.0) {
        return Err(Error::invalid("need alpha >= 0 and lambda > 0"));
    }
    check_cap(x.nrows(), cap)?;
    let mut k = rbf_matrix(x, x, lambda);
    for i in 0..k.nrows() {
        k[[i, i]] += alpha;
    }
    let chol = Cholesky::factor(k.view())
        .ok_or_else(|| Error::Numerical("kernel matrix is not positive definite; raise alpha".into()))?;
    Ok(KernelRidgeModel {
        x_train: x.to_owned(),
        dual: chol.solve(y),
        alpha,
        lambda,
    })
}

impl KernelRidgeModel {
    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        if x.ncols() != self.x_train.ncols() {
            return Err(Error::invalid(format!("expected {} features, got {}", self.x_train.ncols(), x.ncols())));
        }
        Ok(x.rows()
            .into_iter()
            .map(|r| {
                self.x_train
                    .rows()
                    .into_iter()
                    .zip(self.dual.iter())
                    .map(|(t, c)| c * rbf(r, t, self.lambda))
                    .sum()
            })
            .collect())
    }

    pub(crate) fn encode(&self, w: &mut Writer) {
        w.usize(self.x_train.ncols());
        w.f64s(self.x_train.as_standard_layout().as_slice().expect("contiguous"));
        w.f64s(self.dual.as_slice().expect("contiguous"));
        w.f64(self.alpha);
        w.f64(self.lambda);
    }

    pub(crate) fn decode(r: &mut Reader<'_>) -> Result<Self> {
        let d = r.usize()?;
        let flat = r.f64s()?;
        let n = if d == 0 { 0 } else { flat.len() / d };
        let x_train = Array2::from_shape_vec((n, d), flat).map_err(|_| r.fail("kernel training matrix shape"))?;
        let dual = Array1::from(r.f64s()?);
        if dual.len() != n {
            return Err(r.fail("dual coefficient count differs from training rows"));
        }
        Ok(KernelRidgeModel { x_train, dual, alpha: r.f64()?, lambda: r.f64()? })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn single_point_interpolates() {
        let m = fit_kernel_ridge(array![[0.3, 0.1]].view(), array![2.5].view(), 0.0, 1.0, 10).unwrap();
        assert!((m.predict(array![[0.3, 0.1]].view()).unwrap()[0] - 2.5).abs() < 1e-10);
    }

    #[test]
    fn huge_alpha_predicts_zero() {
        let x = array![[0.0], [1.0], [2.0]];
        let m = fit_kernel_ridge(x.view(), array![1.0, 2.0, 3.0].view(), 1e12, 1.0, 10).unwrap();
        assert!(m.predict(x.view()).unwrap().iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn cap_is_enforced() {
        let x = Array2::zeros((11, 1));
        let err = fit_kernel_ridge(x.view(), Array1::zeros(11).view(), 1.0, 1.0, 10).unwrap_err();
        assert!(matches!(err, Error::Capacity { rows: 11, cap: 10 }));
    }
}
