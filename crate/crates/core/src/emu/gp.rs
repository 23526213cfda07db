//! Gaussian-process regression with a zero prior mean and a dense Cholesky
//! factorization of `K + noise·I`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::codec::{Reader, Writer};
use crate::emu::kernel::{check_cap, rbf};
use crate::error::{Error, Result};
use crate::linalg::Cholesky;

pub const JITTER_LADDER: [f64; 5] = [1e-10, 1e-9, 1e-8, 1e-7, 1e-6];
pub const DEFAULT_ROW_CAP: usize = 5_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Kernel {
    /// `exp(−λ‖x − x'‖²)`.
    Rbf { lambda: f64 },
    /// `exp(−2 sin²(π‖x − x'‖ / period) / length²)`.
    ExpSineSquared { length: f64, period: f64 },
}

impl Kernel {
    pub fn eval(&self, a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
        match *self {
            Kernel::Rbf { lambda } => rbf(a, b, lambda),
            Kernel::ExpSineSquared { length, period } => {
                let d: f64 = a.iter().zip(b.iter()).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt();
                let s = (std::f64::consts::PI * d / period).sin();
                (-2.0 * s * s / (length * length)).exp()
            }
        }
    }

    pub fn matrix(&self, a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut k = Array2::zeros((a.nrows(), b.nrows()));
        for (i, ra) in a.rows().into_iter().enumerate() {
            for (j, rb) in b.rows().into_iter().enumerate() {
                k[[i, j]] = self.eval(ra, rb);
            }
        }
        k
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Kernel::Rbf { lambda } => lambda > 0.0,
            Kernel::ExpSineSquared { length, period } => length > 0.0 && period > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid("kernel parameters must be > 0"))
        }
    }
}

#[derive(Debug, Clone)]
pub struct GpModel {
    pub x_train: Array2<f64>,
    pub kernel: Kernel,
    pub noise: f64,
    /// Extra diagonal added by the jitter ladder.
    pub jitter: f64,
    /// `(K + (noise + jitter)·I)⁻¹ y`.
    pub weights: Array1<f64>,
    chol: Cholesky<f64>,
    pub log_marginal: f64,
}

pub fn fit_gp(x: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>, kernel: Kernel, noise: f64, cap: usize) -> Result<GpModel> {
    if x.nrows() != y.len() || y.is_empty() {
        return Err(Error::invalid("rows and targets differ or are empty"));
    }
    if !(noise >= 0.0) {
        return Err(Error::invalid("noise must be >= 0"));
    }
    kernel.validate()?;
    check_cap(x.nrows(), cap)?;
    let mut k = kernel.matrix(x, x);
    for i in 0..k.nrows() {
        k[[i, i]] += noise;
    }
    let (chol, jitter) = Cholesky::factor_with_jitter(k.view(), &JITTER_LADDER)
        .ok_or_else(|| Error::Numerical("kernel matrix not positive definite after maximum jitter".into()))?;
    let weights = chol.solve(y);
    let n = y.len() as f64;
    let log_marginal = -0.5 * y.dot(&weights) - 0.5 * chol.log_det() - 0.5 * n * (2.0 * std::f64::consts::PI).ln();
    Ok(GpModel { x_train: x.to_owned(), kernel, noise, jitter, weights, chol, log_marginal })
}

/// Picks the RBF width from `candidates` by maximum log marginal likelihood;
/// ties go to the earlier candidate.
pub fn fit_gp_tuned(x: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>, candidates: &[f64], noise: f64, cap: usize) -> Result<GpModel> {
    let mut best: Option<GpModel> = None;
    for &lambda in candidates {
        let m = match fit_gp(x, y, Kernel::Rbf { lambda }, noise, cap) {
            Ok(m) => m,
            Err(Error::Numerical(_)) => continue,
            Err(e) => return Err(e),
        };
        if best.as_ref().map_or(true, |b| m.log_marginal > b.log_marginal) {
            best = Some(m);
        }
    }
    best.ok_or_else(|| Error::Numerical("no kernel width gave a positive definite matrix".into()))
}

impl GpModel {
    pub fn n_features(&self) -> usize {
        self.x_train.ncols()
    }

    fn cross(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.n_features() {
            return Err(Error::invalid(format!("expected {} features, got {}", self.n_features(), x.ncols())));
        }
        Ok(self.kernel.matrix(x, self.x_train.view()))
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        Ok(self.cross(x)?.dot(&self.weights))
    }

    /// Posterior mean and variance `k(x,x) − k*ᵀ(K + σ²I)⁻¹k*`, clamped at 0.
    pub fn predict_with_variance(&self, x: ArrayView2<'_, f64>) -> Result<(Array1<f64>, Array1<f64>)> {
        let ks = self.cross(x)?;
        let mean = ks.dot(&self.weights);
        let var = ks
            .rows()
            .into_iter()
            .zip(x.rows())
            .map(|(k, xi)| {
                let v = self.chol.forward(k);
                (self.kernel.eval(xi, xi) - v.dot(&v)).max(0.0)
            })
            .collect();
        Ok((mean, var))
    }

    pub(crate) fn encode(&self, w: &mut Writer) {
        match self.kernel {
            Kernel::Rbf { lambda } => {
                w.u8(0);
                w.f64(lambda);
                w.f64(0.0);
            }
            Kernel::ExpSineSquared { length, period } => {
                w.u8(1);
                w.f64(length);
                w.f64(period);
            }
        }
        w.f64(self.noise);
        w.usize(self.x_train.ncols());
        w.f64s(self.x_train.as_standard_layout().as_slice().expect("contiguous"));
        w.f64s(self.weights.as_slice().expect("contiguous"));
    }

    /// Rebuilds the factorization from the stored training inputs.
    pub(crate) fn decode(r: &mut Reader<'_>) -> Result<Self> {
        let tag = r.u8()?;
        let (a, b) = (r.f64()?, r.f64()?);
        let kernel = match tag {
            0 => Kernel::Rbf { lambda: a },
            1 => Kernel::ExpSineSquared { length: a, period: b },
            t => return Err(r.fail(format!("unknown kernel tag {t}"))),
        };
        let noise = r.f64()?;
        let d = r.usize()?;
        let flat = r.f64s()?;
        let n = if d == 0 { 0 } else { flat.len() / d };
        let x_train = Array2::from_shape_vec((n, d), flat).map_err(|_| r.fail("GP training matrix shape"))?;
        let stored = Array1::from(r.f64s()?);
        let mut k = kernel.matrix(x_train.view(), x_train.view());
        for i in 0..n {
            k[[i, i]] += noise;
        }
        let (chol, jitter) =
            Cholesky::factor_with_jitter(k.view(), &JITTER_LADDER).ok_or_else(|| r.fail("stored GP no longer factorizes"))?;
        Ok(GpModel { x_train, kernel, noise, jitter, weights: stored, chol, log_marginal: f64::NAN })
    }
}

impl PartialEq for GpModel {
    fn eq(&self, other: &Self) -> bool {
        self.x_train == other.x_train && self.kernel == other.kernel && self.noise == other.noise && self.weights == other.weights
    }
}

/// Convenience wrapper returning posterior mean and variance at `x_star`.
pub fn gp_fit_predict(
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    x_star: ArrayView2<'_, f64>,
    kernel: Kernel,
    noise: f64,
) -> Result<(Array1<f64>, Array1<f64>)> {
    fit_gp(x, y, kernel, noise, DEFAULT_ROW_CAP)?.predict_with_variance(x_star)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn interpolates_training_points() {
        let x = array![[0.0], [0.5], [1.3]];
        let y = array![1.0, -0.5, 2.0];
        let (m, v) = gp_fit_predict(x.view(), y.view(), x.view(), Kernel::Rbf { lambda: 1.0 }, 1e-10).unwrap();
        for i in 0..3 {
            assert!((m[i] - y[i]).abs() < 1e-6);
            assert!(v[i] <= 1e-10 + 1e-8);
        }
    }

    #[test]
    fn far_field_reverts_to_prior() {
        let x = array![[0.0], [0.5]];
        let (m, v) =
            gp_fit_predict(x.view(), array![1.0, 2.0].view(), array![[20.0]].view(), Kernel::Rbf { lambda: 1.0 }, 1e-6).unwrap();
        assert!(m[0].abs() < 1e-12);
        assert!((v[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn duplicate_points_need_jitter() {
        let x = array![[0.0], [0.0], [1.0]];
        let m = fit_gp(x.view(), array![1.0, 1.0, 0.0].view(), Kernel::Rbf { lambda: 1.0 }, 0.0, 10).unwrap();
        assert!(m.jitter > 0.0);
    }

    #[test]
    fn cap_is_enforced() {
        let x = Array2::zeros((4, 1));
        assert!(matches!(
            fit_gp(x.view(), Array1::zeros(4).view(), Kernel::Rbf { lambda: 1.0 }, 1e-3, 3),
            Err(Error::Capacity { .. })
        ));
    }
}
