//! Bayesian ridge regression: spherical Gaussian prior `N(0, ω⁻¹I)` on the
//! weights, Gaussian noise of precision `β`, Gamma-type hyperpriors on both.
//! Hyperparameters follow expectation-maximization updates, which never
//! decrease the penalized evidence
//!
//! `L = log N(y | 0, β⁻¹I + ω⁻¹XXᵀ) + o·ln β − r·β + u·ln ω − w·ω`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};
use crate::linalg::{gram, xt_y, Cholesky};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BayesRidgeConfig {
    pub max_iter: usize,
    /// Stop when `Σ|Δm|` over one update falls below this.
    pub tol: f64,
    /// Hyperprior constants `(o, r)` on `β` and `(u, w)` on `ω`.
    pub noise_prior: (f64, f64),
    pub weight_prior: (f64, f64),
}

impl Default for BayesRidgeConfig {
    fn default() -> Self {
        BayesRidgeConfig {
            max_iter: 100,
            tol: 1e-4,
            noise_prior: (1e-6, 1e-6),
            weight_prior: (1e-6, 1e-6),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BayesRidgeModel {
    pub mean: Array1<f64>,
    pub covariance: Array2<f64>,
    pub intercept: f64,
    /// Noise precision.
    pub beta: f64,
    /// Weight precision.
    pub omega: f64,
    /// Penalized evidence before the first update and after each one.
    pub evidence: Vec<f64>,
    pub converged: bool,
}

/// Posterior `(mean, covariance)` at fixed `(ω, β)` from centered data.
pub fn posterior(xtx: &Array2<f64>, xty: &Array1<f64>, omega: f64, beta: f64) -> Result<(Array1<f64>, Array2<f64>, f64)> {
    let mut a = xtx * beta;
    for i in 0..a.nrows() {
        a[[i, i]] += omega;
    }
    let chol = Cholesky::factor(a.view()).ok_or_else(|| Error::Numerical("posterior precision not positive definite".into()))?;
    let mean = chol.solve((xty * beta).view());
    Ok((mean, chol.inverse(), chol.log_det()))
}

/// Penalized evidence `L` for centered `x`, `y`.
pub fn evidence(x: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>, omega: f64, beta: f64, cfg: &BayesRidgeConfig) -> Result<f64> {
    let (n, d) = x.dim();
    let xtx = gram(x);
    let xty = xt_y(x, y);
    let (m, _, log_det_a) = posterior(&xtx, &xty, omega, beta)?;
    Ok(evidence_at(x, y, &m, log_det_a, omega, beta, n, d, cfg))
}

#[allow(clippy::too_many_arguments)]
fn evidence_at(
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    m: &Array1<f64>,
    log_det_a: f64,
    omega: f64,
    beta: f64,
    n: usize,
    d: usize,
    cfg: &BayesRidgeConfig,
) -> f64 {
    let (nf, df) = (n as f64, d as f64);
    let r = &y - &x.dot(m);
    // ln|C| = −n ln β − d ln ω + ln|ωI + βXᵀX|,  yᵀC⁻¹y = β‖y − Xm‖² + ω‖m‖²
    let log_det_c = -nf * beta.ln() - df * omega.ln() + log_det_a;
    let quad = beta * r.dot(&r) + omega * m.dot(m);
    let lml = -0.5 * (log_det_c + quad + nf * (2.0 * std::f64::consts::PI).ln());
    let (o, rr) = cfg.noise_prior;
    let (u, w) = cfg.weight_prior;
    lml + o * beta.ln() - rr * beta + u * omega.ln() - w * omega
}

pub fn fit_bayes_ridge(x: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>, cfg: &BayesRidgeConfig) -> Result<BayesRidgeModel> {
    let (n, d) = x.dim();
    if n != y.len() || n < 2 {
        return Err(Error::invalid("need matching rows and at least 2 samples"));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite input"));
    }
    if cfg.max_iter == 0 {
        return Err(Error::invalid("max_iter must be >= 1"));
    }
    let xm = x.mean_axis(Axis(0)).expect("rows");
    let ym = y.mean().expect("rows");
    let xc = &x - &xm;
    let yc = &y - ym;
    let xtx = gram(xc.view());
    let xty = xt_y(xc.view(), yc.view());
    let (o, rr) = cfg.noise_prior;
    let (u, w) = cfg.weight_prior;

    let var = yc.dot(&yc) / n as f64;
    let mut beta = 1.0 / var.max(1e-12);
    let mut omega = 1.0;
    let (mut m, mut cov, mut log_det_a) = posterior(&xtx, &xty, omega, beta)?;
    let mut trace = vec![evidence_at(xc.view(), yc.view(), &m, log_det_a, omega, beta, n, d, cfg)];
    let mut converged = false;
    for _ in 0..cfg.max_iter {
        let r = &yc - &xc.dot(&m);
        let e_w2 = m.dot(&m) + cov.diag().sum();
        let e_r2 = r.dot(&r) + (&xtx * &cov).sum();
        omega = (d as f64 + 2.0 * u) / (e_w2 + 2.0 * w);
        beta = (n as f64 + 2.0 * o) / (e_r2 + 2.0 * rr);
        let (m_new, cov_new, ld) = posterior(&xtx, &xty, omega, beta)?;
        let change: f64 = (&m_new - &m).mapv(f64::abs).sum();
        m = m_new;
        cov = cov_new;
        log_det_a = ld;
        trace.push(evidence_at(xc.view(), yc.view(), &m, log_det_a, omega, beta, n, d, cfg));
        if change < cfg.tol {
            converged = true;
            break;
        }
    }
    Ok(BayesRidgeModel {
        intercept: ym - xm.dot(&m),
        mean: m,
        covariance: cov,
        beta,
        omega,
        evidence: trace,
        converged,
    })
}

impl BayesRidgeModel {
    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        if x.ncols() != self.mean.len() {
            return Err(Error::invalid(format!("expected {} features, got {}", self.mean.len(), x.ncols())));
        }
        Ok(x.dot(&self.mean) + self.intercept)
    }

    /// Predictive standard deviation `sqrt(1/β + xᵀΣx)`.
    pub fn predict_std(&self, x: ArrayView2<'_, f64>) -> Array1<f64> {
        x.rows()
            .into_iter()
            .map(|r| (1.0 / self.beta + r.dot(&self.covariance.dot(&r))).sqrt())
            .collect()
    }

    pub(crate) fn encode(&self, w: &mut Writer) {
        w.f64s(self.mean.as_slice().expect("contiguous"));
        w.f64s(self.covariance.as_standard_layout().as_slice().expect("contiguous"));
        w.f64(self.intercept);
        w.f64(self.beta);
        w.f64(self.omega);
        w.f64s(&self.evidence);
        w.bool(self.converged);
    }

    pub(crate) fn decode(r: &mut Reader<'_>) -> Result<Self> {
        let mean = Array1::from(r.f64s()?);
        let d = mean.len();
        let covariance = Array2::from_shape_vec((d, d), r.f64s()?).map_err(|_| r.fail("covariance shape"))?;
        Ok(BayesRidgeModel {
            mean,
            covariance,
            intercept: r.f64()?,
            beta: r.f64()?,
            omega: r.f64()?,
            evidence: r.f64s()?,
            converged: r.bool()?,
        })
    }
}
