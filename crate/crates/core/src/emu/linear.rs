//! Penalized linear regression under one objective
//!
//! `J(w, w₀) = (1/2n)‖y − Xw − w₀‖² + α₁‖w‖₁ + (α₂/2n)‖w‖²`
//!
//! so that `α₁ = 0` has the closed form `w = (XcᵀXc + α₂I)⁻¹Xcᵀyc` on centered
//! data. The Huber loss replaces the squared term with the concomitant-scale
//! objective `Σ σ + σ·H_ε(r/σ)` plus `α₂‖w‖²`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::campaign::quadratic;
use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};
use crate::linalg::{gram, xt_y, Cholesky};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Loss {
    Squared,
    /// Residuals beyond `epsilon · σ` are penalized linearly.
    Huber { epsilon: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearConfig {
    pub alpha1: f64,
    pub alpha2: f64,
    pub loss: Loss,
    pub max_iter: usize,
    pub tol: f64,
    pub fit_intercept: bool,
}

impl Default for LinearConfig {
    fn default() -> Self {
        LinearConfig {
            alpha1: 0.0,
            alpha2: 0.0,
            loss: Loss::Squared,
            max_iter: 1000,
            tol: 1e-4,
            fit_intercept: true,
        }
    }
}

impl LinearConfig {
    pub fn ols() -> Self {
        Self::default()
    }

    pub fn ridge(alpha2: f64) -> Self {
        LinearConfig { alpha2, ..Self::default() }
    }

    pub fn lasso(alpha1: f64) -> Self {
        LinearConfig { alpha1, ..Self::default() }
    }

    /// `α₁ = alpha·l1_ratio`, `α₂ = alpha·(1 − l1_ratio)`.
    pub fn elastic_net(alpha: f64, l1_ratio: f64) -> Self {
        LinearConfig {
            alpha1: alpha * l1_ratio,
            alpha2: alpha * (1.0 - l1_ratio),
            ..Self::default()
        }
    }

    pub fn huber(epsilon: f64, alpha2: f64) -> Self {
        LinearConfig {
            alpha2,
            loss: Loss::Huber { epsilon },
            max_iter: 50,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha1 >= 0.0 && self.alpha2 >= 0.0 && self.alpha1.is_finite() && self.alpha2.is_finite()) {
            return Err(Error::invalid("alpha1 and alpha2 must be finite and >= 0"));
        }
        if let Loss::Huber { epsilon } = self.loss {
            if !(epsilon > 0.0 && epsilon.is_finite()) {
                return Err(Error::invalid("Huber epsilon must be > 0"));
            }
            if self.alpha1 > 0.0 {
                return Err(Error::invalid("Huber loss takes no L1 penalty"));
            }
        }
        if self.max_iter == 0 {
            return Err(Error::invalid("max_iter must be >= 1"));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::invalid("tol must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub weights: Array1<f64>,
    pub intercept: f64,
    /// Inputs are expanded with [`quadratic`] before the linear map.
    pub quadratic: bool,
    /// Huber scale `σ`; `None` for squared loss.
    pub scale: Option<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl LinearModel {
    pub fn n_features(&self) -> usize {
        if self.quadratic {
            // d + d(d+1)/2 = w  →  d = (−3 + √(9 + 8w)) / 2
            let w = self.weights.len() as f64;
            (((9.0 + 8.0 * w).sqrt() - 3.0) / 2.0).round() as usize
        } else {
            self.weights.len()
        }
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        if x.ncols() != self.n_features() {
            return Err(Error::invalid(format!(
                "expected {} features, got {}",
                self.n_features(),
                x.ncols()
            )));
        }
        if self.quadratic {
            Ok(quadratic(x).dot(&self.weights) + self.intercept)
        } else {
            Ok(x.dot(&self.weights) + self.intercept)
        }
    }

    pub(crate) fn encode(&self, w: &mut Writer) {
        w.f64s(self.weights.as_slice().expect("contiguous"));
        w.f64(self.intercept);
        w.bool(self.quadratic);
        w.f64(self.scale.unwrap_or(f64::NAN));
        w.f64(self.objective);
        w.usize(self.iterations);
        w.bool(self.converged);
    }

    pub(crate) fn decode(r: &mut Reader<'_>) -> Result<Self> {
        let weights = Array1::from(r.f64s()?);
        let intercept = r.f64()?;
        let quadratic = r.bool()?;
        let scale = r.f64()?;
        Ok(LinearModel {
            weights,
            intercept,
            quadratic,
            scale: (!scale.is_nan()).then_some(scale),
            objective: r.f64()?,
            iterations: r.usize()?,
            converged: r.bool()?,
        })
    }
}

fn check_xy(x: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::invalid(format!("{} rows but {} targets", x.nrows(), y.len())));
    }
    if y.len() < 2 {
        return Err(Error::invalid("need at least 2 samples"));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite input"));
    }
    Ok(())
}

/// Squared-loss objective `J` (see the module docs) at `(w, w₀)`.
pub fn objective(x: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>, w: ArrayView1<'_, f64>, w0: f64, cfg: &LinearConfig) -> f64 {
    let n = y.len() as f64;
    let r = &y - &(x.dot(&w) + w0);
    r.dot(&r) / (2.0 * n) + cfg.alpha1 * w.iter().map(|v| v.abs()).sum::<f64>() + cfg.alpha2 * w.dot(&w) / (2.0 * n)
}

fn center(x: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>, fit_intercept: bool) -> (Array2<f64>, Array1<f64>, Array1<f64>, f64) {
    if fit_intercept {
        let xm = x.mean_axis(Axis(0)).expect("rows > 0");
        let ym = y.mean().expect("rows > 0");
        (&x - &xm, &y - ym, xm, ym)
    } else {
        (x.to_owned(), y.to_owned(), Array1::zeros(x.ncols()), 0.0)
    }
}

pub fn fit_linear(x: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>, cfg: &LinearConfig) -> Result<LinearModel> {
    cfg.validate()?;
    check_xy(x, y)?;
    match cfg.loss {
        Loss::Huber { epsilon } => fit_huber(x, y, epsilon, cfg),
        Loss::Squared if cfg.alpha1 > 0.0 => Ok(coordinate_descent(x, y, cfg)),
        Loss::Squared => closed_form(x, y, cfg),
    }
}

/// [`fit_linear`] on the quadratic expansion of `x`.
pub fn fit_polynomial(x: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>, cfg: &LinearConfig) -> Result<LinearModel> {
    let mut m = fit_linear(quadratic(x).view(), y, cfg)?;
    m.quadratic = true;
    Ok(m)
}

fn closed_form(x: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>, cfg: &LinearConfig) -> Result<LinearModel> {
    let (xc, yc, xm, ym) = center(x, y, cfg.fit_intercept);
    let mut a = gram(xc.view());
    for i in 0..a.nrows() {
        a[[i, i]] += cfg.alpha2;
    }
    let chol = Cholesky::factor(a.view()).ok_or(if cfg.alpha2 > 0.0 {
        Error::Numerical("ridge normal equations are not positive definite".into())
    } else {
        Error::RankDeficient
    })?;
    let w = chol.solve(xt_y(xc.view(), yc.view()).view());
    let w0 = ym - xm.dot(&w);
    Ok(LinearModel {
        objective: objective(x, y, w.view(), w0, cfg),
        weights: w,
        intercept: w0,
        quadratic: false,
        scale: None,
        iterations: 1,
        converged: true,
    })
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Cyclic coordinate descent; stops when one sweep lowers `J` by less than `tol`.
fn coordinate_descent(x: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>, cfg: &LinearConfig) -> LinearModel {
    let (xc, yc, xm, ym) = center(x, y, cfg.fit_intercept);
    let (n, d) = xc.dim();
    let nf = n as f64;
    let col_sq: Vec<f64> = xc.columns().into_iter().map(|c| c.dot(&c) / nf).collect();
    let mut w = Array1::<f64>::zeros(d);
    let mut r = yc.clone();
    let cfg_c = LinearConfig { fit_intercept: false, ..*cfg };
    let mut obj = objective(xc.view(), yc.view(), w.view(), 0.0, &cfg_c);
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=cfg.max_iter {
        iterations = it;
        for j in 0..d {
            let denom = col_sq[j] + cfg.alpha2 / nf;
            if denom <= 0.0 {
                continue;
            }
            let col = xc.column(j);
            let rho = col.dot(&r) / nf + col_sq[j] * w[j];
            let new = soft_threshold(rho, cfg.alpha1) / denom;
            let delta = new - w[j];
            if delta != 0.0 {
                r.scaled_add(-delta, &col);
                w[j] = new;
            }
        }
        let next = objective(xc.view(), yc.view(), w.view(), 0.0, &cfg_c);
        let decrease = obj - next;
        obj = next;
        if decrease < cfg.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("coordinate descent stopped at max_iter = {}", cfg.max_iter);
    }
    let w0 = ym - xm.dot(&w);
    LinearModel {
        objective: objective(x, y, w.view(), w0, cfg),
        weights: w,
        intercept: w0,
        quadratic: false,
        scale: None,
        iterations,
        converged,
    }
}

fn huber_h(z: f64, eps: f64) -> f64 {
    if z.abs() <= eps {
        z * z
    } else {
        2.0 * eps * z.abs() - eps * eps
    }
}

/// `Σ σ + σ·H_ε(r/σ)` plus `α₂‖w‖²`.
pub fn huber_objective(r: ArrayView1<'_, f64>, sigma: f64, w: ArrayView1<'_, f64>, eps: f64, alpha2: f64) -> f64 {
    r.iter().map(|&ri| sigma + sigma * huber_h(ri / sigma, eps)).sum::<f64>() + alpha2 * w.dot(&w)
}

/// Iteratively reweighted least squares with the concomitant scale update
/// `σ² = Σ_in r² / (n − n_out·ε²)`.
fn fit_huber(x: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>, eps: f64, cfg: &LinearConfig) -> Result<LinearModel> {
    let (n, d) = x.dim();
    let p = d + usize::from(cfg.fit_intercept);
    let mut design = Array2::<f64>::ones((n, p));
    design.slice_mut(ndarray::s![.., ..d]).assign(&x);

    let start = closed_form(x, y, &LinearConfig { alpha2: cfg.alpha2.max(1e-12), ..LinearConfig::ols() })?;
    let mut beta = Array1::<f64>::zeros(p);
    beta.slice_mut(ndarray::s![..d]).assign(&start.weights);
    if cfg.fit_intercept {
        beta[d] = start.intercept;
    }
    let resid = |beta: &Array1<f64>| &y - &design.dot(beta);
    let mut r = resid(&beta);
    let mut sigma = (r.dot(&r) / n as f64).sqrt().max(1e-12);
    let w_of = |beta: &Array1<f64>| beta.slice(ndarray::s![..d]).to_owned();
    let mut obj = huber_objective(r.view(), sigma, w_of(&beta).view(), eps, cfg.alpha2);
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=cfg.max_iter {
        iterations = it;
        let omega: Array1<f64> = r.mapv(|ri| if ri.abs() <= eps * sigma { 1.0 } else { eps * sigma / ri.abs() });
        // (Dᵀ Ω D / σ + α₂ I_w) β = Dᵀ Ω y / σ
        let dw = &design * &omega.view().insert_axis(Axis(1));
        let mut a = dw.t().dot(&design) / sigma;
        for j in 0..d {
            a[[j, j]] += cfg.alpha2;
        }
        let b = dw.t().dot(&y) / sigma;
        let chol = Cholesky::factor(a.view()).ok_or(Error::RankDeficient)?;
        beta = chol.solve(b.view());
        r = resid(&beta);

        let (mut in_sq, mut n_out) = (0.0, 0usize);
        for &ri in r.iter() {
            if ri.abs() <= eps * sigma {
                in_sq += ri * ri;
            } else {
                n_out += 1;
            }
        }
        let denom = n as f64 - n_out as f64 * eps * eps;
        if denom > 0.0 && in_sq > 0.0 {
            sigma = (in_sq / denom).sqrt();
        } else {
            let mut abs: Vec<f64> = r.iter().map(|v| v.abs()).collect();
            abs.sort_by(f64::total_cmp);
            sigma = abs[abs.len() / 2] / 0.6745;
        }
        sigma = sigma.max(1e-12);
        let next = huber_objective(r.view(), sigma, w_of(&beta).view(), eps, cfg.alpha2);
        let change = (obj - next).abs();
        obj = next;
        if change < cfg.tol {
            converged = true;
            break;
        }
    }
    Ok(LinearModel {
        weights: w_of(&beta),
        intercept: if cfg.fit_intercept { beta[d] } else { 0.0 },
        quadratic: false,
        scale: Some(sigma),
        objective: obj,
        iterations,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n: usize, d: usize, seed: u64) -> (Array2<f64>, Array1<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((n, d), |_| rng.gen_range(-1.0..1.0));
        let truth: Array1<f64> = (0..d).map(|j| j as f64 - 1.5).collect();
        let y = x.dot(&truth) + 0.3 + x.column(0).mapv(|v| 0.1 * v * v);
        (x, y)
    }

    #[test]
    fn exact_two_point_fit() {
        let m = fit_linear(array![[1.0], [2.0]].view(), array![1.0, 2.0].view(), &LinearConfig::ols()).unwrap();
        assert!((m.weights[0] - 1.0).abs() < 1e-10);
        assert!(m.intercept.abs() < 1e-10);
    }

    #[test]
    fn degenerate_design_is_rank_deficient() {
        let x = array![[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]];
        let err = fit_linear(x.view(), array![1.0, 2.0, 3.0].view(), &LinearConfig::ols()).unwrap_err();
        assert!(matches!(err, Error::RankDeficient));
        assert!(fit_linear(x.view(), array![1.0, 2.0, 3.0].view(), &LinearConfig::ridge(0.1)).is_ok());
    }

    #[test]
    fn large_l1_zeroes_every_weight() {
        let (x, y) = random(50, 5, 1);
        let m = fit_linear(x.view(), y.view(), &LinearConfig::lasso(1e3)).unwrap();
        assert!(m.weights.iter().all(|&w| w == 0.0));
    }

    #[test]
    fn ridge_norm_shrinks_with_alpha() {
        let (x, y) = random(50, 5, 2);
        let mut last = f64::INFINITY;
        for a in [0.0, 0.01, 0.1, 1.0, 10.0, 100.0, 1e4] {
            let m = fit_linear(x.view(), y.view(), &LinearConfig::ridge(a)).unwrap();
            let norm = m.weights.dot(&m.weights).sqrt();
            assert!(norm <= last + 1e-12);
            last = norm;
        }
    }

    #[test]
    fn lasso_support_shrinks_with_alpha() {
        let (x, y) = random(80, 6, 3);
        let mut last = usize::MAX;
        for a in [1e-4, 1e-3, 1e-2, 0.1, 0.5, 1.0, 3.0] {
            let cfg = LinearConfig { tol: 1e-12, max_iter: 10_000, ..LinearConfig::lasso(a) };
            let m = fit_linear(x.view(), y.view(), &cfg).unwrap();
            let nnz = m.weights.iter().filter(|w| **w != 0.0).count();
            assert!(nnz <= last, "alpha {a}: {nnz} > {last}");
            last = nnz;
        }
    }

    #[test]
    fn reported_objective_matches_recomputation() {
        let (x, y) = random(40, 3, 4);
        for cfg in [LinearConfig::ridge(0.5), LinearConfig::lasso(0.01), LinearConfig::elastic_net(0.02, 0.5)] {
            let m = fit_linear(x.view(), y.view(), &cfg).unwrap();
            let yhat = m.predict(x.view()).unwrap();
            let n = y.len() as f64;
            let r = &y - &yhat;
            let j = r.dot(&r) / (2.0 * n)
                + cfg.alpha1 * m.weights.iter().map(|v| v.abs()).sum::<f64>()
                + cfg.alpha2 * m.weights.dot(&m.weights) / (2.0 * n);
            assert!((j - m.objective).abs() < 1e-12);
        }
    }

    #[test]
    fn huber_matches_squared_loss_without_outliers() {
        let (x, y) = random(60, 3, 5);
        let ols = fit_linear(x.view(), y.view(), &LinearConfig::ols()).unwrap();
        let cfg = LinearConfig { tol: 1e-14, ..LinearConfig::huber(1e6, 0.0) };
        let hub = fit_linear(x.view(), y.view(), &cfg).unwrap();
        for (a, b) in hub.weights.iter().zip(ols.weights.iter()) {
            assert!((a - b).abs() < 1e-8);
        }
        assert!((hub.intercept - ols.intercept).abs() < 1e-8);
    }

    #[test]
    fn huber_resists_an_outlier() {
        let x = Array2::from_shape_fn((30, 1), |(i, _)| i as f64 / 29.0);
        let mut y = x.column(0).mapv(|v| 2.0 * v + 1.0);
        y[29] += 50.0;
        let ols = fit_linear(x.view(), y.view(), &LinearConfig::ols()).unwrap();
        let hub = fit_linear(x.view(), y.view(), &LinearConfig { tol: 1e-12, max_iter: 200, ..LinearConfig::huber(1.35, 0.0) }).unwrap();
        assert!((hub.weights[0] - 2.0).abs() < 0.1);
        assert!((ols.weights[0] - 2.0).abs() > 1.0);
    }

    #[test]
    fn polynomial_nests_linear() {
        let x = Array2::from_shape_fn((40, 1), |(i, _)| i as f64 / 39.0 * 4.0 - 2.0);
        let sq = x.column(0).mapv(|v| v * v);
        let lin = x.column(0).to_owned();
        let p = fit_polynomial(x.view(), sq.view(), &LinearConfig::ols()).unwrap();
        let pred = p.predict(x.view()).unwrap();
        let ss_res: f64 = (&sq - &pred).mapv(|v| v * v).sum();
        assert!(ss_res < 1e-20);
        let p = fit_polynomial(x.view(), lin.view(), &LinearConfig::ols()).unwrap();
        assert!(p.weights[1].abs() < 1e-6);
        let l = fit_linear(x.view(), sq.view(), &LinearConfig::ols()).unwrap();
        let lin_res: f64 = (&sq - &l.predict(x.view()).unwrap()).mapv(|v| v * v).sum();
        assert!(lin_res > ss_res);
    }

    #[test]
    fn width_mismatch_rejected() {
        let m = fit_linear(array![[1.0], [2.0]].view(), array![1.0, 2.0].view(), &LinearConfig::ols()).unwrap();
        assert!(m.predict(array![[1.0, 2.0]].view()).is_err());
    }
}
