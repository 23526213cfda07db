//! Multinomial (softmax) logistic regression minimizing mean cross-entropy
//! plus `(α/2)‖W‖²` by accelerated gradient descent with backtracking.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticConfig {
    pub alpha: f64,
    pub max_iter: usize,
    /// Stop once the largest gradient component falls below this.
    pub tol: f64,
    pub fit_intercept: bool,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        LogisticConfig {
            alpha: 1e-4,
            max_iter: 500,
            tol: 1e-4,
            fit_intercept: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    pub classes: Vec<usize>,
    /// One row per class.
    pub weights: Array2<f64>,
    pub intercepts: Array1<f64>,
    pub loss: f64,
    pub iterations: usize,
}

/// Row-wise softmax, stabilized by the row maximum.
pub fn softmax_rows(z: &mut Array2<f64>) {
    for mut row in z.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row /= s;
    }
}

/// Mean cross-entropy plus `(α/2)‖W‖²` and its gradient, for parameters laid
/// out as `[W (k×d, row-major), b (k)]`. `y` holds class positions `0..k`.
pub fn loss_and_gradient(theta: &[f64], x: ArrayView2<'_, f64>, y: &[usize], k: usize, alpha: f64) -> (f64, Vec<f64>) {
    let (n, d) = x.dim();
    let w = ArrayView2::from_shape((k, d), &theta[..k * d]).expect("theta layout");
    let b = ArrayView1::from(&theta[k * d..k * d + k]);
    let mut p = x.dot(&w.t()) + &b;
    let mut loss = 0.0;
    for (i, mut row) in p.rows_mut().into_iter().enumerate() {
        let m = row.fold(f64::NEG_INFINITY, |a, &v| a.max(v));
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        loss += lse - row[y[i]];
        row.mapv_inplace(|v| (v - lse).exp());
    }
    let nf = n as f64;
    loss = loss / nf + 0.5 * alpha * w.iter().map(|v| v * v).sum::<f64>();
    for (i, &c) in y.iter().enumerate() {
        p[[i, c]] -= 1.0;
    }
    let gw = p.t().dot(&x) / nf + &(&w * alpha);
    let gb = p.sum_axis(Axis(0)) / nf;
    let mut grad = Vec::with_capacity(theta.len());
    grad.extend(gw.iter());
    grad.extend(gb.iter());
    (loss, grad)
}

fn class_positions(y: &[usize]) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut classes = y.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::invalid("need at least two classes"));
    }
    let pos = y.iter().map(|c| classes.binary_search(c).expect("present")).collect();
    Ok((classes, pos))
}

pub fn fit_logistic(x: ArrayView2<'_, f64>, y: &[usize], cfg: &LogisticConfig) -> Result<LogisticModel> {
    if x.nrows() != y.len() || y.is_empty() {
        return Err(Error::invalid("rows and labels differ or are empty"));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite input"));
    }
    if cfg.max_iter == 0 || !(cfg.alpha >= 0.0) {
        return Err(Error::invalid("max_iter >= 1 and alpha >= 0 required"));
    }
    let (classes, pos) = class_positions(y)?;
    let (k, d) = (classes.len(), x.ncols());
    let dim = k * d + k;
    let mask = |g: &mut Vec<f64>| {
        if !cfg.fit_intercept {
            g[k * d..].iter_mut().for_each(|v| *v = 0.0);
        }
    };
    let eval = |t: &[f64]| {
        let (l, mut g) = loss_and_gradient(t, x, &pos, k, cfg.alpha);
        mask(&mut g);
        (l, g)
    };

    let mut theta = vec![0.0; dim];
    let mut prev = theta.clone();
    let (mut loss, mut grad) = eval(&theta);
    let mut lip = 1.0f64;
    let mut t_k = 1.0f64;
    let mut iterations = 0;
    for it in 1..=cfg.max_iter {
        iterations = it;
        if grad.iter().fold(0.0f64, |a, g| a.max(g.abs())) < cfg.tol {
            break;
        }
        let t_next = (1.0 + (1.0 + 4.0 * t_k * t_k).sqrt()) / 2.0;
        let beta = (t_k - 1.0) / t_next;
        let probe: Vec<f64> = theta.iter().zip(&prev).map(|(a, b)| a + beta * (a - b)).collect();
        let (f_probe, g_probe) = eval(&probe);
        let g2: f64 = g_probe.iter().map(|g| g * g).sum();
        let (cand, f_cand, g_cand) = loop {
            let c: Vec<f64> = probe.iter().zip(&g_probe).map(|(p, g)| p - g / lip).collect();
            let (fc, gc) = eval(&c);
            if fc <= f_probe - g2 / (2.0 * lip) + 1e-15 * f_probe.abs() || lip > 1e12 {
                break (c, fc, gc);
            }
            lip *= 2.0;
        };
        if f_cand > loss {
            // Momentum overshot: restart from a plain gradient step.
            t_k = 1.0;
            prev = theta.clone();
            continue;
        }
        prev = std::mem::replace(&mut theta, cand);
        loss = f_cand;
        grad = g_cand;
        t_k = t_next;
        lip = (lip / 1.5).max(1e-8);
    }
    let weights = Array2::from_shape_vec((k, d), theta[..k * d].to_vec()).expect("layout");
    let intercepts = Array1::from(theta[k * d..].to_vec());
    Ok(LogisticModel { classes, weights, intercepts, loss, iterations })
}

impl LogisticModel {
    pub fn n_features(&self) -> usize {
        self.weights.ncols()
    }

    pub fn predict_proba(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.n_features() {
            return Err(Error::invalid(format!("expected {} features, got {}", self.n_features(), x.ncols())));
        }
        let mut z = x.dot(&self.weights.t()) + &self.intercepts;
        softmax_rows(&mut z);
        Ok(z)
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Vec<usize>> {
        Ok(argmax_rows(self.predict_proba(x)?.view(), &self.classes))
    }

    pub(crate) fn encode(&self, w: &mut Writer) {
        w.usizes(&self.classes);
        w.usize(self.weights.ncols());
        w.f64s(self.weights.as_slice().expect("contiguous"));
        w.f64s(self.intercepts.as_slice().expect("contiguous"));
        w.f64(self.loss);
        w.usize(self.iterations);
    }

    pub(crate) fn decode(r: &mut Reader<'_>) -> Result<Self> {
        let classes = r.usizes()?;
        let d = r.usize()?;
        let w = r.f64s()?;
        let weights = Array2::from_shape_vec((classes.len(), d), w).map_err(|_| r.fail("logistic weight shape"))?;
        Ok(LogisticModel {
            classes,
            weights,
            intercepts: Array1::from(r.f64s()?),
            loss: r.f64()?,
            iterations: r.usize()?,
        })
    }
}

/// Class label of each row's largest entry; ties go to the lower position.
pub fn argmax_rows(p: ArrayView2<'_, f64>, classes: &[usize]) -> Vec<usize> {
    p.rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            classes[best]
        })
        .collect()
}
