//! Fully connected networks trained with mini-batch Adam.
//!
//! Regression minimizes `‖ŷ − y‖²/(2b) + α‖W‖²/(2b)` over a batch of `b`
//! rows; classification replaces the first term by mean softmax cross-entropy.
//! Biases are not penalized.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codec::{Reader, Writer};
use crate::emu::logistic::softmax_rows;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Logistic,
    Identity,
}

impl Activation {
    fn tag(self) -> u8 {
        self as u8
    }

    fn from_tag(t: u8) -> Option<Self> {
        [Activation::Relu, Activation::Tanh, Activation::Logistic, Activation::Identity].get(t as usize).copied()
    }

    fn apply(self, z: &mut Array2<f64>) {
        match self {
            Activation::Relu => z.mapv_inplace(|v| v.max(0.0)),
            Activation::Tanh => z.mapv_inplace(f64::tanh),
            Activation::Logistic => z.mapv_inplace(|v| 1.0 / (1.0 + (-v).exp())),
            Activation::Identity => {}
        }
    }

    /// Multiplies `delta` by the derivative, expressed through the activation output `a`.
    fn backprop(self, delta: &mut Array2<f64>, a: &Array2<f64>) {
        match self {
            Activation::Relu => Zip::from(delta).and(a).for_each(|d, &a| {
                if a <= 0.0 {
                    *d = 0.0
                }
            }),
            Activation::Tanh => Zip::from(delta).and(a).for_each(|d, &a| *d *= 1.0 - a * a),
            Activation::Logistic => Zip::from(delta).and(a).for_each(|d, &a| *d *= a * (1.0 - a)),
            Activation::Identity => {}
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MlpTask {
    Regression,
    Classification { n_classes: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub alpha: f64,
    pub learning_rate: f64,
    /// Epochs.
    pub max_iter: usize,
    pub batch_size: usize,
    pub tol: f64,
    pub n_iter_no_change: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig {
            hidden: vec![200],
            activation: Activation::Relu,
            alpha: 1e-4,
            learning_rate: 1e-3,
            max_iter: 200,
            batch_size: 256,
            tol: 1e-4,
            n_iter_no_change: 10,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
        }
    }
}

impl MlpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden.iter().any(|&h| h == 0) {
            return Err(Error::invalid("hidden layers need at least one unit"));
        }
        if !(self.alpha >= 0.0 && self.learning_rate > 0.0 && self.tol >= 0.0) {
            return Err(Error::invalid("alpha >= 0, learning_rate > 0 and tol >= 0 required"));
        }
        if self.max_iter == 0 || self.batch_size == 0 || self.n_iter_no_change == 0 {
            return Err(Error::invalid("max_iter, batch_size and n_iter_no_change must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.epsilon > 0.0) {
            return Err(Error::invalid("Adam needs beta in [0, 1) and epsilon > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub task: MlpTask,
    pub activation: Activation,
    /// Layer `l` maps `weights[l].nrows()` inputs to `weights[l].ncols()` outputs.
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
    /// Mean training loss per epoch.
    pub loss_curve: Vec<f64>,
}

/// Targets in the shape the loss expects: one column for regression, one-hot rows for classes.
fn target_matrix(task: MlpTask, y: &[f64]) -> Result<Array2<f64>> {
    match task {
        MlpTask::Regression => Ok(Array2::from_shape_vec((y.len(), 1), y.to_vec()).expect("shape")),
        MlpTask::Classification { n_classes } => {
            let mut t = Array2::zeros((y.len(), n_classes));
            for (i, &c) in y.iter().enumerate() {
                if c < 0.0 || c.fract() != 0.0 || c as usize >= n_classes {
                    return Err(Error::invalid(format!("class position {c} outside 0..{n_classes}")));
                }
                t[[i, c as usize]] = 1.0;
            }
            Ok(t)
        }
    }
}

impl MlpModel {
    /// Glorot-uniform weights `±√(g/(fan_in + fan_out))`, `g = 2` for logistic units and 6 otherwise; zero biases.
    pub fn init(n_in: usize, cfg: &MlpConfig, task: MlpTask, rng: &mut impl Rng) -> Self {
        let n_out = match task {
            MlpTask::Regression => 1,
            MlpTask::Classification { n_classes } => n_classes,
        };
        let mut sizes = vec![n_in];
        sizes.extend(&cfg.hidden);
        sizes.push(n_out);
        let gain = if cfg.activation == Activation::Logistic { 2.0 } else { 6.0 };
        let mut weights = vec![];
        let mut biases = vec![];
        for w in sizes.windows(2) {
            let bound = (gain / (w[0] + w[1]) as f64).sqrt();
            weights.push(Array2::from_shape_fn((w[0], w[1]), |_| rng.gen_range(-bound..bound)));
            biases.push(Array1::zeros(w[1]));
        }
        MlpModel { task, activation: cfg.activation, weights, biases, loss_curve: vec![] }
    }

    pub fn n_features(&self) -> usize {
        self.weights[0].nrows()
    }

    /// Activations of every layer, input first; the last entry is the raw output layer.
    fn forward(&self, x: ArrayView2<'_, f64>) -> Vec<Array2<f64>> {
        let mut acts = vec![x.to_owned()];
        let last = self.weights.len() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = acts[l].dot(w) + b;
            if l < last {
                self.activation.apply(&mut z);
            }
            acts.push(z);
        }
        acts
    }

    /// Batch loss and gradients (weights, then biases per layer).
    pub fn loss_and_gradients(&self, x: ArrayView2<'_, f64>, y: &[f64], alpha: f64) -> Result<(f64, Vec<Array2<f64>>, Vec<Array1<f64>>)> {
        if x.ncols() != self.n_features() || x.nrows() != y.len() || y.is_empty() {
            return Err(Error::invalid("batch shape does not match the network"));
        }
        let t = target_matrix(self.task, y)?;
        let b = x.nrows() as f64;
        let mut acts = self.forward(x);
        let out = acts.pop().expect("output layer");
        let (data_loss, mut delta) = match self.task {
            MlpTask::Regression => {
                let r = &out - &t;
                (r.mapv(|v| v * v).sum() / (2.0 * b), r / b)
            }
            MlpTask::Classification { .. } => {
                let mut p = out;
                softmax_rows(&mut p);
                let ce: f64 = Zip::from(&p).and(&t).fold(0.0, |acc, &p, &t| if t > 0.0 { acc - p.max(1e-300).ln() } else { acc });
                (ce / b, (p - &t) / b)
            }
        };
        let penalty: f64 = self.weights.iter().map(|w| w.mapv(|v| v * v).sum()).sum::<f64>() * alpha / (2.0 * b);
        let n_layers = self.weights.len();
        let mut gw = vec![Array2::zeros((0, 0)); n_layers];
        let mut gb = vec![Array1::zeros(0); n_layers];
        for l in (0..n_layers).rev() {
            gw[l] = acts[l].t().dot(&delta) + &(&self.weights[l] * (alpha / b));
            gb[l] = delta.sum_axis(Axis(0));
            if l > 0 {
                let mut next = delta.dot(&self.weights[l].t());
                self.activation.backprop(&mut next, &acts[l]);
                delta = next;
            }
        }
        Ok((data_loss + penalty, gw, gb))
    }

    /// Raw network output: regression values, or class probabilities.
    pub fn output(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.n_features() {
            return Err(Error::invalid(format!("expected {} features, got {}", self.n_features(), x.ncols())));
        }
        let mut out = self.forward(x).pop().expect("output layer");
        if let MlpTask::Classification { .. } = self.task {
            softmax_rows(&mut out);
        }
        Ok(out)
    }

    /// Regression values, or the most probable class position.
    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        let out = self.output(x)?;
        Ok(match self.task {
            MlpTask::Regression => out.column(0).to_owned(),
            MlpTask::Classification { .. } => out
                .rows()
                .into_iter()
                .map(|r| {
                    let mut best = 0;
                    for (i, &v) in r.iter().enumerate() {
                        if v > r[best] {
                            best = i;
                        }
                    }
                    best as f64
                })
                .collect(),
        })
    }

    pub(crate) fn encode(&self, w: &mut Writer) {
        match self.task {
            MlpTask::Regression => w.usize(0),
            MlpTask::Classification { n_classes } => w.usize(n_classes),
        }
        w.u8(self.activation.tag());
        w.usize(self.weights.len());
        for (wt, b) in self.weights.iter().zip(&self.biases) {
            w.usize(wt.nrows());
            w.usize(wt.ncols());
            w.f64s_raw(wt.iter().copied());
            w.f64s_raw(b.iter().copied());
        }
        w.f64s(&self.loss_curve);
    }

    pub(crate) fn decode(r: &mut Reader<'_>) -> Result<Self> {
        let task = match r.usize()? {
            0 => MlpTask::Regression,
            k => MlpTask::Classification { n_classes: k },
        };
        let activation = Activation::from_tag(r.u8()?).ok_or_else(|| r.fail("unknown activation"))?;
        let n_layers = r.usize()?;
        if n_layers == 0 {
            return Err(r.fail("network without layers"));
        }
        let mut weights = vec![];
        let mut biases = vec![];
        for _ in 0..n_layers {
            let (rows, cols) = (r.usize()?, r.usize()?);
            let w = r.f64s_raw(rows * cols)?;
            weights.push(Array2::from_shape_vec((rows, cols), w).map_err(|e| r.fail(e.to_string()))?);
            biases.push(Array1::from(r.f64s_raw(cols)?));
        }
        if weights.windows(2).any(|p| p[0].ncols() != p[1].nrows()) {
            return Err(r.fail("layer sizes do not chain"));
        }
        let loss_curve = r.f64s()?;
        Ok(MlpModel { task, activation, weights, biases, loss_curve })
    }
}

struct Adam {
    m_w: Vec<Array2<f64>>,
    v_w: Vec<Array2<f64>>,
    m_b: Vec<Array1<f64>>,
    v_b: Vec<Array1<f64>>,
    t: i32,
}

impl Adam {
    fn new(model: &MlpModel) -> Self {
        Adam {
            m_w: model.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            v_w: model.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            m_b: model.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
            v_b: model.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
            t: 0,
        }
    }

    fn step(&mut self, model: &mut MlpModel, gw: &[Array2<f64>], gb: &[Array1<f64>], cfg: &MlpConfig) {
        self.t += 1;
        let (b1, b2, eps) = (cfg.beta1, cfg.beta2, cfg.epsilon);
        let lr = cfg.learning_rate * (1.0 - b2.powi(self.t)).sqrt() / (1.0 - b1.powi(self.t));
        for l in 0..model.weights.len() {
            Zip::from(&mut model.weights[l]).and(&mut self.m_w[l]).and(&mut self.v_w[l]).and(&gw[l]).for_each(|p, m, v, &g| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *p -= lr * *m / (v.sqrt() + eps);
            });
            Zip::from(&mut model.biases[l]).and(&mut self.m_b[l]).and(&mut self.v_b[l]).and(&gb[l]).for_each(|p, m, v, &g| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *p -= lr * *m / (v.sqrt() + eps);
            });
        }
    }
}

/// Trains from a seeded initialization. Stops after `n_iter_no_change`
/// consecutive epochs whose loss fails to beat the best by `tol`.
pub fn fit_mlp(x: ArrayView2<'_, f64>, y: &[f64], task: MlpTask, cfg: &MlpConfig) -> Result<MlpModel> {
    cfg.validate()?;
    let n = x.nrows();
    if n == 0 {
        return Err(Error::EmptyDataset("network fit on zero rows".into()));
    }
    if n != y.len() {
        return Err(Error::invalid(format!("{n} rows but {} targets", y.len())));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite training input"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = MlpModel::init(x.ncols(), cfg, task, &mut rng);
    let mut adam = Adam::new(&model);
    let batch = cfg.batch_size.min(n);
    let mut order: Vec<usize> = (0..n).collect();
    let mut best = f64::INFINITY;
    let mut stale = 0;
    for epoch in 0..cfg.max_iter {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(batch) {
            let xb = x.select(Axis(0), chunk);
            let yb: Vec<f64> = chunk.iter().map(|&i| y[i]).collect();
            let (loss, gw, gb) = model.loss_and_gradients(xb.view(), &yb, cfg.alpha)?;
            if !loss.is_finite() {
                return Err(Error::TrainingDiverged(epoch + 1));
            }
            total += loss * chunk.len() as f64;
            adam.step(&mut model, &gw, &gb, cfg);
        }
        let loss = total / n as f64;
        if !loss.is_finite() || model.weights.iter().any(|w| w.iter().any(|v| !v.is_finite())) {
            return Err(Error::TrainingDiverged(epoch + 1));
        }
        model.loss_curve.push(loss);
        if loss > best - cfg.tol {
            stale += 1;
        } else {
            stale = 0;
        }
        best = best.min(loss);
        if stale >= cfg.n_iter_no_change {
            log::debug!("mlp stopped after {} epochs (loss {loss:.3e})", epoch + 1);
            break;
        }
    }
    Ok(model)
}

/// All trainable parameters flattened in layer order (weights row-major, then biases).
pub fn flatten_params(model: &MlpModel) -> Vec<f64> {
    let mut out = vec![];
    for (w, b) in model.weights.iter().zip(&model.biases) {
        out.extend(w.iter());
        out.extend(b.iter());
    }
    out
}

/// Inverse of [`flatten_params`] into an existing architecture.
pub fn set_params(model: &mut MlpModel, theta: &[f64]) {
    let mut k = 0;
    for l in 0..model.weights.len() {
        for v in model.weights[l].iter_mut() {
            *v = theta[k];
            k += 1;
        }
        for v in model.biases[l].iter_mut() {
            *v = theta[k];
            k += 1;
        }
    }
}
