//! Emulator families behind one fit / predict / save interface.
//!
//! [`Emulator::fit`] owns the preprocessing: features are standardized (with
//! decade-spanning columns on a log10 scale) for every family except the
//! trees, which are scale-agnostic and see raw features. GP, kernel ridge and
//! MLP regressors also standardize the target.

pub mod bayes_ridge;
pub mod discriminant;
pub mod ensemble;
pub mod gp;
pub mod kernel;
pub mod linear;
pub mod logistic;
pub mod mlp;
pub mod nb;
pub mod tree;

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{Array1, ArrayView1, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::campaign::{Dataset, Preprocessor, ScaleKind, Target};
use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};

use self::bayes_ridge::{BayesRidgeConfig, BayesRidgeModel};
use self::discriminant::{DiscriminantKind, DiscriminantModel};
use self::ensemble::{AdaBoostConfig, AdaBoostModel, BoostLoss, ForestConfig, ForestModel, GbmConfig, GbmModel};
use self::gp::GpModel;
use self::kernel::KernelRidgeModel;
use self::linear::{LinearConfig, LinearModel, Loss};
use self::logistic::{LogisticConfig, LogisticModel};
use self::mlp::{Activation, MlpConfig, MlpModel, MlpTask};
use self::nb::GaussianNbModel;
use self::tree::{Tree, TreeConfig, TreeTask};

pub const MODEL_MAGIC: &[u8; 4] = b"MXM1";
pub const MODEL_VERSION: u16 = 1;

/// Feature columns put on a log10 scale: v0, aniso_ratio, d_m, t_osc.
pub const LOG_FEATURES: [usize; 4] = [0, 1, 2, 4];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Family {
    Lsqr,
    Ridge,
    Lasso,
    Enet,
    Huber,
    Poly,
    Logistic,
    Kridge,
    BayesRidge,
    Gp,
    Nb,
    Lda,
    Qda,
    Dt,
    Bagging,
    Rf,
    Adaboost,
    DtAdaboost,
    Gbm,
    Mlp,
}

impl Family {
    pub const ALL: [Family; 20] = [
        Family::Lsqr,
        Family::Ridge,
        Family::Lasso,
        Family::Enet,
        Family::Huber,
        Family::Poly,
        Family::Logistic,
        Family::Kridge,
        Family::BayesRidge,
        Family::Gp,
        Family::Nb,
        Family::Lda,
        Family::Qda,
        Family::Dt,
        Family::Bagging,
        Family::Rf,
        Family::Adaboost,
        Family::DtAdaboost,
        Family::Gbm,
        Family::Mlp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Lsqr => "lsqr",
            Family::Ridge => "ridge",
            Family::Lasso => "lasso",
            Family::Enet => "enet",
            Family::Huber => "huber",
            Family::Poly => "poly",
            Family::Logistic => "logistic",
            Family::Kridge => "kridge",
            Family::BayesRidge => "bayes-ridge",
            Family::Gp => "gp",
            Family::Nb => "nb",
            Family::Lda => "lda",
            Family::Qda => "qda",
            Family::Dt => "dt",
            Family::Bagging => "bagging",
            Family::Rf => "rf",
            Family::Adaboost => "adaboost",
            Family::DtAdaboost => "dt-adaboost",
            Family::Gbm => "gbm",
            Family::Mlp => "mlp",
        }
    }

    pub fn names() -> Vec<&'static str> {
        Self::ALL.iter().map(|f| f.name()).collect()
    }

    pub fn from_name(s: &str) -> Result<Family> {
        Self::ALL
            .iter()
            .copied()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown emulator `{s}`; valid names: {}", Self::names().join(", "))))
    }

    fn tag(self) -> u8 {
        Self::ALL.iter().position(|&f| f == self).expect("listed") as u8
    }

    pub fn regresses(self) -> bool {
        !matches!(self, Family::Logistic | Family::Nb | Family::Lda | Family::Qda)
    }

    pub fn classifies(self) -> bool {
        matches!(
            self,
            Family::Logistic | Family::Nb | Family::Lda | Family::Qda | Family::Dt | Family::Bagging | Family::Rf | Family::Mlp
        )
    }

    pub fn supports(self, target: Target) -> bool {
        if target.is_class() {
            self.classifies()
        } else {
            self.regresses()
        }
    }

    fn is_tree(self) -> bool {
        matches!(self, Family::Dt | Family::Bagging | Family::Rf | Family::Adaboost | Family::DtAdaboost | Family::Gbm)
    }

    fn scales_target(self) -> bool {
        matches!(self, Family::Gp | Family::Kridge | Family::Mlp)
    }

    /// Default hyperparameters. Every family also accepts `log_features`.
    pub fn default_params(self) -> Params {
        let v = match self {
            Family::Lsqr => json!({"fit_intercept": true}),
            Family::Ridge => json!({"alpha": 1.0, "max_iter": 50, "fit_intercept": true}),
            Family::Lasso => json!({"alpha": 1e-4, "tol": 1e-3, "max_iter": 1000, "fit_intercept": true}),
            Family::Enet => json!({"alpha": 1e-4, "l1_ratio": 0.5, "tol": 1e-4, "max_iter": 10000, "fit_intercept": true}),
            Family::Huber => json!({"alpha": 1e-4, "epsilon": 1.35, "tol": 1e-4, "max_iter": 50, "fit_intercept": true}),
            Family::Poly => json!({"alpha": 1e-4, "fit_intercept": true}),
            Family::Logistic => json!({"alpha": 1e-4, "tol": 1e-4, "max_iter": 500, "fit_intercept": true}),
            Family::Kridge => json!({"alpha": 1e-4, "lambda": 1.0, "max_rows": kernel::DEFAULT_ROW_CAP}),
            Family::BayesRidge => json!({"max_iter": 100, "tol": 1e-4, "alpha_1": 1e-6, "alpha_2": 1e-6, "lambda_1": 1e-6, "lambda_2": 1e-6}),
            Family::Gp => json!({"kernel": "rbf", "lambda": Value::Null, "length": 1.0, "period": 1.0,
                                 "lambda_grid": [0.01, 0.1, 1.0, 10.0], "noise": 1e-8,
                                 "max_rows": gp::DEFAULT_ROW_CAP, "subsample": Value::Null}),
            Family::Nb => json!({"var_smoothing": 1e-9, "priors": Value::Null}),
            Family::Lda => json!({"tol": 1e-4}),
            Family::Qda => json!({"tol": 1e-4}),
            Family::Dt => json!({"max_depth": Value::Null, "max_features": 5, "min_samples_split": 5, "min_samples_leaf": 1}),
            Family::Bagging => json!({"n_estimators": 100, "bootstrap": true, "max_features": 5, "max_depth": Value::Null,
                                      "min_samples_split": 2, "min_samples_leaf": 1}),
            Family::Rf => json!({"n_estimators": 500, "bootstrap": false, "max_features": 4, "max_depth": Value::Null,
                                 "min_samples_split": 2, "min_samples_leaf": 1}),
            Family::Adaboost => json!({"n_estimators": 100, "loss": "square", "learning_rate": 1.0, "max_depth": 3,
                                       "max_features": Value::Null, "min_samples_split": 2, "min_samples_leaf": 1}),
            Family::DtAdaboost => json!({"n_estimators": 100, "loss": "square", "learning_rate": 1.0, "max_depth": Value::Null,
                                         "max_features": Value::Null, "min_samples_split": 2, "min_samples_leaf": 1}),
            Family::Gbm => json!({"n_estimators": 100, "learning_rate": 0.1, "subsample": 0.5, "max_depth": 3,
                                  "max_features": Value::Null, "min_samples_split": 2, "min_samples_leaf": 1}),
            Family::Mlp => json!({"hidden": [200], "activation": "relu", "alpha": 1e-4, "learning_rate": 1e-3,
                                  "max_iter": 200, "batch_size": 256, "tol": 1e-4, "n_iter_no_change": 10}),
        };
        let mut p = Params(serde_json::from_value(v).expect("static defaults"));
        p.0.insert("log_features".into(), Value::Bool(!self.is_tree()));
        p
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Hyperparameters as an ordered JSON map.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Params(pub BTreeMap<String, Value>);

impl Params {
    /// Defaults for `family` patched with `overrides`; unknown keys are an error.
    pub fn for_family(family: Family, overrides: &serde_json::Map<String, Value>) -> Result<Params> {
        let mut p = family.default_params();
        for (k, v) in overrides {
            if !p.0.contains_key(k) {
                let known: Vec<&str> = p.0.keys().map(String::as_str).collect();
                return Err(Error::Config(format!("{family} has no parameter `{k}` (known: {})", known.join(", "))));
            }
            p.0.insert(k.clone(), v.clone());
        }
        Ok(p)
    }

    pub fn to_json(&self) -> Value {
        Value::Object(self.0.clone().into_iter().collect())
    }

    fn raw(&self, key: &str) -> Result<&Value> {
        self.0.get(key).ok_or_else(|| Error::Config(format!("missing parameter `{key}`")))
    }

    fn bad(key: &str, want: &str, v: &Value) -> Error {
        Error::Config(format!("parameter `{key}` should be {want}, got {v}"))
    }

    pub fn f64(&self, key: &str) -> Result<f64> {
        let v = self.raw(key)?;
        v.as_f64().ok_or_else(|| Self::bad(key, "a number", v))
    }

    pub fn usize(&self, key: &str) -> Result<usize> {
        let v = self.raw(key)?;
        match v.as_u64() {
            Some(n) => Ok(n as usize),
            // Accept whole floats such as 1e4.
            None => match v.as_f64() {
                Some(f) if f >= 0.0 && f.fract() == 0.0 => Ok(f as usize),
                _ => Err(Self::bad(key, "a non-negative integer", v)),
            },
        }
    }

    pub fn opt_usize(&self, key: &str) -> Result<Option<usize>> {
        if self.raw(key)?.is_null() {
            Ok(None)
        } else {
            self.usize(key).map(Some)
        }
    }

    pub fn opt_f64(&self, key: &str) -> Result<Option<f64>> {
        if self.raw(key)?.is_null() {
            Ok(None)
        } else {
            self.f64(key).map(Some)
        }
    }

    pub fn bool(&self, key: &str) -> Result<bool> {
        let v = self.raw(key)?;
        v.as_bool().ok_or_else(|| Self::bad(key, "a boolean", v))
    }

    pub fn str(&self, key: &str) -> Result<&str> {
        let v = self.raw(key)?;
        v.as_str().ok_or_else(|| Self::bad(key, "a string", v))
    }

    pub fn f64_list(&self, key: &str) -> Result<Vec<f64>> {
        let v = self.raw(key)?;
        v.as_array()
            .and_then(|a| a.iter().map(Value::as_f64).collect())
            .ok_or_else(|| Self::bad(key, "a list of numbers", v))
    }

    pub fn usize_list(&self, key: &str) -> Result<Vec<usize>> {
        let v = self.raw(key)?;
        v.as_array()
            .and_then(|a| a.iter().map(|x| x.as_u64().map(|n| n as usize)).collect())
            .ok_or_else(|| Self::bad(key, "a list of integers", v))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Linear(LinearModel),
    Logistic(LogisticModel),
    KernelRidge(KernelRidgeModel),
    BayesRidge(BayesRidgeModel),
    Gp(GpModel),
    Nb(GaussianNbModel),
    Discriminant(DiscriminantModel),
    Tree(Tree),
    Forest(ForestModel),
    AdaBoost(AdaBoostModel),
    Gbm(GbmModel),
    Mlp(MlpModel),
}

/// A fitted emulator: preprocessing, target scaling and the family's model.
#[derive(Debug, Clone, PartialEq)]
pub struct Emulator {
    pub family: Family,
    pub params: Params,
    pub target: Target,
    pub seed: u64,
    pub preprocessor: Preprocessor,
    /// `(mean, stdev)` of the training target when the family works on a scaled target.
    pub target_scale: Option<(f64, f64)>,
    /// Class labels in position order (tree and network classifiers).
    pub classes: Vec<usize>,
    pub model: Model,
}

fn tree_config(p: &Params, task: TreeTask, seed: u64) -> Result<TreeConfig> {
    Ok(TreeConfig {
        max_depth: p.opt_usize("max_depth")?,
        max_features: p.opt_usize("max_features")?,
        min_samples_split: p.usize("min_samples_split")?,
        min_samples_leaf: p.usize("min_samples_leaf")?,
        task,
        seed,
    })
}

fn boost_loss(s: &str) -> Result<BoostLoss> {
    match s {
        "linear" => Ok(BoostLoss::Linear),
        "square" => Ok(BoostLoss::Square),
        "exponential" => Ok(BoostLoss::Exponential),
        _ => Err(Error::Config(format!("unknown boosting loss `{s}` (linear, square, exponential)"))),
    }
}

fn activation(s: &str) -> Result<Activation> {
    match s {
        "relu" => Ok(Activation::Relu),
        "tanh" => Ok(Activation::Tanh),
        "logistic" => Ok(Activation::Logistic),
        "identity" => Ok(Activation::Identity),
        _ => Err(Error::Config(format!("unknown activation `{s}` (relu, tanh, logistic, identity)"))),
    }
}

fn class_labels(y: ArrayView1<'_, f64>) -> Result<Vec<usize>> {
    y.iter()
        .map(|&v| {
            if v >= 0.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::invalid(format!("class label {v} is not a non-negative integer")))
            }
        })
        .collect()
}

impl Emulator {
    /// Fits `family` on raw features `x` (dataset column order) and target `y`.
    pub fn fit(family: Family, params: Params, target: Target, x: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>, seed: u64) -> Result<Emulator> {
        if !family.supports(target) {
            return Err(Error::invalid(format!(
                "{family} cannot fit {} ({})",
                target.name(),
                if target.is_class() { "classification target" } else { "regression target" }
            )));
        }
        if x.nrows() != y.len() {
            return Err(Error::invalid(format!("{} rows but {} labels", x.nrows(), y.len())));
        }
        if x.nrows() == 0 {
            return Err(Error::EmptyDataset("no training rows".into()));
        }
        let kind = if family.is_tree() { ScaleKind::Identity } else { ScaleKind::Standardize };
        let mut pre = Preprocessor::new(kind);
        if params.bool("log_features")? {
            pre = pre.with_log10(&LOG_FEATURES.iter().copied().filter(|&j| j < x.ncols()).collect::<Vec<_>>());
        }
        let xt = pre.fit_transform(x)?;
        let xt = xt.view();

        let target_scale = if family.scales_target() && !target.is_class() {
            let mean = y.mean().expect("non-empty");
            let sd = y.std(0.0);
            Some((mean, if sd > 1e-12 { sd } else { 1.0 }))
        } else {
            None
        };
        let ys: Array1<f64> = match target_scale {
            Some((m, s)) => y.mapv(|v| (v - m) / s),
            None => y.to_owned(),
        };
        let ys = ys.view();

        let mut classes = vec![];
        let positions = |classes: &mut Vec<usize>| -> Result<Array1<f64>> {
            let labels = class_labels(y)?;
            let mut c = labels.clone();
            c.sort_unstable();
            c.dedup();
            *classes = c;
            Ok(labels.iter().map(|l| classes.binary_search(l).expect("present") as f64).collect())
        };

        let p = &params;
        let model = match family {
            Family::Lsqr => Model::Linear(linear::fit_linear(xt, ys, &LinearConfig { fit_intercept: p.bool("fit_intercept")?, ..LinearConfig::ols() })?),
            Family::Ridge => Model::Linear(linear::fit_linear(
                xt,
                ys,
                &LinearConfig { max_iter: p.usize("max_iter")?, fit_intercept: p.bool("fit_intercept")?, ..LinearConfig::ridge(p.f64("alpha")?) },
            )?),
            Family::Lasso => Model::Linear(linear::fit_linear(
                xt,
                ys,
                &LinearConfig {
                    max_iter: p.usize("max_iter")?,
                    tol: p.f64("tol")?,
                    fit_intercept: p.bool("fit_intercept")?,
                    ..LinearConfig::lasso(p.f64("alpha")?)
                },
            )?),
            Family::Enet => Model::Linear(linear::fit_linear(
                xt,
                ys,
                &LinearConfig {
                    max_iter: p.usize("max_iter")?,
                    tol: p.f64("tol")?,
                    fit_intercept: p.bool("fit_intercept")?,
                    ..LinearConfig::elastic_net(p.f64("alpha")?, p.f64("l1_ratio")?)
                },
            )?),
            Family::Huber => Model::Linear(linear::fit_linear(
                xt,
                ys,
                &LinearConfig {
                    max_iter: p.usize("max_iter")?,
                    tol: p.f64("tol")?,
                    fit_intercept: p.bool("fit_intercept")?,
                    ..LinearConfig::huber(p.f64("epsilon")?, p.f64("alpha")?)
                },
            )?),
            Family::Poly => Model::Linear(linear::fit_polynomial(
                xt,
                ys,
                &LinearConfig { loss: Loss::Squared, fit_intercept: p.bool("fit_intercept")?, ..LinearConfig::ridge(p.f64("alpha")?) },
            )?),
            Family::Logistic => Model::Logistic(logistic::fit_logistic(
                xt,
                &class_labels(y)?,
                &LogisticConfig { alpha: p.f64("alpha")?, max_iter: p.usize("max_iter")?, tol: p.f64("tol")?, fit_intercept: p.bool("fit_intercept")? },
            )?),
            Family::Kridge => Model::KernelRidge(kernel::fit_kernel_ridge(xt, ys, p.f64("alpha")?, p.f64("lambda")?, p.usize("max_rows")?)?),
            Family::BayesRidge => Model::BayesRidge(bayes_ridge::fit_bayes_ridge(
                xt,
                ys,
                &BayesRidgeConfig {
                    max_iter: p.usize("max_iter")?,
                    tol: p.f64("tol")?,
                    noise_prior: (p.f64("alpha_1")?, p.f64("alpha_2")?),
                    weight_prior: (p.f64("lambda_1")?, p.f64("lambda_2")?),
                },
            )?),
            Family::Gp => {
                // Optional seeded row subsample keeps the dense kernel within reach.
                let rows: Vec<usize> = match p.opt_usize("subsample")? {
                    Some(k) if k < xt.nrows() => {
                        let mut rng = ChaCha8Rng::seed_from_u64(seed);
                        let mut r = rand::seq::index::sample(&mut rng, xt.nrows(), k).into_vec();
                        r.sort_unstable();
                        r
                    }
                    _ => (0..xt.nrows()).collect(),
                };
                let xs = xt.select(Axis(0), &rows);
                let yv: Array1<f64> = rows.iter().map(|&i| ys[i]).collect();
                let (noise, cap) = (p.f64("noise")?, p.usize("max_rows")?);
                let model = match p.str("kernel")? {
                    "rbf" => match p.opt_f64("lambda")? {
                        Some(lambda) => gp::fit_gp(xs.view(), yv.view(), gp::Kernel::Rbf { lambda }, noise, cap)?,
                        None => gp::fit_gp_tuned(xs.view(), yv.view(), &p.f64_list("lambda_grid")?, noise, cap)?,
                    },
                    "exp_sine_squared" => gp::fit_gp(
                        xs.view(),
                        yv.view(),
                        gp::Kernel::ExpSineSquared { length: p.f64("length")?, period: p.f64("period")? },
                        noise,
                        cap,
                    )?,
                    other => return Err(Error::Config(format!("unknown GP kernel `{other}` (rbf, exp_sine_squared)"))),
                };
                Model::Gp(model)
            }
            Family::Nb => {
                let labels = class_labels(y)?;
                let mut cls = labels.clone();
                cls.sort_unstable();
                cls.dedup();
                let priors = match p.raw("priors")? {
                    Value::Null => None,
                    _ => Some(p.f64_list("priors")?),
                };
                let mut m = GaussianNbModel::new(&cls, xt.ncols(), p.f64("var_smoothing")?, priors)?;
                m.partial_fit(xt, &labels)?;
                Model::Nb(m)
            }
            Family::Lda | Family::Qda => {
                let kind = if family == Family::Lda { DiscriminantKind::Lda } else { DiscriminantKind::Qda };
                Model::Discriminant(discriminant::fit_discriminant(xt, &class_labels(y)?, kind, p.f64("tol")?)?)
            }
            Family::Dt | Family::Bagging | Family::Rf => {
                let (task, yy) = if target.is_class() {
                    let pos = positions(&mut classes)?;
                    (TreeTask::Classification { n_classes: classes.len() }, pos)
                } else {
                    (TreeTask::Regression, ys.to_owned())
                };
                if family == Family::Dt {
                    Model::Tree(tree::fit_tree(xt, yy.view(), &tree_config(p, task, seed)?)?)
                } else {
                    let cfg = ForestConfig {
                        n_estimators: p.usize("n_estimators")?,
                        bootstrap: p.bool("bootstrap")?,
                        tree: tree_config(p, task, seed)?,
                        seed,
                    };
                    Model::Forest(ensemble::fit_forest(xt, yy.view(), &cfg)?)
                }
            }
            Family::Adaboost | Family::DtAdaboost => Model::AdaBoost(ensemble::fit_adaboost(
                xt,
                ys,
                &AdaBoostConfig {
                    n_estimators: p.usize("n_estimators")?,
                    learning_rate: p.f64("learning_rate")?,
                    loss: boost_loss(p.str("loss")?)?,
                    tree: tree_config(p, TreeTask::Regression, seed)?,
                    seed,
                },
            )?),
            Family::Gbm => Model::Gbm(ensemble::fit_gbm(
                xt,
                ys,
                &GbmConfig {
                    n_estimators: p.usize("n_estimators")?,
                    learning_rate: p.f64("learning_rate")?,
                    subsample: p.f64("subsample")?,
                    tree: tree_config(p, TreeTask::Regression, seed)?,
                    seed,
                },
            )?),
            Family::Mlp => {
                let cfg = MlpConfig {
                    hidden: p.usize_list("hidden")?,
                    activation: activation(p.str("activation")?)?,
                    alpha: p.f64("alpha")?,
                    learning_rate: p.f64("learning_rate")?,
                    max_iter: p.usize("max_iter")?,
                    batch_size: p.usize("batch_size")?,
                    tol: p.f64("tol")?,
                    n_iter_no_change: p.usize("n_iter_no_change")?,
                    seed,
                    ..MlpConfig::default()
                };
                let (task, yy) = if target.is_class() {
                    let pos = positions(&mut classes)?;
                    (MlpTask::Classification { n_classes: classes.len() }, pos)
                } else {
                    (MlpTask::Regression, ys.to_owned())
                };
                Model::Mlp(mlp::fit_mlp(xt, yy.as_slice().expect("contiguous"), task, &cfg)?)
            }
        };
        Ok(Emulator { family, params, target, seed, preprocessor: pre, target_scale, classes, model })
    }

    pub fn n_features(&self) -> usize {
        self.preprocessor.input_width()
    }

    /// Predicted values, or predicted class labels as floats.
    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        let xt = self.preprocessor.transform(x)?;
        let xt = xt.view();
        let as_f64 = |v: Vec<usize>| v.into_iter().map(|c| c as f64).collect::<Array1<f64>>();
        let raw = match &self.model {
            Model::Linear(m) => m.predict(xt)?,
            Model::Logistic(m) => as_f64(m.predict(xt)?),
            Model::KernelRidge(m) => m.predict(xt)?,
            Model::BayesRidge(m) => m.predict(xt)?,
            Model::Gp(m) => m.predict(xt)?,
            Model::Nb(m) => as_f64(m.predict(xt)?),
            Model::Discriminant(m) => as_f64(m.predict(xt)?),
            Model::Tree(m) => m.predict(xt)?,
            Model::Forest(m) => m.predict(xt)?,
            Model::AdaBoost(m) => m.predict(xt)?,
            Model::Gbm(m) => m.predict(xt)?,
            Model::Mlp(m) => m.predict(xt)?,
        };
        if !self.classes.is_empty() {
            return Ok(raw.mapv(|p| self.classes[p as usize] as f64));
        }
        Ok(match self.target_scale {
            Some((m, s)) => raw.mapv(|v| v * s + m),
            None => raw,
        })
    }

    /// R² for series targets, accuracy for the class target.
    pub fn score(&self, data: &Dataset) -> Result<f64> {
        let pred = self.predict(data.features.view())?;
        let truth = data.labels(self.target);
        if self.target.is_class() {
            crate::metrics::accuracy(truth.as_slice().expect("contiguous"), pred.as_slice().expect("contiguous"))
        } else {
            crate::metrics::r2_score(truth.as_slice().expect("contiguous"), pred.as_slice().expect("contiguous"))
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.bytes(MODEL_MAGIC);
        w.u16(MODEL_VERSION);
        w.u8(self.family.tag());
        w.str(self.target.name());
        w.u64(self.seed);
        w.str(&serde_json::to_string(&self.params.to_json()).expect("json"));
        self.preprocessor.encode(&mut w);
        match self.target_scale {
            Some((m, s)) => {
                w.bool(true);
                w.f64(m);
                w.f64(s);
            }
            None => w.bool(false),
        }
        w.usizes(&self.classes);
        match &self.model {
            Model::Linear(m) => m.encode(&mut w),
            Model::Logistic(m) => m.encode(&mut w),
            Model::KernelRidge(m) => m.encode(&mut w),
            Model::BayesRidge(m) => m.encode(&mut w),
            Model::Gp(m) => m.encode(&mut w),
            Model::Nb(m) => m.encode(&mut w),
            Model::Discriminant(m) => m.encode(&mut w),
            Model::Tree(m) => m.encode(&mut w),
            Model::Forest(m) => m.encode(&mut w),
            Model::AdaBoost(m) => m.encode(&mut w),
            Model::Gbm(m) => m.encode(&mut w),
            Model::Mlp(m) => m.encode(&mut w),
        }
        w.into_bytes()
    }

    pub fn from_bytes(buf: &[u8], origin: &Path) -> Result<Emulator> {
        let mut r = Reader::new(buf, origin);
        r.expect_magic(MODEL_MAGIC)?;
        let version = r.u16()?;
        if version != MODEL_VERSION {
            return Err(r.fail(format!("unsupported model version {version}")));
        }
        let tag = r.u8()?;
        let family = *Family::ALL.get(tag as usize).ok_or_else(|| r.fail(format!("unknown family tag {tag}")))?;
        let tname = r.str()?;
        let target = Target::from_name(&tname).ok_or_else(|| r.fail(format!("unknown target `{tname}`")))?;
        let seed = r.u64()?;
        let pjson: Value = serde_json::from_str(&r.str()?).map_err(|e| r.fail(format!("parameters: {e}")))?;
        let params = Params(serde_json::from_value(pjson).map_err(|e| r.fail(format!("parameters: {e}")))?);
        let preprocessor = Preprocessor::decode(&mut r)?;
        let target_scale = if r.bool()? { Some((r.f64()?, r.f64()?)) } else { None };
        let classes = r.usizes()?;
        let model = match family {
            Family::Lsqr | Family::Ridge | Family::Lasso | Family::Enet | Family::Huber | Family::Poly => Model::Linear(LinearModel::decode(&mut r)?),
            Family::Logistic => Model::Logistic(LogisticModel::decode(&mut r)?),
            Family::Kridge => Model::KernelRidge(KernelRidgeModel::decode(&mut r)?),
            Family::BayesRidge => Model::BayesRidge(BayesRidgeModel::decode(&mut r)?),
            Family::Gp => Model::Gp(GpModel::decode(&mut r)?),
            Family::Nb => Model::Nb(GaussianNbModel::decode(&mut r)?),
            Family::Lda | Family::Qda => Model::Discriminant(DiscriminantModel::decode(&mut r)?),
            Family::Dt => Model::Tree(Tree::decode(&mut r)?),
            Family::Bagging | Family::Rf => Model::Forest(ForestModel::decode(&mut r)?),
            Family::Adaboost | Family::DtAdaboost => Model::AdaBoost(AdaBoostModel::decode(&mut r)?),
            Family::Gbm => Model::Gbm(GbmModel::decode(&mut r)?),
            Family::Mlp => Model::Mlp(MlpModel::decode(&mut r)?),
        };
        r.finish()?;
        Ok(Emulator { family, params, target, seed, preprocessor, target_scale, classes, model })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::codec::write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Emulator> {
        let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&buf, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn toy(n: usize) -> (Array2<f64>, Array1<f64>, Array1<f64>) {
        let x = Array2::from_shape_fn((n, 6), |(i, j)| match j {
            0 => [1.0, 0.1, 0.01][i % 3],
            1 => [1.0, 100.0][(i / 3) % 2],
            2 => [1e-3, 1e-1][(i / 6) % 2],
            3 => (1 + i % 2) as f64,
            4 => [1e-4, 3e-4][(i / 12) % 2],
            _ => (i % 11) as f64 / 10.0,
        });
        let y = x.rows().into_iter().map(|r| r[0].log10() + 0.3 * r[5] * r[5] + 0.1 * r[3]).collect();
        let c = x.rows().into_iter().map(|r| if r[5] < 0.5 { 1.0 } else { 3.0 }).collect();
        (x, y, c)
    }

    #[test]
    fn names_round_trip_and_unknown_lists_valid() {
        for f in Family::ALL {
            assert_eq!(Family::from_name(f.name()).unwrap(), f);
        }
        let msg = Family::from_name("svm").unwrap_err().to_string();
        assert!(msg.contains("dt-adaboost") && msg.contains("lsqr"));
    }

    #[test]
    fn unknown_parameter_rejected() {
        let mut o = serde_json::Map::new();
        o.insert("depth".into(), json!(3));
        assert!(Params::for_family(Family::Rf, &o).is_err());
    }

    #[test]
    fn every_family_fits_saves_and_reloads() {
        let (x, y, c) = toy(66);
        let dir = tempfile::tempdir().unwrap();
        for f in Family::ALL {
            let mut o = serde_json::Map::new();
            if f.is_tree() && f != Family::Dt {
                o.insert("n_estimators".into(), json!(5));
            }
            if f == Family::Mlp {
                o.insert("max_iter".into(), json!(5));
            }
            let params = Params::for_family(f, &o).unwrap();
            let (target, labels) = if f.regresses() { (Target::CbarA, &y) } else { (Target::ClassC, &c) };
            let e = Emulator::fit(f, params, target, x.view(), labels.view(), 7).unwrap_or_else(|err| panic!("{f}: {err}"));
            let p = e.predict(x.view()).unwrap();
            assert!(p.iter().all(|v| v.is_finite()), "{f}");
            if target.is_class() {
                assert!(p.iter().all(|&v| v == 1.0 || v == 3.0), "{f}");
            }
            let path = dir.path().join(format!("{f}.mxm"));
            e.save(&path).unwrap();
            let back = Emulator::load(&path).unwrap();
            assert_eq!(back.predict(x.view()).unwrap(), p, "{f}");
            assert_eq!(back.to_bytes(), e.to_bytes(), "{f}");
        }
    }

    #[test]
    fn family_target_mismatch_is_rejected() {
        let (x, y, _) = toy(20);
        let p = Family::Lda.default_params();
        assert!(Emulator::fit(Family::Lda, p, Target::VarC, x.view(), y.view(), 0).is_err());
    }

    #[test]
    fn corrupt_file_is_a_format_error() {
        let (x, y, _) = toy(20);
        let e = Emulator::fit(Family::Ridge, Family::Ridge.default_params(), Target::CbarA, x.view(), y.view(), 0).unwrap();
        let mut b = e.to_bytes();
        b.truncate(b.len() - 3);
        assert!(matches!(Emulator::from_bytes(&b, Path::new("m")), Err(Error::Format { .. })));
        b[0] = b'X';
        assert!(matches!(Emulator::from_bytes(&b, Path::new("m")), Err(Error::Format { .. })));
    }
}
