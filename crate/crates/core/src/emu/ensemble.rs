//! Tree ensembles: bagging / random forests, AdaBoost.R2 and gradient boosting.
//!
//! Every fit starts from the canonical row order, and each member draws from
//! its own ChaCha stream of the ensemble seed, so a fit depends on the seed and
//! the data but not on row order or thread count.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::{Reader, Writer};
use crate::emu::tree::{canonical_order, fit_tree_weighted, Tree, TreeConfig, TreeTask};
use crate::error::{Error, Result};

fn member_rng(seed: u64, member: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(member as u64 + 1);
    rng
}

fn canonical(x: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>) -> Result<(Array2<f64>, Array1<f64>)> {
    if x.nrows() != y.len() {
        return Err(Error::invalid(format!("{} rows but {} targets", x.nrows(), y.len())));
    }
    if x.nrows() == 0 {
        return Err(Error::EmptyDataset("ensemble fit on zero rows".into()));
    }
    let order = canonical_order(x, y);
    Ok((x.select(Axis(0), &order), order.iter().map(|&i| y[i]).collect()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_estimators: usize,
    /// Resample `n` rows with replacement per member.
    pub bootstrap: bool,
    pub tree: TreeConfig,
    pub seed: u64,
}

/// Averaging ensemble (bagging when `max_features` is unset, a random forest otherwise).
#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
}

pub fn fit_forest(x: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>, cfg: &ForestConfig) -> Result<ForestModel> {
    if cfg.n_estimators == 0 {
        return Err(Error::invalid("n_estimators must be >= 1"));
    }
    cfg.tree.validate(x.ncols())?;
    let (xs, ys) = canonical(x, y)?;
    let n = ys.len();
    let trees = (0..cfg.n_estimators)
        .into_par_iter()
        .map(|m| {
            let mut rng = member_rng(cfg.seed, m);
            let mut counts = vec![if cfg.bootstrap { 0.0 } else { 1.0 }; n];
            if cfg.bootstrap {
                for _ in 0..n {
                    counts[rng.gen_range(0..n)] += 1.0;
                }
            }
            let tree_cfg = TreeConfig { seed: rng.gen(), ..cfg.tree };
            fit_tree_weighted(xs.view(), ys.view(), &counts, &tree_cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ForestModel { trees })
}

impl ForestModel {
    pub fn task(&self) -> TreeTask {
        self.trees[0].task
    }

    /// Member mean for regression; majority class position for classification.
    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        match self.task() {
            TreeTask::Regression => {
                let mut acc = Array1::zeros(x.nrows());
                for t in &self.trees {
                    acc += &t.predict(x)?;
                }
                Ok(acc / self.trees.len() as f64)
            }
            TreeTask::Classification { .. } => {
                let votes = self.vote_fractions(x)?;
                Ok(votes.rows().into_iter().map(|r| first_max(r) as f64).collect())
            }
        }
    }

    /// Fraction of members voting for each class; rows sum to one.
    pub fn vote_fractions(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let TreeTask::Classification { n_classes } = self.task() else {
            return Err(Error::invalid("vote fractions need a classification forest"));
        };
        let mut votes = Array2::zeros((x.nrows(), n_classes));
        for t in &self.trees {
            for (i, c) in t.predict(x)?.iter().enumerate() {
                votes[[i, *c as usize]] += 1.0;
            }
        }
        Ok(votes / self.trees.len() as f64)
    }

    pub(crate) fn encode(&self, w: &mut Writer) {
        w.usize(self.trees.len());
        for t in &self.trees {
            t.encode(w);
        }
    }

    pub(crate) fn decode(r: &mut Reader<'_>) -> Result<Self> {
        let n = r.usize()?;
        if n == 0 {
            return Err(r.fail("forest without trees"));
        }
        let trees = (0..n).map(|_| Tree::decode(r)).collect::<Result<Vec<_>>>()?;
        Ok(ForestModel { trees })
    }
}

fn first_max(r: ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    for (i, &v) in r.iter().enumerate() {
        if v > r[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoostLoss {
    Linear,
    Square,
    Exponential,
}

impl BoostLoss {
    fn eval(self, e: f64) -> f64 {
        match self {
            BoostLoss::Linear => e,
            BoostLoss::Square => e * e,
            BoostLoss::Exponential => 1.0 - (-e).exp(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaBoostConfig {
    pub n_estimators: usize,
    pub learning_rate: f64,
    pub loss: BoostLoss,
    pub tree: TreeConfig,
    pub seed: u64,
}

/// AdaBoost.R2; predictions are the weighted median of member outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaBoostModel {
    pub trees: Vec<Tree>,
    /// `γ·ln(1/θ_m)` per member.
    pub weights: Vec<f64>,
    /// Weighted average loss of each kept round.
    pub round_loss: Vec<f64>,
}

const LOSS_FLOOR: f64 = 1e-10;

pub fn fit_adaboost(x: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>, cfg: &AdaBoostConfig) -> Result<AdaBoostModel> {
    if cfg.n_estimators == 0 {
        return Err(Error::invalid("n_estimators must be >= 1"));
    }
    if !(cfg.learning_rate > 0.0) {
        return Err(Error::invalid("learning_rate must be positive"));
    }
    if cfg.tree.task != TreeTask::Regression {
        return Err(Error::invalid("AdaBoost.R2 is a regression method"));
    }
    cfg.tree.validate(x.ncols())?;
    let (xs, ys) = canonical(x, y)?;
    let n = ys.len();
    let mut w = vec![1.0 / n as f64; n];
    let mut model = AdaBoostModel { trees: vec![], weights: vec![], round_loss: vec![] };
    for m in 0..cfg.n_estimators {
        let mut rng = member_rng(cfg.seed, m);
        let dist = WeightedIndex::new(&w).map_err(|e| Error::Numerical(format!("boosting weights: {e}")))?;
        let mut counts = vec![0.0; n];
        for _ in 0..n {
            counts[dist.sample(&mut rng)] += 1.0;
        }
        let tree = fit_tree_weighted(xs.view(), ys.view(), &counts, &TreeConfig { seed: rng.gen(), ..cfg.tree })?;
        let err: Vec<f64> = tree.predict(xs.view())?.iter().zip(&ys).map(|(p, t)| (p - t).abs()).collect();
        let j = err.iter().copied().fold(0.0, f64::max);
        let li: Vec<f64> = err.iter().map(|&e| if j > 0.0 { cfg.loss.eval(e / j) } else { 0.0 }).collect();
        let lbar: f64 = w.iter().zip(&li).map(|(a, b)| a * b).sum();
        if lbar >= 0.5 {
            // A first learner is kept so the model is never empty.
            if m == 0 {
                model.trees.push(tree);
                model.weights.push(1.0);
                model.round_loss.push(lbar);
            }
            log::debug!("adaboost stopped at round {m}: average loss {lbar:.3} >= 0.5");
            break;
        }
        let lbar = lbar.clamp(LOSS_FLOOR, 1.0 - LOSS_FLOOR);
        let theta = lbar / (1.0 - lbar);
        for (wi, l) in w.iter_mut().zip(&li) {
            *wi *= theta.powf((1.0 - l) * cfg.learning_rate);
        }
        let total: f64 = w.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::Numerical("boosting weights collapsed".into()));
        }
        w.iter_mut().for_each(|v| *v /= total);
        model.trees.push(tree);
        model.weights.push(cfg.learning_rate * (1.0 / theta).ln());
        model.round_loss.push(lbar);
    }
    Ok(model)
}

/// Smallest value whose cumulative weight reaches half the total.
pub fn weighted_median(values: &[f64], weights: &[f64]) -> f64 {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let half = 0.5 * weights.iter().sum::<f64>();
    let mut cum = 0.0;
    for &i in &idx {
        cum += weights[i];
        if cum >= half {
            return values[i];
        }
    }
    values[idx[idx.len() - 1]]
}

impl AdaBoostModel {
    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        let member: Vec<Array1<f64>> = self.trees.iter().map(|t| t.predict(x)).collect::<Result<_>>()?;
        let mut buf = vec![0.0; member.len()];
        Ok((0..x.nrows())
            .map(|i| {
                for (b, p) in buf.iter_mut().zip(&member) {
                    *b = p[i];
                }
                weighted_median(&buf, &self.weights)
            })
            .collect())
    }

    pub(crate) fn encode(&self, w: &mut Writer) {
        w.f64s(&self.weights);
        w.f64s(&self.round_loss);
        for t in &self.trees {
            t.encode(w);
        }
    }

    pub(crate) fn decode(r: &mut Reader<'_>) -> Result<Self> {
        let weights = r.f64s()?;
        let round_loss = r.f64s()?;
        if weights.is_empty() || round_loss.len() != weights.len() {
            return Err(r.fail("adaboost member count mismatch"));
        }
        let trees = (0..weights.len()).map(|_| Tree::decode(r)).collect::<Result<Vec<_>>>()?;
        Ok(AdaBoostModel { trees, weights, round_loss })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbmConfig {
    pub n_estimators: usize,
    pub learning_rate: f64,
    /// Fraction of rows drawn without replacement per stage.
    pub subsample: f64,
    pub tree: TreeConfig,
    pub seed: u64,
}

/// Least-squares gradient boosting: `f = ȳ + γ Σ h_m`.
#[derive(Debug, Clone, PartialEq)]
pub struct GbmModel {
    pub init: f64,
    pub learning_rate: f64,
    pub trees: Vec<Tree>,
    /// Training MSE after each stage.
    pub train_loss: Vec<f64>,
}

pub fn fit_gbm(x: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>, cfg: &GbmConfig) -> Result<GbmModel> {
    if cfg.n_estimators == 0 {
        return Err(Error::invalid("n_estimators must be >= 1"));
    }
    if !(cfg.learning_rate > 0.0) {
        return Err(Error::invalid("learning_rate must be positive"));
    }
    if !(cfg.subsample > 0.0 && cfg.subsample <= 1.0) {
        return Err(Error::invalid("subsample must be in (0, 1]"));
    }
    if cfg.tree.task != TreeTask::Regression {
        return Err(Error::invalid("gradient boosting here is least-squares regression"));
    }
    cfg.tree.validate(x.ncols())?;
    let (xs, ys) = canonical(x, y)?;
    let n = ys.len();
    let init = ys.mean().expect("non-empty");
    let mut f = Array1::from_elem(n, init);
    let take = ((cfg.subsample * n as f64).floor() as usize).max(1);
    let mut model = GbmModel { init, learning_rate: cfg.learning_rate, trees: vec![], train_loss: vec![] };
    for m in 0..cfg.n_estimators {
        let mut rng = member_rng(cfg.seed, m);
        let residual = &ys - &f;
        let counts = if take < n {
            let mut c = vec![0.0; n];
            for i in rand::seq::index::sample(&mut rng, n, take) {
                c[i] = 1.0;
            }
            c
        } else {
            vec![1.0; n]
        };
        let tree = fit_tree_weighted(xs.view(), residual.view(), &counts, &TreeConfig { seed: rng.gen(), ..cfg.tree })?;
        f.scaled_add(cfg.learning_rate, &tree.predict(xs.view())?);
        model.train_loss.push((&ys - &f).mapv(|r| r * r).mean().expect("non-empty"));
        model.trees.push(tree);
    }
    Ok(model)
}

impl GbmModel {
    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        let mut f = Array1::from_elem(x.nrows(), self.init);
        for t in &self.trees {
            f.scaled_add(self.learning_rate, &t.predict(x)?);
        }
        Ok(f)
    }

    pub(crate) fn encode(&self, w: &mut Writer) {
        w.f64(self.init);
        w.f64(self.learning_rate);
        w.f64s(&self.train_loss);
        for t in &self.trees {
            t.encode(w);
        }
    }

    pub(crate) fn decode(r: &mut Reader<'_>) -> Result<Self> {
        let init = r.f64()?;
        let learning_rate = r.f64()?;
        let train_loss = r.f64s()?;
        let trees = (0..train_loss.len()).map(|_| Tree::decode(r)).collect::<Result<Vec<_>>>()?;
        Ok(GbmModel { init, learning_rate, trees, train_loss })
    }
}
