//! CART trees on presorted columns.
//!
//! Samples carry integer multiplicities, so bootstrap and boosting resamples
//! are fitted without materializing duplicated rows. Candidate thresholds are
//! midpoints of consecutive distinct values; among equal impurities the lower
//! feature index, then the lower threshold, wins.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};

const LEAF: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TreeTask {
    /// Squared-error impurity, mean leaves.
    Regression,
    /// Gini impurity, class-histogram leaves over `0..n_classes`.
    Classification { n_classes: usize },
}

impl TreeTask {
    fn width(self) -> usize {
        match self {
            TreeTask::Regression => 1,
            TreeTask::Classification { n_classes } => n_classes,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeConfig {
    pub max_depth: Option<usize>,
    /// Features drawn per split; `None` uses all.
    pub max_features: Option<usize>,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub task: TreeTask,
    pub seed: u64,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig {
            max_depth: None,
            max_features: None,
            min_samples_split: 2,
            min_samples_leaf: 1,
            task: TreeTask::Regression,
            seed: 0,
        }
    }
}

impl TreeConfig {
    pub fn validate(&self, n_features: usize) -> Result<()> {
        if self.min_samples_split < 2 {
            return Err(Error::invalid("min_samples_split must be >= 2"));
        }
        if self.min_samples_leaf < 1 {
            return Err(Error::invalid("min_samples_leaf must be >= 1"));
        }
        if let Some(m) = self.max_features {
            if m < 1 || m > n_features {
                return Err(Error::invalid(format!("max_features = {m} outside 1..={n_features}")));
            }
        }
        if let TreeTask::Classification { n_classes } = self.task {
            if n_classes < 1 {
                return Err(Error::invalid("classification needs at least one class"));
            }
        }
        Ok(())
    }
}

/// Flat, index-linked tree. Node 0 is the root; leaves have `feature == u32::MAX`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub n_features: usize,
    pub task: TreeTask,
    pub feature: Vec<u32>,
    pub threshold: Vec<f64>,
    pub left: Vec<u32>,
    pub right: Vec<u32>,
    /// `task.width()` values per node: the mean, or the normalized class histogram.
    pub value: Vec<f64>,
    /// Weighted sample count per node.
    pub weight: Vec<f64>,
    pub depth: usize,
}

impl Tree {
    pub fn node_count(&self) -> usize {
        self.feature.len()
    }

    pub fn leaf_count(&self) -> usize {
        self.feature.iter().filter(|&&f| f == LEAF).count()
    }

    fn leaf_of(&self, x: ArrayView1<'_, f64>) -> usize {
        let mut n = 0usize;
        while self.feature[n] != LEAF {
            let f = self.feature[n] as usize;
            n = if x[f] <= self.threshold[n] { self.left[n] } else { self.right[n] } as usize;
        }
        n
    }

    fn check_width(&self, x: ArrayView2<'_, f64>) -> Result<()> {
        if x.ncols() != self.n_features {
            return Err(Error::invalid(format!("expected {} features, got {}", self.n_features, x.ncols())));
        }
        Ok(())
    }

    /// Regression means (or, for classification, the majority class position).
    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        self.check_width(x)?;
        let w = self.task.width();
        Ok(x.rows()
            .into_iter()
            .map(|r| {
                let leaf = self.leaf_of(r);
                let v = &self.value[leaf * w..(leaf + 1) * w];
                if w == 1 && self.task == TreeTask::Regression {
                    v[0]
                } else {
                    argmax(v) as f64
                }
            })
            .collect())
    }

    /// Leaf class histograms, one row per input.
    pub fn predict_proba(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_width(x)?;
        let w = self.task.width();
        let mut out = Array2::zeros((x.nrows(), w));
        for (i, r) in x.rows().into_iter().enumerate() {
            let leaf = self.leaf_of(r);
            for c in 0..w {
                out[[i, c]] = self.value[leaf * w + c];
            }
        }
        Ok(out)
    }

    pub(crate) fn encode(&self, w: &mut Writer) {
        w.usize(self.n_features);
        match self.task {
            TreeTask::Regression => w.usize(0),
            TreeTask::Classification { n_classes } => w.usize(n_classes),
        }
        w.usize(self.depth);
        w.usize(self.node_count());
        for i in 0..self.node_count() {
            w.u32(self.feature[i]);
            w.u32(self.left[i]);
            w.u32(self.right[i]);
            w.f64(self.threshold[i]);
            w.f64(self.weight[i]);
        }
        w.f64s_raw(self.value.iter().copied());
    }

    pub(crate) fn decode(r: &mut Reader<'_>) -> Result<Self> {
        let n_features = r.usize()?;
        let task = match r.usize()? {
            0 => TreeTask::Regression,
            k => TreeTask::Classification { n_classes: k },
        };
        let depth = r.usize()?;
        let n = r.usize()?;
        let mut t = Tree {
            n_features,
            task,
            feature: Vec::with_capacity(n),
            threshold: Vec::with_capacity(n),
            left: Vec::with_capacity(n),
            right: Vec::with_capacity(n),
            value: Vec::new(),
            weight: Vec::with_capacity(n),
            depth,
        };
        for _ in 0..n {
            t.feature.push(r.u32()?);
            t.left.push(r.u32()?);
            t.right.push(r.u32()?);
            t.threshold.push(r.f64()?);
            t.weight.push(r.f64()?);
        }
        t.value = r.f64s_raw(n * task.width())?;
        let bad_link = |c: u32| c != LEAF && c as usize >= n;
        if n == 0
            || (0..n).any(|i| {
                t.feature[i] != LEAF && (t.feature[i] as usize >= n_features || bad_link(t.left[i]) || bad_link(t.right[i]))
            })
        {
            return Err(r.fail("corrupt tree links"));
        }
        Ok(t)
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Rows sorted lexicographically by features then target; fitting on this
/// order makes a tree independent of the caller's row order.
pub fn canonical_order(x: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..x.nrows()).collect();
    idx.sort_by(|&a, &b| {
        for j in 0..x.ncols() {
            match x[[a, j]].total_cmp(&x[[b, j]]) {
                std::cmp::Ordering::Equal => {}
                o => return o,
            }
        }
        y[a].total_cmp(&y[b]).then(a.cmp(&b))
    });
    idx
}

/// Best split found at one node.
#[derive(Debug, Clone, Copy)]
struct Split {
    feature: usize,
    threshold: f64,
    /// Weighted child impurity `W_L·I_L + W_R·I_R` (SSE for regression).
    impurity: f64,
    /// Position in the node's ordering along `feature` where the right child starts.
    cut: usize,
}

struct Builder<'a, 'x> {
    x: ArrayView2<'x, f64>,
    y: &'a [f64],
    w: &'a [f64],
    cfg: TreeConfig,
    /// Per-feature sample ids sorted by that feature; node = common range.
    order: Vec<Vec<u32>>,
    goes_left: Vec<bool>,
    scratch: Vec<u32>,
    rng: ChaCha8Rng,
    tree: Tree,
}

impl Builder<'_, '_> {
    fn node_stats(&self, ids: &[u32]) -> (f64, Vec<f64>, f64) {
        let width = self.cfg.task.width();
        let mut total = 0.0;
        let mut acc = vec![0.0; width];
        let mut sq = 0.0;
        for &i in ids {
            let (i, wi) = (i as usize, self.w[i as usize]);
            total += wi;
            match self.cfg.task {
                TreeTask::Regression => {
                    acc[0] += wi * self.y[i];
                    sq += wi * self.y[i] * self.y[i];
                }
                TreeTask::Classification { .. } => acc[self.y[i] as usize] += wi,
            }
        }
        let impurity = match self.cfg.task {
            TreeTask::Regression => (sq - acc[0] * acc[0] / total).max(0.0),
            TreeTask::Classification { .. } => total * (1.0 - acc.iter().map(|c| (c / total) * (c / total)).sum::<f64>()),
        };
        (total, acc, impurity)
    }

    fn leaf_value(&self, total: f64, acc: &[f64]) -> Vec<f64> {
        acc.iter().map(|a| a / total).collect()
    }

    /// Scans one feature's ordering for its best threshold.
    fn scan(&self, feature: usize, ids: &[u32], total: f64, acc: &[f64]) -> Option<Split> {
        let x = self.x.column(feature);
        let first = x[ids[0] as usize];
        let last = x[ids[ids.len() - 1] as usize];
        if !(last > first) {
            return None;
        }
        let min_leaf = self.cfg.min_samples_leaf as f64;
        let width = acc.len();
        let mut best: Option<Split> = None;
        let mut wl = 0.0;
        let mut left = vec![0.0; width];
        let mut left_sq = 0.0;
        let total_sq: f64 = match self.cfg.task {
            TreeTask::Regression => ids.iter().map(|&i| self.w[i as usize] * self.y[i as usize] * self.y[i as usize]).sum(),
            TreeTask::Classification { .. } => 0.0,
        };
        for k in 0..ids.len() - 1 {
            let i = ids[k] as usize;
            let wi = self.w[i];
            wl += wi;
            match self.cfg.task {
                TreeTask::Regression => {
                    left[0] += wi * self.y[i];
                    left_sq += wi * self.y[i] * self.y[i];
                }
                TreeTask::Classification { .. } => left[self.y[i] as usize] += wi,
            }
            let (xa, xb) = (x[i], x[ids[k + 1] as usize]);
            if !(xb > xa) {
                continue;
            }
            let wr = total - wl;
            if wl < min_leaf || wr < min_leaf {
                continue;
            }
            let impurity = match self.cfg.task {
                TreeTask::Regression => {
                    let sr = acc[0] - left[0];
                    let sse_l = (left_sq - left[0] * left[0] / wl).max(0.0);
                    let sse_r = (total_sq - left_sq - sr * sr / wr).max(0.0);
                    sse_l + sse_r
                }
                TreeTask::Classification { .. } => {
                    let gl: f64 = left.iter().map(|c| c * c).sum::<f64>() / wl;
                    let gr: f64 = left.iter().zip(acc).map(|(l, a)| (a - l) * (a - l)).sum::<f64>() / wr;
                    (wl - gl) + (wr - gr)
                }
            };
            let mut threshold = xa + (xb - xa) / 2.0;
            if !(threshold < xb) {
                threshold = xa;
            }
            if best.map_or(true, |b| impurity < b.impurity) {
                best = Some(Split { feature, threshold, impurity, cut: k + 1 });
            }
        }
        best
    }

    fn best_split(&mut self, start: usize, end: usize, total: f64, acc: &[f64]) -> Option<Split> {
        let d = self.x.ncols();
        let mut features: Vec<usize> = (0..d).collect();
        let quota = self.cfg.max_features.unwrap_or(d);
        if quota < d {
            features.shuffle(&mut self.rng);
        }
        let mut best: Option<Split> = None;
        let mut informative = 0;
        for &f in &features {
            if informative >= quota {
                break;
            }
            let ids = &self.order[f][start..end];
            let first = self.x[[ids[0] as usize, f]];
            let last = self.x[[ids[ids.len() - 1] as usize, f]];
            if !(last > first) {
                // Constant features do not count toward the quota.
                continue;
            }
            informative += 1;
            if let Some(s) = self.scan(f, ids, total, acc) {
                let better = match best {
                    None => true,
                    Some(b) => {
                        let tol = 1e-12 * b.impurity.abs().max(1e-300);
                        s.impurity < b.impurity - tol
                            || ((s.impurity - b.impurity).abs() <= tol
                                && (s.feature, s.threshold) < (b.feature, b.threshold))
                    }
                };
                if better {
                    best = Some(s);
                }
            }
        }
        best
    }

    fn push_node(&mut self, weight: f64, value: Vec<f64>) -> usize {
        let t = &mut self.tree;
        t.feature.push(LEAF);
        t.threshold.push(0.0);
        t.left.push(LEAF);
        t.right.push(LEAF);
        t.weight.push(weight);
        t.value.extend(value);
        t.feature.len() - 1
    }

    fn partition(&mut self, start: usize, end: usize, split: &Split) {
        let ordering = &self.order[split.feature][start..end];
        for (k, &i) in ordering.iter().enumerate() {
            self.goes_left[i as usize] = k < split.cut;
        }
        for f in 0..self.order.len() {
            if f == split.feature {
                continue;
            }
            let seg = &mut self.order[f][start..end];
            self.scratch.clear();
            let mut l = 0;
            for k in 0..seg.len() {
                let i = seg[k];
                if self.goes_left[i as usize] {
                    seg[l] = i;
                    l += 1;
                } else {
                    self.scratch.push(i);
                }
            }
            seg[l..].copy_from_slice(&self.scratch);
        }
    }

    fn build(&mut self, n_active: usize) {
        // (node id, range start, range end, depth)
        let mut stack = vec![];
        let (total, acc, _) = self.node_stats(&self.order[0][..n_active]);
        let root = self.push_node(total, self.leaf_value(total, &acc));
        stack.push((root, 0usize, n_active, 0usize));
        while let Some((node, start, end, depth)) = stack.pop() {
            self.tree.depth = self.tree.depth.max(depth);
            let (total, acc, impurity) = self.node_stats(&self.order[0][start..end]);
            let depth_ok = self.cfg.max_depth.map_or(true, |m| depth < m);
            if !depth_ok || total < self.cfg.min_samples_split as f64 || impurity <= 1e-14 * total.max(1.0) * 1e-2 {
                continue;
            }
            if self.cfg.task == TreeTask::Regression {
                let ids = &self.order[0][start..end];
                let y0 = self.y[ids[0] as usize];
                if ids.iter().all(|&i| self.y[i as usize] == y0) {
                    continue;
                }
            }
            let Some(split) = self.best_split(start, end, total, &acc) else {
                continue;
            };
            self.partition(start, end, &split);
            let mid = start + split.cut;
            let (wl, al, _) = self.node_stats(&self.order[split.feature][start..mid]);
            let (wr, ar, _) = self.node_stats(&self.order[split.feature][mid..end]);
            let l = self.push_node(wl, self.leaf_value(wl, &al));
            let r = self.push_node(wr, self.leaf_value(wr, &ar));
            let t = &mut self.tree;
            t.feature[node] = split.feature as u32;
            t.threshold[node] = split.threshold;
            t.left[node] = l as u32;
            t.right[node] = r as u32;
            // Right first so the left subtree is expanded first.
            stack.push((r, mid, end, depth + 1));
            stack.push((l, start, mid, depth + 1));
        }
    }
}

/// Fits a tree where row `i` carries multiplicity `counts[i]` (0 drops it).
/// For classification `y` holds class positions `0..n_classes` as floats.
pub fn fit_tree_weighted(x: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>, counts: &[f64], cfg: &TreeConfig) -> Result<Tree> {
    let (n, d) = x.dim();
    if n != y.len() || n != counts.len() {
        return Err(Error::invalid("rows, targets and counts differ in length"));
    }
    if n == 0 || d == 0 {
        return Err(Error::EmptyDataset("tree fit on an empty matrix".into()));
    }
    cfg.validate(d)?;
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite input"));
    }
    if let TreeTask::Classification { n_classes } = cfg.task {
        if y.iter().any(|&c| c < 0.0 || c.fract() != 0.0 || c as usize >= n_classes) {
            return Err(Error::invalid("class positions must be integers in 0..n_classes"));
        }
    }
    let active: Vec<u32> = (0..n).filter(|&i| counts[i] > 0.0).map(|i| i as u32).collect();
    if active.is_empty() {
        return Err(Error::EmptyDataset("every sample has zero weight".into()));
    }
    let order: Vec<Vec<u32>> = (0..d)
        .map(|j| {
            let mut ids = active.clone();
            let col = x.column(j);
            ids.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]).then(a.cmp(&b)));
            ids
        })
        .collect();
    let y_vec = y.to_vec();
    let mut b = Builder {
        x,
        y: &y_vec,
        w: counts,
        cfg: *cfg,
        order,
        goes_left: vec![false; n],
        scratch: Vec::with_capacity(active.len()),
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        tree: Tree {
            n_features: d,
            task: cfg.task,
            feature: Vec::new(),
            threshold: Vec::new(),
            left: Vec::new(),
            right: Vec::new(),
            value: Vec::new(),
            weight: Vec::new(),
            depth: 0,
        },
    };
    b.build(active.len());
    Ok(b.tree)
}

/// Unit-weight tree fit in canonical row order.
pub fn fit_tree(x: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>, cfg: &TreeConfig) -> Result<Tree> {
    let order = canonical_order(x, y);
    let xs = x.select(ndarray::Axis(0), &order);
    let ys: Array1<f64> = order.iter().map(|&i| y[i]).collect();
    fit_tree_weighted(xs.view(), ys.view(), &vec![1.0; order.len()], cfg)
}

/// Gini impurity `Σ p(1 − p)` of a label multiset.
pub fn gini(labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let mut counts = std::collections::BTreeMap::new();
    for &l in labels {
        *counts.entry(l).or_insert(0usize) += 1;
    }
    let n = labels.len() as f64;
    counts.values().map(|&c| (c as f64 / n) * (1.0 - c as f64 / n)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn constant_target_is_a_single_leaf() {
        let x = array![[1.0], [2.0], [3.0]];
        let t = fit_tree(x.view(), array![4.0, 4.0, 4.0].view(), &TreeConfig::default()).unwrap();
        assert_eq!(t.node_count(), 1);
        assert_eq!(t.predict(array![[9.0]].view()).unwrap()[0], 4.0);
    }

    #[test]
    fn gini_of_two_pairs() {
        assert!((gini(&[0, 0, 1, 1]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn depth_and_leaf_limits() {
        let x = Array2::from_shape_fn((64, 2), |(i, j)| ((i * (j + 3)) % 17) as f64);
        let y = x.column(0).mapv(|v| v * v) + &x.column(1);
        let t = fit_tree(x.view(), y.view(), &TreeConfig { max_depth: Some(3), ..Default::default() }).unwrap();
        assert!(t.depth <= 3);
        let t = fit_tree(x.view(), y.view(), &TreeConfig { min_samples_leaf: 5, ..Default::default() }).unwrap();
        for i in 0..t.node_count() {
            assert!(t.weight[i] >= 5.0);
        }
    }

    #[test]
    fn classification_histograms_sum_to_one() {
        let x = array![[0.0], [1.0], [2.0], [3.0], [4.0]];
        let y = array![0.0, 0.0, 1.0, 2.0, 1.0];
        let cfg = TreeConfig { task: TreeTask::Classification { n_classes: 3 }, max_depth: Some(1), ..Default::default() };
        let t = fit_tree(x.view(), y.view(), &cfg).unwrap();
        let p = t.predict_proba(x.view()).unwrap();
        for r in p.rows() {
            assert!((r.sum() - 1.0).abs() < 1e-12);
        }
        assert_eq!(t.predict(array![[0.5]].view()).unwrap()[0], 0.0);
    }

    #[test]
    fn weights_equal_duplication() {
        let x = array![[0.0], [1.0], [2.0], [3.0]];
        let y = array![0.0, 1.0, 5.0, 6.0];
        let w = fit_tree_weighted(x.view(), y.view(), &[3.0, 1.0, 0.0, 2.0], &TreeConfig::default()).unwrap();
        let xd = array![[0.0], [0.0], [0.0], [1.0], [3.0], [3.0]];
        let yd = array![0.0, 0.0, 0.0, 1.0, 6.0, 6.0];
        let d = fit_tree(xd.view(), yd.view(), &TreeConfig::default()).unwrap();
        let probe = array![[-1.0], [0.4], [0.6], [1.5], [2.5], [7.0]];
        assert_eq!(w.predict(probe.view()).unwrap(), d.predict(probe.view()).unwrap());
    }
}
