//! Independent oracles shared by the oracle tests and the acceptance report.
//! Each returns the worst discrepancy it observed.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mixemu::emu::ensemble::weighted_median;
use mixemu::emu::gp::{fit_gp, Kernel};
use mixemu::emu::kernel::fit_kernel_ridge;
use mixemu::emu::linear::{fit_linear, LinearConfig};
use mixemu::emu::logistic::loss_and_gradient;
use mixemu::emu::mlp::{flatten_params, set_params, Activation, MlpConfig, MlpModel, MlpTask};
use mixemu::emu::nb::{fit_gaussian_nb, GaussianNbModel};
use mixemu::emu::tree::{fit_tree, TreeConfig, TreeTask};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(r: &mut ChaCha8Rng, n: usize, d: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, d), |_| r.gen_range(-2.0..2.0))
}

fn to_na(a: ArrayView2<'_, f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    diff / na.max(nb).max(1e-300)
}

/// Ridge against `(XcᵀXc + αI)⁻¹Xcᵀyc` solved by nalgebra, intercept `ȳ − x̄ᵀw`.
pub fn ridge_vs_closed_form() -> f64 {
    let mut worst: f64 = 0.0;
    for seed in 0..5 {
        let mut r = rng(seed);
        let (n, d) = (40, 5);
        let x = random_matrix(&mut r, n, d);
        let y: Array1<f64> = (0..n).map(|i| x.row(i).sum() + r.gen_range(-0.5..0.5)).collect();
        let alpha = [0.0, 0.1, 1.0, 10.0, 100.0][seed as usize];
        let m = fit_linear(x.view(), y.view(), &LinearConfig::ridge(alpha)).unwrap();

        let xm = x.mean_axis(ndarray::Axis(0)).unwrap();
        let ym = y.mean().unwrap();
        let xc = to_na((&x - &xm).view());
        let yc = DVector::from_iterator(n, y.iter().map(|v| v - ym));
        let a = xc.transpose() * &xc + DMatrix::identity(d, d) * alpha;
        let w = a.lu().solve(&(xc.transpose() * yc)).unwrap();
        let b = ym - (0..d).map(|j| xm[j] * w[j]).sum::<f64>();
        for j in 0..d {
            worst = worst.max((m.weights[j] - w[j]).abs());
        }
        worst = worst.max((m.intercept - b).abs());
    }
    worst
}

/// Kernel ridge and GP dual weights and predictions against a dense nalgebra solve.
pub fn kernel_methods_vs_dense_solve() -> f64 {
    let mut worst: f64 = 0.0;
    let mut r = rng(11);
    let (n, d) = (30, 3);
    let x = random_matrix(&mut r, n, d);
    let y: Array1<f64> = (0..n).map(|i| (x[[i, 0]] * 1.3).sin() + x[[i, 1]] * x[[i, 2]]).collect();
    let q = random_matrix(&mut r, 10, d);
    let rbf = |a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>, l: f64| {
        (-l * a.iter().zip(b.iter()).map(|(u, v)| (u - v) * (u - v)).sum::<f64>()).exp()
    };
    let dense = |lambda: f64, diag: f64| {
        let k = DMatrix::from_fn(n, n, |i, j| rbf(x.row(i), x.row(j), lambda) + if i == j { diag } else { 0.0 });
        let c = k.lu().solve(&DVector::from_iterator(n, y.iter().copied())).unwrap();
        let pred: Vec<f64> = (0..q.nrows()).map(|i| (0..n).map(|j| c[j] * rbf(q.row(i), x.row(j), lambda)).sum()).collect();
        (c, pred)
    };

    for (alpha, lambda) in [(0.1, 0.5), (1e-3, 2.0)] {
        let m = fit_kernel_ridge(x.view(), y.view(), alpha, lambda, 1000).unwrap();
        let (c, pred) = dense(lambda, alpha);
        let p = m.predict(q.view()).unwrap();
        for j in 0..n {
            worst = worst.max((m.dual[j] - c[j]).abs());
        }
        for i in 0..q.nrows() {
            worst = worst.max((p[i] - pred[i]).abs());
        }
    }
    for lambda in [0.3, 1.0] {
        let m = fit_gp(x.view(), y.view(), Kernel::Rbf { lambda }, 1e-4, 1000).unwrap();
        let (c, pred) = dense(lambda, m.noise + m.jitter);
        let p = m.predict(q.view()).unwrap();
        for j in 0..n {
            worst = worst.max((m.weights[j] - c[j]).abs());
        }
        for i in 0..q.nrows() {
            worst = worst.max((p[i] - pred[i]).abs());
        }
    }
    worst
}

/// Weighted child impurity of splitting at `x[:, f] <= t`, computed directly.
fn child_impurity(x: ArrayView2<'_, f64>, y: &[f64], f: usize, t: f64, classes: Option<usize>) -> f64 {
    let side = |left: bool| -> Vec<f64> { (0..y.len()).filter(|&i| (x[[i, f]] <= t) == left).map(|i| y[i]).collect() };
    let imp = |v: &[f64]| -> f64 {
        if v.is_empty() {
            return 0.0;
        }
        let n = v.len() as f64;
        match classes {
            None => {
                let m = v.iter().sum::<f64>() / n;
                v.iter().map(|a| (a - m) * (a - m)).sum()
            }
            Some(k) => {
                let g: f64 = (0..k).map(|c| (v.iter().filter(|&&a| a as usize == c).count() as f64 / n).powi(2)).sum();
                n * (1.0 - g)
            }
        }
    };
    imp(&side(true)) + imp(&side(false))
}

/// Root split of a depth-1 tree against exhaustive search over every
/// feature and midpoint, on every size `2..=50` and width `1..=4`.
/// Returns the number of instances where the tree's split is not optimal
/// (or, when the optimum is unique, not the optimum itself).
pub fn tree_split_mismatches() -> usize {
    let mut bad = 0;
    let mut r = rng(5);
    for n in 2..=50 {
        for d in 1..=4 {
            for variant in 0..3 {
                // Variant 0: continuous regression; 1: integer features with ties; 2: Gini classification.
                let x = Array2::from_shape_fn((n, d), |_| if variant == 1 { r.gen_range(0..4) as f64 } else { r.gen_range(-1.0..1.0) });
                let classes = (variant == 2).then_some(3);
                let y: Vec<f64> = (0..n)
                    .map(|i| match classes {
                        Some(k) => ((x[[i, 0]] + 1.0) * 1.4 + r.gen_range(0.0..1.2)).floor().min((k - 1) as f64),
                        None => x.row(i).sum() + r.gen_range(-0.3..0.3),
                    })
                    .collect();
                let task = match classes {
                    Some(k) => TreeTask::Classification { n_classes: k },
                    None => TreeTask::Regression,
                };
                let cfg = TreeConfig { max_depth: Some(1), task, ..TreeConfig::default() };
                let tree = fit_tree(x.view(), ndarray::ArrayView1::from(&y), &cfg).unwrap();

                let mut cands = vec![];
                for f in 0..d {
                    let mut vals: Vec<f64> = x.column(f).to_vec();
                    vals.sort_by(f64::total_cmp);
                    vals.dedup();
                    for w in vals.windows(2) {
                        let t = w[0] + (w[1] - w[0]) / 2.0;
                        cands.push((f, t, child_impurity(x.view(), &y, f, t, classes)));
                    }
                }
                let parent = {
                    let all = (0..n).map(|i| y[i]).collect::<Vec<_>>();
                    child_impurity(x.view(), &all, 0, f64::INFINITY, classes)
                };
                let y_const = y.iter().all(|&v| v == y[0]);
                if cands.is_empty() || y_const || parent <= 1e-12 {
                    if tree.node_count() != 1 {
                        bad += 1;
                    }
                    continue;
                }
                let best = cands.iter().map(|c| c.2).fold(f64::INFINITY, f64::min);
                let scale = parent.max(1e-12);
                let tol = 1e-9 * scale;
                let near: Vec<&(usize, f64, f64)> = cands.iter().filter(|c| c.2 <= best + tol).collect();
                if tree.node_count() == 1 {
                    // No split is only right when nothing improves on the parent.
                    if best < parent - tol {
                        bad += 1;
                    }
                    continue;
                }
                let (f, t) = (tree.feature[0] as usize, tree.threshold[0]);
                let got = child_impurity(x.view(), &y, f, t, classes);
                let ok = if near.len() == 1 { near[0].0 == f && near[0].1 == t } else { got <= best + tol };
                if !ok {
                    bad += 1;
                }
            }
        }
    }
    bad
}

/// Brute-force weighted median: the smallest candidate `v` whose total
/// weight at or below `v` reaches half, checked over 20 random sets.
pub fn weighted_median_mismatches() -> usize {
    let mut bad = 0;
    let mut r = rng(21);
    for _ in 0..20 {
        let m = r.gen_range(1..15);
        let values: Vec<f64> = (0..m).map(|_| (r.gen_range(-5..5) as f64) * 0.5).collect();
        let weights: Vec<f64> = (0..m).map(|_| r.gen_range(0.0..2.0)).collect();
        let total: f64 = weights.iter().sum();
        let mut cands = values.clone();
        cands.sort_by(f64::total_cmp);
        let expect = cands
            .iter()
            .copied()
            .find(|&v| values.iter().zip(&weights).filter(|(x, _)| **x <= v).map(|(_, w)| w).sum::<f64>() >= 0.5 * total)
            .unwrap();
        if weighted_median(&values, &weights) != expect {
            bad += 1;
        }
    }
    bad
}

/// Worst relative error between backpropagated and central-difference
/// gradients of 6-4-2 softmax networks and a 6-4-1 regression network,
/// `h = 1e-5`.
pub fn mlp_gradient_rel_error() -> f64 {
    let mut worst: f64 = 0.0;
    for (task, act) in [
        (MlpTask::Regression, Activation::Tanh),
        (MlpTask::Classification { n_classes: 2 }, Activation::Tanh),
        (MlpTask::Classification { n_classes: 2 }, Activation::Logistic),
    ] {
        let mut r = rng(3);
        let x = random_matrix(&mut r, 12, 6);
        let y: Vec<f64> = (0..12)
            .map(|i| match task {
                MlpTask::Regression => x.row(i).sum() * 0.3,
                MlpTask::Classification { .. } => (i % 2) as f64,
            })
            .collect();
        let cfg = MlpConfig { hidden: vec![4], activation: act, ..MlpConfig::default() };
        let mut model = MlpModel::init(6, &cfg, task, &mut r);
        let alpha = 0.3;
        let (_, gw, gb) = model.loss_and_gradients(x.view(), &y, alpha).unwrap();
        let mut analytic = vec![];
        for (w, b) in gw.iter().zip(&gb) {
            analytic.extend(w.iter());
            analytic.extend(b.iter());
        }
        let theta = flatten_params(&model);
        let h = 1e-5;
        let mut numeric = vec![0.0; theta.len()];
        for k in 0..theta.len() {
            let mut t = theta.clone();
            t[k] = theta[k] + h;
            set_params(&mut model, &t);
            let up = model.loss_and_gradients(x.view(), &y, alpha).unwrap().0;
            t[k] = theta[k] - h;
            set_params(&mut model, &t);
            let down = model.loss_and_gradients(x.view(), &y, alpha).unwrap().0;
            numeric[k] = (up - down) / (2.0 * h);
        }
        set_params(&mut model, &theta);
        worst = worst.max(rel_err(&analytic, &numeric));
    }
    worst
}

/// Worst relative error of the multinomial logistic gradient against central differences.
pub fn logistic_gradient_rel_error() -> f64 {
    let mut worst: f64 = 0.0;
    for (k, seed) in [(2usize, 1u64), (3, 2), (4, 3)] {
        let mut r = rng(seed);
        let (n, d) = (25, 4);
        let x = random_matrix(&mut r, n, d);
        let y: Vec<usize> = (0..n).map(|i| i % k).collect();
        let theta: Vec<f64> = (0..k * d + k).map(|_| r.gen_range(-0.5..0.5)).collect();
        let (_, g) = loss_and_gradient(&theta, x.view(), &y, k, 0.2);
        let h = 1e-5;
        let numeric: Vec<f64> = (0..theta.len())
            .map(|j| {
                let mut t = theta.clone();
                t[j] += h;
                let up = loss_and_gradient(&t, x.view(), &y, k, 0.2).0;
                t[j] -= 2.0 * h;
                let down = loss_and_gradient(&t, x.view(), &y, k, 0.2).0;
                (up - down) / (2.0 * h)
            })
            .collect();
        worst = worst.max(rel_err(&g, &numeric));
    }
    worst
}

/// Gaussian NB fitted in four batches against one shot: moments, priors and
/// log posteriors.
pub fn nb_batched_vs_one_shot() -> f64 {
    let mut r = rng(9);
    let (n, d) = (200, 5);
    let x = Array2::from_shape_fn((n, d), |(i, j)| r.gen_range(-1.0..1.0) * (1.0 + j as f64) + (i % 3) as f64);
    let y: Vec<usize> = (0..n).map(|i| 1 + i % 3).collect();
    let whole = fit_gaussian_nb(x.view(), &y, 1e-9).unwrap();
    let mut parts = GaussianNbModel::new(&y, d, 1e-9, None).unwrap();
    for c in [0..37, 37..90, 90..151, 151..200] {
        parts.partial_fit(x.slice(ndarray::s![c.clone(), ..]), &y[c]).unwrap();
    }
    let diff = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
    let probe = random_matrix(&mut r, 20, d);
    [
        diff(whole.means().as_slice().unwrap(), parts.means().as_slice().unwrap()),
        diff(whole.variances().as_slice().unwrap(), parts.variances().as_slice().unwrap()),
        diff(&whole.priors(), &parts.priors()),
        diff(
            whole.log_posteriors(probe.view()).unwrap().as_slice().unwrap(),
            parts.log_posteriors(probe.view()).unwrap().as_slice().unwrap(),
        ),
    ]
    .into_iter()
    .fold(0.0, f64::max)
}

/// Reaction-free run with pure molecular diffusion.
pub fn diffusion_config(d_m: f64, n_steps: usize) -> mixemu::SimulationConfig {
    use mixemu::pde::{DispersionParams, FlowParams, ReactionParams};
    let mut cfg = mixemu::SimulationConfig::desk_scale(FlowParams { v0: 0.0, kappa_f_l: 1, t_osc: 1e-4 }, DispersionParams::isotropic(d_m, 0.0));
    cfg.reaction = ReactionParams::off();
    cfg.n_steps = n_steps;
    cfg
}

/// Zero-flux cosine series for a unit step at `x = ½`.
pub fn step_series(x: f64, d_m: f64, t: f64, terms: usize) -> f64 {
    use std::f64::consts::PI;
    0.5 + (1..=terms)
        .map(|m| {
            let mp = m as f64 * PI;
            2.0 * (mp / 2.0).sin() / mp * (mp * x).cos() * (-d_m * mp * mp * t).exp()
        })
        .sum::<f64>()
}

/// Relative L2 error of `c_A` against the series at `t = 0.1` on an
/// `n_side` mesh.
pub fn cosine_series_rel_l2(d_m: f64, n_side: usize) -> f64 {
    use mixemu::pde::{build_mesh, solve_on};
    let mut cfg = diffusion_config(d_m, 20);
    cfg.mesh_n_side = n_side;
    let mesh = build_mesh::<f64>(cfg.mesh_n_side).unwrap();
    let traj = solve_on(&mesh, &cfg, 20).unwrap();
    let last = traj.last();
    assert!((last.time - 0.1).abs() < 1e-12);
    let exact: Vec<f64> = mesh.coords.iter().map(|p| step_series(p[0], d_m, last.time, 2000)).collect();
    let diff: Vec<f64> = last.conc[0].iter().zip(&exact).map(|(a, b)| (a - b).powi(2)).collect();
    let sq: Vec<f64> = exact.iter().map(|v| v * v).collect();
    (mesh.integrate(&diff) / mesh.integrate(&sq)).sqrt()
}
