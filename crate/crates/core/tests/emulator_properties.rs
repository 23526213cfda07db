mod common;

use ndarray::{array, Array1, Array2, Axis};
use rand::Rng;

use common::{random_matrix, rng};
use mixemu::emu::bayes_ridge::{fit_bayes_ridge, BayesRidgeConfig};
use mixemu::emu::discriminant::{fit_discriminant, DiscriminantKind};
use mixemu::emu::ensemble::{fit_adaboost, fit_forest, fit_gbm, AdaBoostConfig, BoostLoss, ForestConfig, GbmConfig};
use mixemu::emu::gp::{fit_gp, Kernel};
use mixemu::emu::linear::{fit_linear, fit_polynomial, LinearConfig};
use mixemu::emu::logistic::{fit_logistic, LogisticConfig};
use mixemu::emu::mlp::{fit_mlp, Activation, MlpConfig, MlpModel, MlpTask};
use mixemu::emu::nb::fit_gaussian_nb;
use mixemu::emu::tree::{fit_tree, TreeConfig};
use mixemu::metrics::r2_score;

fn smooth_target(x: &Array2<f64>) -> Array1<f64> {
    x.rows().into_iter().map(|r| (2.0 * r[0]).sin() + r[1] * r[1] - 0.5 * r.iter().skip(2).sum::<f64>()).collect()
}

fn mse(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    (a - b).mapv(|v| v * v).mean().unwrap()
}

fn max_abs(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    (a - b).iter().fold(0.0, |m, v| m.max(v.abs()))
}

#[test]
fn quadratic_features_fit_a_parabola_and_ignore_a_line() {
    let x = Array2::from_shape_fn((40, 1), |(i, _)| -2.0 + 0.1 * i as f64);
    let sq = x.column(0).mapv(|v| v * v);
    let cfg = LinearConfig { alpha2: 1e-4, ..LinearConfig::ols() };
    let poly = fit_polynomial(x.view(), sq.view(), &cfg).unwrap();
    assert!(r2_score(sq.as_slice().unwrap(), poly.predict(x.view()).unwrap().as_slice().unwrap()).unwrap() >= 0.999);
    let line = fit_linear(x.view(), sq.view(), &LinearConfig::ols()).unwrap();
    assert!(r2_score(sq.as_slice().unwrap(), line.predict(x.view()).unwrap().as_slice().unwrap()).unwrap() < 0.5);

    let lin = x.column(0).to_owned();
    let poly = fit_polynomial(x.view(), lin.view(), &cfg).unwrap();
    assert!(poly.weights[1].abs() < 1e-6, "quadratic weight {}", poly.weights[1]);
}

#[test]
fn unpenalized_fit_commutes_with_standardization() {
    let mut r = rng(1);
    let x = random_matrix(&mut r, 30, 3).mapv(|v| 5.0 + 40.0 * v);
    let y: Array1<f64> = x.rows().into_iter().map(|row| 0.1 * row[0] - 0.3 * row[1] + row[2] + r.gen::<f64>()).collect();
    let mean = x.mean_axis(Axis(0)).unwrap();
    let std = x.std_axis(Axis(0), 0.0);
    let z = (&x - &mean) / &std;
    let raw = fit_linear(x.view(), y.view(), &LinearConfig::ols()).unwrap();
    let scaled = fit_linear(z.view(), y.view(), &LinearConfig::ols()).unwrap();
    assert!(max_abs(&raw.predict(x.view()).unwrap(), &scaled.predict(z.view()).unwrap()) < 1e-8);
    assert!(max_abs(&raw.weights, &(&scaled.weights / &std)) < 1e-8);
}

#[test]
fn bayesian_ridge_mean_is_ridge_at_precision_ratio() {
    let mut r = rng(2);
    let x = random_matrix(&mut r, 60, 4);
    let y: Array1<f64> = x.rows().into_iter().map(|row| row[0] - 2.0 * row[3] + 0.3 * r.gen::<f64>()).collect();
    let br = fit_bayes_ridge(x.view(), y.view(), &BayesRidgeConfig::default()).unwrap();
    let ridge = fit_linear(x.view(), y.view(), &LinearConfig::ridge(br.omega / br.beta)).unwrap();
    assert!(max_abs(&br.mean, &ridge.weights) < 1e-8, "{} vs {}", br.mean, ridge.weights);
    assert!((br.intercept - ridge.intercept).abs() < 1e-8);
}

#[test]
fn gp_variance_at_training_points_is_at_most_the_noise() {
    let mut r = rng(3);
    let x = random_matrix(&mut r, 25, 2);
    let y = smooth_target(&x);
    let noise = 1e-4;
    let gp = fit_gp(x.view(), y.view(), Kernel::Rbf { lambda: 2.0 }, noise, 5000).unwrap();
    let (_, var) = gp.predict_with_variance(x.view()).unwrap();
    for v in var {
        assert!(v <= noise + 1e-8, "variance {v}");
    }
}

/// Three Gaussian blobs in 2-D with labels 0, 1, 2.
fn blobs(seed: u64) -> (Array2<f64>, Vec<usize>) {
    let mut r = rng(seed);
    let centers = [[0.0, 0.0], [2.0, 1.0], [0.5, 2.5]];
    let mut x = Array2::zeros((90, 2));
    let mut y = vec![];
    for i in 0..90 {
        let c = i % 3;
        x[[i, 0]] = centers[c][0] + r.gen_range(-1.0..1.0) * (1.0 + 0.3 * c as f64);
        x[[i, 1]] = centers[c][1] + r.gen_range(-1.0..1.0);
        y.push(c);
    }
    (x, y)
}

#[test]
fn classifier_posteriors_are_normalized_and_permutation_equivariant() {
    let (x, y) = blobs(4);
    let perm = [2usize, 0, 1];
    let relabeled: Vec<usize> = y.iter().map(|&c| perm[c]).collect();
    let probe = random_matrix(&mut rng(5), 15, 2).mapv(|v| 4.0 * v - 1.0);

    let check = |name: &str, a: Array2<f64>, b: Array2<f64>, tol: f64| {
        for row in a.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12, "{name} row sums to {}", row.sum());
        }
        for c in 0..3 {
            let d = (&a.column(c) - &b.column(perm[c])).iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(d < tol, "{name} class {c}: {d:e}");
        }
    };

    let cfg = LogisticConfig::default();
    let a = fit_logistic(x.view(), &y, &cfg).unwrap().predict_proba(probe.view()).unwrap();
    let b = fit_logistic(x.view(), &relabeled, &cfg).unwrap().predict_proba(probe.view()).unwrap();
    check("logistic", a, b, 1e-8);
    for kind in [DiscriminantKind::Lda, DiscriminantKind::Qda] {
        let a = fit_discriminant(x.view(), &y, kind, 1e-4).unwrap().predict_proba(probe.view()).unwrap();
        let b = fit_discriminant(x.view(), &relabeled, kind, 1e-4).unwrap().predict_proba(probe.view()).unwrap();
        check(&format!("{kind:?}"), a, b, 1e-10);
    }
    let norm = |lp: Array2<f64>| {
        let mut p = lp;
        for mut row in p.rows_mut() {
            let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            row.mapv_inplace(|v| (v - m).exp());
            let s = row.sum();
            row /= s;
        }
        p
    };
    let a = norm(fit_gaussian_nb(x.view(), &y, 1e-9).unwrap().log_posteriors(probe.view()).unwrap());
    let b = norm(fit_gaussian_nb(x.view(), &relabeled, 1e-9).unwrap().log_posteriors(probe.view()).unwrap());
    check("naive bayes", a, b, 1e-10);
}

#[test]
fn tree_training_error_never_exceeds_the_variance() {
    for seed in 0..20 {
        let mut r = rng(100 + seed);
        let n = r.gen_range(5..60);
        let x = random_matrix(&mut r, n, 3);
        let y: Array1<f64> = (0..n).map(|_| r.gen::<f64>()).collect();
        let mean = y.mean().unwrap();
        let var = y.mapv(|v| (v - mean).powi(2)).mean().unwrap();
        for depth in [Some(1), Some(3), None] {
            let t = fit_tree(x.view(), y.view(), &TreeConfig { max_depth: depth, ..TreeConfig::default() }).unwrap();
            assert!(mse(&t.predict(x.view()).unwrap(), &y) <= var + 1e-12);
        }
    }
}

#[test]
fn tree_partition_is_invariant_to_monotone_feature_maps() {
    for seed in 0..10 {
        let mut r = rng(200 + seed);
        let x = random_matrix(&mut r, 50, 3);
        let y = smooth_target(&x);
        let warped = x.mapv(|v| (3.0 * v).exp() + v.powi(3));
        let cfg = TreeConfig { max_depth: Some(4), ..TreeConfig::default() };
        let a = fit_tree(x.view(), y.view(), &cfg).unwrap().predict(x.view()).unwrap();
        let b = fit_tree(warped.view(), y.view(), &cfg).unwrap().predict(warped.view()).unwrap();
        assert!(max_abs(&a, &b) < 1e-12, "seed {seed}");
    }
}

fn regression_data(seed: u64, n: usize) -> (Array2<f64>, Array1<f64>) {
    let mut r = rng(seed);
    let x = random_matrix(&mut r, n, 2);
    let y = smooth_target(&x) + Array1::from_shape_fn(n, |_| 0.2 * (r.gen::<f64>() - 0.5));
    (x, y)
}

#[test]
fn forest_prediction_is_the_member_mean() {
    let (x, y) = regression_data(6, 80);
    let cfg = ForestConfig { n_estimators: 7, bootstrap: true, tree: TreeConfig { max_features: Some(1), ..TreeConfig::default() }, seed: 9 };
    let f = fit_forest(x.view(), y.view(), &cfg).unwrap();
    let probe = random_matrix(&mut rng(7), 20, 2);
    let mut mean = Array1::zeros(20);
    for t in &f.trees {
        mean += &t.predict(probe.view()).unwrap();
    }
    mean /= f.trees.len() as f64;
    assert!(max_abs(&f.predict(probe.view()).unwrap(), &mean) < 1e-12);
}

#[test]
fn bagging_reduces_seed_variance_of_test_error() {
    let (x, y) = regression_data(8, 100);
    let (xt, yt) = regression_data(9, 200);
    let spread = |m: usize| {
        let errs: Vec<f64> = (0..10)
            .map(|seed| {
                let cfg = ForestConfig { n_estimators: m, bootstrap: true, tree: TreeConfig::default(), seed };
                mse(&fit_forest(x.view(), y.view(), &cfg).unwrap().predict(xt.view()).unwrap(), &yt)
            })
            .collect();
        let mean = errs.iter().sum::<f64>() / 10.0;
        errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / 10.0
    };
    let (one, many) = (spread(1), spread(100));
    assert!(many < one, "variance with 100 members {many:e} vs 1 member {one:e}");
}

#[test]
fn adaboost_single_round_is_its_base_learner_and_stays_in_member_range() {
    let (x, y) = regression_data(10, 60);
    let base = AdaBoostConfig { n_estimators: 1, learning_rate: 1.0, loss: BoostLoss::Linear, tree: TreeConfig { max_depth: Some(3), ..TreeConfig::default() }, seed: 4 };
    let probe = random_matrix(&mut rng(11), 30, 2);
    let one = fit_adaboost(x.view(), y.view(), &base).unwrap();
    assert_eq!(one.trees.len(), 1);
    assert_eq!(one.predict(probe.view()).unwrap(), one.trees[0].predict(probe.view()).unwrap());

    let many = fit_adaboost(x.view(), y.view(), &AdaBoostConfig { n_estimators: 25, ..base }).unwrap();
    let members: Vec<Array1<f64>> = many.trees.iter().map(|t| t.predict(probe.view()).unwrap()).collect();
    for (i, p) in many.predict(probe.view()).unwrap().iter().enumerate() {
        let lo = members.iter().map(|m| m[i]).fold(f64::INFINITY, f64::min);
        let hi = members.iter().map(|m| m[i]).fold(f64::NEG_INFINITY, f64::max);
        assert!(lo <= *p && *p <= hi);
    }
}

#[test]
fn gbm_interpolates_with_deep_trees_and_unit_rate() {
    let (x, y) = regression_data(12, 50);
    let cfg = GbmConfig { n_estimators: 50, learning_rate: 1.0, subsample: 1.0, tree: TreeConfig::default(), seed: 0 };
    let g = fit_gbm(x.view(), y.view(), &cfg).unwrap();
    assert!(max_abs(&g.predict(x.view()).unwrap(), &y) < 1e-6);
}

#[test]
fn gbm_is_the_mean_plus_scaled_member_sum() {
    let (x, y) = regression_data(13, 80);
    let cfg = GbmConfig { n_estimators: 20, learning_rate: 0.1, subsample: 0.7, tree: TreeConfig { max_depth: Some(3), ..TreeConfig::default() }, seed: 5 };
    let g = fit_gbm(x.view(), y.view(), &cfg).unwrap();
    assert!((g.init - y.mean().unwrap()).abs() < 1e-12);
    let probe = random_matrix(&mut rng(14), 25, 2);
    let mut sum = Array1::from_elem(25, g.init);
    for t in &g.trees {
        sum = sum + t.predict(probe.view()).unwrap() * 0.1;
    }
    assert!(max_abs(&g.predict(probe.view()).unwrap(), &sum) < 1e-12);
}

fn network(hidden: &[usize], activation: Activation, task: MlpTask, n_in: usize) -> MlpModel {
    let cfg = MlpConfig { hidden: hidden.to_vec(), activation, ..MlpConfig::default() };
    MlpModel::init(n_in, &cfg, task, &mut rng(15))
}

#[test]
fn network_forward_examples() {
    let mut m = network(&[3], Activation::Tanh, MlpTask::Regression, 2);
    m.weights.iter_mut().for_each(|w| w.fill(0.0));
    assert_eq!(m.output(array![[1.0, -4.0], [0.3, 2.0]].view()).unwrap(), Array2::<f64>::zeros((2, 1)));

    let mut m = network(&[2], Activation::Relu, MlpTask::Regression, 2);
    m.weights[0] = Array2::eye(2);
    let x = array![[-1.0, 2.0]];
    m.weights[1] = array![[1.0], [0.0]];
    assert_eq!(m.output(x.view()).unwrap()[[0, 0]], 0.0);
    m.weights[1] = array![[0.0], [1.0]];
    assert_eq!(m.output(x.view()).unwrap()[[0, 0]], 2.0);

    let mut m = network(&[3], Activation::Relu, MlpTask::Classification { n_classes: 4 }, 2);
    m.weights[1].fill(0.0);
    let p = m.output(array![[0.7, -0.2]].view()).unwrap();
    assert!(p.iter().all(|&v| (v - 0.25).abs() < 1e-15));
}

#[test]
fn perfect_batch_has_zero_loss_and_gradient_and_penalty_is_linear_in_alpha() {
    let m = network(&[4], Activation::Tanh, MlpTask::Regression, 3);
    let x = random_matrix(&mut rng(16), 10, 3);
    let y: Vec<f64> = m.output(x.view()).unwrap().column(0).to_vec();
    let (loss, gw, gb) = m.loss_and_gradients(x.view(), &y, 0.0).unwrap();
    assert!(loss.abs() < 1e-28);
    assert!(gw.iter().flatten().chain(gb.iter().flatten()).all(|v| v.abs() < 1e-14));

    let (_, g1, _) = m.loss_and_gradients(x.view(), &y, 0.5).unwrap();
    let (_, g2, _) = m.loss_and_gradients(x.view(), &y, 1.0).unwrap();
    for (a, b) in g1.iter().zip(&g2) {
        assert!((b - &(a * 2.0)).iter().all(|v| v.abs() < 1e-14));
    }
}

#[test]
fn network_without_hidden_layers_fits_a_line() {
    let x = Array2::from_shape_fn((200, 1), |(i, _)| -1.0 + 0.01 * i as f64);
    let y: Vec<f64> = x.column(0).iter().map(|v| 3.0 * v + 1.0).collect();
    let cfg = MlpConfig { hidden: vec![], learning_rate: 0.01, max_iter: 2000, batch_size: 32, ..MlpConfig::default() };
    let m = fit_mlp(x.view(), &y, MlpTask::Regression, &cfg).unwrap();
    let pred = m.predict(x.view()).unwrap();
    assert!(r2_score(&y, pred.as_slice().unwrap()).unwrap() >= 0.999);

    let again = fit_mlp(x.view(), &y, MlpTask::Regression, &cfg).unwrap();
    assert_eq!(m.loss_curve, again.loss_curve);
}

#[test]
fn full_batch_loss_never_increases_at_a_small_rate() {
    let (x, y) = regression_data(17, 64);
    let cfg = MlpConfig {
        hidden: vec![8],
        activation: Activation::Tanh,
        learning_rate: 1e-4,
        max_iter: 300,
        batch_size: 64,
        tol: 0.0,
        n_iter_no_change: 300,
        ..MlpConfig::default()
    };
    let m = fit_mlp(x.view(), y.as_slice().unwrap(), MlpTask::Regression, &cfg).unwrap();
    assert_eq!(m.loss_curve.len(), 300);
    for w in m.loss_curve.windows(2) {
        assert!(w[1] <= w[0] + 1e-12, "{} -> {}", w[0], w[1]);
    }
}

#[test]
fn bias_free_relu_network_is_positively_homogeneous() {
    let m = network(&[5, 4], Activation::Relu, MlpTask::Regression, 3);
    let x = random_matrix(&mut rng(18), 12, 3).mapv(|v| v - 0.5);
    let base = m.output(x.view()).unwrap();
    for c in [0.5, 3.0, 40.0] {
        let scaled = m.output((&x * c).view()).unwrap();
        assert!((&scaled - &(&base * c)).iter().all(|v| v.abs() < 1e-12 * c.max(1.0)));
    }
}

#[test]
fn gradients_stay_exact_after_training() {
    let (x, y) = regression_data(19, 40);
    let y = y.to_vec();
    let cfg = MlpConfig { hidden: vec![6], activation: Activation::Tanh, max_iter: 10, batch_size: 8, learning_rate: 0.01, ..MlpConfig::default() };
    let mut m = fit_mlp(x.view(), &y, MlpTask::Regression, &cfg).unwrap();
    let alpha = 0.1;
    let (_, gw, gb) = m.loss_and_gradients(x.view(), &y, alpha).unwrap();
    let mut analytic: Vec<f64> = vec![];
    for (w, b) in gw.iter().zip(&gb) {
        analytic.extend(w.iter());
        analytic.extend(b.iter());
    }
    let theta = mixemu::emu::mlp::flatten_params(&m);
    let h = 1e-5;
    let mut worst = 0.0f64;
    for k in 0..theta.len() {
        let mut t = theta.clone();
        t[k] += h;
        mixemu::emu::mlp::set_params(&mut m, &t);
        let up = m.loss_and_gradients(x.view(), &y, alpha).unwrap().0;
        t[k] -= 2.0 * h;
        mixemu::emu::mlp::set_params(&mut m, &t);
        let down = m.loss_and_gradients(x.view(), &y, alpha).unwrap().0;
        let num = (up - down) / (2.0 * h);
        worst = worst.max((num - analytic[k]).abs() / (num.abs() + analytic[k].abs()).max(1e-8));
    }
    assert!(worst < 1e-4, "relative error {worst:e}");
}
