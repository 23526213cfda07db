//! Evaluation reports: per-emulator scores and timings, confusion matrices,
//! the emulator-versus-solver speedup, and plot-ready prediction series.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::campaign::{series_features, Dataset, Target};
use crate::codec::write_atomic;
use crate::emu::{Emulator, Family, Params};
use crate::error::{Error, Result};
use crate::metrics::{confusion_matrix, median_seconds, off_diagonal_fraction};
use crate::pde::solve;
use crate::qoi::normalized_qois;
use crate::SimulationConfig;

/// Number of mixing classes.
pub const N_CLASSES: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub emulator: String,
    pub target: String,
    pub train_score: f64,
    pub test_score: f64,
    pub fit_seconds: f64,
    pub predict_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionReport {
    pub emulator: String,
    /// Row `i` is true class `i + 1`, column `j` predicted class `j + 1`.
    pub matrix: Vec<Vec<u64>>,
    pub off_diagonal_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedupReport {
    pub config_hash: String,
    pub n_repeats: usize,
    /// One solve plus the reduction to the nine series and classes.
    pub solve_seconds: f64,
    /// Predicting every target of the full series with the given models.
    pub predict_seconds: f64,
    pub speedup: f64,
    pub emulators: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalReport {
    pub seed: u64,
    pub n_train_sims: usize,
    pub n_test_sims: usize,
    pub n_train_rows: usize,
    pub n_test_rows: usize,
    pub rows: Vec<EvalRow>,
    pub confusion: Vec<ConfusionReport>,
    pub speedup: Vec<SpeedupReport>,
}

impl EvalReport {
    pub fn new(seed: u64, train: &Dataset, test: &Dataset) -> Self {
        EvalReport {
            seed,
            n_train_sims: train.simulations().len(),
            n_test_sims: test.simulations().len(),
            n_train_rows: train.len(),
            n_test_rows: test.len(),
            ..Default::default()
        }
    }

    pub fn row(&self, emulator: &str, target: &str) -> Option<&EvalRow> {
        self.rows.iter().find(|r| r.emulator == emulator && r.target == target)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("report: {e}")))
    }

    /// Aligned table: emulator, target, train/test share of simulations,
    /// train/test scores and wall times.
    pub fn text_table(&self) -> String {
        let total = (self.n_train_sims + self.n_test_sims).max(1) as f64;
        let (tr, te) = (100.0 * self.n_train_sims as f64 / total, 100.0 * self.n_test_sims as f64 / total);
        let header = ["emulator", "target", "train %", "test %", "train score", "test score", "train time s", "predict time s"];
        let mut cells: Vec<[String; 8]> = vec![header.map(String::from)];
        for r in &self.rows {
            cells.push([
                r.emulator.clone(),
                r.target.clone(),
                format!("{tr:.1}"),
                format!("{te:.1}"),
                format!("{:.4}", r.train_score),
                format!("{:.4}", r.test_score),
                format!("{:.3}", r.fit_seconds),
                format!("{:.4}", r.predict_seconds),
            ]);
        }
        let widths: Vec<usize> = (0..8).map(|c| cells.iter().map(|r| r[c].len()).max().unwrap_or(0)).collect();
        let mut out = String::new();
        if self.rows.is_empty() {
            cells.clear();
        }
        for (i, r) in cells.iter().enumerate() {
            let line: Vec<String> = r
                .iter()
                .enumerate()
                .map(|(c, v)| if c < 2 { format!("{v:<w$}", w = widths[c]) } else { format!("{v:>w$}", w = widths[c]) })
                .collect();
            let _ = writeln!(out, "{}", line.join("  ").trim_end());
            if i == 0 {
                let _ = writeln!(out, "{}", widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("  "));
            }
        }
        for c in &self.confusion {
            let _ = writeln!(out, "{}confusion ({}; rows true 1..{N_CLASSES}, columns predicted), off-diagonal {:.4}", if out.is_empty() { "" } else { "\n" }, c.emulator, c.off_diagonal_fraction);
            for row in &c.matrix {
                let _ = writeln!(out, "{}", row.iter().map(|v| format!("{v:>7}")).collect::<String>());
            }
        }
        for s in &self.speedup {
            let _ = writeln!(
                out,
                "{}speedup [{}] config {}: solve {:.4} s, predict {:.6} s, ratio {:.0} (median of {})",
                if out.is_empty() { "" } else { "\n" },
                s.emulators.join(", "),
                s.config_hash,
                s.solve_seconds,
                s.predict_seconds,
                s.speedup,
                s.n_repeats
            );
        }
        out
    }

    /// Writes `report.json` and `report.txt` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_atomic(&dir.join("report.json"), self.to_json().as_bytes())?;
        write_atomic(&dir.join("report.txt"), self.text_table().as_bytes())
    }
}

/// Fits on `train`, scores on both partitions and times the fit and the
/// test-set prediction.
pub fn fit_and_evaluate(
    family: Family,
    params: Params,
    target: Target,
    train: &Dataset,
    test: &Dataset,
    seed: u64,
) -> Result<(Emulator, EvalRow)> {
    let y = train.labels(target);
    let t0 = Instant::now();
    let model = Emulator::fit(family, params, target, train.features.view(), y.view(), seed)?;
    let fit_seconds = t0.elapsed().as_secs_f64();
    let row = evaluate(&model, train, test, fit_seconds)?;
    Ok((model, row))
}

/// Scores an already fitted model.
pub fn evaluate(model: &Emulator, train: &Dataset, test: &Dataset, fit_seconds: f64) -> Result<EvalRow> {
    let train_score = model.score(train)?;
    let t0 = Instant::now();
    let test_score = model.score(test)?;
    Ok(EvalRow {
        emulator: model.family.name().to_string(),
        target: model.target.name().to_string(),
        train_score,
        test_score,
        fit_seconds,
        predict_seconds: t0.elapsed().as_secs_f64(),
    })
}

/// Confusion matrix of a class-target model on `data`.
pub fn confusion_report(model: &Emulator, data: &Dataset) -> Result<ConfusionReport> {
    if !model.target.is_class() {
        return Err(Error::invalid(format!("{} predicts a series, not classes", model.family)));
    }
    let pred: Vec<usize> = model.predict(data.features.view())?.iter().map(|&v| v as usize).collect();
    let truth: Vec<usize> = data.class.iter().map(|&c| usize::from(c)).collect();
    let m = confusion_matrix(&truth, &pred, N_CLASSES)?;
    Ok(ConfusionReport {
        emulator: model.family.name().to_string(),
        matrix: m.rows().into_iter().map(|r| r.to_vec()).collect(),
        off_diagonal_fraction: off_diagonal_fraction(&m),
    })
}

/// Long-format CSV `sim_id,time,target,true,predicted` over the rows of
/// `sims`, one block per model.
pub fn prediction_series_csv(models: &[&Emulator], data: &Dataset, sims: &[usize]) -> Result<String> {
    let mut out = String::from("sim_id,time,target,true,predicted\n");
    let part = data.subset(sims);
    for m in models {
        let pred = m.predict(part.features.view())?;
        let truth = part.labels(m.target);
        for r in 0..part.len() {
            let _ = writeln!(out, "{},{},{},{},{}", part.sim_ids[r], part.features[[r, 5]], m.target.name(), truth[r], pred[r]);
        }
    }
    Ok(out)
}

/// Short stable digest of a configuration's JSON form.
pub fn config_hash(config: &SimulationConfig) -> String {
    let json = serde_json::to_string(config).expect("config serializes");
    let digest = Sha256::digest(json.as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Median wall times of one solve (with the series reduction) and of
/// predicting the same series with `models`. Solver and predictors run on
/// the calling thread only.
pub fn benchmark(config: &SimulationConfig, models: &[&Emulator], n_repeats: usize) -> Result<SpeedupReport> {
    if models.is_empty() {
        return Err(Error::invalid("benchmark needs at least one model"));
    }
    config.validate()?;
    let traj = solve(config, 1)?;
    let times = traj.times();
    let mut failure = None;
    let solve_seconds = median_seconds(n_repeats, || {
        if let Err(e) = solve(config, 1).and_then(|t| normalized_qois(&t, 0)) {
            failure.get_or_insert(e);
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    let predict_seconds = median_seconds(n_repeats, || {
        let x = series_features(config, &times);
        for m in models {
            if let Err(e) = m.predict(x.view()) {
                failure.get_or_insert(e);
            }
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(SpeedupReport {
        config_hash: config_hash(config),
        n_repeats: n_repeats.max(1),
        solve_seconds,
        predict_seconds,
        speedup: solve_seconds / predict_seconds.max(f64::MIN_POSITIVE),
        emulators: models.iter().map(|m| format!("{}:{}", m.family, m.target.name())).collect(),
    })
}
