use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use std::path::Path;

use crate::campaign::run::{CampaignResult, CSV_HEADER};
use crate::error::{Error, Result};
use crate::SimulationConfig;

/// Feature columns, in matrix order.
pub const FEATURE_NAMES: [&str; 6] = ["v0", "aniso_ratio", "d_m", "kfl", "t_osc", "time"];

/// What an emulator predicts: one of the nine normalized series or the mixing class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Target {
    CbarA,
    CbarB,
    CbarC,
    CsqA,
    CsqB,
    CsqC,
    VarA,
    VarB,
    VarC,
    ClassC,
}

impl Target {
    pub const REGRESSION: [Target; 9] = [
        Target::CbarA,
        Target::CbarB,
        Target::CbarC,
        Target::CsqA,
        Target::CsqB,
        Target::CsqC,
        Target::VarA,
        Target::VarB,
        Target::VarC,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Target::CbarA => "cbar_A",
            Target::CbarB => "cbar_B",
            Target::CbarC => "cbar_C",
            Target::CsqA => "csq_A",
            Target::CsqB => "csq_B",
            Target::CsqC => "csq_C",
            Target::VarA => "var_A",
            Target::VarB => "var_B",
            Target::VarC => "var_C",
            Target::ClassC => "class_C",
        }
    }

    pub fn from_name(s: &str) -> Option<Target> {
        Self::REGRESSION
            .into_iter()
            .chain([Target::ClassC])
            .find(|t| t.name() == s)
    }

    pub fn is_class(self) -> bool {
        self == Target::ClassC
    }

    /// Column in [`Dataset::qoi`]; `None` for the class target.
    pub fn qoi_column(self) -> Option<usize> {
        Self::REGRESSION.iter().position(|&t| t == self)
    }
}

/// Rows are `(simulation, saved frame)` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// `v0, aniso_ratio, d_m, kfl, t_osc, time / horizon`.
    pub features: Array2<f64>,
    /// The nine normalized series, columns in [`Target::REGRESSION`] order.
    pub qoi: Array2<f64>,
    pub class: Vec<u8>,
    pub sim_ids: Vec<usize>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.sim_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sim_ids.is_empty()
    }

    /// Labels for `target`; class labels are returned as `1.0..=4.0`.
    pub fn labels(&self, target: Target) -> Array1<f64> {
        match target.qoi_column() {
            Some(c) => self.qoi.column(c).to_owned(),
            None => self.class.iter().map(|&c| f64::from(c)).collect(),
        }
    }

    pub fn labels_view(&self, target: Target) -> Option<ArrayView1<'_, f64>> {
        target.qoi_column().map(|c| self.qoi.column(c))
    }

    /// Distinct simulation ids in first-seen order.
    pub fn simulations(&self) -> Vec<usize> {
        let mut out: Vec<usize> = Vec::new();
        for &s in &self.sim_ids {
            if out.last() != Some(&s) && !out.contains(&s) {
                out.push(s);
            }
        }
        out
    }

    /// Rows whose simulation is in `sims`, in original row order.
    pub fn subset(&self, sims: &[usize]) -> Dataset {
        let keep: std::collections::HashSet<usize> = sims.iter().copied().collect();
        let rows: Vec<usize> = (0..self.len()).filter(|&r| keep.contains(&self.sim_ids[r])).collect();
        self.select_rows(&rows)
    }

    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select(Axis(0), rows),
            qoi: self.qoi.select(Axis(0), rows),
            class: rows.iter().map(|&r| self.class[r]).collect(),
            sim_ids: rows.iter().map(|&r| self.sim_ids[r]).collect(),
        }
    }
}

/// One row per (completed simulation, saved frame); incomplete runs are skipped.
/// Feature rows for one configuration at the given simulated times.
pub fn series_features(cfg: &SimulationConfig, times: &[f64]) -> Array2<f64> {
    let params = [
        cfg.flow.v0,
        cfg.dispersion.aniso_ratio(),
        cfg.dispersion.d_m,
        f64::from(cfg.flow.kappa_f_l),
        cfg.flow.t_osc,
    ];
    let horizon = cfg.horizon();
    Array2::from_shape_fn((times.len(), FEATURE_NAMES.len()), |(i, k)| if k < 5 { params[k] } else { times[i] / horizon })
}

pub fn assemble(result: &CampaignResult) -> Result<Dataset> {
    let completed: Vec<_> = result.completed().collect();
    if completed.is_empty() {
        return Err(Error::EmptyDataset("no completed simulations".into()));
    }
    let rows: usize = completed.iter().map(|r| r.series().map_or(0, |q| q.len())).sum();
    let mut features = Array2::zeros((rows, FEATURE_NAMES.len()));
    let mut qoi = Array2::zeros((rows, 9));
    let mut class = Vec::with_capacity(rows);
    let mut sim_ids = Vec::with_capacity(rows);
    let mut r = 0;
    for rec in completed {
        let q = rec.series().expect("filtered to completed");
        let block = series_features(&rec.config, &q.times);
        features.slice_mut(ndarray::s![r..r + q.len(), ..]).assign(&block);
        let cols = q.columns();
        for f in 0..q.len() {
            for (k, c) in cols.iter().enumerate() {
                qoi[[r, k]] = c[f];
            }
            class.push(q.mixing_class[f]);
            sim_ids.push(rec.index);
            r += 1;
        }
    }
    if features.iter().chain(qoi.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite value in assembled dataset".into()));
    }
    Ok(Dataset { features, qoi, class, sim_ids })
}

/// Reads a campaign CSV (exact header) into a dataset. The time feature is
/// each simulation's time divided by its final saved time.
pub fn read_dataset_csv(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(CSV_HEADER) {
        return Err(Error::format(path, "header does not match the campaign schema"));
    }
    let mut feat = Vec::new();
    let mut qoi = Vec::new();
    let mut class = Vec::new();
    let mut sim_ids = Vec::new();
    for (ln, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let bad = |why: String| Error::format(path, format!("line {}: {why}", ln + 2));
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 17 {
            return Err(bad(format!("{} fields, expected 17", cells.len())));
        }
        sim_ids.push(cells[0].trim().parse::<usize>().map_err(|e| bad(e.to_string()))?);
        for (k, c) in cells[1..16].iter().enumerate() {
            let v: f64 = c.trim().parse().map_err(|e| bad(format!("{c}: {e}")))?;
            if !v.is_finite() {
                return Err(bad(format!("non-finite value {c}")));
            }
            if k < 6 { feat.push(v) } else { qoi.push(v) }
        }
        let c: u8 = cells[16].trim().parse().map_err(|e| bad(format!("class: {e}")))?;
        if !(1..=4).contains(&c) {
            return Err(bad(format!("class {c} outside 1..=4")));
        }
        class.push(c);
    }
    if sim_ids.is_empty() {
        return Err(Error::EmptyDataset(format!("{} has no rows", path.display())));
    }
    let n = sim_ids.len();
    let mut features = Array2::from_shape_vec((n, 6), feat).expect("row width checked");
    let mut horizon = std::collections::HashMap::new();
    for r in 0..n {
        let h = horizon.entry(sim_ids[r]).or_insert(0.0f64);
        *h = h.max(features[[r, 5]]);
    }
    for r in 0..n {
        let h = horizon[&sim_ids[r]];
        if h > 0.0 {
            features[[r, 5]] /= h;
        }
    }
    Ok(Dataset {
        features,
        qoi: Array2::from_shape_vec((n, 9), qoi).expect("row width checked"),
        class,
        sim_ids,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_rows_normalize_time_per_simulation() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.csv");
        let q = "1,1,1,1,1,1,1,1,1";
        std::fs::write(
            &p,
            format!("{CSV_HEADER}\n3,1,1,1e-3,1,1e-4,0,{q},4\n3,1,1,1e-3,1,1e-4,0.5,{q},3\n7,0.1,100,1e-1,2,3e-4,0,{q},1\n7,0.1,100,1e-1,2,3e-4,0.25,{q},1\n"),
        )
        .unwrap();
        let d = read_dataset_csv(&p).unwrap();
        assert_eq!(d.len(), 4);
        assert_eq!(d.simulations(), vec![3, 7]);
        assert_eq!(d.features.column(5).to_vec(), vec![0.0, 1.0, 0.0, 1.0]);
        assert_eq!(d.labels(Target::ClassC).to_vec(), vec![4.0, 3.0, 1.0, 1.0]);
    }

    #[test]
    fn bad_header_and_class_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.csv");
        std::fs::write(&p, "sim,v0\n").unwrap();
        assert!(matches!(read_dataset_csv(&p), Err(Error::Format { .. })));
        std::fs::write(&p, format!("{CSV_HEADER}\n0,1,1,1,1,1,0,1,1,1,1,1,1,1,1,1,5\n")).unwrap();
        assert!(matches!(read_dataset_csv(&p), Err(Error::Format { .. })));
    }
}
