use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde_json::{Map, Value};

use crate::campaign::{kfold, Dataset, Target};
use crate::emu::{Emulator, Family, Params};
use crate::error::{Error, Result};

/// One grid point with its per-fold validation scores.
#[derive(Debug, Clone, PartialEq)]
pub struct CvRow {
    pub overrides: Map<String, Value>,
    /// `-inf` for a fold whose fit or prediction failed.
    pub fold_scores: Vec<f64>,
    pub mean: f64,
    /// Population variance over folds; NaN when a fold failed.
    pub variance: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSearchResult {
    pub family: Family,
    pub target: Target,
    pub rows: Vec<CvRow>,
    pub best: usize,
}

impl GridSearchResult {
    pub fn best_overrides(&self) -> &Map<String, Value> {
        &self.rows[self.best].overrides
    }

    /// One line per grid point; the setting is a JSON object.
    pub fn to_csv(&self) -> String {
        let k = self.rows.first().map_or(0, |r| r.fold_scores.len());
        let mut s = String::from("rank_order,setting,mean,variance");
        for f in 0..k {
            let _ = write!(s, ",fold_{f}");
        }
        s.push_str(",best\n");
        for (i, r) in self.rows.iter().enumerate() {
            let setting = Value::Object(r.overrides.clone()).to_string().replace('"', "\"\"");
            let _ = write!(s, "{i},\"{setting}\",{},{}", r.mean, r.variance);
            for v in &r.fold_scores {
                let _ = write!(s, ",{v}");
            }
            let _ = writeln!(s, ",{}", u8::from(i == self.best));
        }
        s
    }
}

/// Cartesian product of the value lists. Keys iterate in sorted order with
/// the last key varying fastest.
pub fn expand_grid(grid: &BTreeMap<String, Vec<Value>>) -> Result<Vec<Map<String, Value>>> {
    let mut out = vec![Map::new()];
    for (key, values) in grid {
        if values.is_empty() {
            return Err(Error::invalid(format!("grid entry `{key}` has no values")));
        }
        out = out
            .into_iter()
            .flat_map(|base| {
                values.iter().map(move |v| {
                    let mut m = base.clone();
                    m.insert(key.clone(), v.clone());
                    m
                })
            })
            .collect();
    }
    Ok(out)
}

/// Exhaustive k-fold search over `grid`, with folds at the simulation level.
/// Scores are validation R² (or accuracy); the best setting has the highest
/// mean, ties going to the earlier setting.
pub fn grid_search(
    family: Family,
    grid: &BTreeMap<String, Vec<Value>>,
    data: &Dataset,
    target: Target,
    k: usize,
    seed: u64,
) -> Result<GridSearchResult> {
    if !family.supports(target) {
        return Err(Error::invalid(format!("{family} cannot predict {}", target.name())));
    }
    let settings = expand_grid(grid)?;
    // Reject unknown keys up front rather than scoring every fold as failed.
    for s in &settings {
        Params::for_family(family, s)?;
    }
    let folds = kfold(&data.simulations(), k, seed)?;
    let splits: Vec<(Dataset, Dataset)> = folds
        .iter()
        .enumerate()
        .map(|(f, held)| {
            let train: Vec<usize> = folds.iter().enumerate().filter(|&(g, _)| g != f).flat_map(|(_, s)| s.iter().copied()).collect();
            (data.subset(&train), data.subset(held))
        })
        .collect();

    let mut rows = Vec::with_capacity(settings.len());
    for overrides in settings {
        let params = Params::for_family(family, &overrides)?;
        let mut fold_scores = Vec::with_capacity(k);
        let mut error = None;
        for (train, held) in &splits {
            let y = train.labels(target);
            let scored = Emulator::fit(family, params.clone(), target, train.features.view(), y.view(), seed)
                .and_then(|m| m.score(held));
            match scored {
                Ok(v) => fold_scores.push(v),
                Err(e) => {
                    log::warn!("{family} {} fold failed: {e}", Value::Object(overrides.clone()));
                    error.get_or_insert_with(|| e.to_string());
                    fold_scores.push(f64::NEG_INFINITY);
                }
            }
        }
        let (mean, variance) = if error.is_some() {
            (f64::NEG_INFINITY, f64::NAN)
        } else {
            let n = fold_scores.len() as f64;
            let m = fold_scores.iter().sum::<f64>() / n;
            (m, fold_scores.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n)
        };
        log::info!("{family} {}: mean {mean:.4} var {variance:.2e}", Value::Object(overrides.clone()));
        rows.push(CvRow { overrides, fold_scores, mean, variance, error });
    }
    let mut best = 0;
    for (i, r) in rows.iter().enumerate() {
        if r.mean > rows[best].mean {
            best = i;
        }
    }
    Ok(GridSearchResult { family, target, rows, best })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use serde_json::json;

    fn toy() -> Dataset {
        let n_sims = 8;
        let frames = 6;
        let n = n_sims * frames;
        let mut features = Array2::zeros((n, 6));
        let mut qoi = Array2::zeros((n, 9));
        let mut sim_ids = Vec::new();
        for s in 0..n_sims {
            for f in 0..frames {
                let r = s * frames + f;
                let v = [1.0 + s as f64, 10.0 + (s % 3) as f64, 0.01 * (1 + s % 2) as f64, 1.0 + (s % 4) as f64, 1e-4, f as f64 / 5.0];
                for j in 0..6 {
                    features[[r, j]] = v[j];
                }
                for c in 0..9 {
                    qoi[[r, c]] = 0.1 * v[0] + 0.3 * v[5] + 0.01 * c as f64 * v[3];
                }
                sim_ids.push(s);
            }
        }
        Dataset { features, qoi, class: vec![1; n], sim_ids }
    }

    #[test]
    fn expansion_order_and_size() {
        let mut g = BTreeMap::new();
        g.insert("b".to_string(), vec![json!(1), json!(2)]);
        g.insert("a".to_string(), vec![json!("x"), json!("y"), json!("z")]);
        let e = expand_grid(&g).unwrap();
        assert_eq!(e.len(), 6);
        assert_eq!(e[0]["a"], json!("x"));
        assert_eq!(e[0]["b"], json!(1));
        assert_eq!(e[1]["b"], json!(2));
        assert_eq!(e[2]["a"], json!("y"));
        assert!(expand_grid(&BTreeMap::new()).unwrap() == vec![Map::new()]);
    }

    #[test]
    fn single_setting_is_returned() {
        let mut g = BTreeMap::new();
        g.insert("alpha".to_string(), vec![json!(1.0)]);
        let r = grid_search(Family::Ridge, &g, &toy(), Target::CbarA, 4, 0).unwrap();
        assert_eq!(r.rows.len(), 1);
        assert_eq!(r.best, 0);
        assert_eq!(r.rows[0].fold_scores.len(), 4);
        assert!(r.rows[0].variance >= 0.0);
    }

    #[test]
    fn ties_go_to_first_and_failures_score_neg_inf() {
        let mut g = BTreeMap::new();
        // Identical settings tie exactly.
        g.insert("fit_intercept".to_string(), vec![json!(true), json!(true)]);
        let r = grid_search(Family::Lsqr, &g, &toy(), Target::CbarA, 2, 3).unwrap();
        assert_eq!(r.rows[0].mean, r.rows[1].mean);
        assert_eq!(r.best, 0);

        let mut g = BTreeMap::new();
        g.insert("alpha".to_string(), vec![json!(-1.0), json!(1.0)]);
        let r = grid_search(Family::Ridge, &g, &toy(), Target::CbarA, 2, 3).unwrap();
        assert_eq!(r.rows[0].mean, f64::NEG_INFINITY);
        assert!(r.rows[0].error.is_some());
        assert_eq!(r.best, 1);
        assert!(r.to_csv().lines().count() == 3);
    }

    #[test]
    fn unknown_key_is_rejected() {
        let mut g = BTreeMap::new();
        g.insert("nope".to_string(), vec![json!(1)]);
        assert!(grid_search(Family::Ridge, &g, &toy(), Target::CbarA, 2, 0).is_err());
    }
}
