//! Campaign execution: one QoI CSV per simulation under `sims/`, a
//! line-oriented `manifest.txt`, and the concatenated `campaign.csv`.
//!
//! Every output is written to a temporary name and renamed into place, so an
//! interrupted campaign leaves only whole files and a manifest of what had
//! finished. Re-running skips every config whose output is already valid.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rayon::prelude::*;

use crate::codec::write_atomic;
use crate::error::{Error, Result};
use crate::pde::{solve, SimulationConfig, Species};
use crate::qoi::{normalized_qois, QoiSeries};

pub const CSV_HEADER: &str = "sim_id,v0,aniso_ratio,d_m,kfl,t_osc,time,cbar_A,cbar_B,cbar_C,csq_A,csq_B,csq_C,var_A,var_B,var_C,class_C";

const MANIFEST: &str = "manifest.txt";
const COMBINED: &str = "campaign.csv";

#[derive(Debug, Clone, PartialEq)]
pub enum SimStatus {
    Complete(QoiSeries<f64>),
    /// The solver stopped early; the message says where and why.
    Incomplete(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimRecord {
    pub index: usize,
    pub config: SimulationConfig<f64>,
    pub save_every: usize,
    pub status: SimStatus,
}

impl SimRecord {
    pub fn series(&self) -> Option<&QoiSeries<f64>> {
        match &self.status {
            SimStatus::Complete(q) => Some(q),
            SimStatus::Incomplete(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignResult {
    /// Ordered by config index.
    pub records: Vec<SimRecord>,
    /// Solves performed by this call (0 when everything was already on disk).
    pub solved: usize,
}

impl CampaignResult {
    pub fn completed(&self) -> impl Iterator<Item = &SimRecord> {
        self.records.iter().filter(|r| r.series().is_some())
    }

    pub fn incomplete(&self) -> impl Iterator<Item = &SimRecord> {
        self.records.iter().filter(|r| r.series().is_none())
    }
}

fn csv_path(dir: &Path, index: usize) -> PathBuf {
    dir.join("sims").join(format!("sim_{index:05}.csv"))
}

fn incomplete_path(dir: &Path, index: usize) -> PathBuf {
    dir.join("sims").join(format!("sim_{index:05}.incomplete"))
}

/// Number of frames a completed run with this config saves.
pub fn expected_frames(config: &SimulationConfig<f64>, save_every: usize) -> usize {
    1 + config.n_steps / save_every + usize::from(config.n_steps % save_every != 0)
}

/// CSV rows (no header) for one simulation.
pub fn series_rows(config: &SimulationConfig<f64>, q: &QoiSeries<f64>) -> String {
    let mut out = String::new();
    let cols = q.columns();
    let prefix = format!(
        "{},{},{},{},{},{}",
        q.sim_id,
        config.flow.v0,
        config.dispersion.aniso_ratio(),
        config.dispersion.d_m,
        config.flow.kappa_f_l,
        config.flow.t_osc
    );
    for f in 0..q.len() {
        let _ = write!(out, "{prefix},{}", q.times[f]);
        for c in cols {
            let _ = write!(out, ",{}", c[f]);
        }
        let _ = writeln!(out, ",{}", q.mixing_class[f]);
    }
    out
}

fn parse_series(path: &Path, text: &str, index: usize, config: &SimulationConfig<f64>, frames: usize) -> Result<QoiSeries<f64>> {
    let bad = |reason: String| Error::format(path, reason);
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(bad("header mismatch".into()));
    }
    let want = [
        config.flow.v0,
        config.dispersion.aniso_ratio(),
        config.dispersion.d_m,
        f64::from(config.flow.kappa_f_l),
        config.flow.t_osc,
    ];
    let mut times = Vec::with_capacity(frames);
    let mut cols: [Vec<f64>; 9] = Default::default();
    let mut classes = Vec::with_capacity(frames);
    for (row, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 17 {
            return Err(bad(format!("row {row}: {} fields", fields.len())));
        }
        let num = |k: usize| {
            fields[k]
                .parse::<f64>()
                .map_err(|_| bad(format!("row {row}: field {k} `{}` is not a number", fields[k])))
        };
        if fields[0].parse::<usize>().ok() != Some(index) {
            return Err(bad(format!("row {row}: sim_id does not match index {index}")));
        }
        for (k, w) in want.iter().enumerate() {
            if num(k + 1)? != *w {
                return Err(bad(format!("row {row}: parameters differ from the config")));
            }
        }
        times.push(num(6)?);
        for (k, c) in cols.iter_mut().enumerate() {
            c.push(num(7 + k)?);
        }
        let class: u8 = fields[16].parse().map_err(|_| bad(format!("row {row}: bad class")))?;
        if !(1..=4).contains(&class) {
            return Err(bad(format!("row {row}: class {class} outside 1..4")));
        }
        classes.push(class);
    }
    if times.len() != frames {
        return Err(bad(format!("{} rows, expected {frames}", times.len())));
    }
    let [a0, a1, a2, s0, s1, s2, v0, v1, v2] = cols;
    Ok(QoiSeries {
        sim_id: index,
        times,
        avg_conc: [a0, a1, a2],
        avg_sq_conc: [s0, s1, s2],
        degree_of_mixing: [v0, v1, v2],
        mixing_class: classes,
        class_species: Species::C,
    })
}

fn config_line(config: &SimulationConfig<f64>) -> String {
    serde_json::to_string(config).expect("config serializes")
}

/// Existing valid output for config `index`, if any.
fn load_existing(dir: &Path, index: usize, config: &SimulationConfig<f64>, save_every: usize) -> Option<SimStatus> {
    let csv = csv_path(dir, index);
    if let Ok(text) = std::fs::read_to_string(&csv) {
        return match parse_series(&csv, &text, index, config, expected_frames(config, save_every)) {
            Ok(q) => Some(SimStatus::Complete(q)),
            Err(e) => {
                log::info!("re-running sim {index}: {e}");
                None
            }
        };
    }
    let text = std::fs::read_to_string(incomplete_path(dir, index)).ok()?;
    let (first, reason) = text.split_once('\n')?;
    (first == config_line(config)).then(|| SimStatus::Incomplete(reason.trim_end().to_string()))
}

fn run_one(dir: &Path, index: usize, config: &SimulationConfig<f64>, save_every: usize) -> Result<SimStatus> {
    let traj = solve(config, save_every)?;
    if !traj.completed {
        let reason = traj.failure.clone().unwrap_or_else(|| "stopped early".into());
        let body = format!("{}\n{reason}\n", config_line(config));
        write_atomic(&incomplete_path(dir, index), body.as_bytes())?;
        return Ok(SimStatus::Incomplete(reason));
    }
    let q = normalized_qois(&traj, index)?;
    let body = format!("{CSV_HEADER}\n{}", series_rows(config, &q));
    write_atomic(&csv_path(dir, index), body.as_bytes())?;
    let _ = std::fs::remove_file(incomplete_path(dir, index));
    Ok(SimStatus::Complete(q))
}

fn manifest_line(index: usize, status: &SimStatus) -> String {
    match status {
        SimStatus::Complete(q) => format!("{index} complete sims/sim_{index:05}.csv frames={}", q.len()),
        SimStatus::Incomplete(reason) => format!("{index} incomplete sims/sim_{index:05}.incomplete {reason}"),
    }
}

fn write_manifest(dir: &Path, total: usize, lines: &BTreeMap<usize, String>) -> Result<()> {
    let mut body = format!("# mixemu campaign manifest\n# configs={total} finished={}\n", lines.len());
    for line in lines.values() {
        body.push_str(line);
        body.push('\n');
    }
    write_atomic(&dir.join(MANIFEST), body.as_bytes())
}

/// Solves every config not already on disk, `jobs` at a time.
///
/// Outputs depend only on config order, never on completion order.
pub fn run_campaign(configs: &[SimulationConfig<f64>], save_every: usize, jobs: usize, dir: &Path) -> Result<CampaignResult> {
    if save_every == 0 {
        return Err(Error::invalid("save_every must be >= 1"));
    }
    let sims = dir.join("sims");
    std::fs::create_dir_all(&sims).map_err(|e| Error::io(&sims, e))?;

    let mut done: BTreeMap<usize, SimStatus> = BTreeMap::new();
    let mut todo = Vec::new();
    for (i, cfg) in configs.iter().enumerate() {
        match load_existing(dir, i, cfg, save_every) {
            Some(status) => {
                done.insert(i, status);
            }
            None => todo.push(i),
        }
    }
    let lines: BTreeMap<usize, String> = done.iter().map(|(&i, s)| (i, manifest_line(i, s))).collect();
    write_manifest(dir, configs.len(), &lines)?;
    log::info!("campaign: {} configs, {} on disk, {} to solve", configs.len(), done.len(), todo.len());

    let lines = Mutex::new(lines);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    let fresh: Vec<(usize, SimStatus)> = pool.install(|| {
        todo.par_iter()
            .map(|&i| {
                let status = run_one(dir, i, &configs[i], save_every)?;
                log::info!("sim {i}: {}", if matches!(status, SimStatus::Complete(_)) { "complete" } else { "incomplete" });
                let mut guard = lines.lock().expect("manifest lock");
                guard.insert(i, manifest_line(i, &status));
                write_manifest(dir, configs.len(), &guard)?;
                Ok((i, status))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let solved = fresh.len();
    done.extend(fresh);

    let mut combined = format!("{CSV_HEADER}\n");
    let records: Vec<SimRecord> = done
        .into_iter()
        .map(|(index, status)| {
            if let SimStatus::Complete(q) = &status {
                combined.push_str(&series_rows(&configs[index], q));
            }
            SimRecord { index, config: configs[index], save_every, status }
        })
        .collect();
    write_atomic(&dir.join(COMBINED), combined.as_bytes())?;
    Ok(CampaignResult { records, solved })
}

/// Reads a finished campaign directory for the given configs without solving.
/// Configs with no valid output are reported as incomplete.
pub fn load_campaign(configs: &[SimulationConfig<f64>], save_every: usize, dir: &Path) -> Result<CampaignResult> {
    if !dir.join(MANIFEST).exists() {
        return Err(Error::io(dir.join(MANIFEST), std::io::Error::from(std::io::ErrorKind::NotFound)));
    }
    let records = configs
        .iter()
        .enumerate()
        .map(|(index, cfg)| SimRecord {
            index,
            config: *cfg,
            save_every,
            status: load_existing(dir, index, cfg, save_every)
                .unwrap_or_else(|| SimStatus::Incomplete("no valid output on disk".into())),
        })
        .collect();
    Ok(CampaignResult { records, solved: 0 })
}
