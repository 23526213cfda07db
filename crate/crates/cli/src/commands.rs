use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use serde_json::{Map, Value};

use mixemu::campaign::{
    enumerate_grid, grid_search, partition, read_dataset_csv, run_campaign, series_rows, Dataset, GridSpec, PartitionSpec, Target,
    CSV_HEADER,
};
use mixemu::codec::write_atomic;
use mixemu::emu::{Emulator, Family, Params};
use mixemu::pde::solve;
use mixemu::qoi::normalized_qois;
use mixemu::report::{benchmark, confusion_report, evaluate, fit_and_evaluate, prediction_series_csv, EvalReport};
use mixemu::{config, Error, SimulationConfig};

use crate::{Cli, Command};

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Diverged(String),
    Core(Error),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Diverged(_) | Failure::Core(Error::StepDivergence { .. }) => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Diverged(m) => f.write_str(m),
            Failure::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

type Outcome<T = ()> = std::result::Result<T, Failure>;

/// Everything a subcommand needs, resolved from flags and the config file.
struct Ctx {
    doc: Value,
    out: PathBuf,
    seed: u64,
    jobs: usize,
    family: Option<Family>,
    target: Option<Target>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EvaluateSection {
    #[serde(default = "six")]
    n_series: usize,
}

fn six() -> usize {
    6
}

impl Default for EvaluateSection {
    fn default() -> Self {
        EvaluateSection { n_series: six() }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BenchmarkSection {
    #[serde(default = "three")]
    n_repeats: usize,
}

fn three() -> usize {
    3
}

impl Default for BenchmarkSection {
    fn default() -> Self {
        BenchmarkSection { n_repeats: three() }
    }
}

#[derive(Deserialize)]
struct DataSection {
    csv: Option<PathBuf>,
}

pub fn run(cli: &Cli) -> Outcome {
    let path = cli.config.as_ref().ok_or_else(|| Failure::Usage("--config PATH is required".into()))?;
    if !path.exists() {
        return Err(Failure::Usage(format!("config file {} does not exist", path.display())));
    }
    let mut doc = config::load(path)?;
    for o in &cli.overrides {
        config::apply_override(&mut doc, o)?;
    }
    if cli.jobs == 0 {
        return Err(Failure::Usage("--jobs must be >= 1".into()));
    }
    let seed = match cli.seed {
        Some(s) => s,
        None => match doc.get("seed") {
            None => 0,
            Some(v) => v.as_u64().ok_or_else(|| Failure::Usage(format!("config `seed` must be a non-negative integer, got {v}")))?,
        },
    };
    let family = cli
        .emulator
        .as_deref()
        .map(Family::from_name)
        .transpose()
        .map_err(|e| Failure::Usage(e.to_string()))?;
    let target = match cli.target.as_deref() {
        None => None,
        Some(t) => Some(Target::from_name(t).ok_or_else(|| {
            let valid: Vec<&str> = Target::REGRESSION.iter().chain(&[Target::ClassC]).map(|t| t.name()).collect();
            Failure::Usage(format!("unknown target `{t}`; valid targets: {}", valid.join(", ")))
        })?),
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build_global()
        .map_err(|e| Failure::Usage(format!("thread pool: {e}")))?;
    std::fs::create_dir_all(&cli.out).map_err(|e| Error::Io { path: cli.out.clone(), source: e })?;
    let ctx = Ctx { doc, out: cli.out.clone(), seed, jobs: cli.jobs, family, target };
    match cli.command {
        Command::Simulate => simulate(&ctx),
        Command::Campaign => campaign(&ctx),
        Command::Train => train(&ctx),
        Command::Evaluate => evaluate_cmd(&ctx),
        Command::Gridsearch => gridsearch(&ctx),
        Command::Benchmark => benchmark_cmd(&ctx),
    }
}

impl Ctx {
    fn family(&self) -> Outcome<Family> {
        self.family
            .ok_or_else(|| Failure::Usage(format!("--emulator NAME is required; valid names: {}", Family::names().join(", "))))
    }

    /// The requested target, or every target the family supports.
    fn targets(&self, family: Family) -> Outcome<Vec<Target>> {
        match self.target {
            Some(t) if family.supports(t) => Ok(vec![t]),
            Some(t) => Err(Failure::Usage(format!("{family} cannot predict {}", t.name()))),
            None => Ok(Target::REGRESSION.iter().chain(&[Target::ClassC]).copied().filter(|&t| family.supports(t)).collect()),
        }
    }

    fn simulation(&self) -> Outcome<SimulationConfig> {
        let cfg: SimulationConfig = config::require(&self.doc, "simulation")?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Family defaults patched with `[emulator.<family>]`.
    fn overrides(&self, family: Family) -> Outcome<Map<String, Value>> {
        match self.doc.get("emulator").and_then(|e| e.get(family.name())) {
            None | Some(Value::Null) => Ok(Map::new()),
            Some(Value::Object(m)) => Ok(m.clone()),
            Some(v) => Err(Failure::Usage(format!("[emulator.{family}] must be a table, got {v}"))),
        }
    }

    fn dataset(&self) -> Outcome<Dataset> {
        let path = config::section::<DataSection>(&self.doc, "data")?
            .and_then(|d| d.csv)
            .unwrap_or_else(|| self.out.join("campaign.csv"));
        if !path.exists() {
            return Err(Failure::Usage(format!("dataset {} does not exist; run `mixemu campaign` first", path.display())));
        }
        Ok(read_dataset_csv(&path)?)
    }

    /// `(train + validation, test)` partitions of the dataset.
    fn split(&self, data: &Dataset) -> Outcome<(Dataset, Dataset)> {
        let mut spec: PartitionSpec = config::require(&self.doc, "partition")?;
        spec.seed = self.seed;
        let p = partition(&data.simulations(), &spec)?;
        let mut fit_sims = p.train;
        fit_sims.extend(p.validation);
        Ok((data.subset(&fit_sims), data.subset(&p.test)))
    }

    fn model_path(&self, family: Family, target: Target) -> PathBuf {
        self.out.join("models").join(format!("{}_{}.mxm", family.name(), target.name()))
    }

    /// Saved models for the family, one per requested target that exists.
    fn load_models(&self, family: Family) -> Outcome<Vec<Emulator>> {
        let mut models = Vec::new();
        for t in self.targets(family)? {
            let p = self.model_path(family, t);
            if p.exists() {
                models.push(Emulator::load(&p)?);
            } else if self.target.is_some() {
                return Err(Failure::Usage(format!("model {} does not exist; run `mixemu train` first", p.display())));
            }
        }
        if models.is_empty() {
            return Err(Failure::Usage(format!("no {family} models under {}; run `mixemu train` first", self.out.join("models").display())));
        }
        Ok(models)
    }
}

fn write(path: &Path, body: &str) -> Outcome {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.to_path_buf(), source: e })?;
    }
    Ok(write_atomic(path, body.as_bytes())?)
}

fn simulate(ctx: &Ctx) -> Outcome {
    let cfg = ctx.simulation()?;
    let traj = solve(&cfg, 1)?;
    traj.write_binary(&ctx.out.join("trajectory.mxt"))?;
    write(&ctx.out.join("trajectory.txt"), &traj.metadata())?;
    if !traj.completed {
        return Err(Failure::Diverged(format!(
            "solver diverged ({}); partial trajectory kept in {}",
            traj.failure.as_deref().unwrap_or("stopped early"),
            ctx.out.join("trajectory.mxt").display()
        )));
    }
    let q = normalized_qois(&traj, 0)?;
    write(&ctx.out.join("qoi.csv"), &format!("{CSV_HEADER}\n{}", series_rows(&cfg, &q)))?;
    println!("simulated {} frames -> {}", traj.frames.len(), ctx.out.display());
    Ok(())
}

fn campaign(ctx: &Ctx) -> Outcome {
    let grid: GridSpec = config::require(&ctx.doc, "grid")?;
    let configs = enumerate_grid(&grid)?;
    let result = run_campaign(&configs, grid.save_every, ctx.jobs, &ctx.out)?;
    let incomplete = result.incomplete().count();
    println!(
        "campaign: {} configs, {} solved now, {} complete, {incomplete} incomplete -> {}",
        configs.len(),
        result.solved,
        result.completed().count(),
        ctx.out.display()
    );
    if incomplete > 0 {
        return Err(Failure::Diverged(format!("{incomplete} simulations diverged; see manifest.txt")));
    }
    Ok(())
}

fn train(ctx: &Ctx) -> Outcome {
    let family = ctx.family()?;
    let data = ctx.dataset()?;
    let (fit, test) = ctx.split(&data)?;
    let overrides = ctx.overrides(family)?;
    let mut report = EvalReport::new(ctx.seed, &fit, &test);
    let models_dir = ctx.out.join("models");
    std::fs::create_dir_all(&models_dir).map_err(|e| Error::Io { path: models_dir, source: e })?;
    for target in ctx.targets(family)? {
        let params = Params::for_family(family, &overrides)?;
        let (model, row) = fit_and_evaluate(family, params, target, &fit, &test, ctx.seed)?;
        log::info!("{family} {}: train {:.4} test {:.4}", target.name(), row.train_score, row.test_score);
        model.save(&ctx.model_path(family, target))?;
        if target.is_class() {
            report.confusion.push(confusion_report(&model, &test)?);
        }
        report.rows.push(row);
    }
    let dir = ctx.out.join("reports").join(format!("train_{family}"));
    report.write(&dir)?;
    print!("{}", report.text_table());
    Ok(())
}

fn evaluate_cmd(ctx: &Ctx) -> Outcome {
    let family = ctx.family()?;
    let data = ctx.dataset()?;
    let (fit, test) = ctx.split(&data)?;
    let models = ctx.load_models(family)?;
    let section: EvaluateSection = config::section(&ctx.doc, "evaluate")?.unwrap_or_default();
    let mut report = EvalReport::new(ctx.seed, &fit, &test);
    for m in &models {
        report.rows.push(evaluate(m, &fit, &test, 0.0)?);
        if m.target.is_class() {
            report.confusion.push(confusion_report(m, &test)?);
        }
    }
    let dir = ctx.out.join("reports").join(format!("evaluate_{family}"));
    report.write(&dir)?;
    let shown: Vec<usize> = test.simulations().into_iter().take(section.n_series).collect();
    let refs: Vec<&Emulator> = models.iter().collect();
    write(&dir.join("predictions.csv"), &prediction_series_csv(&refs, &test, &shown)?)?;
    print!("{}", report.text_table());
    Ok(())
}

fn gridsearch(ctx: &Ctx) -> Outcome {
    let family = ctx.family()?;
    let section = ctx.doc.get("gridsearch").cloned().unwrap_or(Value::Null);
    let k = match section.get("k") {
        None => 10,
        Some(v) => v.as_u64().ok_or_else(|| Failure::Usage(format!("gridsearch.k must be an integer, got {v}")))? as usize,
    };
    let table = section
        .get(family.name())
        .and_then(Value::as_object)
        .ok_or_else(|| Failure::Usage(format!("no [gridsearch.{family}] table in the config")))?;
    let mut grid: BTreeMap<String, Vec<Value>> = table
        .iter()
        .map(|(key, v)| (key.clone(), v.as_array().cloned().unwrap_or_else(|| vec![v.clone()])))
        .collect();
    for (key, v) in ctx.overrides(family)? {
        grid.entry(key).or_insert_with(|| vec![v]);
    }
    let data = ctx.dataset()?;
    let (fit, _) = ctx.split(&data)?;
    for target in ctx.targets(family)? {
        let result = grid_search(family, &grid, &fit, target, k, ctx.seed)?;
        let stem = ctx.out.join("gridsearch").join(format!("{family}_{}", target.name()));
        write(&stem.with_extension("csv"), &result.to_csv())?;
        let best = serde_json::to_string_pretty(&Value::Object(result.best_overrides().clone())).expect("json");
        write(&stem.with_extension("best.json"), &(best + "\n"))?;
        let r = &result.rows[result.best];
        println!("{family} {}: best {} (mean {:.4}, variance {:.2e}, {} settings)", target.name(), Value::Object(r.overrides.clone()), r.mean, r.variance, result.rows.len());
    }
    Ok(())
}

fn benchmark_cmd(ctx: &Ctx) -> Outcome {
    let family = ctx.family()?;
    let models = ctx.load_models(family)?;
    let cfg = ctx.simulation()?;
    let section: BenchmarkSection = config::section(&ctx.doc, "benchmark")?.unwrap_or_default();
    let refs: Vec<&Emulator> = models.iter().collect();
    let speed = benchmark(&cfg, &refs, section.n_repeats)?;
    let report = EvalReport { seed: ctx.seed, speedup: vec![speed], ..Default::default() };
    report.write(&ctx.out.join("reports").join(format!("benchmark_{family}")))?;
    print!("{}", report.text_table());
    Ok(())
}
