use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use mocha_core::report::{read_pool, write_front, write_run, PoolFile};
use mocha_core::tasks::{
    benchmark_unavailable, conflict_landscape, fever_seed, LlmMutator, ScriptedLandscape, TaskAdapter,
    TradeoffLandscape, WithMutator,
};
use mocha_core::{ComplianceLimits, EngineConfig, FrontSummary, RunReport, SkillDoc};

use crate::config::{MutatorKind, RunConfig, TaskKind};
use crate::CliError;

fn runtime(e: mocha_core::Error) -> CliError {
    CliError::Runtime(e.to_string())
}

fn read_skill(path: &Path) -> Result<SkillDoc, CliError> {
    let text =
        fs::read_to_string(path).map_err(|e| CliError::Usage(format!("reading {}: {e}", path.display())))?;
    SkillDoc::parse(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn with_mutator<T: TaskAdapter + Sync + 'static>(
    task: T,
    config: &RunConfig,
) -> Result<Box<dyn TaskAdapter>, CliError> {
    Ok(match config.task.mutator {
        MutatorKind::Builtin => Box::new(task),
        MutatorKind::Llm => Box::new(WithMutator {
            evaluator: task,
            mutator: LlmMutator::new(config.llm.clone()).map_err(|e| CliError::Usage(e.to_string()))?,
        }),
    })
}

/// Builds the task adapter and the seed skill described by `config`.
pub fn build_task(config: &RunConfig) -> Result<(Box<dyn TaskAdapter>, SkillDoc), CliError> {
    let usage = |e: mocha_core::Error| CliError::Usage(e.to_string());
    match config.task.kind {
        TaskKind::Conflict => {
            let land = conflict_landscape(&config.task.conflict, &config.limits).map_err(usage)?;
            Ok((with_mutator(land, config)?, fever_seed()))
        }
        TaskKind::Tradeoff => {
            let land = TradeoffLandscape::new(config.task.tradeoff.clone()).map_err(usage)?;
            let seed = match &config.seed_skill {
                Some(p) => read_skill(p)?,
                None => land.seed(),
            };
            Ok((with_mutator(land, config)?, seed))
        }
        TaskKind::Scripted => {
            let seed_path = config.seed_skill.as_deref().expect("validated");
            let script = config.task.script.as_deref().expect("validated");
            let seed = read_skill(seed_path)?;
            let land = ScriptedLandscape::from_json_file(seed.clone(), script)
                .map_err(|e| CliError::Usage(format!("{}: {e}", script.display())))?;
            Ok((with_mutator(land, config)?, seed))
        }
        TaskKind::Benchmark => {
            let name = config.task.benchmark.as_deref().unwrap_or_default();
            Err(CliError::Usage(benchmark_unavailable(name).to_string()))
        }
    }
}

pub fn engine_config(config: &RunConfig, validation_len: usize) -> EngineConfig {
    let run = &config.run;
    let mut engine = EngineConfig::new(
        run.budget,
        run.minibatch_size.expect("validated"),
        run.validation_size.unwrap_or(validation_len),
        config.strategy.clone(),
    );
    engine.limits = config.limits;
    engine.anneal = config.anneal;
    engine.buffer_capacity = run.buffer_capacity;
    engine.seed = run.seed;
    engine.max_consecutive_failures = run.max_consecutive_failures;
    engine
}

pub fn summary_line(report: &RunReport, front: &FrontSummary) -> String {
    format!(
        "strategy={} seed={} front_size={} hv={:.6} best_correctness={:.4} consumed={}/{} commits={} complete={}",
        report.config.strategy.name(),
        report.config.seed,
        front.size(),
        front.hypervolume,
        front.best_correctness(),
        report.ledger.consumed,
        report.ledger.total,
        report.commits(),
        report.complete,
    )
}

pub fn run(config: &RunConfig, force: bool) -> Result<(), CliError> {
    let dir = &config.output_dir;
    if dir.join("pool.json").exists() && !force {
        return Err(CliError::Usage(format!(
            "{} already holds a run; pass --force to overwrite it",
            dir.display()
        )));
    }
    let (mut task, seed) = build_task(config)?;
    let engine = engine_config(config, task.validation_len());
    engine.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let report = mocha_core::run(seed, &engine, task.as_mut()).map_err(runtime)?;

    fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("creating {}: {e}", dir.display())))?;
    write_run(&report, dir).map_err(runtime)?;
    fs::write(dir.join("config.toml"), config.to_toml())
        .map_err(|e| CliError::Runtime(format!("writing config echo: {e}")))?;

    let front = report.front().map_err(runtime)?;
    println!("{}", summary_line(&report, &front));
    if report.complete {
        return Ok(());
    }
    Err(CliError::Runtime(format!(
        "run stopped early, partial report in {}: {}",
        dir.display(),
        report.error.as_deref().unwrap_or("unknown error")
    )))
}

fn pool_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join("pool.json")
    } else {
        path.to_path_buf()
    }
}

pub fn front(path: &Path, out: &mut dyn Write) -> Result<(), CliError> {
    let file = pool_path(path);
    let pool = read_pool(&file).map_err(|e| CliError::Usage(format!("{}: {e}", file.display())))?;
    let front = pool.front().map_err(runtime)?;
    writeln!(out, "# front_size={} hv={:.6}", front.size(), front.hypervolume).map_err(io)?;
    write_front(&pool.pool, &front, out).map_err(runtime)
}

fn io(e: std::io::Error) -> CliError {
    CliError::Runtime(e.to_string())
}

pub fn validate_skill(path: &Path, limits: ComplianceLimits, out: &mut dyn Write) -> Result<(), CliError> {
    ComplianceLimits::new(limits.description, limits.body).map_err(|e| CliError::Usage(e.to_string()))?;
    let doc = read_skill(path)?;
    writeln!(out, "{}", doc.compliance_report(&limits)).map_err(io)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub strategy: String,
    pub seed: u64,
    pub best_correctness: f64,
    pub hv: f64,
    pub front_size: usize,
}

impl ReportRow {
    fn from_pool(pool: &PoolFile) -> mocha_core::Result<Self> {
        let front = pool.front()?;
        Ok(ReportRow {
            strategy: pool.config.strategy.name().to_string(),
            seed: pool.config.seed,
            best_correctness: front.best_correctness(),
            hv: front.hypervolume,
            front_size: front.size(),
        })
    }
}

/// Run directories named directly, or one level below a named directory.
fn collect_runs(paths: &[PathBuf]) -> Vec<PathBuf> {
    let mut runs = Vec::new();
    for p in paths {
        if p.join("pool.json").is_file() || p.is_file() {
            runs.push(pool_path(p));
            continue;
        }
        let mut children: Vec<PathBuf> = match fs::read_dir(p) {
            Ok(rd) => rd
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|c| c.is_dir())
                .collect(),
            Err(e) => {
                log::warn!("skipping {}: {e}", p.display());
                continue;
            }
        };
        children.sort();
        runs.extend(children.into_iter().map(|c| c.join("pool.json")));
    }
    runs
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Loads every readable run, skipping corrupt ones with a warning, sorted by
/// strategy then seed.
pub fn report_rows(paths: &[PathBuf]) -> Vec<ReportRow> {
    let mut rows = Vec::new();
    for file in collect_runs(paths) {
        match read_pool(&file).and_then(|p| ReportRow::from_pool(&p)) {
            Ok(row) => rows.push(row),
            Err(e) => log::warn!("skipping {}: {e}", file.display()),
        }
    }
    rows.sort_by(|a, b| a.strategy.cmp(&b.strategy).then(a.seed.cmp(&b.seed)));
    rows
}

/// Per-run rows; each strategy with several runs is followed by `mean` and
/// `std` (sample) rows.
pub fn write_report(rows: &[ReportRow], out: &mut dyn Write) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| CliError::Runtime(e.to_string());
    w.write_record(["strategy", "seed", "best_correctness", "hv", "front_size"])
        .map_err(csv_err)?;
    for group in rows.chunk_by(|a, b| a.strategy == b.strategy) {
        for r in group {
            w.write_record([
                r.strategy.clone(),
                r.seed.to_string(),
                format!("{:.6}", r.best_correctness),
                format!("{:.6}", r.hv),
                r.front_size.to_string(),
            ])
            .map_err(csv_err)?;
        }
        if group.len() < 2 {
            continue;
        }
        let col = |f: fn(&ReportRow) -> f64| mean_std(&group.iter().map(f).collect::<Vec<_>>());
        let (bm, bs) = col(|r| r.best_correctness);
        let (hm, hs) = col(|r| r.hv);
        let (fm, fs) = col(|r| r.front_size as f64);
        let name = &group[0].strategy;
        for (label, b, h, f) in [("mean", bm, hm, fm), ("std", bs, hs, fs)] {
            w.write_record([
                name.clone(),
                label.to_string(),
                format!("{b:.6}"),
                format!("{h:.6}"),
                format!("{f:.3}"),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush().map_err(io)
}
