//! Run configuration: a TOML file merged over built-in defaults, then
//! command-line overrides.

use std::path::{Path, PathBuf};

use mocha_core::tasks::{ConflictConfig, LlmConfig, TradeoffConfig};
use mocha_core::{AnnealSchedule, ComplianceLimits, SelectionStrategy};
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub output_dir: PathBuf,
    /// Starting SKILL.md. Relative paths resolve against the config file.
    pub seed_skill: Option<PathBuf>,
    pub run: RunSection,
    pub strategy: SelectionStrategy,
    pub limits: ComplianceLimits,
    pub anneal: AnnealSchedule,
    pub task: TaskSection,
    pub llm: LlmConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            output_dir: PathBuf::from("mocha-run"),
            seed_skill: None,
            run: RunSection::default(),
            strategy: SelectionStrategy::default(),
            limits: ComplianceLimits::default(),
            anneal: AnnealSchedule::default(),
            task: TaskSection::default(),
            llm: LlmConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub budget: u64,
    /// Required: there is no sensible default minibatch size.
    pub minibatch_size: Option<usize>,
    /// Defaults to the task's whole validation split.
    pub validation_size: Option<usize>,
    pub buffer_capacity: usize,
    pub seed: u64,
    pub max_consecutive_failures: Option<u32>,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            budget: 1000,
            minibatch_size: None,
            validation_size: None,
            buffer_capacity: 5,
            seed: 0,
            max_consecutive_failures: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    #[default]
    Conflict,
    Tradeoff,
    Scripted,
    Benchmark,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MutatorKind {
    /// The task's own scripted or synthetic mutator.
    #[default]
    Builtin,
    /// A chat-completion endpoint configured under `[llm]`.
    Llm,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskSection {
    pub kind: TaskKind,
    pub mutator: MutatorKind,
    /// Score script for `kind = "scripted"`.
    pub script: Option<PathBuf>,
    /// Benchmark name for `kind = "benchmark"`.
    pub benchmark: Option<String>,
    pub conflict: ConflictConfig,
    pub tradeoff: TradeoffConfig,
}

/// Keys that have no default value and so never show up in the serialized
/// defaults.
const OPTIONAL_KEYS: &[&str] = &[
    "seed_skill",
    "run.minibatch_size",
    "run.validation_size",
    "run.max_consecutive_failures",
    "task.script",
    "task.benchmark",
];

impl RunConfig {
    /// Loads `path` (if any) over the defaults and applies `overrides`.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let mut table = defaults_table()?;
        let base = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Usage(format!("reading {}: {e}", p.display())))?;
                let file: Table = text
                    .parse()
                    .map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
                merge(&mut table, file);
                p.parent().map(Path::to_path_buf)
            }
            None => None,
        };
        apply_overrides(&mut table, overrides)?;
        let mut config: RunConfig = Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Usage(format!("invalid config: {e}")))?;
        // absolute paths keep the echoed config usable from any directory
        let base = base.unwrap_or_default();
        config.seed_skill = config.seed_skill.map(|p| absolute(&base, &p)).transpose()?;
        config.task.script = config.task.script.map(|p| absolute(&base, &p)).transpose()?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let usage = |e: mocha_core::Error| CliError::Usage(e.to_string());
        let run = &self.run;
        if run.minibatch_size.is_none() {
            return Err(CliError::Usage("run.minibatch_size is required".into()));
        }
        if run.budget == 0 {
            return Err(CliError::Usage("run.budget must be positive".into()));
        }
        if run.minibatch_size == Some(0) || run.validation_size == Some(0) || run.buffer_capacity == 0 {
            return Err(CliError::Usage(
                "run.minibatch_size, run.validation_size and run.buffer_capacity must be positive".into(),
            ));
        }
        ComplianceLimits::new(self.limits.description, self.limits.body).map_err(usage)?;
        self.anneal.validate().map_err(usage)?;
        self.strategy.validate().map_err(usage)?;
        match self.task.kind {
            TaskKind::Scripted if self.task.script.is_none() || self.seed_skill.is_none() => Err(
                CliError::Usage("scripted tasks need task.script and seed_skill".into()),
            ),
            TaskKind::Conflict if self.seed_skill.is_some() => Err(CliError::Usage(
                "the conflict task scores its own bundled seed; remove seed_skill".into(),
            )),
            TaskKind::Benchmark if self.task.benchmark.is_none() => {
                Err(CliError::Usage("benchmark tasks need task.benchmark".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes to TOML")
    }
}

fn absolute(base: &Path, path: &Path) -> Result<PathBuf, CliError> {
    let joined = base.join(path);
    std::fs::canonicalize(&joined).map_err(|e| CliError::Usage(format!("{}: {e}", joined.display())))
}

fn defaults_table() -> Result<Table, CliError> {
    match Value::try_from(RunConfig::default()) {
        Ok(Value::Table(t)) => Ok(t),
        Ok(_) => unreachable!("a struct serializes to a table"),
        Err(e) => Err(CliError::Runtime(format!("serializing defaults: {e}"))),
    }
}

/// Recursively overlays `over` onto `base`. Tables merge; anything else
/// replaces. A strategy table is replaced whole so that fields of the
/// default strategy never leak into a different kind.
fn merge(base: &mut Table, over: Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(o)) if k != "strategy" => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn leaf_paths(table: &Table, prefix: &str, out: &mut Vec<String>) {
    for (k, v) in table {
        let path = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            Value::Table(t) => leaf_paths(t, &path, out),
            _ => out.push(path),
        }
    }
}

/// Resolves a possibly bare override key to a full dotted path.
fn resolve_key(table: &Table, key: &str) -> Result<String, CliError> {
    let mut known = Vec::new();
    leaf_paths(table, "", &mut known);
    known.extend(OPTIONAL_KEYS.iter().map(|s| s.to_string()));
    known.push("strategy.beam_width".into());
    known.push("strategy.c".into());
    known.sort();
    known.dedup();
    if known.iter().any(|k| k == key) {
        return Ok(key.to_string());
    }
    let suffix = format!(".{key}");
    let matches: Vec<&String> = known.iter().filter(|k| k.ends_with(&suffix)).collect();
    match matches.as_slice() {
        [one] => Ok((*one).clone()),
        [] => Err(CliError::Usage(format!("unknown config key `{key}`"))),
        many => Err(CliError::Usage(format!(
            "config key `{key}` is ambiguous; use one of {}",
            many.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ")
        ))),
    }
}

/// A TOML literal if it parses as one, a bare string otherwise.
fn parse_value(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

/// Accepts `--key=value` and `--key value`.
pub fn parse_overrides(args: &[String]) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    let mut it = args.iter();
    while let Some(arg) = it.next() {
        let Some(body) = arg.strip_prefix("--") else {
            return Err(CliError::Usage(format!("expected `--key=value`, got `{arg}`")));
        };
        match body.split_once('=') {
            Some((k, v)) => out.push((k.to_string(), v.to_string())),
            None => {
                let v = it
                    .next()
                    .ok_or_else(|| CliError::Usage(format!("missing value for `--{body}`")))?;
                out.push((body.to_string(), v.clone()));
            }
        }
    }
    Ok(out)
}

fn apply_overrides(table: &mut Table, args: &[String]) -> Result<(), CliError> {
    for (key, raw) in parse_overrides(args)? {
        let path = resolve_key(table, &key)?;
        let mut parts: Vec<&str> = path.split('.').collect();
        let leaf = parts.pop().expect("split yields at least one part");
        let mut node = &mut *table;
        for p in parts {
            node = match node
                .entry(p.to_string())
                .or_insert_with(|| Value::Table(Table::new()))
            {
                Value::Table(t) => t,
                _ => return Err(CliError::Usage(format!("`{p}` in `{path}` is not a table"))),
            };
        }
        node.insert(leaf.to_string(), parse_value(&raw));
    }
    Ok(())
}
