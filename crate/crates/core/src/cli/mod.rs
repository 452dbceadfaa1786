//! `orbidual` command line: scenario configs, a plugin registry, residual
//! reports and the invariant check suite.
//!
//! Exit codes: 0 when every checked residual is within its bound, 1 when a
//! run completes with a residual out of bounds or a numerical failure, 2 for
//! usage and configuration errors.

pub mod scenarios;
pub mod suites;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

pub const SPEC_VERSION: u32 = 1;
pub const SEED_ENV: &str = "ORBIDUAL_SEED";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("run: {0}")]
    Run(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 2,
            CliError::Io(_) | CliError::Run(_) => 1,
        }
    }
}

/// Acceptance bound attached to a metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bound {
    /// Metric must be strictly below the value.
    Max(f64),
    /// Metric must be strictly above the value.
    Min(f64),
}

impl Bound {
    pub fn holds(&self, v: f64) -> bool {
        v.is_finite()
            && match *self {
                Bound::Max(t) => v < t,
                Bound::Min(t) => v > t,
            }
    }
}

impl std::fmt::Display for Bound {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Bound::Max(t) => write!(f, "< {t:e}"),
            Bound::Min(t) => write!(f, "> {t:e}"),
        }
    }
}

/// Deterministic outcome of one scenario run. Identical configs and seeds
/// produce byte-identical JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub scenario: String,
    pub pass: bool,
    pub metrics: BTreeMap<String, f64>,
    pub tolerances: BTreeMap<String, Bound>,
    /// Set when the scenario is a negative control that must fail its invariant.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub expected_fail: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl ResidualReport {
    pub fn new(scenario: &str) -> Self {
        ResidualReport {
            scenario: scenario.to_string(),
            pass: false,
            metrics: BTreeMap::new(),
            tolerances: BTreeMap::new(),
            expected_fail: false,
            warnings: vec![],
        }
    }

    pub fn check(&mut self, name: &str, value: f64, bound: Bound) {
        self.metrics.insert(name.to_string(), value);
        self.tolerances.insert(name.to_string(), bound);
    }

    /// Names of metrics outside their bounds.
    pub fn failures(&self) -> Vec<&str> {
        self.metrics
            .iter()
            .filter(|(k, v)| !self.tolerances.get(*k).is_some_and(|b| b.holds(**v)))
            .map(|(k, _)| k.as_str())
            .collect()
    }

    pub fn finish(mut self) -> Self {
        self.pass = !self.metrics.is_empty() && self.failures().is_empty();
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }
}

// ---------------------------------------------------------------------------
// Configs and registry
// ---------------------------------------------------------------------------

/// Top-level scenario config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub spec_version: u32,
    pub scenario: String,
    #[serde(default)]
    pub params: Map<String, Value>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    /// Plugin files registering extra scenarios, relative to the config file.
    #[serde(default)]
    pub include: Vec<PathBuf>,
}

/// Scenario entry of a plugin file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PluginScenario {
    pub name: String,
    pub base: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub params: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PluginFile {
    pub spec_version: u32,
    pub scenarios: Vec<PluginScenario>,
}

/// A registered scenario: a built-in base plus parameter overrides.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Entry {
    pub name: String,
    pub base: String,
    pub description: String,
    pub custom: bool,
    #[serde(skip)]
    pub params: Map<String, Value>,
}

#[derive(Debug, Clone, Default)]
pub struct Registry {
    entries: Vec<Entry>,
}

impl Registry {
    pub fn builtin() -> Self {
        let entries = scenarios::BUILTINS
            .iter()
            .map(|(name, description)| Entry {
                name: name.to_string(),
                base: name.to_string(),
                description: description.to_string(),
                custom: false,
                params: Map::new(),
            })
            .collect();
        Registry { entries }
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn get(&self, name: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.name == name)
    }

    /// Registers every scenario of a plugin file.
    pub fn load_plugin(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read plugin {}: {e}", path.display())))?;
        let file: PluginFile = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("plugin {}: {e}", path.display())))?;
        if file.spec_version != SPEC_VERSION {
            return Err(CliError::Config(format!(
                "plugin {}: spec_version {} is not supported (expected {SPEC_VERSION})",
                path.display(),
                file.spec_version
            )));
        }
        for s in file.scenarios {
            if self.get(&s.name).is_some() {
                return Err(CliError::Config(format!("plugin {}: scenario {:?} is already registered", path.display(), s.name)));
            }
            let base = self.get(&s.base).ok_or_else(|| {
                CliError::Config(format!("plugin {}: unknown base scenario {:?}", path.display(), s.base))
            })?;
            let mut params = base.params.clone();
            merge(&mut params, s.params);
            let entry = Entry { name: s.name, base: base.base.clone(), description: s.description, custom: true, params };
            scenarios::parse_params(&entry.base, &entry.params)
                .map_err(|e| CliError::Config(format!("plugin {}: scenario {:?}: {e}", path.display(), entry.name)))?;
            self.entries.push(entry);
        }
        Ok(())
    }

    /// JSON document listing each scenario with its default parameters.
    pub fn schema(&self) -> Value {
        let list: Vec<Value> = self
            .entries
            .iter()
            .map(|e| {
                let params = scenarios::parse_params(&e.base, &e.params).map(|p| p.to_value()).unwrap_or(Value::Null);
                serde_json::json!({
                    "spec_version": SPEC_VERSION,
                    "scenario": e.name,
                    "params": params,
                    "output_dir": format!("orbidual-out/{}", e.name),
                    "seed": 0,
                    "include": [],
                })
            })
            .collect();
        Value::Array(list)
    }
}

/// Overlays `src` on `dst`, recursing into nested objects such as `tolerances`.
pub fn merge(dst: &mut Map<String, Value>, src: Map<String, Value>) {
    for (k, v) in src {
        match (dst.get_mut(&k), v) {
            (Some(Value::Object(d)), Value::Object(s)) => merge(d, s),
            (_, v) => {
                dst.insert(k, v);
            }
        }
    }
}

/// A config resolved against the registry.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub name: String,
    pub params: scenarios::Params,
    pub seed: u64,
    pub output_dir: PathBuf,
}

fn schema_hint(reg: &Registry) -> String {
    format!("expected configs of the form\n{}", serde_json::to_string_pretty(&reg.schema()).expect("schema serializes"))
}

/// Reads a config, loads its plugins and validates the parameters.
pub fn load_config(path: &Path) -> Result<(Resolved, Registry), CliError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    resolve_config(&text, path)
}

/// Resolves config text; `path` locates includes and labels messages.
pub fn resolve_config(text: &str, path: &Path) -> Result<(Resolved, Registry), CliError> {
    let mut reg = Registry::builtin();
    let cfg: ScenarioConfig = serde_json::from_str(text)
        .map_err(|e| CliError::Config(format!("{}: {e}\n{}", path.display(), schema_hint(&reg))))?;
    if cfg.spec_version != SPEC_VERSION {
        return Err(CliError::Config(format!(
            "{}: spec_version {} is not supported (expected {SPEC_VERSION})",
            path.display(),
            cfg.spec_version
        )));
    }
    let dir = path.parent().unwrap_or(Path::new("."));
    for inc in &cfg.include {
        reg.load_plugin(&dir.join(inc))?;
    }
    let entry = reg
        .get(&cfg.scenario)
        .ok_or_else(|| CliError::Config(format!("unknown scenario {:?}\n{}", cfg.scenario, schema_hint(&reg))))?;
    let mut merged = entry.params.clone();
    merge(&mut merged, cfg.params.clone());
    let params = scenarios::parse_params(&entry.base, &merged).map_err(|e| {
        let defaults = scenarios::parse_params(&entry.base, &entry.params).map(|p| p.to_value()).unwrap_or(Value::Null);
        CliError::Config(format!(
            "{}: invalid params for {:?}: {e}\ndefaults:\n{}",
            path.display(),
            cfg.scenario,
            serde_json::to_string_pretty(&defaults).expect("params serialize")
        ))
    })?;
    let seed = match std::env::var(SEED_ENV) {
        Ok(s) => s.trim().parse().map_err(|_| CliError::Config(format!("{SEED_ENV}={s:?} is not an unsigned integer")))?,
        Err(_) => cfg.seed,
    };
    let output_dir = cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from("orbidual-out").join(&cfg.scenario));
    Ok((Resolved { name: cfg.scenario, params, seed, output_dir }, reg))
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

#[derive(Debug, Parser)]
#[command(name = "orbidual", version, about = "Collective dynamics on double Lie groups: scenario runner and invariant checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run scenario configs concurrently, each into its own output directory.
    Run {
        #[arg(required = true)]
        configs: Vec<PathBuf>,
    },
    /// Run the dual-pair comparison of a finite-dimensional scenario and print its report.
    Duality { config: PathBuf },
    /// Evaluate the invariant suites and print a residual table.
    Check {
        /// Suite name to restrict to.
        filter: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Perturb one structure constant first; the algebra suite must fail.
        #[arg(long)]
        corrupt_constants: bool,
    },
    /// List registered scenarios.
    ListScenarios {
        #[arg(long)]
        json: bool,
        /// Plugin files to register first.
        #[arg(long = "include")]
        include: Vec<PathBuf>,
        /// Config whose includes are registered first.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn write_outcome(dir: &Path, outcome: &scenarios::Outcome) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    for (name, body) in &outcome.artifacts {
        std::fs::write(dir.join(name), body)?;
    }
    std::fs::write(dir.join("report.json"), outcome.report.to_json())?;
    Ok(())
}

fn run_one(path: &Path) -> Result<(Resolved, scenarios::Outcome), CliError> {
    let (res, _) = load_config(path)?;
    let outcome = scenarios::run(&res.name, &res.params, res.seed)?;
    write_outcome(&res.output_dir, &outcome)?;
    Ok((res, outcome))
}

fn cmd_run(configs: &[PathBuf], out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, CliError> {
    // Validate everything before starting any work.
    let mut dirs = vec![];
    for c in configs {
        let (res, _) = load_config(c)?;
        if dirs.contains(&res.output_dir) {
            return Err(CliError::Usage(format!("two configs write to {}", res.output_dir.display())));
        }
        dirs.push(res.output_dir);
    }
    let results: Vec<Result<(Resolved, scenarios::Outcome), CliError>> = std::thread::scope(|s| {
        let handles: Vec<_> = configs.iter().map(|c| s.spawn(move || run_one(c))).collect();
        handles.into_iter().map(|h| h.join().unwrap_or_else(|_| Err(CliError::Run("worker panicked".into())))).collect()
    });
    let mut code = 0;
    for (c, r) in configs.iter().zip(results) {
        match r {
            Ok((res, o)) => {
                writeln!(out, "{}", o.report.to_json())?;
                for w in &o.report.warnings {
                    writeln!(err, "warning: {}: {w}", res.name)?;
                }
                if !o.report.pass {
                    writeln!(err, "{}: out of bounds: {}", res.name, o.report.failures().join(", "))?;
                    code = code.max(1);
                }
            }
            Err(e) => {
                writeln!(err, "{}: {e}", c.display())?;
                code = code.max(e.exit_code());
            }
        }
    }
    Ok(code)
}

fn cmd_duality(config: &Path, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, CliError> {
    let (res, _) = load_config(config)?;
    if !res.params.has_duality() {
        return Err(CliError::Usage(format!("scenario {:?} has no finite-dimensional dual pair", res.name)));
    }
    let outcome = scenarios::run(&res.name, &res.params, res.seed)?;
    write_outcome(&res.output_dir, &outcome)?;
    let report = outcome
        .duality
        .as_ref()
        .ok_or_else(|| CliError::Usage(format!("scenario {:?} is a negative control without a duality run", res.name)))?;
    writeln!(out, "{}", serde_json::to_string_pretty(report).expect("reports serialize"))?;
    if !outcome.report.pass {
        writeln!(err, "{}: out of bounds: {}", res.name, outcome.report.failures().join(", "))?;
        return Ok(1);
    }
    Ok(0)
}

fn cmd_check(filter: Option<&str>, seed: u64, corrupt: bool, out: &mut dyn Write) -> Result<i32, CliError> {
    let names: Vec<&str> = match filter {
        Some(f) if suites::SUITES.contains(&f) => vec![f],
        Some(f) => {
            return Err(CliError::Usage(format!("unknown suite {f:?}; expected one of {}", suites::SUITES.join(", "))))
        }
        None => suites::SUITES.to_vec(),
    };
    writeln!(out, "{:<10} {:<34} {:>12} {:>10}  status", "suite", "check", "residual", "bound")?;
    let mut code = 0;
    for name in names {
        let rows = suites::run_suite(name, seed, corrupt)?;
        for r in rows {
            let status = if r.pass() { "PASS" } else { "FAIL" };
            if !r.pass() {
                code = 1;
            }
            writeln!(out, "{:<10} {:<34} {:>12.3e} {:>10}  {status}", r.suite, r.name, r.value, r.bound.to_string())?;
        }
    }
    Ok(code)
}

fn cmd_list(json: bool, include: &[PathBuf], config: Option<&Path>, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, CliError> {
    // Listing never fails: unreadable plugins are reported and skipped.
    let mut reg = Registry::builtin();
    let mut plugins: Vec<PathBuf> = vec![];
    if let Some(c) = config {
        let cfg = std::fs::read_to_string(c)
            .map_err(|e| e.to_string())
            .and_then(|t| serde_json::from_str::<ScenarioConfig>(&t).map_err(|e| e.to_string()));
        match cfg {
            Ok(cfg) => {
                let dir = c.parent().unwrap_or(Path::new("."));
                plugins.extend(cfg.include.iter().map(|i| dir.join(i)));
            }
            Err(e) => writeln!(err, "warning: {}: {e}", c.display())?,
        }
    }
    plugins.extend(include.iter().cloned());
    for p in &plugins {
        if let Err(e) = reg.load_plugin(p) {
            writeln!(err, "warning: {e}")?;
        }
    }
    if json {
        writeln!(out, "{}", serde_json::to_string_pretty(reg.entries()).expect("entries serialize"))?;
    } else {
        for e in reg.entries() {
            let tag = if e.custom { format!(" (custom, base {})", e.base) } else { String::new() };
            writeln!(out, "{:<22} {}{tag}", e.name, e.description)?;
        }
    }
    Ok(0)
}

/// Entry point of the binary; returns the process exit code.
pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{e}");
                    0
                }
                _ => {
                    let _ = write!(err, "{e}");
                    2
                }
            };
        }
    };
    let result = match &cli.command {
        Command::Run { configs } => cmd_run(configs, out, err),
        Command::Duality { config } => cmd_duality(config, out, err),
        Command::Check { filter, seed, corrupt_constants } => cmd_check(filter.as_deref(), *seed, *corrupt_constants, out),
        Command::ListScenarios { json, include, config } => cmd_list(*json, include, config.as_deref(), out, err),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
