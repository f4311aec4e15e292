//! Run settings: built-in defaults, overridden by a JSON config file,
//! overridden by command-line flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use bag_core::llm::ProviderConfig;
use bag_core::problems::{ProblemId, Suite};
use bag_core::sandbox::{FitnessSettings, RunnerRegistry, RunnerSpec};
use bag_core::search::Strategy;
use serde::{Deserialize, Serialize};

/// Every field is optional so a file may set any subset.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub strategy: Option<Strategy>,
    pub suite: Option<Suite>,
    pub function: Option<u32>,
    pub dim: Option<usize>,
    pub instances: Option<Vec<u32>>,
    pub query_budget: Option<u32>,
    pub q: Option<u32>,
    pub seed: Option<u64>,
    pub llm: Option<String>,
    pub eval_budget: Option<u64>,
    pub timeout_s: Option<f64>,
    pub cpu_cap_s: Option<f64>,
    pub parallelism: Option<usize>,
    pub grid_points: Option<usize>,
    pub runs_per_instance: Option<u32>,
    pub language_tag: Option<String>,
    /// Directory of benchmark algorithm sources, used in file-name order.
    pub bench_dir: Option<PathBuf>,
    /// Seed for refine-only and create-only runs, as an index into the bench set.
    pub seed_index: Option<usize>,
    pub templates_dir: Option<PathBuf>,
    #[serde(default)]
    pub providers: Vec<ProviderConfig>,
    #[serde(default)]
    pub runners: BTreeMap<String, RunnerSpec>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Fields set in `over` replace those in `self`.
    pub fn overlay(self, over: FileConfig) -> FileConfig {
        macro_rules! pick {
            ($($f:ident),*) => {
                FileConfig {
                    $($f: over.$f.or(self.$f),)*
                    providers: if over.providers.is_empty() { self.providers } else { over.providers },
                    runners: {
                        let mut r = self.runners;
                        r.extend(over.runners);
                        r
                    },
                }
            };
        }
        pick!(
            strategy,
            suite,
            function,
            dim,
            instances,
            query_budget,
            q,
            seed,
            llm,
            eval_budget,
            timeout_s,
            cpu_cap_s,
            parallelism,
            grid_points,
            runs_per_instance,
            language_tag,
            bench_dir,
            seed_index,
            templates_dir
        )
    }
}

/// Fully resolved settings for `bag run`.
#[derive(Debug, Clone, Serialize)]
pub struct RunSettings {
    pub strategy: Strategy,
    pub problem: ProblemId,
    pub instances: Vec<u32>,
    pub query_budget: u32,
    pub q: u32,
    pub seed: u64,
    pub llm: String,
    pub fitness: FitnessSettings,
    pub language_tag: String,
    pub bench_dir: Option<PathBuf>,
    pub seed_index: usize,
    pub templates_dir: Option<PathBuf>,
    pub providers: Vec<ProviderConfig>,
    pub runners: BTreeMap<String, RunnerSpec>,
}

impl RunSettings {
    pub fn resolve(c: FileConfig) -> Result<Self> {
        let suite = c.suite.unwrap_or(Suite::Pbo);
        let function = c.function.unwrap_or(1);
        let dim = c.dim.unwrap_or(suite.default_dim());
        let budget = c.eval_budget.unwrap_or(suite.default_budget());
        let mut fitness = FitnessSettings::with_budget(budget);
        if let Some(t) = c.timeout_s {
            fitness.timeout = secs(t, "timeout_s")?;
        }
        if let Some(t) = c.cpu_cap_s {
            fitness.cpu_cap = secs(t, "cpu_cap_s")?;
        }
        if let Some(p) = c.parallelism {
            fitness.parallelism = p.max(1);
        }
        if let Some(g) = c.grid_points {
            fitness.grid_points = g;
        }
        if let Some(r) = c.runs_per_instance {
            fitness.runs_per_instance = r;
        }
        Ok(Self {
            strategy: c.strategy.unwrap_or(Strategy::Bag),
            problem: ProblemId::new(suite, function, 1, dim),
            instances: c.instances.unwrap_or_else(|| (1..=5).collect()),
            query_budget: c.query_budget.unwrap_or(100),
            q: c.q.unwrap_or(10),
            seed: c.seed.unwrap_or(0),
            llm: c
                .llm
                .context("no LLM given: pass --llm or set `llm` in the config file")?,
            fitness,
            language_tag: c.language_tag.unwrap_or_else(|| "python".into()),
            bench_dir: c.bench_dir,
            seed_index: c.seed_index.unwrap_or(0),
            templates_dir: c.templates_dir,
            providers: c.providers,
            runners: c.runners,
        })
    }

    pub fn runner_registry(&self) -> RunnerRegistry {
        let mut reg = RunnerRegistry::default();
        for (tag, spec) in &self.runners {
            reg.register(tag.clone(), spec.clone());
        }
        reg
    }
}

fn secs(v: f64, name: &str) -> Result<Duration> {
    if !(v.is_finite() && v > 0.0) {
        bail!("{name} must be a positive number of seconds");
    }
    Ok(Duration::from_secs_f64(v))
}

/// Instance list given on the command line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstanceList(pub Vec<u32>);

/// Parses `1,2,5-7` into `[1, 2, 5, 6, 7]`.
pub fn parse_instances(s: &str) -> Result<InstanceList, String> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (u32, u32) = (
                    a.trim().parse().map_err(|_| format!("bad instance `{a}`"))?,
                    b.trim().parse().map_err(|_| format!("bad instance `{b}`"))?,
                );
                if a > b {
                    return Err(format!("empty range `{part}`"));
                }
                out.extend(a..=b);
            }
            None => out.push(part.parse().map_err(|_| format!("bad instance `{part}`"))?),
        }
    }
    if out.is_empty() {
        return Err("no instances given".into());
    }
    Ok(InstanceList(out))
}
