//! `bag run`: resolves settings, prepares the run directory and drives the search.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{anyhow, bail, Context, Result};
use bag_core::llm::{ChatClient, ChatRequest, ChatResponse, HttpChatClient, LlmError, RecordingClient, ReplaySession};
use bag_core::problems::Registry;
use bag_core::promptkit::TemplateSet;
use bag_core::sandbox::{CandidateSource, Sandbox};
use bag_core::search::{
    builtin_bench_set, failure_rate, run_bag, run_create_only, run_refine_only, BenchEntry, RunDir, SearchConfig,
    SearchEnv, SearchResult, Strategy,
};
use serde::{Deserialize, Serialize};

use crate::config::{FileConfig, RunSettings};
use crate::RunArgs;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Completed,
    Failed,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProviderIdentity {
    pub kind: String,
    pub name: String,
    pub model: String,
}

/// Written before the first query and finalized once the run ends.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub settings: serde_json::Value,
    pub provider: ProviderIdentity,
    pub started_at: u64,
    pub finished_at: Option<u64>,
    pub status: RunStatus,
    pub error: Option<String>,
    pub incumbent_auc: Option<f64>,
    pub failure_rate: Option<f64>,
}

impl RunManifest {
    pub fn path(dir: &Path) -> PathBuf {
        dir.join("manifest.json")
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let p = Self::path(dir);
        let text = fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
        Ok(serde_json::from_str(&text)?)
    }

    fn write(&self, dir: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(Self::path(dir), text)?;
        Ok(())
    }

    /// Records the outcome; consumes the manifest so it happens once.
    fn finalize(mut self, dir: &Path, outcome: &Result<SearchResult>) -> Result<()> {
        self.finished_at = Some(now());
        match outcome {
            Ok(r) => {
                self.status = RunStatus::Completed;
                self.incumbent_auc = Some(r.incumbent.fitness.mean_auc);
                self.failure_rate = Some(failure_rate(r));
            }
            Err(e) => {
                self.status = RunStatus::Failed;
                self.error = Some(format!("{e:#}"));
            }
        }
        self.write(dir)
    }
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

pub fn run(args: RunArgs) -> Result<()> {
    let file = match &args.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let settings = RunSettings::resolve(file.overlay(args.flags()))?;
    let bench_set = match &settings.bench_dir {
        Some(d) => load_bench_dir(d, &settings.language_tag)?,
        None => builtin_bench_set(settings.problem.suite, &settings.language_tag),
    };
    let seed = bench_set
        .get(settings.seed_index)
        .cloned()
        .ok_or_else(|| anyhow!("seed_index {} outside the bench set", settings.seed_index))?;
    let config = SearchConfig {
        problem: settings.problem,
        instances: settings.instances.clone(),
        bench_set,
        query_budget: settings.query_budget,
        q: settings.q,
        rng_seed: settings.seed,
        strategy: settings.strategy,
        fitness: settings.fitness.clone(),
        language_tag: settings.language_tag.clone(),
    };
    config.validate()?;
    let templates = match &settings.templates_dir {
        Some(d) => TemplateSet::with_overrides(d)?,
        None => TemplateSet::default(),
    };
    let (inner, provider) = open_llm(&settings)?;

    let out = args.out.clone().unwrap_or_else(|| {
        PathBuf::from("runs").join(format!(
            "{}_f{}_d{}_{:?}_s{}_{}",
            settings.problem.suite,
            settings.problem.function,
            settings.problem.dim,
            settings.strategy,
            settings.seed,
            now()
        ))
    });
    if out.exists() && fs::read_dir(&out)?.next().is_some() {
        bail!("run directory {} exists and is not empty", out.display());
    }
    let run_dir = RunDir::create(&out)?;
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").into(),
        settings: serde_json::to_value(&settings)?,
        provider,
        started_at: now(),
        finished_at: None,
        status: RunStatus::Running,
        error: None,
        incumbent_auc: None,
        failure_rate: None,
    };
    manifest.write(&out)?;

    let outcome = search(&config, seed, &settings, &templates, inner, &run_dir);
    manifest.finalize(&out, &outcome)?;
    let result = outcome?;
    println!(
        "{}: incumbent `{}` mean AUC {:.4} after {} generations",
        out.display(),
        result.incumbent.source.entry_name,
        result.incumbent.fitness.mean_auc,
        result.records.len()
    );
    Ok(())
}

fn search(
    config: &SearchConfig,
    seed: BenchEntry,
    settings: &RunSettings,
    templates: &TemplateSet,
    inner: Box<dyn ChatClient + Send>,
    run_dir: &RunDir,
) -> Result<SearchResult> {
    let scratch = run_dir.root().join("scratch");
    let sandbox = Sandbox::new(settings.runner_registry(), &scratch);
    let registry = Registry::standard();
    let mut llm = RecordingClient::to_file(Boxed(inner), &run_dir.session_path())?;
    let mut env = SearchEnv {
        sandbox: &sandbox,
        registry: &registry,
        llm: &mut llm,
        templates,
        run_dir: Some(run_dir),
    };
    let result = match config.strategy {
        Strategy::Bag => run_bag(config, &mut env),
        Strategy::RefineOnly => run_refine_only(config, seed, &mut env),
        Strategy::CreateOnly => run_create_only(config, seed, &mut env),
    }?;
    let _ = fs::remove_dir_all(&scratch);
    Ok(result)
}

struct Boxed(Box<dyn ChatClient + Send>);

impl ChatClient for Boxed {
    fn chat(&mut self, r: &ChatRequest) -> Result<ChatResponse, LlmError> {
        self.0.chat(r)
    }

    fn model(&self) -> &str {
        self.0.model()
    }
}

fn open_llm(settings: &RunSettings) -> Result<(Box<dyn ChatClient + Send>, ProviderIdentity)> {
    let (kind, arg) = settings
        .llm
        .split_once(':')
        .ok_or_else(|| anyhow!("--llm must look like `replay:PATH` or `provider:NAME`"))?;
    match kind {
        "replay" | "replay-loose" => {
            let session = ReplaySession::load(Path::new(arg), kind == "replay")?;
            let id = ProviderIdentity {
                kind: kind.into(),
                name: arg.into(),
                model: session.model().into(),
            };
            Ok((Box::new(session), id))
        }
        "provider" => {
            let cfg = settings
                .providers
                .iter()
                .find(|p| p.name == arg)
                .cloned()
                .ok_or_else(|| anyhow!("provider `{arg}` is not configured"))?;
            let id = ProviderIdentity {
                kind: "provider".into(),
                name: cfg.name.clone(),
                model: cfg.model.clone(),
            };
            Ok((Box::new(HttpChatClient::from_env(cfg)?), id))
        }
        other => bail!("unknown LLM kind `{other}`"),
    }
}

/// Every `*.py` file in name order; the entry point is the first class defined.
pub fn load_bench_dir(dir: &Path, language_tag: &str) -> Result<Vec<BenchEntry>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading bench dir {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "py"))
        .collect();
    files.sort();
    if files.is_empty() {
        bail!("no `.py` files in {}", dir.display());
    }
    files
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p)?;
            let entry = text
                .lines()
                .find_map(|l| {
                    let rest = l.strip_prefix("class ")?;
                    let end = rest.find(|c: char| !(c.is_alphanumeric() || c == '_'))?;
                    Some(rest[..end].to_string())
                })
                .ok_or_else(|| anyhow!("{} defines no class", p.display()))?;
            let name = p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            Ok(BenchEntry {
                name,
                source: CandidateSource::new(language_tag, text, entry)?,
            })
        })
        .collect()
}
