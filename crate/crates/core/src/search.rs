//! The elitist (1+1) loop that asks an LLM for algorithm code, scores every
//! candidate in the sandbox and keeps the best one.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluation::RunTrace;
use crate::llm::{ChatClient, ChatMessage, ChatRequest, LlmError};
use crate::problems::{ProblemId, Registry, Suite};
use crate::promptkit::{self, ParentCode, PopulationEntry, PromptContext, PromptError, TemplateSet};
use crate::sandbox::{
    fitness, run_seed, CandidateSource, FitnessReport, FitnessSettings, RunOutcome, Sandbox, SandboxError,
};

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("invalid search configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Sandbox(#[from] SandboxError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("run directory: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Action {
    RefineBench { bench_index: usize },
    RefineBest,
    Create,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Bag,
    RefineOnly,
    CreateOnly,
}

impl std::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "bag" => Ok(Strategy::Bag),
            "refine_only" => Ok(Strategy::RefineOnly),
            "create_only" => Ok(Strategy::CreateOnly),
            other => Err(format!("unknown strategy `{other}`")),
        }
    }
}

/// Sampling without replacement over bench indices; refills when empty.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BenchCycle {
    size: usize,
    remaining: Vec<usize>,
}

impl BenchCycle {
    pub fn new(size: usize) -> Self {
        assert!(size >= 1, "bench cycle needs at least one entry");
        Self {
            size,
            remaining: Vec::new(),
        }
    }

    pub fn remaining(&self) -> &[usize] {
        &self.remaining
    }
}

pub fn next_bench<R: Rng + ?Sized>(cycle: &mut BenchCycle, rng: &mut R) -> usize {
    if cycle.remaining.is_empty() {
        cycle.remaining = (0..cycle.size).collect();
        cycle.remaining.shuffle(rng);
    }
    cycle.remaining.pop().expect("refilled above")
}

/// Action for iteration `t >= 2` of the benchmark-assisted schedule.
pub fn next_action<R: Rng + ?Sized>(t: u32, q: u32, rng: &mut R, cycle: &mut BenchCycle) -> Action {
    if t.is_multiple_of(q) {
        Action::RefineBench {
            bench_index: next_bench(cycle, rng),
        }
    } else {
        action_for_draw(rng.random::<f64>())
    }
}

pub fn action_for_draw(draw: f64) -> Action {
    if draw < 0.5 {
        Action::RefineBest
    } else {
        Action::Create
    }
}

pub fn accept(challenger: &FitnessReport, incumbent: &FitnessReport) -> bool {
    challenger.mean_auc > incumbent.mean_auc
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchEntry {
    pub name: String,
    pub source: CandidateSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Problem whose instances are listed in `instances`.
    pub problem: ProblemId,
    pub instances: Vec<u32>,
    pub bench_set: Vec<BenchEntry>,
    pub query_budget: u32,
    pub q: u32,
    pub rng_seed: u64,
    pub strategy: Strategy,
    pub fitness: FitnessSettings,
    /// Language tag given to parsed candidates.
    pub language_tag: String,
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), SearchError> {
        let bad = |m: &str| Err(SearchError::InvalidConfig(m.into()));
        if self.q < 1 {
            return bad("q must be at least 1");
        }
        if self.query_budget < 1 {
            return bad("query_budget must be at least 1");
        }
        if self.instances.is_empty() {
            return bad("instance list is empty");
        }
        if self.strategy != Strategy::CreateOnly && self.bench_set.is_empty() {
            return bad("bench_set is empty");
        }
        for b in &self.bench_set {
            b.source
                .validate()
                .map_err(|e| SearchError::InvalidConfig(format!("bench `{}`: {e}", b.name)))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    /// 0 for the evaluated seed, then 1..=query_budget.
    pub t: u32,
    /// `None` only for the seed record.
    pub action: Option<Action>,
    pub description: String,
    pub source: CandidateSource,
    pub fitness: FitnessReport,
    pub accepted: bool,
    pub failure: Option<String>,
}

impl CandidateRecord {
    pub fn failed(&self) -> bool {
        self.failure.is_some() || self.fitness.all_failed()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub seed: CandidateRecord,
    pub records: Vec<CandidateRecord>,
    /// Best record so far (the seed if nothing was accepted).
    pub incumbent: CandidateRecord,
    /// Incumbent mean AUC after each generation.
    pub best_so_far_series: Vec<f64>,
}

/// Fraction of generations whose code failed to parse or failed on every instance.
pub fn failure_rate(result: &SearchResult) -> f64 {
    if result.records.is_empty() {
        return 0.0;
    }
    result.records.iter().filter(|r| r.failed()).count() as f64 / result.records.len() as f64
}

/// Layout of a persisted search.
#[derive(Debug, Clone)]
pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    pub fn create(root: impl Into<PathBuf>) -> Result<Self, SearchError> {
        let root = root.into();
        fs::create_dir_all(root.join("generations"))?;
        fs::create_dir_all(root.join("traces"))?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn session_path(&self) -> PathBuf {
        self.root.join("session.jsonl")
    }

    pub fn write_config(&self, config: &SearchConfig) -> Result<(), SearchError> {
        write_json(&self.root.join("config.json"), config)
    }

    fn write_record(
        &self,
        record: &CandidateRecord,
        runs: &[(u32, u32, RunOutcome)],
        config: &SearchConfig,
    ) -> Result<(), SearchError> {
        let stem = format!("{:03}", record.t);
        let src_file = format!("{stem}.src");
        fs::write(
            self.root.join("generations").join(&src_file),
            &record.source.source_text,
        )?;
        let mut meta = serde_json::to_value(record)?;
        let obj = meta.as_object_mut().expect("record is an object");
        obj.remove("source");
        obj.insert(
            "manifest".into(),
            serde_json::json!({
                "language_tag": record.source.language_tag,
                "entry_name": record.source.entry_name,
                "file": src_file,
            }),
        );
        write_json(&self.root.join("generations").join(format!("{stem}.json")), &meta)?;
        for (inst, k, outcome) in runs {
            let empty;
            let trace = match outcome {
                RunOutcome::Trace(t) => t,
                RunOutcome::Failure(f) => match &f.partial_trace {
                    Some(t) => t,
                    None => {
                        empty = RunTrace::empty(
                            config.problem.with_instance(*inst),
                            run_seed(*inst, *k),
                            config.fitness.budget,
                            f.kind.status(),
                        );
                        &empty
                    }
                },
            };
            {
                let name = if *k == 0 {
                    format!("{stem}_inst{inst}.jsonl")
                } else {
                    format!("{stem}_inst{inst}_run{k}.jsonl")
                };
                let mut f = fs::File::create(self.root.join("traces").join(name))?;
                trace
                    .write_jsonl(&mut f)
                    .map_err(|e| std::io::Error::other(e.to_string()))?;
            }
        }
        Ok(())
    }

    pub fn write_result(&self, result: &SearchResult) -> Result<(), SearchError> {
        write_json(&self.root.join("result.json"), result)
    }

    /// Reads a generation's metadata back together with its source text.
    pub fn read_record(&self, t: u32) -> Result<CandidateRecord, SearchError> {
        let stem = format!("{t:03}");
        let mut meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(
            self.root.join("generations").join(format!("{stem}.json")),
        )?)?;
        let text = fs::read_to_string(self.root.join("generations").join(format!("{stem}.src")))?;
        let obj = meta
            .as_object_mut()
            .ok_or_else(|| SearchError::InvalidConfig("record is not an object".into()))?;
        let manifest = obj.remove("manifest").unwrap_or_default();
        obj.insert(
            "source".into(),
            serde_json::json!({
                "language_tag": manifest["language_tag"],
                "source_text": text,
                "entry_name": manifest["entry_name"],
            }),
        );
        Ok(serde_json::from_value(meta)?)
    }
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), SearchError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// External collaborators of a search.
pub struct SearchEnv<'a> {
    pub sandbox: &'a Sandbox,
    pub registry: &'a Registry,
    pub llm: &'a mut dyn ChatClient,
    pub templates: &'a TemplateSet,
    pub run_dir: Option<&'a RunDir>,
}

pub fn run_bag(config: &SearchConfig, env: &mut SearchEnv<'_>) -> Result<SearchResult, SearchError> {
    if config.strategy != Strategy::Bag {
        return Err(SearchError::InvalidConfig("run_bag needs strategy `bag`".into()));
    }
    config.validate()?;
    let seed = config.bench_set[0].clone();
    run_loop(config, seed, env)
}

/// Refines only the current best, starting from `seed`.
pub fn run_refine_only(
    config: &SearchConfig,
    seed: BenchEntry,
    env: &mut SearchEnv<'_>,
) -> Result<SearchResult, SearchError> {
    if config.strategy != Strategy::RefineOnly {
        return Err(SearchError::InvalidConfig(
            "run_refine_only needs strategy `refine_only`".into(),
        ));
    }
    config.validate()?;
    run_loop(config, seed, env)
}

/// Asks only for new algorithms, starting from `seed`.
pub fn run_create_only(
    config: &SearchConfig,
    seed: BenchEntry,
    env: &mut SearchEnv<'_>,
) -> Result<SearchResult, SearchError> {
    if config.strategy != Strategy::CreateOnly {
        return Err(SearchError::InvalidConfig(
            "run_create_only needs strategy `create_only`".into(),
        ));
    }
    config.validate()?;
    run_loop(config, seed, env)
}

/// Dispatches on `config.strategy`; the seed is the first bench entry, or
/// `fallback_seed` when the bench set is empty.
pub fn run_search(
    config: &SearchConfig,
    fallback_seed: Option<BenchEntry>,
    env: &mut SearchEnv<'_>,
) -> Result<SearchResult, SearchError> {
    let seed = config
        .bench_set
        .first()
        .cloned()
        .or(fallback_seed)
        .ok_or_else(|| SearchError::InvalidConfig("no seed algorithm available".into()))?;
    match config.strategy {
        Strategy::Bag => run_bag(config, env),
        Strategy::RefineOnly => run_refine_only(config, seed, env),
        Strategy::CreateOnly => run_create_only(config, seed, env),
    }
}

/// Fitness, the runs it came from, and a failure note when evaluation itself failed.
type Scored = (FitnessReport, Vec<(u32, u32, RunOutcome)>, Option<String>);

fn evaluate(config: &SearchConfig, env: &SearchEnv<'_>, source: &CandidateSource) -> Result<Scored, SearchError> {
    let problems: Vec<ProblemId> = config
        .instances
        .iter()
        .map(|&k| config.problem.with_instance(k))
        .collect();
    match fitness(
        env.sandbox,
        env.registry,
        source,
        config.problem,
        &config.instances,
        &config.fitness,
    ) {
        Ok(ev) => Ok((ev.report, ev.runs, None)),
        Err(e @ (SandboxError::SpawnFailure { .. } | SandboxError::RunnerMissing(_) | SandboxError::Io(_))) => {
            Err(e.into())
        }
        Err(e) => Ok((FitnessReport::failed(&problems), Vec::new(), Some(e.to_string()))),
    }
}

fn run_loop(config: &SearchConfig, seed: BenchEntry, env: &mut SearchEnv<'_>) -> Result<SearchResult, SearchError> {
    if let Some(dir) = env.run_dir {
        dir.write_config(config)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut cycle = BenchCycle::new(config.bench_set.len().max(1));
    let task = promptkit::TaskKind::from(config.problem.suite);

    let (seed_fitness, seed_runs, seed_failure) = evaluate(config, env, &seed.source)?;
    let seed_record = CandidateRecord {
        t: 0,
        action: None,
        description: format!("Benchmark algorithm {}.", seed.name),
        source: seed.source.clone(),
        fitness: seed_fitness,
        accepted: true,
        failure: seed_failure,
    };
    if let Some(dir) = env.run_dir {
        dir.write_record(&seed_record, &seed_runs, config)?;
    }
    let mut incumbent = seed_record.clone();
    let mut records = Vec::with_capacity(config.query_budget as usize);
    let mut series = Vec::with_capacity(config.query_budget as usize);

    for t in 1..=config.query_budget {
        let action = match (config.strategy, t) {
            (Strategy::CreateOnly, _) => Action::Create,
            (_, 1) | (Strategy::RefineOnly, _) => Action::RefineBest,
            (Strategy::Bag, _) => next_action(t, config.q, &mut rng, &mut cycle),
        };
        let ctx = match action {
            Action::RefineBench { bench_index } => {
                let bench = &config.bench_set[bench_index];
                PromptContext {
                    task,
                    population: Vec::new(),
                    parent: Some(ParentCode {
                        description: format!("Benchmark algorithm {}.", bench.name),
                        score: 0.0,
                        source_text: bench.source.source_text.clone(),
                    }),
                    action,
                }
            }
            _ => PromptContext {
                task,
                // the first prompt shows the seed as a plain example
                population: if t == 1 {
                    Vec::new()
                } else {
                    vec![PopulationEntry {
                        name: incumbent.source.entry_name.clone(),
                        description: incumbent.description.clone(),
                        score: incumbent.fitness.mean_auc,
                    }]
                },
                parent: Some(ParentCode {
                    description: incumbent.description.clone(),
                    score: incumbent.fitness.mean_auc,
                    source_text: incumbent.source.source_text.clone(),
                }),
                action,
            },
        };
        let prompt = env.templates.render(&ctx)?;
        if promptkit::leaks_problem_identity(&prompt) {
            log::warn!("t={t}: prompt mentions a suite or function name");
        }
        let request = ChatRequest::new(env.llm.model().to_string(), vec![ChatMessage::user(prompt)]);
        let reply = match env.llm.chat(&request) {
            Ok(r) => Ok(r.text),
            Err(
                e @ (LlmError::AuthError(_)
                | LlmError::SessionExhausted(_)
                | LlmError::DigestMismatch { .. }
                | LlmError::InvalidRequest(_)
                | LlmError::Session(_)),
            ) => return Err(e.into()),
            Err(e) => Err(e.to_string()),
        };

        let problems: Vec<ProblemId> = config
            .instances
            .iter()
            .map(|&k| config.problem.with_instance(k))
            .collect();
        let (record, runs) = match reply.and_then(|text| {
            promptkit::parse_response(&text, &config.language_tag).map_err(|e| format!("parse error: {e}"))
        }) {
            Ok(parsed) => {
                let (fit, runs, failure) = evaluate(config, env, &parsed.code)?;
                let accepted = failure.is_none() && accept(&fit, &incumbent.fitness);
                (
                    CandidateRecord {
                        t,
                        action: Some(action),
                        description: parsed.description,
                        source: parsed.code,
                        fitness: fit,
                        accepted,
                        failure,
                    },
                    runs,
                )
            }
            Err(detail) => (
                CandidateRecord {
                    t,
                    action: Some(action),
                    description: String::new(),
                    source: CandidateSource {
                        language_tag: config.language_tag.clone(),
                        source_text: String::new(),
                        entry_name: String::new(),
                    },
                    fitness: FitnessReport::failed(&problems),
                    accepted: false,
                    failure: Some(detail),
                },
                Vec::new(),
            ),
        };
        log::info!(
            "t={t} {:?} auc={:.4} accepted={} incumbent={:.4}",
            action,
            record.fitness.mean_auc,
            record.accepted,
            incumbent.fitness.mean_auc
        );
        if let Some(dir) = env.run_dir {
            dir.write_record(&record, &runs, config)?;
        }
        if record.accepted {
            incumbent = record.clone();
        }
        series.push(incumbent.fitness.mean_auc);
        records.push(record);
    }

    let result = SearchResult {
        seed: seed_record,
        records,
        incumbent,
        best_so_far_series: series,
    };
    if let Some(dir) = env.run_dir {
        dir.write_result(&result)?;
    }
    Ok(result)
}

/// Shipped benchmark algorithms for a suite, in preference order.
pub fn builtin_bench_set(suite: Suite, language_tag: &str) -> Vec<BenchEntry> {
    let files: &[(&str, &str, &str)] = match suite {
        Suite::Pbo => &[
            (
                "greedy_hill_climber",
                "GreedyHillClimber",
                include_str!("../assets/bench/pbo/greedy_hill_climber.py"),
            ),
            (
                "one_plus_one_ea",
                "OnePlusOneEA",
                include_str!("../assets/bench/pbo/one_plus_one_ea.py"),
            ),
            ("fast_ga", "FastGA", include_str!("../assets/bench/pbo/fast_ga.py")),
            (
                "simulated_annealing",
                "SimulatedAnnealing",
                include_str!("../assets/bench/pbo/simulated_annealing.py"),
            ),
            (
                "genetic_algorithm",
                "GeneticAlgorithm",
                include_str!("../assets/bench/pbo/ga_uniform_crossover.py"),
            ),
        ],
        Suite::Bbob => &[
            ("cma_es", "CMAES", include_str!("../assets/bench/bbob/cma_es.py")),
            (
                "cholesky_cma_es",
                "CholeskyCMAES",
                include_str!("../assets/bench/bbob/cholesky_cma_es.py"),
            ),
            ("csa_es", "CSAES", include_str!("../assets/bench/bbob/csa_es.py")),
            (
                "differential_evolution",
                "DifferentialEvolution",
                include_str!("../assets/bench/bbob/differential_evolution.py"),
            ),
            (
                "particle_swarm",
                "ParticleSwarm",
                include_str!("../assets/bench/bbob/particle_swarm.py"),
            ),
        ],
    };
    files
        .iter()
        .map(|(name, entry, text)| BenchEntry {
            name: name.to_string(),
            source: CandidateSource {
                language_tag: language_tag.to_string(),
                source_text: text.to_string(),
                entry_name: entry.to_string(),
            },
        })
        .collect()
}

/// Plain random search, used as the starting example when no bench set is given.
pub fn random_search_seed(suite: Suite, language_tag: &str) -> BenchEntry {
    let text = match suite {
        Suite::Pbo => include_str!("../assets/bench/random_search_pbo.py"),
        Suite::Bbob => include_str!("../assets/bench/random_search_bbob.py"),
    };
    BenchEntry {
        name: "random_search".into(),
        source: CandidateSource {
            language_tag: language_tag.to_string(),
            source_text: text.to_string(),
            entry_name: "RandomSearch".into(),
        },
    }
}
