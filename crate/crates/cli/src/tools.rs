//! Subcommands that work on stored runs: eval, auc, report, simmatrix, attn, bench.

use std::collections::BTreeMap;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use bag_core::analysis::{
    aggregate_relevance, component_relevance, report_table, similarity_matrix, ApproachResults, CodeBleuSettings,
    PythonAstFrontend, RelevanceMatrix,
};
use bag_core::evaluation::{auc as auc_of, log_time_grid, RunTrace};
use bag_core::problems::{ProblemId, Registry, Suite};
use bag_core::sandbox::{fitness, RunnerRegistry, RunnerSpec, Sandbox};
use bag_core::search::{builtin_bench_set, RunDir, SearchConfig, SearchResult};
use serde::Serialize;

use crate::run::RunManifest;
use crate::{AttnArgs, AucArgs, EvalArgs, ReportArgs, SimArgs};

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

pub fn eval(args: EvalArgs) -> Result<()> {
    let config: SearchConfig = read_json(&args.run_dir.join("config.json"))?;
    let manifest = RunManifest::load(&args.run_dir)?;
    let runners: BTreeMap<String, RunnerSpec> =
        serde_json::from_value(manifest.settings.get("runners").cloned().unwrap_or_default()).unwrap_or_default();
    let mut registry = RunnerRegistry::default();
    for (tag, spec) in runners {
        registry.register(tag, spec);
    }
    let dir = RunDir::create(&args.run_dir)?;
    let record = match args.generation {
        Some(t) => dir.read_record(t)?,
        None => read_json::<SearchResult>(&args.run_dir.join("result.json"))?.incumbent,
    };
    if record.source.source_text.is_empty() {
        bail!("generation {} has no code", record.t);
    }
    let instances = args.instances.map(|l| l.0).unwrap_or_else(|| config.instances.clone());
    let scratch = args.run_dir.join("scratch-eval");
    let sandbox = Sandbox::new(registry, &scratch);
    let ev = fitness(
        &sandbox,
        &Registry::standard(),
        &record.source,
        config.problem,
        &instances,
        &config.fitness,
    );
    let _ = fs::remove_dir_all(&scratch);
    print_json(&ev?.report)
}

/// Trace files under `paths`, recursing into directories.
fn collect_traces(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut entries: Vec<PathBuf> = fs::read_dir(p)?.filter_map(|e| e.ok().map(|e| e.path())).collect();
            entries.sort();
            out.extend(collect_traces(&entries)?);
        } else if p.extension().is_some_and(|x| x == "jsonl") {
            out.push(p.clone());
        } else if !p.exists() {
            bail!("{} does not exist", p.display());
        }
    }
    Ok(out)
}

#[derive(Serialize)]
struct AucRow {
    problem: ProblemId,
    runs: usize,
    auc: f64,
    failed: bool,
}

#[derive(Serialize)]
struct AucSummary {
    per_problem: Vec<AucRow>,
    mean_auc: f64,
}

pub fn auc(args: AucArgs) -> Result<()> {
    let files = collect_traces(&args.paths)?;
    if files.is_empty() {
        bail!("no trace files found");
    }
    let mut groups: BTreeMap<ProblemId, Vec<RunTrace>> = BTreeMap::new();
    for f in files {
        let file = fs::File::open(&f)?;
        let tr = RunTrace::read_jsonl(BufReader::new(file)).with_context(|| format!("reading {}", f.display()))?;
        groups.entry(tr.problem).or_default().push(tr);
    }
    let registry = Registry::standard();
    let mut rows = Vec::new();
    for (problem, mut traces) in groups {
        traces.sort_by_key(|t| t.run_seed);
        let failed = traces.iter().any(|t| t.status.is_failure());
        let value = if failed {
            0.0
        } else {
            let grid = log_time_grid(traces[0].budget, args.grid_points)?;
            auc_of(&traces, &registry.target_set(problem)?, &grid)?.auc
        };
        rows.push(AucRow {
            problem,
            runs: traces.len(),
            auc: value,
            failed,
        });
    }
    let mean_auc = rows.iter().map(|r| r.auc).sum::<f64>() / rows.len() as f64;
    print_json(&AucSummary {
        per_problem: rows,
        mean_auc,
    })
}

/// A run directory is recognized by its `result.json`.
fn find_runs(dirs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for d in dirs {
        if !d.is_dir() {
            bail!("{} is not a directory", d.display());
        }
        if d.join("result.json").is_file() {
            out.push(d.clone());
            continue;
        }
        let mut subs: Vec<PathBuf> = fs::read_dir(d)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.join("result.json").is_file())
            .collect();
        subs.sort();
        out.extend(subs);
    }
    if out.is_empty() {
        bail!("no completed runs found");
    }
    Ok(out)
}

pub fn report(args: ReportArgs) -> Result<()> {
    let runs = find_runs(&args.dirs)?;
    // approach -> problem -> incumbent AUCs over seeds
    let mut table: BTreeMap<String, BTreeMap<String, Vec<f64>>> = BTreeMap::new();
    let mut convergence = String::from("run,approach,problem,generation,best_so_far\n");
    let mut failures = String::from("run,approach,problem,generations,failure_rate\n");
    for run in &runs {
        let config: SearchConfig = read_json(&run.join("config.json"))?;
        let result: SearchResult = read_json(&run.join("result.json"))?;
        let approach = format!("{:?}", config.strategy).to_lowercase();
        let p = config.problem;
        let problem = format!("{}_f{}_d{}", p.suite, p.function, p.dim);
        let name = run
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        table
            .entry(approach.clone())
            .or_default()
            .entry(problem.clone())
            .or_default()
            .push(result.incumbent.fitness.mean_auc);
        for (t, v) in result.best_so_far_series.iter().enumerate() {
            convergence.push_str(&format!("{name},{approach},{problem},{},{v}\n", t + 1));
        }
        failures.push_str(&format!(
            "{name},{approach},{problem},{},{}\n",
            result.records.len(),
            bag_core::search::failure_rate(&result)
        ));
    }
    let results: Vec<ApproachResults> = table
        .into_iter()
        .map(|(approach, probs)| ApproachResults {
            approach,
            per_problem: probs
                .into_iter()
                .map(|(p, v)| (p, v.iter().sum::<f64>() / v.len() as f64))
                .collect(),
        })
        .collect();
    let ranked = report_table(&results)?.to_csv();
    match args.out {
        Some(out) => {
            fs::create_dir_all(&out)?;
            fs::write(out.join("table.csv"), ranked)?;
            fs::write(out.join("convergence.csv"), convergence)?;
            fs::write(out.join("failures.csv"), failures)?;
            println!("wrote {}", out.display());
        }
        None => print!("{ranked}\n{failures}"),
    }
    Ok(())
}

pub fn simmatrix(args: SimArgs) -> Result<()> {
    let codes: Vec<String> = if args.paths.len() == 1 && args.paths[0].is_dir() {
        let gens = args.paths[0].join("generations");
        let mut files: Vec<PathBuf> = fs::read_dir(&gens)
            .with_context(|| format!("reading {}", gens.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "src"))
            .collect();
        files.sort();
        files
            .iter()
            .map(fs::read_to_string)
            .collect::<Result<Vec<_>, _>>()?
            .into_iter()
            .filter(|s| !s.trim().is_empty())
            .collect()
    } else {
        args.paths.iter().map(fs::read_to_string).collect::<Result<_, _>>()?
    };
    let frontend = PythonAstFrontend {
        interpreter: args.python.clone(),
    };
    let refs: Vec<&str> = codes.iter().map(String::as_str).collect();
    let m = similarity_matrix(
        &refs,
        &CodeBleuSettings::default(),
        if args.no_frontend { None } else { Some(&frontend) },
    )?;
    print!("{}", m.to_csv());
    Ok(())
}

#[derive(Serialize)]
struct AttnOutput {
    tokens: Vec<(String, f64)>,
    components: Vec<(String, f64)>,
}

pub fn attn(args: AttnArgs) -> Result<()> {
    let text = fs::read_to_string(&args.path).with_context(|| format!("reading {}", args.path.display()))?;
    let m = match args.path.extension().and_then(|x| x.to_str()) {
        Some("csv") => RelevanceMatrix::from_csv(&text)?,
        Some("json") => RelevanceMatrix::from_json(&text)?,
        _ => return Err(anyhow!("relevance file must end in .csv or .json")),
    };
    let scores = aggregate_relevance(&m)?;
    print_json(&AttnOutput {
        tokens: m.input_tokens.iter().cloned().zip(scores).collect(),
        components: component_relevance(&m)?,
    })
}

#[derive(Serialize)]
struct ShippedBench {
    suite: Suite,
    name: String,
    entry_name: String,
}

#[derive(Serialize)]
struct Catalog {
    problems: Vec<bag_core::problems::CatalogEntry>,
    /// In preference order; the first of each suite seeds a search.
    bench_algorithms: Vec<ShippedBench>,
}

pub fn bench_list() -> Result<()> {
    let bench_algorithms = [Suite::Pbo, Suite::Bbob]
        .into_iter()
        .flat_map(|suite| {
            builtin_bench_set(suite, "python")
                .into_iter()
                .map(move |b| ShippedBench {
                    suite,
                    name: b.name,
                    entry_name: b.source.entry_name,
                })
        })
        .collect();
    print_json(&Catalog {
        problems: Registry::standard().catalog(),
        bench_algorithms,
    })
}
