mod config;
mod run;
mod tools;

use std::path::PathBuf;
use std::process::ExitCode;

use bag_core::problems::Suite;
use bag_core::search::Strategy;
use clap::{Args, Parser, Subcommand};

use crate::config::{parse_instances, FileConfig, InstanceList};

#[derive(Parser, Debug)]
#[command(
    name = "bag",
    version,
    about = "LLM-driven search for black-box optimization algorithms"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a search and persist every generation.
    Run(Box<RunArgs>),
    /// Re-evaluate a stored candidate.
    Eval(EvalArgs),
    /// Compute AUC from stored trace files.
    Auc(AucArgs),
    /// Summarize one or more run directories.
    Report(ReportArgs),
    /// Pairwise CodeBLEU between stored candidates.
    Simmatrix(SimArgs),
    /// Aggregate a token relevance matrix.
    Attn(AttnArgs),
    /// Shipped problems and benchmark algorithms.
    Bench {
        #[command(subcommand)]
        command: BenchCommand,
    },
}

#[derive(Subcommand, Debug)]
enum BenchCommand {
    /// List problems and shipped benchmark algorithms.
    List,
}

#[derive(Args, Debug)]
pub struct RunArgs {
    /// JSON config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// bag, refine-only or create-only.
    #[arg(long)]
    strategy: Option<Strategy>,
    #[arg(long, value_parser = parse_suite)]
    suite: Option<Suite>,
    #[arg(long)]
    function: Option<u32>,
    #[arg(long)]
    dim: Option<usize>,
    /// Training instances, e.g. `1-5` or `1,3,4`.
    #[arg(long, value_parser = parse_instances)]
    instances: Option<InstanceList>,
    /// `replay:PATH`, `replay-loose:PATH` or `provider:NAME`.
    #[arg(long)]
    llm: Option<String>,
    #[arg(long)]
    query_budget: Option<u32>,
    /// Period of benchmark refinement.
    #[arg(long)]
    q: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    /// Evaluations per run.
    #[arg(long)]
    eval_budget: Option<u64>,
    /// Wall-clock limit per run in seconds.
    #[arg(long)]
    timeout: Option<f64>,
    /// CPU time cap per problem in seconds.
    #[arg(long)]
    cpu_cap: Option<f64>,
    #[arg(long)]
    parallelism: Option<usize>,
    #[arg(long)]
    runs_per_instance: Option<u32>,
    #[arg(long)]
    language: Option<String>,
    #[arg(long)]
    bench_dir: Option<PathBuf>,
    #[arg(long)]
    templates_dir: Option<PathBuf>,
    /// Run directory; must not exist or be empty.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn flags(&self) -> FileConfig {
        FileConfig {
            strategy: self.strategy,
            suite: self.suite,
            function: self.function,
            dim: self.dim,
            instances: self.instances.clone().map(|l| l.0),
            query_budget: self.query_budget,
            q: self.q,
            seed: self.seed,
            llm: self.llm.clone(),
            eval_budget: self.eval_budget,
            timeout_s: self.timeout,
            cpu_cap_s: self.cpu_cap,
            parallelism: self.parallelism,
            runs_per_instance: self.runs_per_instance,
            language_tag: self.language.clone(),
            bench_dir: self.bench_dir.clone(),
            templates_dir: self.templates_dir.clone(),
            ..Default::default()
        }
    }
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    run_dir: PathBuf,
    /// Generation to evaluate; defaults to the final incumbent.
    #[arg(long)]
    generation: Option<u32>,
    /// Instances to evaluate on; defaults to the training instances.
    #[arg(long, value_parser = parse_instances)]
    instances: Option<InstanceList>,
}

#[derive(Args, Debug)]
pub struct AucArgs {
    /// Trace files or directories holding `*.jsonl` traces.
    #[arg(required = true)]
    paths: Vec<PathBuf>,
    #[arg(long, default_value_t = 100)]
    grid_points: usize,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Run directories, or directories containing run directories.
    #[arg(required = true)]
    dirs: Vec<PathBuf>,
    /// Directory for the CSV outputs; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SimArgs {
    /// A run directory, or source files in order.
    #[arg(required = true)]
    paths: Vec<PathBuf>,
    /// Score with token BLEU only.
    #[arg(long)]
    no_frontend: bool,
    #[arg(long, default_value = "python3")]
    python: String,
}

#[derive(Args, Debug)]
pub struct AttnArgs {
    /// `.csv` or `.json` relevance matrix.
    path: PathBuf,
}

fn parse_suite(s: &str) -> Result<Suite, String> {
    match s.to_ascii_lowercase().as_str() {
        "pbo" => Ok(Suite::Pbo),
        "bbob" => Ok(Suite::Bbob),
        other => Err(format!("unknown suite `{other}`")),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    let result = match cli.command {
        Command::Run(a) => run::run(*a),
        Command::Eval(a) => tools::eval(a),
        Command::Auc(a) => tools::auc(a),
        Command::Report(a) => tools::report(a),
        Command::Simmatrix(a) => tools::simmatrix(a),
        Command::Attn(a) => tools::attn(a),
        Command::Bench {
            command: BenchCommand::List,
        } => tools::bench_list(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
