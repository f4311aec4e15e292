//! Out-of-process execution of candidate algorithms.
//!
//! Each run launches one child process through a runner registered for the
//! candidate's language and talks to it over JSON Lines on stdin/stdout:
//!
//! ```text
//! harness -> child  {"type":"init","dim":D,"budget":B,"seed":S,"domain":"bool"|"real","lb":..,"ub":..,"y_opt":Y,"orientation":"max"|"min"}
//! child -> harness  {"type":"ask","x":[...]}
//! harness -> child  {"type":"tell","y":..,"evals":k,"target_hit":bool}
//! harness -> child  {"type":"stop","reason":..}
//! ```
//!
//! The harness owns the evaluation counter, so a candidate never receives
//! more than `budget` tells. The child runs in its own process group and the
//! whole group is killed when the run ends, whatever the reason.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::os::unix::process::CommandExt;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{self, RecvTimeoutError};
use std::thread;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::evaluation::{auc, log_time_grid, EvalError, Monitor, RunStatus, RunTrace};
use crate::problems::{Orientation, ProblemError, ProblemId, ProblemInstance, Registry};

/// Per-instance wall-clock timeout.
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(600);
/// CPU time allowed across all instances of one problem.
pub const DEFAULT_CPU_CAP: Duration = Duration::from_secs(3000);
/// How long a child may linger after a stop message before it is killed.
const STOP_GRACE: Duration = Duration::from_millis(500);
const STDERR_TAIL: usize = 4096;

#[derive(Debug, Error)]
pub enum SandboxError {
    #[error("no runner registered for language `{0}`")]
    RunnerMissing(String),
    #[error("failed to launch runner `{command}`: {source}")]
    SpawnFailure {
        command: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid candidate source: {0}")]
    InvalidSource(String),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Source code of one candidate algorithm.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CandidateSource {
    pub language_tag: String,
    pub source_text: String,
    pub entry_name: String,
}

impl CandidateSource {
    pub fn new(
        language_tag: impl Into<String>,
        source_text: impl Into<String>,
        entry_name: impl Into<String>,
    ) -> Result<Self, SandboxError> {
        let s = Self {
            language_tag: language_tag.into(),
            source_text: source_text.into(),
            entry_name: entry_name.into(),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), SandboxError> {
        if self.source_text.trim().is_empty() {
            return Err(SandboxError::InvalidSource("empty source text".into()));
        }
        if !is_identifier(&self.entry_name) {
            return Err(SandboxError::InvalidSource(format!(
                "`{}` is not a valid entry name",
                self.entry_name
            )));
        }
        Ok(())
    }

    /// Short content digest, used to name persisted files.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.language_tag.as_bytes());
        h.update([0]);
        h.update(self.entry_name.as_bytes());
        h.update([0]);
        h.update(self.source_text.as_bytes());
        hex::encode(&h.finalize()[..8])
    }
}

pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_alphabetic() || c == '_') && chars.all(|c| c.is_alphanumeric() || c == '_')
}

/// Launcher for one candidate language. `{source}`, `{entry}` and `{dir}` in
/// the command template are replaced with the source file, the entry name and
/// the run directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunnerSpec {
    pub command: Vec<String>,
    #[serde(default = "default_extension")]
    pub extension: String,
}

fn default_extension() -> String {
    "py".into()
}

/// Mapping from language tag to launcher.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunnerRegistry {
    pub runners: BTreeMap<String, RunnerSpec>,
}

impl Default for RunnerRegistry {
    fn default() -> Self {
        let mut runners = BTreeMap::new();
        // Class-based candidates go through the separately shipped shim.
        runners.insert(
            "python".into(),
            RunnerSpec {
                command: vec!["bag-pyshim".into(), "{source}".into(), "{entry}".into()],
                extension: "py".into(),
            },
        );
        // Scripts that speak the wire protocol themselves.
        runners.insert(
            "python-wire".into(),
            RunnerSpec {
                command: vec!["python3".into(), "-u".into(), "{source}".into()],
                extension: "py".into(),
            },
        );
        Self { runners }
    }
}

impl RunnerRegistry {
    pub fn empty() -> Self {
        Self {
            runners: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, tag: impl Into<String>, spec: RunnerSpec) {
        self.runners.insert(tag.into(), spec);
    }

    pub fn get(&self, tag: &str) -> Result<&RunnerSpec, SandboxError> {
        self.runners
            .get(tag)
            .ok_or_else(|| SandboxError::RunnerMissing(tag.to_string()))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum HarnessMessage {
    Init {
        dim: usize,
        budget: u64,
        seed: u64,
        domain: String,
        lb: f64,
        ub: f64,
        y_opt: f64,
        orientation: Orientation,
    },
    Tell {
        y: f64,
        evals: u64,
        target_hit: bool,
    },
    Stop {
        reason: String,
    },
}

impl HarnessMessage {
    pub fn init(instance: &ProblemInstance, budget: u64, seed: u64) -> Self {
        let domain = instance.domain();
        let (lb, ub) = domain.bounds();
        HarnessMessage::Init {
            dim: domain.dim(),
            budget,
            seed,
            domain: domain.wire_name().into(),
            lb,
            ub,
            y_opt: instance.y_opt(),
            orientation: instance.orientation(),
        }
    }

    pub fn to_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("harness messages serialize");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum CandidateMessage {
    Ask { x: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    Crash,
    Timeout,
    ProtocolViolation,
}

impl FailureKind {
    pub fn status(self) -> RunStatus {
        match self {
            FailureKind::Crash => RunStatus::Crashed,
            FailureKind::Timeout => RunStatus::Timeout,
            FailureKind::ProtocolViolation => RunStatus::ProtocolViolation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub kind: FailureKind,
    pub detail: String,
    pub partial_trace: Option<RunTrace>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunOutcome {
    Trace(RunTrace),
    Failure(RunFailure),
}

impl RunOutcome {
    pub fn status(&self) -> RunStatus {
        match self {
            RunOutcome::Trace(t) => t.status,
            RunOutcome::Failure(f) => f.kind.status(),
        }
    }

    pub fn trace(&self) -> Option<&RunTrace> {
        match self {
            RunOutcome::Trace(t) => Some(t),
            RunOutcome::Failure(f) => f.partial_trace.as_ref(),
        }
    }

    pub fn is_failure(&self) -> bool {
        matches!(self, RunOutcome::Failure(_))
    }
}

/// Limits applied to a single run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunLimits {
    pub budget: u64,
    pub timeout: Duration,
    /// Hard CPU-seconds limit for the child, if any.
    pub cpu_limit: Option<Duration>,
}

/// A finished run with its measured CPU time.
#[derive(Debug, Clone, PartialEq)]
pub struct CompletedRun {
    pub outcome: RunOutcome,
    pub cpu_time: Duration,
    pub wall_time: Duration,
    pub pid: u32,
}

/// Launches candidate runs. Source files are written below `scratch_dir`.
#[derive(Debug, Clone)]
pub struct Sandbox {
    runners: RunnerRegistry,
    scratch_dir: PathBuf,
}

impl Sandbox {
    pub fn new(runners: RunnerRegistry, scratch_dir: impl Into<PathBuf>) -> Self {
        Self {
            runners,
            scratch_dir: scratch_dir.into(),
        }
    }

    pub fn runners(&self) -> &RunnerRegistry {
        &self.runners
    }

    /// Persists the candidate source and returns its path.
    pub fn materialize(&self, source: &CandidateSource) -> Result<PathBuf, SandboxError> {
        let spec = self.runners.get(&source.language_tag)?;
        fs::create_dir_all(&self.scratch_dir)?;
        let path = self
            .scratch_dir
            .join(format!("cand_{}.{}", source.digest(), spec.extension));
        if !path.exists() {
            // write-then-rename so concurrent runs never see a partial file
            static NEXT_TMP: AtomicU64 = AtomicU64::new(0);
            let tmp = path.with_extension(format!(
                "{}.tmp{}_{}",
                spec.extension,
                std::process::id(),
                NEXT_TMP.fetch_add(1, Ordering::Relaxed)
            ));
            fs::write(&tmp, &source.source_text)?;
            fs::rename(&tmp, &path)?;
        }
        Ok(path)
    }

    fn command_for(&self, source: &CandidateSource, file: &Path) -> Result<Vec<String>, SandboxError> {
        let spec = self.runners.get(&source.language_tag)?;
        if spec.command.is_empty() {
            return Err(SandboxError::RunnerMissing(source.language_tag.clone()));
        }
        let file = file.display().to_string();
        let dir = self.scratch_dir.display().to_string();
        Ok(spec
            .command
            .iter()
            .map(|a| {
                a.replace("{source}", &file)
                    .replace("{entry}", &source.entry_name)
                    .replace("{dir}", &dir)
            })
            .collect())
    }

    /// Runs `source` once on `instance`.
    pub fn run_candidate(
        &self,
        source: &CandidateSource,
        instance: &ProblemInstance,
        seed: u64,
        limits: RunLimits,
    ) -> Result<CompletedRun, SandboxError> {
        source.validate()?;
        let file = self.materialize(source)?;
        let argv = self.command_for(source, &file)?;
        run_process(&argv, &self.scratch_dir, instance, seed, limits)
    }
}

enum ChildEvent {
    Line(String),
    Eof,
    ReadError(String),
}

fn run_process(
    argv: &[String],
    cwd: &Path,
    instance: &ProblemInstance,
    seed: u64,
    limits: RunLimits,
) -> Result<CompletedRun, SandboxError> {
    let mut monitor = Monitor::new(instance, limits.budget, seed)?;
    let mut cmd = Command::new(&argv[0]);
    cmd.args(&argv[1..])
        .current_dir(cwd)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .process_group(0);
    if let Some(cpu) = limits.cpu_limit {
        let secs = cpu.as_secs_f64().ceil().max(1.0) as libc::rlim_t;
        // SAFETY: setrlimit is async-signal-safe and touches no parent state.
        unsafe {
            cmd.pre_exec(move || {
                let lim = libc::rlimit {
                    rlim_cur: secs,
                    rlim_max: secs + 1,
                };
                if libc::setrlimit(libc::RLIMIT_CPU, &lim) != 0 {
                    return Err(std::io::Error::last_os_error());
                }
                Ok(())
            });
        }
    }
    let started = Instant::now();
    let mut child = cmd.spawn().map_err(|source| SandboxError::SpawnFailure {
        command: argv.join(" "),
        source,
    })?;
    let pid = child.id();
    let stdin = child.stdin.take().expect("stdin piped");
    let stdout = child.stdout.take().expect("stdout piped");
    let mut stderr = child.stderr.take().expect("stderr piped");
    // The std handle is never waited on; the group is reaped through wait4.
    drop(child);

    let (to_child, outbox) = mpsc::channel::<String>();
    let writer = thread::spawn(move || {
        let mut stdin = stdin;
        for line in outbox {
            if stdin.write_all(line.as_bytes()).and_then(|_| stdin.flush()).is_err() {
                break;
            }
        }
    });
    let (events_tx, events) = mpsc::channel::<ChildEvent>();
    let reader = thread::spawn(move || {
        let mut r = BufReader::new(stdout);
        loop {
            let mut line = String::new();
            match r.read_line(&mut line) {
                Ok(0) => {
                    let _ = events_tx.send(ChildEvent::Eof);
                    break;
                }
                Ok(_) => {
                    if events_tx.send(ChildEvent::Line(line)).is_err() {
                        break;
                    }
                }
                Err(e) => {
                    let _ = events_tx.send(ChildEvent::ReadError(e.to_string()));
                    break;
                }
            }
        }
    });
    let err_reader = thread::spawn(move || {
        let mut buf = Vec::new();
        let mut chunk = [0u8; 4096];
        while let Ok(n) = stderr.read(&mut chunk) {
            if n == 0 {
                break;
            }
            buf.extend_from_slice(&chunk[..n]);
            if buf.len() > 2 * STDERR_TAIL {
                buf.drain(..buf.len() - STDERR_TAIL);
            }
        }
        let start = buf.len().saturating_sub(STDERR_TAIL);
        String::from_utf8_lossy(&buf[start..]).into_owned()
    });

    let _ = to_child.send(HarnessMessage::init(instance, limits.budget, seed).to_line());
    let deadline = started + limits.timeout;

    enum End {
        Stopped,
        Exited,
        Failed(FailureKind, String),
    }

    let end = loop {
        let wait = deadline.saturating_duration_since(Instant::now());
        let event = match events.recv_timeout(wait) {
            Ok(ev) => ev,
            Err(RecvTimeoutError::Timeout) => {
                break End::Failed(
                    FailureKind::Timeout,
                    format!("no completion within {:.1}s", limits.timeout.as_secs_f64()),
                )
            }
            Err(RecvTimeoutError::Disconnected) => ChildEvent::Eof,
        };
        let line = match event {
            ChildEvent::Eof => break End::Exited,
            ChildEvent::ReadError(e) => {
                break End::Failed(FailureKind::ProtocolViolation, format!("unreadable output: {e}"))
            }
            ChildEvent::Line(l) => l,
        };
        let msg: CandidateMessage = match serde_json::from_str(line.trim_end()) {
            Ok(m) => m,
            Err(e) => {
                break End::Failed(
                    FailureKind::ProtocolViolation,
                    format!("malformed message {:?}: {e}", truncate(&line, 120)),
                )
            }
        };
        let CandidateMessage::Ask { x } = msg;
        match monitor.evaluate(&x) {
            Ok(ev) => {
                let _ = to_child.send(
                    HarnessMessage::Tell {
                        y: ev.y,
                        evals: ev.evals,
                        target_hit: ev.target_hit,
                    }
                    .to_line(),
                );
                let reason = if ev.target_hit {
                    Some("target_hit")
                } else if monitor.remaining() == 0 {
                    Some("budget_exhausted")
                } else {
                    None
                };
                if let Some(reason) = reason {
                    let _ = to_child.send(HarnessMessage::Stop { reason: reason.into() }.to_line());
                    break End::Stopped;
                }
            }
            Err(EvalError::Problem(e)) => break End::Failed(FailureKind::ProtocolViolation, e.to_string()),
            Err(e) => break End::Failed(FailureKind::ProtocolViolation, e.to_string()),
        }
    };

    let end = match end {
        End::Failed(kind, detail) => {
            let reason = match kind {
                FailureKind::Timeout => "timeout",
                _ => "protocol_violation",
            };
            let _ = to_child.send(HarnessMessage::Stop { reason: reason.into() }.to_line());
            End::Failed(kind, detail)
        }
        other => other,
    };
    drop(to_child);

    // A stopped child gets a short grace period; one that closed its output
    // may run until the deadline. Failed runs are killed right away.
    let linger_until = match end {
        End::Stopped => Some(Instant::now() + STOP_GRACE),
        End::Exited => Some(deadline),
        End::Failed(..) => None,
    };
    let lingered = linger_until.map(|until| wait_until(pid, until, &events));
    // Kill the whole group, including anything the candidate spawned.
    // SAFETY: plain syscall on the process group we created.
    unsafe {
        libc::killpg(pid as libc::pid_t, libc::SIGKILL);
    }
    let overstayed = matches!(lingered, Some(None));
    let exit = match lingered {
        Some(Some(info)) => info,
        _ => reap(pid),
    };
    let _ = writer.join();
    let _ = reader.join();
    let stderr_tail = err_reader.join().unwrap_or_default();
    let wall_time = started.elapsed();

    let outcome = match end {
        End::Stopped => RunOutcome::Trace(monitor.finish(None)),
        End::Failed(kind, detail) => failure(monitor, kind, detail),
        End::Exited => {
            if exit.cpu_limited() {
                failure(monitor, FailureKind::Timeout, "CPU time limit exceeded".into())
            } else if exit.success() {
                RunOutcome::Trace(monitor.finish(None))
            } else if overstayed {
                failure(
                    monitor,
                    FailureKind::Timeout,
                    format!("no completion within {:.1}s", limits.timeout.as_secs_f64()),
                )
            } else {
                failure(
                    monitor,
                    FailureKind::Crash,
                    format!("{}; stderr: {}", exit.describe(), stderr_tail.trim()),
                )
            }
        }
    };
    Ok(CompletedRun {
        outcome,
        cpu_time: exit.cpu_time,
        wall_time,
        pid,
    })
}

fn failure(monitor: Monitor<'_>, kind: FailureKind, detail: String) -> RunOutcome {
    let trace = monitor.finish(Some(kind.status()));
    RunOutcome::Failure(RunFailure {
        kind,
        detail,
        partial_trace: (!trace.points.is_empty()).then_some(trace),
    })
}

fn truncate(s: &str, n: usize) -> &str {
    match s.char_indices().nth(n) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

#[derive(Debug, Clone, Copy)]
struct ExitInfo {
    status: libc::c_int,
    cpu_time: Duration,
}

impl ExitInfo {
    fn success(&self) -> bool {
        libc::WIFEXITED(self.status) && libc::WEXITSTATUS(self.status) == 0
    }

    fn cpu_limited(&self) -> bool {
        libc::WIFSIGNALED(self.status) && libc::WTERMSIG(self.status) == libc::SIGXCPU
    }

    fn describe(&self) -> String {
        if libc::WIFEXITED(self.status) {
            format!("exit code {}", libc::WEXITSTATUS(self.status))
        } else if libc::WIFSIGNALED(self.status) {
            format!("killed by signal {}", libc::WTERMSIG(self.status))
        } else {
            format!("wait status {}", self.status)
        }
    }
}

fn wait4(pid: u32, flags: libc::c_int) -> Option<ExitInfo> {
    let mut status: libc::c_int = 0;
    // SAFETY: zeroed rusage is a valid out-parameter.
    let mut usage: libc::rusage = unsafe { std::mem::zeroed() };
    loop {
        // SAFETY: pid is our direct child; pointers are valid for the call.
        let r = unsafe { libc::wait4(pid as libc::pid_t, &mut status, flags, &mut usage) };
        if r == pid as libc::pid_t {
            let tv = |t: libc::timeval| Duration::new(t.tv_sec as u64, (t.tv_usec as u32) * 1000);
            return Some(ExitInfo {
                status,
                cpu_time: tv(usage.ru_utime) + tv(usage.ru_stime),
            });
        }
        if r == 0 {
            return None;
        }
        if std::io::Error::last_os_error().raw_os_error() != Some(libc::EINTR) {
            return Some(ExitInfo {
                status: 0,
                cpu_time: Duration::ZERO,
            });
        }
    }
}

fn reap(pid: u32) -> ExitInfo {
    wait4(pid, 0).expect("blocking wait4 returns")
}

/// Polls for the child's exit until `until`, draining further output so the
/// child never blocks on a full pipe.
fn wait_until(pid: u32, until: Instant, events: &mpsc::Receiver<ChildEvent>) -> Option<ExitInfo> {
    loop {
        if let Some(info) = wait4(pid, libc::WNOHANG) {
            return Some(info);
        }
        let now = Instant::now();
        if now >= until {
            return None;
        }
        let _ = events.recv_timeout((until - now).min(Duration::from_millis(5)));
    }
}

/// Settings for computing a candidate's fitness over several instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitnessSettings {
    pub budget: u64,
    #[serde(with = "secs")]
    pub timeout: Duration,
    #[serde(with = "secs")]
    pub cpu_cap: Duration,
    pub parallelism: usize,
    pub grid_points: usize,
    pub runs_per_instance: u32,
}

impl FitnessSettings {
    pub fn with_budget(budget: u64) -> Self {
        Self {
            budget,
            timeout: DEFAULT_TIMEOUT,
            cpu_cap: DEFAULT_CPU_CAP,
            parallelism: 5,
            grid_points: 100,
            runs_per_instance: 1,
        }
    }
}

mod secs {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let v = f64::deserialize(d)?;
        Duration::try_from_secs_f64(v).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceFitness {
    pub problem: ProblemId,
    pub auc: f64,
    pub status: RunStatus,
}

/// Mean AUC over instances; failed instances count as 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitnessReport {
    pub per_instance: Vec<InstanceFitness>,
    pub mean_auc: f64,
}

impl FitnessReport {
    pub fn from_instances(per_instance: Vec<InstanceFitness>) -> Self {
        let mean_auc = if per_instance.is_empty() {
            0.0
        } else {
            per_instance.iter().map(|i| i.auc).sum::<f64>() / per_instance.len() as f64
        };
        Self { per_instance, mean_auc }
    }

    /// Report for a candidate that never ran (e.g. an unparsable response).
    pub fn failed(problems: &[ProblemId]) -> Self {
        Self::from_instances(
            problems
                .iter()
                .map(|&problem| InstanceFitness {
                    problem,
                    auc: 0.0,
                    status: RunStatus::Crashed,
                })
                .collect(),
        )
    }

    pub fn all_failed(&self) -> bool {
        !self.per_instance.is_empty() && self.per_instance.iter().all(|i| i.status.is_failure())
    }
}

/// Fitness together with the per-run outcomes it was computed from.
#[derive(Debug, Clone, PartialEq)]
pub struct FitnessEvaluation {
    pub report: FitnessReport,
    /// `(instance id, run index, outcome)` in instance order.
    pub runs: Vec<(u32, u32, RunOutcome)>,
}

/// Seed of run `k` on instance `instance`; run 0 uses the instance id itself.
pub fn run_seed(instance: u32, k: u32) -> u64 {
    instance as u64 + 1000 * k as u64
}

/// Evaluates `source` on each listed instance of `base` and averages AUCs.
pub fn fitness(
    sandbox: &Sandbox,
    registry: &Registry,
    source: &CandidateSource,
    base: ProblemId,
    instances: &[u32],
    settings: &FitnessSettings,
) -> Result<FitnessEvaluation, SandboxError> {
    if instances.is_empty() {
        return Err(SandboxError::Eval(EvalError::InvalidArgument(
            "instance list is empty".into(),
        )));
    }
    let problems: Vec<ProblemInstance> = instances
        .iter()
        .map(|&k| registry.make_instance(base.with_instance(k)))
        .collect::<Result<_, _>>()?;
    let grid = log_time_grid(settings.budget, settings.grid_points)?;
    let cpu_used = AtomicU64::new(0);
    let cap_micros = settings.cpu_cap.as_micros() as u64;

    let jobs: Vec<(usize, u32)> = (0..problems.len())
        .flat_map(|i| (0..settings.runs_per_instance.max(1)).map(move |k| (i, k)))
        .collect();
    let run_job = |&(i, k): &(usize, u32)| -> Result<(usize, u32, RunOutcome), SandboxError> {
        let inst = &problems[i];
        let used = cpu_used.load(Ordering::SeqCst);
        if used >= cap_micros {
            return Ok((
                i,
                k,
                RunOutcome::Failure(RunFailure {
                    kind: FailureKind::Timeout,
                    detail: "per-problem CPU time cap exhausted".into(),
                    partial_trace: None,
                }),
            ));
        }
        let limits = RunLimits {
            budget: settings.budget,
            timeout: settings.timeout,
            cpu_limit: Some(Duration::from_micros(cap_micros - used)),
        };
        let run = sandbox.run_candidate(source, inst, run_seed(inst.id().instance, k), limits)?;
        let total =
            cpu_used.fetch_add(run.cpu_time.as_micros() as u64, Ordering::SeqCst) + run.cpu_time.as_micros() as u64;
        let outcome = if total > cap_micros && !run.outcome.is_failure() {
            RunOutcome::Failure(RunFailure {
                kind: FailureKind::Timeout,
                detail: "per-problem CPU time cap exceeded".into(),
                partial_trace: run.outcome.trace().cloned().map(|mut t| {
                    t.status = RunStatus::Timeout;
                    t
                }),
            })
        } else {
            run.outcome
        };
        Ok((i, k, outcome))
    };
    let results: Vec<(usize, u32, RunOutcome)> = if settings.parallelism > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(settings.parallelism)
            .build()
            .map_err(|e| SandboxError::Io(std::io::Error::other(e)))?;
        pool.install(|| jobs.par_iter().map(run_job).collect::<Result<Vec<_>, _>>())?
    } else {
        jobs.iter().map(run_job).collect::<Result<Vec<_>, _>>()?
    };

    let mut per_instance = Vec::with_capacity(problems.len());
    for (i, inst) in problems.iter().enumerate() {
        let outcomes: Vec<&RunOutcome> = results.iter().filter(|(j, _, _)| *j == i).map(|(_, _, o)| o).collect();
        let failed = outcomes.iter().find(|o| o.is_failure());
        let (auc_value, status) = match failed {
            Some(o) => (0.0, o.status()),
            None => {
                let traces: Vec<RunTrace> = outcomes.iter().filter_map(|o| o.trace().cloned()).collect();
                let report = auc(&traces, &inst.target_set(), &grid)?;
                (report.auc, traces[0].status)
            }
        };
        per_instance.push(InstanceFitness {
            problem: inst.id(),
            auc: auc_value,
            status,
        });
    }
    let runs = results
        .into_iter()
        .map(|(i, k, o)| (problems[i].id().instance, k, o))
        .collect();
    Ok(FitnessEvaluation {
        report: FitnessReport::from_instances(per_instance),
        runs,
    })
}
