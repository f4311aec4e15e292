//! Budgeted, monitored evaluation and the anytime ECDF/AUC measure.
//!
//! A run is summarised by its best-so-far breakpoints. The ECDF at time `t`
//! is the fraction of targets attained by the best-so-far value within the
//! first `t` evaluations, averaged over runs; the AUC is the mean ECDF over
//! a grid of evaluation counts.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::problems::{Orientation, ProblemError, ProblemId, ProblemInstance, TargetSet};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("target set is empty")]
    EmptyTargets,
    #[error("no traces given")]
    EmptyTraces,
    #[error("evaluation budget exhausted")]
    BudgetExhausted,
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error("malformed trace file: {0}")]
    TraceFormat(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    BudgetExhausted,
    TargetHit,
    /// The candidate returned on its own before using the whole budget.
    Completed,
    Crashed,
    Timeout,
    ProtocolViolation,
}

impl RunStatus {
    pub fn is_failure(self) -> bool {
        matches!(
            self,
            RunStatus::Crashed | RunStatus::Timeout | RunStatus::ProtocolViolation
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub evals: u64,
    pub best_y: f64,
}

/// Best-so-far trajectory of one run, stored as improvement breakpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub problem: ProblemId,
    pub run_seed: u64,
    pub budget: u64,
    pub orientation: Orientation,
    pub points: Vec<TracePoint>,
    pub total_evals: u64,
    pub status: RunStatus,
}

impl RunTrace {
    pub fn empty(problem: ProblemId, run_seed: u64, budget: u64, status: RunStatus) -> Self {
        Self {
            problem,
            run_seed,
            budget,
            orientation: problem.suite.orientation(),
            points: Vec::new(),
            total_evals: 0,
            status,
        }
    }

    /// Best-so-far value after the first `t` evaluations.
    pub fn best_at(&self, t: u64) -> Option<f64> {
        let idx = self.points.partition_point(|p| p.evals <= t);
        idx.checked_sub(1).map(|i| self.points[i].best_y)
    }

    pub fn best(&self) -> Option<f64> {
        self.points.last().map(|p| p.best_y)
    }

    /// Checks breakpoint ordering and the budget bound.
    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |m: &str| Err(EvalError::TraceFormat(m.to_string()));
        if self.total_evals > self.budget {
            return bad("total_evals exceeds budget");
        }
        for w in self.points.windows(2) {
            if w[1].evals <= w[0].evals {
                return bad("evaluation counts not strictly increasing");
            }
            if !self.orientation.improves(w[1].best_y, w[0].best_y) {
                return bad("best-so-far values not strictly improving");
            }
        }
        if let Some(first) = self.points.first() {
            if first.evals == 0 {
                return bad("evaluation counts start at 1");
            }
        }
        if let Some(last) = self.points.last() {
            if last.evals > self.total_evals {
                return bad("breakpoint beyond total_evals");
            }
        }
        Ok(())
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<(), EvalError> {
        let header = TraceLine::Header {
            problem: self.problem,
            seed: self.run_seed,
            budget: self.budget,
        };
        writeln!(w, "{}", to_json(&header))?;
        for p in &self.points {
            writeln!(w, "{}", to_json(&TraceLine::Point(*p)))?;
        }
        let footer = TraceLine::Footer {
            status: self.status,
            total_evals: self.total_evals,
        };
        writeln!(w, "{}", to_json(&footer))?;
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self, EvalError> {
        let mut header = None;
        let mut footer = None;
        let mut points = Vec::new();
        for (n, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: TraceLine =
                serde_json::from_str(&line).map_err(|e| EvalError::TraceFormat(format!("line {}: {e}", n + 1)))?;
            if footer.is_some() {
                return Err(EvalError::TraceFormat("content after footer".into()));
            }
            match parsed {
                TraceLine::Header { .. } if header.is_some() || !points.is_empty() => {
                    return Err(EvalError::TraceFormat("header must come first".into()))
                }
                TraceLine::Header { problem, seed, budget } => header = Some((problem, seed, budget)),
                TraceLine::Point(_) if header.is_none() => return Err(EvalError::TraceFormat("missing header".into())),
                TraceLine::Point(p) => points.push(p),
                TraceLine::Footer { status, total_evals } => footer = Some((status, total_evals)),
            }
        }
        let (problem, run_seed, budget) = header.ok_or_else(|| EvalError::TraceFormat("missing header".into()))?;
        let (status, total_evals) = footer.ok_or_else(|| EvalError::TraceFormat("missing footer".into()))?;
        let trace = Self {
            problem,
            run_seed,
            budget,
            orientation: problem.suite.orientation(),
            points,
            total_evals,
            status,
        };
        trace.validate()?;
        Ok(trace)
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("trace lines serialize")
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum TraceLine {
    Header { problem: ProblemId, seed: u64, budget: u64 },
    Point(TracePoint),
    Footer { status: RunStatus, total_evals: u64 },
}

/// Result of one monitored evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub y: f64,
    pub evals: u64,
    pub target_hit: bool,
}

/// Budget-enforcing wrapper around a problem instance that records the
/// best-so-far trace. Single owner; not meant to be shared across threads.
#[derive(Debug)]
pub struct Monitor<'a> {
    instance: &'a ProblemInstance,
    budget: u64,
    run_seed: u64,
    evals: u64,
    points: Vec<TracePoint>,
    target_hit: bool,
}

impl<'a> Monitor<'a> {
    pub fn new(instance: &'a ProblemInstance, budget: u64, run_seed: u64) -> Result<Self, EvalError> {
        if budget == 0 {
            return Err(EvalError::InvalidArgument("budget must be at least 1".into()));
        }
        Ok(Self {
            instance,
            budget,
            run_seed,
            evals: 0,
            points: Vec::new(),
            target_hit: false,
        })
    }

    pub fn instance(&self) -> &ProblemInstance {
        self.instance
    }

    pub fn budget(&self) -> u64 {
        self.budget
    }

    pub fn evaluations(&self) -> u64 {
        self.evals
    }

    pub fn remaining(&self) -> u64 {
        self.budget - self.evals
    }

    pub fn target_hit(&self) -> bool {
        self.target_hit
    }

    pub fn best(&self) -> Option<f64> {
        self.points.last().map(|p| p.best_y)
    }

    pub fn evaluate(&mut self, x: &[f64]) -> Result<Evaluation, EvalError> {
        if self.evals >= self.budget {
            return Err(EvalError::BudgetExhausted);
        }
        let y = self.instance.evaluate(x)?;
        self.evals += 1;
        let orientation = self.instance.orientation();
        let improved = match self.best() {
            None => true,
            Some(best) => orientation.improves(y, best),
        };
        if improved {
            self.points.push(TracePoint {
                evals: self.evals,
                best_y: y,
            });
        }
        if orientation.reaches(y, self.instance.y_opt()) {
            self.target_hit = true;
        }
        Ok(Evaluation {
            y,
            evals: self.evals,
            target_hit: self.target_hit,
        })
    }

    /// Closes the run. Without an explicit status the outcome is inferred.
    pub fn finish(self, status: Option<RunStatus>) -> RunTrace {
        let status = status.unwrap_or(if self.target_hit {
            RunStatus::TargetHit
        } else if self.evals >= self.budget {
            RunStatus::BudgetExhausted
        } else {
            RunStatus::Completed
        });
        RunTrace {
            problem: self.instance.id(),
            run_seed: self.run_seed,
            budget: self.budget,
            orientation: self.instance.orientation(),
            points: self.points,
            total_evals: self.evals,
            status,
        }
    }
}

/// Strictly increasing evaluation counts in `[1, budget]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeGrid {
    points: Vec<u64>,
}

impl TimeGrid {
    pub fn new(mut points: Vec<u64>) -> Result<Self, EvalError> {
        points.sort_unstable();
        points.dedup();
        if points.is_empty() || points[0] == 0 {
            return Err(EvalError::InvalidArgument(
                "time grid must be non-empty with points >= 1".into(),
            ));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[u64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn last(&self) -> u64 {
        *self.points.last().expect("grid is non-empty")
    }
}

/// Geometric grid from 1 to `budget` with `count` samples, rounded and
/// deduplicated.
pub fn log_time_grid(budget: u64, count: usize) -> Result<TimeGrid, EvalError> {
    if budget == 0 {
        return Err(EvalError::InvalidArgument("budget must be at least 1".into()));
    }
    if count < 2 {
        return Err(EvalError::InvalidArgument("grid needs at least 2 samples".into()));
    }
    let log_b = (budget as f64).ln();
    let mut points: Vec<u64> = (0..count)
        .map(|k| {
            let t = (log_b * k as f64 / (count - 1) as f64).exp().round() as u64;
            t.clamp(1, budget)
        })
        .collect();
    points[0] = 1;
    points[count - 1] = budget;
    TimeGrid::new(points)
}

fn check_inputs(traces: &[RunTrace], targets: &TargetSet) -> Result<(), EvalError> {
    if traces.is_empty() {
        return Err(EvalError::EmptyTraces);
    }
    if targets.is_empty() {
        return Err(EvalError::EmptyTargets);
    }
    if traces.iter().any(|t| t.orientation != targets.orientation) {
        return Err(EvalError::InvalidArgument(
            "trace and target orientations differ".into(),
        ));
    }
    Ok(())
}

fn reached_fraction(trace: &RunTrace, targets: &TargetSet, t: u64) -> f64 {
    match trace.best_at(t) {
        Some(best) => targets.count_reached(best) as f64 / targets.len() as f64,
        None => 0.0,
    }
}

/// Mean over runs of the fraction of targets attained by time `t`.
pub fn ecdf_value(traces: &[RunTrace], targets: &TargetSet, t: u64) -> Result<f64, EvalError> {
    check_inputs(traces, targets)?;
    let sum: f64 = traces.iter().map(|tr| reached_fraction(tr, targets, t)).sum();
    Ok(sum / traces.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AucReport {
    pub auc: f64,
    pub per_time_ecdf: Vec<f64>,
    pub runs: usize,
}

/// Area under the ECDF curve, normalised by the grid size.
pub fn auc(traces: &[RunTrace], targets: &TargetSet, grid: &TimeGrid) -> Result<AucReport, EvalError> {
    check_inputs(traces, targets)?;
    let per_time_ecdf: Vec<f64> = grid
        .points()
        .iter()
        .map(|&t| {
            let s: f64 = traces.iter().map(|tr| reached_fraction(tr, targets, t)).sum();
            s / traces.len() as f64
        })
        .collect();
    let auc = per_time_ecdf.iter().sum::<f64>() / per_time_ecdf.len() as f64;
    Ok(AucReport {
        auc,
        per_time_ecdf,
        runs: traces.len(),
    })
}
