//! Normalized AUC tables with competition ranks.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReportError {
    #[error("no results to report")]
    EmptyResults,
    #[error("approach `{approach}` has no result for problem `{problem}`")]
    MissingProblem { approach: String, problem: String },
}

/// Mean AUC per problem for one approach, in problem order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproachResults {
    pub approach: String,
    pub per_problem: Vec<(String, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub auc: f64,
    pub normalized: f64,
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportTable {
    pub approaches: Vec<String>,
    pub problems: Vec<String>,
    /// `cells[p][a]` for problem `p` and approach `a`.
    pub cells: Vec<Vec<Cell>>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub average_rank: Vec<f64>,
}

/// Competition ranks, highest value first: ties share the lowest rank and
/// the following ranks are skipped.
pub fn competition_ranks(values: &[f64]) -> Vec<usize> {
    values
        .iter()
        .map(|v| 1 + values.iter().filter(|w| *w > v).count())
        .collect()
}

pub fn report_table(results: &[ApproachResults]) -> Result<ReportTable, ReportError> {
    let first = results.first().ok_or(ReportError::EmptyResults)?;
    let problems: Vec<String> = first.per_problem.iter().map(|(p, _)| p.clone()).collect();
    if problems.is_empty() {
        return Err(ReportError::EmptyResults);
    }
    let lookup = |a: &ApproachResults, p: &str| {
        a.per_problem
            .iter()
            .find(|(q, _)| q == p)
            .map(|(_, v)| *v)
            .ok_or_else(|| ReportError::MissingProblem {
                approach: a.approach.clone(),
                problem: p.to_string(),
            })
    };
    let mut cells = Vec::with_capacity(problems.len());
    for p in &problems {
        let raw = results.iter().map(|a| lookup(a, p)).collect::<Result<Vec<_>, _>>()?;
        let best = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let ranks = competition_ranks(&raw);
        cells.push(
            raw.iter()
                .zip(ranks)
                .map(|(&auc, rank)| Cell {
                    auc,
                    normalized: if best > 0.0 { auc / best } else { 0.0 },
                    rank,
                })
                .collect::<Vec<_>>(),
        );
    }
    let k = problems.len() as f64;
    let column = |a: usize| cells.iter().map(move |row| row[a]);
    let mean: Vec<f64> = (0..results.len())
        .map(|a| column(a).map(|c| c.normalized).sum::<f64>() / k)
        .collect();
    let std = (0..results.len())
        .map(|a| (column(a).map(|c| (c.normalized - mean[a]).powi(2)).sum::<f64>() / k).sqrt())
        .collect();
    let average_rank = (0..results.len())
        .map(|a| column(a).map(|c| c.rank as f64).sum::<f64>() / k)
        .collect();
    Ok(ReportTable {
        approaches: results.iter().map(|a| a.approach.clone()).collect(),
        problems,
        cells,
        mean,
        std,
        average_rank,
    })
}

impl ReportTable {
    /// One row per problem with `normalized (rank)` cells, then mean, std and average rank.
    pub fn to_csv(&self) -> String {
        let mut out = format!("problem,{}\n", self.approaches.join(","));
        for (p, row) in self.problems.iter().zip(&self.cells) {
            let cells: Vec<String> = row
                .iter()
                .map(|c| format!("{:.3} ({})", c.normalized, c.rank))
                .collect();
            out.push_str(&format!("{p},{}\n", cells.join(",")));
        }
        for (label, vals) in [
            ("mean", &self.mean),
            ("std", &self.std),
            ("average rank", &self.average_rank),
        ] {
            let cells: Vec<String> = vals.iter().map(|v| format!("{v:.3}")).collect();
            out.push_str(&format!("{label},{}\n", cells.join(",")));
        }
        out
    }
}
