//! Aggregation of signed token relevance from an attribution tool.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RelevanceError {
    #[error("relevance matrix is entirely zero")]
    AllZeroMatrix,
    #[error("component `{0}` covers no input tokens")]
    EmptyComponent(String),
    #[error("malformed relevance matrix: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentSpan {
    pub name: String,
    /// Half-open input token range.
    pub start: usize,
    pub end: usize,
}

/// Signed relevance of input token `i` for output token `j` at `values[i][j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelevanceMatrix {
    pub input_tokens: Vec<String>,
    pub output_tokens: Vec<String>,
    pub components: Vec<ComponentSpan>,
    pub values: Vec<Vec<f64>>,
}

impl RelevanceMatrix {
    pub fn validate(&self) -> Result<(), RelevanceError> {
        let bad = |m: String| Err(RelevanceError::Malformed(m));
        if self.values.len() != self.input_tokens.len() {
            return bad(format!(
                "{} rows for {} input tokens",
                self.values.len(),
                self.input_tokens.len()
            ));
        }
        for (i, row) in self.values.iter().enumerate() {
            if row.len() != self.output_tokens.len() {
                return bad(format!(
                    "row {i} has {} values for {} output tokens",
                    row.len(),
                    self.output_tokens.len()
                ));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return bad(format!("row {i} has a non-finite value"));
            }
        }
        let mut next = 0;
        for c in &self.components {
            if c.start != next || c.end < c.start {
                return bad(format!("component `{}` does not continue at token {next}", c.name));
            }
            next = c.end;
        }
        if !self.components.is_empty() && next != self.input_tokens.len() {
            return bad(format!(
                "components cover {next} of {} input tokens",
                self.input_tokens.len()
            ));
        }
        Ok(())
    }

    /// Per-input-token sum over output columns of |R| normalized per column.
    /// All-zero columns contribute nothing.
    pub fn column_normalized_sums(&self) -> Result<Vec<f64>, RelevanceError> {
        self.validate()?;
        let mut sums = vec![0.0; self.input_tokens.len()];
        let mut any = false;
        for j in 0..self.output_tokens.len() {
            let col: f64 = self.values.iter().map(|r| r[j].abs()).sum();
            if col == 0.0 {
                continue;
            }
            any = true;
            for (s, row) in sums.iter_mut().zip(&self.values) {
                *s += row[j].abs() / col;
            }
        }
        if any {
            Ok(sums)
        } else {
            Err(RelevanceError::AllZeroMatrix)
        }
    }

    /// Parses the JSON form: an object with the struct's fields.
    pub fn from_json(text: &str) -> Result<Self, RelevanceError> {
        let m: Self = serde_json::from_str(text).map_err(|e| RelevanceError::Malformed(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    /// Parses the CSV form: header `token,component,<out_0>,...`, then one row
    /// per input token. Consecutive rows sharing a component form its span.
    pub fn from_csv(text: &str) -> Result<Self, RelevanceError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| RelevanceError::Malformed("empty CSV".into()))?;
        let head: Vec<&str> = header.split(',').collect();
        if head.len() < 2 || head[0].trim() != "token" || head[1].trim() != "component" {
            return Err(RelevanceError::Malformed(
                "header must start with `token,component`".into(),
            ));
        }
        let output_tokens = head[2..].iter().map(|s| s.trim().to_string()).collect::<Vec<_>>();
        let mut m = RelevanceMatrix {
            input_tokens: Vec::new(),
            output_tokens,
            components: Vec::new(),
            values: Vec::new(),
        };
        for (n, line) in lines.enumerate() {
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != head.len() {
                return Err(RelevanceError::Malformed(format!(
                    "row {} has {} cells",
                    n + 1,
                    cells.len()
                )));
            }
            let row = cells[2..]
                .iter()
                .map(|c| c.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| RelevanceError::Malformed(format!("row {}: {e}", n + 1)))?;
            let comp = cells[1].trim();
            let i = m.input_tokens.len();
            match m.components.last_mut() {
                Some(c) if c.name == comp => c.end = i + 1,
                _ => m.components.push(ComponentSpan {
                    name: comp.to_string(),
                    start: i,
                    end: i + 1,
                }),
            }
            m.input_tokens.push(cells[0].to_string());
            m.values.push(row);
        }
        m.validate()?;
        Ok(m)
    }
}

/// Per-input-token relevance scaled so the largest is exactly 1.
pub fn aggregate_relevance(m: &RelevanceMatrix) -> Result<Vec<f64>, RelevanceError> {
    let sums = m.column_normalized_sums()?;
    let max = sums.iter().cloned().fold(0.0, f64::max);
    Ok(sums.iter().map(|s| s / max).collect())
}

/// Mean of the column-normalized token sums within each component.
pub fn component_relevance(m: &RelevanceMatrix) -> Result<Vec<(String, f64)>, RelevanceError> {
    let sums = m.column_normalized_sums()?;
    m.components
        .iter()
        .map(|c| {
            if c.end == c.start {
                return Err(RelevanceError::EmptyComponent(c.name.clone()));
            }
            let mean = sums[c.start..c.end].iter().sum::<f64>() / (c.end - c.start) as f64;
            Ok((c.name.clone(), mean))
        })
        .collect()
}
