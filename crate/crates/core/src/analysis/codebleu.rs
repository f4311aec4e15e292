//! CodeBLEU: weighted sum of n-gram match, keyword-weighted n-gram match,
//! syntax-subtree match and dataflow match.

use std::collections::HashMap;
use std::hash::Hash;
use std::io::Write;
use std::process::{Command, Stdio};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CodeBleuError {
    #[error("grammar frontend unavailable: {0}")]
    FrontendUnavailable(String),
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("need at least two codes, got {0}")]
    TooFewCodes(usize),
}

/// Python keywords; these receive the keyword weight in the weighted match.
pub const KEYWORDS: &[&str] = &[
    "False", "None", "True", "and", "as", "assert", "async", "await", "break", "class", "continue", "def", "del",
    "elif", "else", "except", "finally", "for", "from", "global", "if", "import", "in", "is", "lambda", "nonlocal",
    "not", "or", "pass", "raise", "return", "try", "while", "with", "yield",
];

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TokenSeq {
    pub tokens: Vec<String>,
    pub keyword_flags: Vec<bool>,
}

impl TokenSeq {
    pub fn from_tokens<S: Into<String>>(tokens: impl IntoIterator<Item = S>) -> Self {
        let tokens: Vec<String> = tokens.into_iter().map(Into::into).collect();
        let keyword_flags = tokens.iter().map(|t| KEYWORDS.contains(&t.as_str())).collect();
        Self { tokens, keyword_flags }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn weights(&self, keyword_weight: f64) -> Vec<f64> {
        self.keyword_flags
            .iter()
            .map(|&k| if k { keyword_weight } else { 1.0 })
            .collect()
    }
}

const OPERATORS: &[&str] = &[
    "**=", "//=", ">>=", "<<=", "...", "->", ":=", "**", "//", "<<", ">>", "<=", ">=", "==", "!=", "+=", "-=", "*=",
    "/=", "%=", "&=", "|=", "^=", "@=",
];

/// Lexes Python source into tokens, skipping comments, whitespace and line structure.
pub fn tokenize(source: &str) -> TokenSeq {
    let chars: Vec<char> = source.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() || c == '\\' {
            i += 1;
        } else if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
        } else if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            let word: String = chars[start..i].iter().collect();
            let is_prefix = word.len() <= 3 && word.chars().all(|ch| "rRbBuUfF".contains(ch));
            if is_prefix && i < chars.len() && (chars[i] == '"' || chars[i] == '\'') {
                let end = string_end(&chars, i);
                tokens.push(chars[start..end].iter().collect());
                i = end;
            } else {
                tokens.push(word);
            }
        } else if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let start = i;
            while i < chars.len() {
                let ch = chars[i];
                let exp_sign = (ch == '+' || ch == '-')
                    && matches!(chars[i - 1], 'e' | 'E')
                    && !chars[start..i].iter().any(|x| matches!(x, 'x' | 'X'));
                if ch.is_alphanumeric() || ch == '.' || ch == '_' || exp_sign {
                    i += 1;
                } else {
                    break;
                }
            }
            tokens.push(chars[start..i].iter().collect());
        } else if c == '"' || c == '\'' {
            let end = string_end(&chars, i);
            tokens.push(chars[i..end].iter().collect());
            i = end;
        } else {
            let rest: String = chars[i..chars.len().min(i + 3)].iter().collect();
            let op = OPERATORS.iter().find(|op| rest.starts_with(**op));
            let len = op.map_or(1, |op| op.chars().count());
            tokens.push(chars[i..i + len].iter().collect());
            i += len;
        }
    }
    TokenSeq::from_tokens(tokens)
}

/// Index one past the string literal whose opening quote is at `open`.
fn string_end(chars: &[char], open: usize) -> usize {
    let q = chars[open];
    let triple = chars.get(open + 1) == Some(&q) && chars.get(open + 2) == Some(&q);
    let mut i = open + if triple { 3 } else { 1 };
    while i < chars.len() {
        if chars[i] == '\\' {
            i += 2;
            continue;
        }
        if triple {
            if chars[i] == q && chars.get(i + 1) == Some(&q) && chars.get(i + 2) == Some(&q) {
                return i + 3;
            }
        } else if chars[i] == q || chars[i] == '\n' {
            return i + 1;
        }
        i += 1;
    }
    chars.len()
}

fn counts<T: Eq + Hash>(items: impl IntoIterator<Item = T>) -> HashMap<T, usize> {
    let mut m = HashMap::new();
    for it in items {
        *m.entry(it).or_insert(0) += 1;
    }
    m
}

/// Clipped n-gram precision of `candidate` against `reference`.
///
/// With `weights` (one per candidate token) each n-gram counts with the mean
/// weight of its tokens. Returns 0 when the candidate has no n-grams.
pub fn ngram_precision(candidate: &TokenSeq, reference: &TokenSeq, n: usize, weights: Option<&[f64]>) -> f64 {
    assert!(n >= 1, "n-gram order must be positive");
    if candidate.len() < n {
        return 0.0;
    }
    let ref_counts = counts(reference.tokens.windows(n));
    let mut cand_grams: HashMap<&[String], (usize, f64)> = HashMap::new();
    for (start, gram) in candidate.tokens.windows(n).enumerate() {
        let w = weights.map_or(1.0, |w| w[start..start + n].iter().sum::<f64>() / n as f64);
        let e = cand_grams.entry(gram).or_insert((0, w));
        e.0 += 1;
    }
    let (mut matched, mut total) = (0.0, 0.0);
    for (gram, (count, w)) in cand_grams {
        let clip = count.min(ref_counts.get(gram).copied().unwrap_or(0));
        matched += w * clip as f64;
        total += w * count as f64;
    }
    if total == 0.0 {
        0.0
    } else {
        matched / total
    }
}

pub fn brevity_penalty(candidate_len: usize, reference_len: usize) -> f64 {
    if candidate_len == 0 {
        0.0
    } else if candidate_len >= reference_len {
        1.0
    } else {
        (1.0 - reference_len as f64 / candidate_len as f64).exp()
    }
}

/// BP times the geometric mean of p_1..p_N with uniform weights, where N is
/// `max_n` capped by both sequence lengths.
pub fn bleu(candidate: &TokenSeq, reference: &TokenSeq, max_n: usize, weights: Option<&[f64]>) -> f64 {
    let orders = max_n.min(candidate.len()).min(reference.len());
    if orders == 0 {
        return if candidate.is_empty() && reference.is_empty() {
            1.0
        } else {
            0.0
        };
    }
    let eta = 1.0 / orders as f64;
    let mut log_sum = 0.0;
    for n in 1..=orders {
        let p = ngram_precision(candidate, reference, n, weights);
        if p == 0.0 {
            return 0.0;
        }
        log_sum += eta * p.ln();
    }
    brevity_penalty(candidate.len(), reference.len()) * log_sum.exp()
}

/// Clipped multiset overlap normalized by the reference size; 1 when both are empty.
pub fn multiset_match<T: AsRef<str>>(candidate: &[T], reference: &[T]) -> f64 {
    if reference.is_empty() {
        return if candidate.is_empty() { 1.0 } else { 0.0 };
    }
    let c = counts(candidate.iter().map(AsRef::as_ref));
    let r = counts(reference.iter().map(AsRef::as_ref));
    let matched: usize = r.iter().map(|(k, &n)| n.min(c.get(k).copied().unwrap_or(0))).sum();
    matched as f64 / reference.len() as f64
}

/// Syntax subtrees and normalized dataflow items of one parsed source.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ParseArtifacts {
    pub subtrees: Vec<String>,
    pub dataflow: Vec<String>,
}

/// Produces parse artifacts for many sources at once. `None` marks a source
/// that failed to parse.
pub trait Frontend: Sync {
    fn parse_many(&self, sources: &[&str]) -> Result<Vec<Option<ParseArtifacts>>, CodeBleuError>;
}

/// Runs the bundled `ast`-based script under a Python interpreter.
#[derive(Debug, Clone)]
pub struct PythonAstFrontend {
    pub interpreter: String,
}

impl Default for PythonAstFrontend {
    fn default() -> Self {
        Self {
            interpreter: "python3".into(),
        }
    }
}

const FRONTEND_SCRIPT: &str = include_str!("../../assets/frontend/python_ast.py");

#[derive(Deserialize)]
#[serde(untagged)]
enum FrontendReply {
    Ok(ParseArtifacts),
    Err { error: String },
}

impl Frontend for PythonAstFrontend {
    fn parse_many(&self, sources: &[&str]) -> Result<Vec<Option<ParseArtifacts>>, CodeBleuError> {
        let unavailable = |e: String| CodeBleuError::FrontendUnavailable(e);
        let mut child = Command::new(&self.interpreter)
            .args(["-c", FRONTEND_SCRIPT])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| unavailable(format!("{}: {e}", self.interpreter)))?;
        let input = serde_json::to_vec(sources).expect("strings serialize");
        let mut stdin = child.stdin.take().expect("piped");
        let writer = std::thread::spawn(move || stdin.write_all(&input));
        let out = child.wait_with_output().map_err(|e| unavailable(e.to_string()))?;
        let _ = writer.join();
        if !out.status.success() {
            return Err(unavailable(String::from_utf8_lossy(&out.stderr).trim().to_string()));
        }
        let replies: Vec<FrontendReply> =
            serde_json::from_slice(&out.stdout).map_err(|e| unavailable(format!("bad frontend output: {e}")))?;
        if replies.len() != sources.len() {
            return Err(unavailable("frontend answered a different number of sources".into()));
        }
        Ok(replies
            .into_iter()
            .map(|r| match r {
                FrontendReply::Ok(a) => Some(a),
                FrontendReply::Err { error } => {
                    log::debug!("frontend parse failure: {error}");
                    None
                }
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodeBleuSettings {
    /// Weights of (n-gram, weighted n-gram, syntax, dataflow).
    pub lambdas: [f64; 4],
    pub max_n: usize,
    pub keyword_weight: f64,
}

impl Default for CodeBleuSettings {
    fn default() -> Self {
        Self {
            lambdas: [0.25; 4],
            max_n: 4,
            keyword_weight: 5.0,
        }
    }
}

impl CodeBleuSettings {
    pub fn validate(&self) -> Result<(), CodeBleuError> {
        if self.lambdas.iter().any(|l| !l.is_finite() || *l < 0.0) {
            return Err(CodeBleuError::InvalidWeights("lambdas must be non-negative".into()));
        }
        if (self.lambdas.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(CodeBleuError::InvalidWeights("lambdas must sum to 1".into()));
        }
        if self.max_n == 0 {
            return Err(CodeBleuError::InvalidWeights("max_n must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodeBleuScore {
    pub total: f64,
    pub bleu: f64,
    pub weighted_bleu: f64,
    /// `None` when the syntax component was dropped.
    pub ast: Option<f64>,
    pub dataflow: Option<f64>,
    /// Effective weights after any renormalization.
    pub lambdas: [f64; 4],
    pub brevity_penalty: f64,
    pub warning: Option<String>,
}

/// Prepared form of a source: tokens plus optional parse artifacts.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedCode {
    pub tokens: TokenSeq,
    pub artifacts: Option<ParseArtifacts>,
}

pub fn prepare_all(sources: &[&str], frontend: Option<&dyn Frontend>) -> (Vec<PreparedCode>, Option<String>) {
    let (artifacts, warning) = match frontend.map(|f| f.parse_many(sources)) {
        Some(Ok(a)) => (a, None),
        Some(Err(e)) => (vec![None; sources.len()], Some(e.to_string())),
        None => (
            vec![None; sources.len()],
            Some("no grammar frontend configured".to_string()),
        ),
    };
    let prepared = sources
        .iter()
        .zip(artifacts)
        .map(|(s, artifacts)| PreparedCode {
            tokens: tokenize(s),
            artifacts,
        })
        .collect();
    (prepared, warning)
}

pub fn score_prepared(
    candidate: &PreparedCode,
    reference: &PreparedCode,
    settings: &CodeBleuSettings,
    frontend_warning: Option<&str>,
) -> CodeBleuScore {
    let (c, r) = (&candidate.tokens, &reference.tokens);
    let b = bleu(c, r, settings.max_n, None);
    let w = c.weights(settings.keyword_weight);
    let bw = bleu(c, r, settings.max_n, Some(&w));
    let (ast, df, warning) = match (&candidate.artifacts, &reference.artifacts) {
        (Some(ca), Some(ra)) => (
            Some(multiset_match(&ca.subtrees, &ra.subtrees)),
            Some(multiset_match(&ca.dataflow, &ra.dataflow)),
            None,
        ),
        _ => (
            None,
            None,
            Some(frontend_warning.unwrap_or("source failed to parse").to_string() + "; syntax and dataflow dropped"),
        ),
    };
    let mut lambdas = settings.lambdas;
    if ast.is_none() {
        lambdas[2] = 0.0;
        lambdas[3] = 0.0;
        let s = lambdas[0] + lambdas[1];
        if s > 0.0 {
            lambdas[0] /= s;
            lambdas[1] /= s;
        }
    }
    let total = lambdas[0] * b + lambdas[1] * bw + lambdas[2] * ast.unwrap_or(0.0) + lambdas[3] * df.unwrap_or(0.0);
    CodeBleuScore {
        total,
        bleu: b,
        weighted_bleu: bw,
        ast,
        dataflow: df,
        lambdas,
        brevity_penalty: brevity_penalty(c.len(), r.len()),
        warning,
    }
}

pub fn codebleu(
    candidate: &str,
    reference: &str,
    settings: &CodeBleuSettings,
    frontend: Option<&dyn Frontend>,
) -> Result<CodeBleuScore, CodeBleuError> {
    settings.validate()?;
    let (p, warning) = prepare_all(&[candidate, reference], frontend);
    Ok(score_prepared(&p[0], &p[1], settings, warning.as_deref()))
}

/// Upper-triangular similarity: cell (i, j), j > i, scores code j against reference code i.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    pub n: usize,
    /// Row-major `(i, j, score)` for every j > i.
    pub cells: Vec<(usize, usize, f64)>,
}

impl SimilarityMatrix {
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        if j <= i || j >= self.n {
            return None;
        }
        // row i starts after sum_{k<i} (n-1-k) cells
        let offset = i * (2 * self.n - i - 1) / 2 + (j - i - 1);
        Some(self.cells[offset].2)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("i");
        for j in 0..self.n {
            out.push_str(&format!(",{j}"));
        }
        out.push('\n');
        for i in 0..self.n {
            out.push_str(&i.to_string());
            for j in 0..self.n {
                out.push(',');
                if let Some(v) = self.get(i, j) {
                    out.push_str(&format!("{v}"));
                }
            }
            out.push('\n');
        }
        out
    }
}

pub fn similarity_matrix(
    codes: &[&str],
    settings: &CodeBleuSettings,
    frontend: Option<&dyn Frontend>,
) -> Result<SimilarityMatrix, CodeBleuError> {
    settings.validate()?;
    if codes.len() < 2 {
        return Err(CodeBleuError::TooFewCodes(codes.len()));
    }
    let (prepared, warning) = prepare_all(codes, frontend);
    if let Some(w) = &warning {
        log::warn!("{w}");
    }
    let n = codes.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let cells = pairs
        .par_iter()
        .map(|&(i, j)| {
            (
                i,
                j,
                score_prepared(&prepared[j], &prepared[i], settings, warning.as_deref()).total,
            )
        })
        .collect();
    Ok(SimilarityMatrix { n, cells })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(s: &str) -> TokenSeq {
        TokenSeq::from_tokens(s.split_whitespace())
    }

    #[test]
    fn precision_examples() {
        assert!((ngram_precision(&seq("a b a"), &seq("a b"), 1, None) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(ngram_precision(&seq("a b c"), &seq("a b c"), 3, None), 1.0);
        assert_eq!(ngram_precision(&seq("a b"), &seq("c d"), 1, None), 0.0);
        assert_eq!(ngram_precision(&seq("a"), &seq("a"), 2, None), 0.0);
    }

    #[test]
    fn weighted_precision_favours_keywords() {
        // "if" matches, "x" does not: weights 5 and 1
        let w = seq("if x").weights(5.0);
        assert!((ngram_precision(&seq("if x"), &seq("if y"), 1, Some(&w)) - 5.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn brevity_penalty_on_short_candidate() {
        let b = bleu(&seq("a b"), &seq("a b c d"), 4, None);
        assert!((b - (-1.0f64).exp()).abs() < 1e-15);
        assert_eq!(brevity_penalty(4, 4), 1.0);
    }

    #[test]
    fn tokenizer_handles_python_lexemes() {
        let t = tokenize("def f(x):  # comment\n    return x**2 + 1.5e-3 if x else 'a#b'\n");
        assert_eq!(
            t.tokens,
            ["def", "f", "(", "x", ")", ":", "return", "x", "**", "2", "+", "1.5e-3", "if", "x", "else", "'a#b'"]
        );
        assert!(t.keyword_flags[0] && !t.keyword_flags[1]);
        assert_eq!(
            tokenize("s = f\"{x}\" + '''a\nb'''").tokens,
            ["s", "=", "f\"{x}\"", "+", "'''a\nb'''"]
        );
    }

    #[test]
    fn multiset_match_conventions() {
        let a = ["x", "x", "y"];
        assert!((multiset_match(&a[..1], &a) - 1.0 / 3.0).abs() < 1e-15);
        let empty: [&str; 0] = [];
        assert_eq!(multiset_match(&empty, &empty), 1.0);
        assert_eq!(multiset_match(&a, &empty), 0.0);
    }

    #[test]
    fn lambda_one_reduces_to_bleu() {
        let s = CodeBleuSettings {
            lambdas: [1.0, 0.0, 0.0, 0.0],
            ..Default::default()
        };
        let (c, r) = ("x = a + b + c", "x = a + b + d");
        let score = codebleu(c, r, &s, None).unwrap();
        let expected = bleu(&tokenize(c), &tokenize(r), 4, None);
        assert!((score.total - expected).abs() < 1e-15);
        assert!(score.warning.is_some());
    }

    #[test]
    fn matrix_indexing() {
        let m = SimilarityMatrix {
            n: 4,
            cells: vec![
                (0, 1, 1.0),
                (0, 2, 2.0),
                (0, 3, 3.0),
                (1, 2, 4.0),
                (1, 3, 5.0),
                (2, 3, 6.0),
            ],
        };
        assert_eq!(m.get(1, 3), Some(5.0));
        assert_eq!(m.get(2, 3), Some(6.0));
        assert_eq!(m.get(3, 3), None);
        assert_eq!(m.get(2, 1), None);
    }
}
