//! Prompt rendering for each search action and parsing of LLM responses.
//!
//! Templates are plain text assets. The built-in set is compiled in; a
//! directory with the same file names can override any subset of them.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sandbox::CandidateSource;
use crate::search::Action;

#[derive(Debug, Error, PartialEq)]
pub enum PromptError {
    #[error("action {0:?} needs a parent algorithm but none was given")]
    MissingParent(Action),
    #[error("cannot read template `{name}`: {reason}")]
    Template { name: String, reason: String },
}

#[derive(Debug, Error, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParseError {
    #[error("response has no `# Description:` line")]
    NoDescription,
    #[error("response has no fenced code block")]
    NoCodeBlock,
    #[error("fenced code block is empty")]
    EmptyCode,
    #[error("code defines no class to instantiate")]
    NoEntryPoint,
}

/// Which task description the prompt carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    PboTask,
    BbobTask,
}

impl From<crate::problems::Suite> for TaskKind {
    fn from(s: crate::problems::Suite) -> Self {
        match s {
            crate::problems::Suite::Pbo => TaskKind::PboTask,
            crate::problems::Suite::Bbob => TaskKind::BbobTask,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationEntry {
    pub name: String,
    pub description: String,
    pub score: f64,
}

/// The algorithm whose code is shown in the prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParentCode {
    pub description: String,
    pub score: f64,
    pub source_text: String,
}

/// Everything `render` needs. With an empty population the code is shown as
/// an example (initial and benchmark-injection prompts); otherwise the parent
/// block with the population listing precedes it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptContext {
    pub task: TaskKind,
    pub population: Vec<PopulationEntry>,
    pub parent: Option<ParentCode>,
    pub action: Action,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateSet {
    pub role: String,
    pub task_pbo: String,
    pub task_bbob: String,
    pub parent_block: String,
    pub reference_code: String,
    pub code_block: String,
    pub strategy_refine: String,
    pub strategy_create: String,
    pub strategy_refine_bench: String,
    pub expected_output: String,
}

macro_rules! asset {
    ($name:literal) => {
        include_str!(concat!("../assets/templates/", $name, ".txt"))
    };
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self {
            role: asset!("role").into(),
            task_pbo: asset!("task_pbo").into(),
            task_bbob: asset!("task_bbob").into(),
            parent_block: asset!("parent_block").into(),
            reference_code: asset!("reference_code").into(),
            code_block: asset!("code_block").into(),
            strategy_refine: asset!("strategy_refine").into(),
            strategy_create: asset!("strategy_create").into(),
            strategy_refine_bench: asset!("strategy_refine_bench").into(),
            expected_output: asset!("expected_output").into(),
        }
    }
}

impl TemplateSet {
    /// Built-in templates with any `<name>.txt` found in `dir` taking precedence.
    pub fn with_overrides(dir: &Path) -> Result<Self, PromptError> {
        let mut set = Self::default();
        let slots: [(&str, &mut String); 10] = [
            ("role", &mut set.role),
            ("task_pbo", &mut set.task_pbo),
            ("task_bbob", &mut set.task_bbob),
            ("parent_block", &mut set.parent_block),
            ("reference_code", &mut set.reference_code),
            ("code_block", &mut set.code_block),
            ("strategy_refine", &mut set.strategy_refine),
            ("strategy_create", &mut set.strategy_create),
            ("strategy_refine_bench", &mut set.strategy_refine_bench),
            ("expected_output", &mut set.expected_output),
        ];
        for (name, slot) in slots {
            let path = dir.join(format!("{name}.txt"));
            if path.exists() {
                *slot = std::fs::read_to_string(&path).map_err(|e| PromptError::Template {
                    name: name.into(),
                    reason: e.to_string(),
                })?;
            }
        }
        Ok(set)
    }

    pub fn render(&self, ctx: &PromptContext) -> Result<String, PromptError> {
        let parent = ctx.parent.as_ref().ok_or(PromptError::MissingParent(ctx.action))?;
        let code_block = fill(self.code_block.trim_end(), &[("code", &parent.source_text)]);
        let as_example = ctx.population.is_empty();

        let mut sections: Vec<String> = vec![
            self.role.trim_end().to_string(),
            match ctx.task {
                TaskKind::PboTask => self.task_pbo.trim_end().to_string(),
                TaskKind::BbobTask => self.task_bbob.trim_end().to_string(),
            },
        ];
        if as_example {
            sections.push(fill(self.reference_code.trim_end(), &[("code_block", &code_block)]));
        } else {
            let listing = ctx
                .population
                .iter()
                .map(|p| format!("{}: {} (Score: {})", p.name, p.description, format_score(p.score)))
                .collect::<Vec<_>>()
                .join("\n");
            sections.push(fill(
                self.parent_block.trim_end(),
                &[
                    ("population", &listing),
                    ("description", &parent.description),
                    ("code_block", &code_block),
                ],
            ));
        }
        let strategy = match ctx.action {
            Action::RefineBench { .. } => &self.strategy_refine_bench,
            Action::RefineBest if as_example => &self.strategy_refine_bench,
            Action::RefineBest => &self.strategy_refine,
            Action::Create => &self.strategy_create,
        };
        sections.push(strategy.trim_end().to_string());
        sections.push(self.expected_output.trim_end().to_string());
        Ok(sections.join("\n\n") + "\n")
    }
}

pub fn format_score(score: f64) -> String {
    format!("{score:.4}")
}

/// Single-pass `{key}` substitution; inserted values are never re-scanned.
fn fill(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let hit = after.find('}').and_then(|close| {
            let key = &after[..close];
            vars.iter().find(|(k, _)| *k == key).map(|(_, v)| (close, *v))
        });
        match hit {
            Some((close, value)) => {
                out.push_str(value);
                rest = &after[close + 1..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

/// Renders with the built-in templates.
pub fn render(ctx: &PromptContext) -> Result<String, PromptError> {
    TemplateSet::default().render(ctx)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedResponse {
    pub description: String,
    pub code: CandidateSource,
}

/// Extracts the first `# Description:` line and the first fenced code block.
pub fn parse_response(text: &str, language_tag: &str) -> Result<ParsedResponse, ParseError> {
    let description = text
        .lines()
        .find_map(|l| l.trim_start().strip_prefix("# Description:"))
        .map(str::trim)
        .filter(|d| !d.is_empty())
        .ok_or(ParseError::NoDescription)?
        .to_string();
    let code = first_fenced_block(text).ok_or(ParseError::NoCodeBlock)?;
    if code.trim().is_empty() {
        return Err(ParseError::EmptyCode);
    }
    let entry_name = first_class_name(code).ok_or(ParseError::NoEntryPoint)?;
    Ok(ParsedResponse {
        description,
        code: CandidateSource {
            language_tag: language_tag.to_string(),
            source_text: code.to_string(),
            entry_name,
        },
    })
}

/// Body of the first ```-fenced block (an info string after the opening
/// fence is allowed). The newline before the closing fence is not included.
pub fn first_fenced_block(text: &str) -> Option<&str> {
    let mut offset = 0;
    let mut body_start = None;
    for line in text.split_inclusive('\n') {
        let bare = line.trim_end_matches(['\n', '\r']);
        match body_start {
            None if bare.trim_start().starts_with("```") => body_start = Some(offset + line.len()),
            Some(start) if bare.trim() == "```" => {
                let body = &text[start..offset];
                let body = body.strip_suffix('\n').unwrap_or(body);
                return Some(body.strip_suffix('\r').unwrap_or(body));
            }
            _ => {}
        }
        offset += line.len();
    }
    None
}

fn first_class_name(code: &str) -> Option<String> {
    code.lines().find_map(|l| {
        let rest = l.trim_start().strip_prefix("class ")?;
        let name: String = rest
            .trim_start()
            .chars()
            .take_while(|c| c.is_alphanumeric() || *c == '_')
            .collect();
        crate::sandbox::is_identifier(&name).then_some(name)
    })
}

/// Whether `prompt` leaks the suite or a registered function name.
pub fn leaks_problem_identity(prompt: &str) -> bool {
    let lower = prompt.to_lowercase();
    if lower.contains("pbo") || lower.contains("bbob") {
        return true;
    }
    crate::problems::catalog()
        .iter()
        .any(|e| lower.contains(&e.name.to_lowercase()))
}
