//! Benchmark-assisted LLM-driven design of black-box optimization algorithms.
//!
//! The crate covers the full loop: benchmark problems and the anytime AUC
//! measure, sandboxed execution of generated candidates, prompt rendering
//! and response parsing, LLM access with record/replay, the elitist
//! benchmark-guided search itself, and the analysis instruments used to
//! study its output (CodeBLEU, relevance aggregation, rank tables).

pub mod analysis;
pub mod evaluation;
pub mod llm;
pub mod problems;
pub mod promptkit;
pub mod sandbox;
pub mod search;

pub use evaluation::{auc, ecdf_value, log_time_grid, AucReport, Monitor, RunStatus, RunTrace, TimeGrid};
pub use problems::{make_instance, target_set, Orientation, ProblemId, ProblemInstance, Suite, TargetSet};
pub use sandbox::{CandidateSource, FitnessReport, RunOutcome, Sandbox};
pub use search::{run_bag, run_refine_only, Action, SearchConfig, SearchResult};
