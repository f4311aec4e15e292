//! Lineage similarity, relevance aggregation and result tables.

pub mod codebleu;
pub mod relevance;
pub mod report;

pub use codebleu::{codebleu, similarity_matrix, CodeBleuScore, CodeBleuSettings, PythonAstFrontend, SimilarityMatrix};
pub use relevance::{aggregate_relevance, component_relevance, RelevanceMatrix};
pub use report::{report_table, ApproachResults, ReportTable};
