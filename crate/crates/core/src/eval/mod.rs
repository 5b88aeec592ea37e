//! Metrics, reports, explanations and the synthetic corpus generator.

pub mod explain;
pub mod metrics;
pub mod report;
pub mod synthetic;

pub use explain::{explain_document, ExplanationReport, RankedSentence};
pub use metrics::{accuracy, rationale_precision_at_k};
pub use report::{emit_report, render_markdown, render_plot_data, render_tsv, ReportRow};
pub use synthetic::{
    cue_oracle, generate_documents, generate_synthetic, SentenceKind, SyntheticDocument, SyntheticSpec,
};
