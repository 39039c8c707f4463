//! ISMS compliance-readiness assessment engine.
//!
//! * [`catalog`]: the control tree (domains, classes, controls, assessment issues)
//! * [`scoring`]: recursive-mean rollup, priority, percentage and predicate bands
//! * [`report`]: summaries, advice, histogram series and renderers
//! * [`session`]: persisted track record of assessment experiments

pub mod catalog;
pub mod fixtures;
pub mod report;
pub mod scoring;
pub mod session;

pub use catalog::{load_catalog, Catalog, CatalogError, CatalogNode, CatalogRef, NodeKind};
pub use report::{
    histogram, render_csv, render_json, render_text, summarize, Advice, HistogramSeries,
    ReportError, ReportOptions, Summary,
};
pub use scoring::{
    node_mean, predicate_of, priority_of, rollup, to_percentage, Assessment, AssessmentError,
    LeafScore, Mode, NodeScore, Predicate, Rational, ScoreReport, ScoringError,
};
pub use session::{Experiment, ProgressionRow, Session, SessionStore, StoreError};
