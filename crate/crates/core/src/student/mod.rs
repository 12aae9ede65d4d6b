//! Student training on synthesised supervision, and evaluation.

pub mod build;
pub mod eval;
pub mod span;
pub mod train;

pub use build::{build_target_cache, instance_stream, IntegrationOptions};
pub use eval::{evaluate_accuracy, Classifier, Ensemble, EvalResult, SingleTeacher};
pub use span::{evaluate_span_f1, extract_spans, Span, SpanScores};
pub use train::{fit_targets, train_student, LogEntry, StudentModel, TrainConfig, TrainingLog, Validation};
