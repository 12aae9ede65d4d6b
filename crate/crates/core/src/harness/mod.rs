//! Experiment configs, diagnostics and the end-to-end runner.

pub mod config;
pub mod diagnostics;
pub mod ece;
pub mod experiment;
pub mod tagging;

pub use config::{DataSource, ExperimentConfig, Seeds, StudentSection, TeacherSection};
pub use diagnostics::{
    selection_accuracy, selection_error_report, supervision_quality, teacher_calibration, uncertainty_separation,
    GroupKl, MarginKl, SelectionErrorReport, SeparationReport, TeacherCalibration, MARGIN_SPLIT,
};
pub use ece::{compute_ece, DEFAULT_BINS};
pub use experiment::{
    analyze, evaluate, fit_oracle, fit_students, fit_teachers, generate_data, integrate, mean_std, run_experiment,
    tau_sweep, Aggregate, Diagnostics, MethodResult, MetricsReport, TauPoint, Workspace,
};
pub use tagging::{run_tagging, TaggingExperiment, TaggingReport};
