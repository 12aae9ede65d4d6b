//! Uncertainty-driven supervision synthesis and the baseline targets it is
//! compared against.

pub mod cache;
pub mod targets;
pub mod token;
pub mod uncertainty;

pub use cache::{CacheEntry, CachedTarget, SupervisionCache};
pub use targets::{
    concatenated_logits, ensemble_predict, integrate_hard, integrate_soft, pad, pad_to, single_teacher_predict,
    teacher_weights, uhc_targets, vanilla_kd_target, IntegratedTarget, Strategy, DEFAULT_TAU, TAU_SWEEP,
};
pub use token::{entity_uncertainty, integrate_token, token_level_integrate, token_report};
pub use uncertainty::{
    confidence_margin, estimate_uncertainty, normalized_uncertainty, select_teacher, TeacherEstimate, UncertaintyReport,
};
