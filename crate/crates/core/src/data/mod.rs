//! Datasets, label-space partitioning, text vectorisation and synthetic
//! corpora.

pub mod dataset;
pub mod hashing;
pub mod labels;
pub mod synth;
pub mod tagging;

pub use dataset::{load_jsonl, save_jsonl, split_validation, Dataset};
pub use hashing::{hash_vectorize, tokenize, vectorize_text_jsonl, DEFAULT_HASH_DIM};
pub use labels::{default_label_names, partition_label_space, LabelSpace};
pub use synth::{generate_mixture, MixtureSpec};
pub use tagging::{generate_tagging, TagLayout, TaggedCorpus, TaggedSentence, TaggingSpec, TeacherTags};
