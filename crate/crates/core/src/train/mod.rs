//! Optimization and the training protocols.

pub mod adadelta;
pub mod config;
pub mod cv;
pub mod early_stop;
pub mod parallel;
pub mod phases;
pub mod sampler;

pub use adadelta::{adadelta_update, Adadelta};
pub use config::TrainConfig;
pub use cv::{fold_assignments, fold_rng, run_cross_validation, CvOutcome, CvSummary, FoldResult};
pub use early_stop::{early_stop, StopDecision};
pub use parallel::Workers;
pub use phases::{
    batch_gradients, evaluate_accuracy, init_params, split_validation, train_document_phase,
    train_model, train_sentence_phase, DocumentFit, TrainedModel,
};
pub use sampler::{balanced_downsample, sentence_pool, SentenceRef};
