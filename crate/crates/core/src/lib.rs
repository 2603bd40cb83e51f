//! Label-free validators for unsupervised domain adaptation checkpoints, and
//! the rank statistics used to judge them against target accuracy.

pub mod clustering;
pub mod discriminator;
pub mod kernels;
pub mod metrics;
pub mod report;
pub mod seed;
pub mod store;
pub mod synth;
pub mod validators;

pub use metrics::{aatn, avg_wsc_across_tasks, spearman, weighted_spearman, PairedSeries};
pub use store::{load_checkpoint, write_checkpoint, CheckpointRecord};
pub use validators::{all_variants, score_all, ScoringConfig, ValidatorVariant};
