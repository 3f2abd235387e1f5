//! Siamese training of the hash encoder.

mod grad;
mod loss;
mod pairs;
mod trainer;

pub use grad::{loss_gradient, objective_gradient, GradientSet, LayerGradient};
pub use loss::{
    cosine_loss, cosine_similarity, mutual_difference_loss, negative_pair_loss, total_loss,
    total_loss_terms, LossBreakdown,
};
pub use pairs::{group_by_video, sample_positive_pairs, PositivePair, VideoFeatures};
pub use trainer::{train, write_trace_csv, EpochLoss, TrainConfig, TrainOutcome};
