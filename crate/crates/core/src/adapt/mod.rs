//! Consistency-driven test-time adaptation: features, similarity, loss, and the single-step update.

mod features;
mod loss;
mod mmd;
mod pipeline;
mod similarity;

pub use features::{aggregate_backward, aggregate_features, temporal_smoothing_matrix, AggregationMode, FeatureMap};
pub use loss::{
    combined_loss, consistency_loss, mmd_penalty, objective, objective_value, pairs, pairwise_similarities, Objective,
    ObjectiveConfig,
};
pub use mmd::{gaussian_kernel, mmd_squared, mmd_squared_grad};
pub use pipeline::*;
pub use similarity::{
    global_similarity, normalize, normalize_channels, normalize_global, similarity, softmax_backward, softmax_rows,
    ChannelDistribution, SimilarityScope,
};
