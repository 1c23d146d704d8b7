//! Evaluation: clustering agreement, link prediction, likelihood and group summaries.

pub mod bcubed;
pub mod likelihood;
pub mod ranking;
pub mod summary;

pub use bcubed::{soft_bcubed, soft_bcubed_weights, SoftClusterScore};
pub use likelihood::{bic, predictive_log_likelihood, scan_seed, select_k, BicRecord, BicReport};
pub use ranking::{mean_rank, message_ranks, rank_at_full_recall, rank_at_full_recall_with};
pub use summary::{
    group_summaries, group_summaries_with, predicted_frequency_matrix, predicted_frequency_with,
    size_weighted_b, GroupStats, GroupSummary,
};
