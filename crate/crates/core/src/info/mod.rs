//! Discrete mutual information and the greedy mRMR concept ordering.
//!
//! All quantities are in nats.

mod mi;
mod mrmr;
mod stability;

pub use mi::{entropy, mutual_information, MiEstimate, Symbol};
pub use mrmr::{
    mrmr_rank, mrmr_rank_columns, read_ranking_csv, relevance_vector, validate_permutation, write_ranking_csv,
    ConceptRanking, MrmrOptions, RankStep, TIE_TOLERANCE,
};
pub use stability::{iou, rank_correlation, ranking_stability, StabilityReport};
