//! Stock-constrained top-l recommendation.
//!
//! Items receive a stock volume proportional to their historical popularity,
//! and users are matched to items either greedily by normalized score or
//! exactly through a min-cost max-flow network. The [`experiment`] module
//! wires loading, scoring, matching and evaluation into one pipeline.

pub mod constraints;
pub mod data;
pub mod diffusion;
mod error;
pub mod experiment;
pub mod flow;
pub mod format;
pub mod matching;
pub mod metrics;

pub use constraints::{stock_volumes, StockVector};
pub use data::{
    build_interactions, parse_ratings, temporal_split, DelimiterFormat, IdMap, InteractionDataset,
    RatingEvent,
};
pub use diffusion::{normalize_rows, p3_scores, rp3_rescale, ScoreKind, ScoreMatrix};
pub use error::{Error, Result};
pub use flow::{
    build_matching_network, extract_recommendations, min_cost_max_flow, FlowNetwork, FlowSolution,
};
pub use matching::{greedy_match, unconstrained_topl, RecommendationMatrix};
pub use metrics::{aggregate_diversity, exposure_fairness, precision, score_gini, MetricsReport};
