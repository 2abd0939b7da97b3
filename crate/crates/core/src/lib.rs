//! Repository deduplication over relational forge dumps.
//!
//! The pipeline streams project, membership and activity tables from disk,
//! ranks every project by a zero-corrected geometric mean of six activity
//! metrics, groups projects that share commits around their highest-ranked
//! member, merges those links with fork ancestry, prunes noisy bridge nodes,
//! and elects one definitive project per connected component.
//!
//! Scoring is generic over the floating point type (see [`Real`]); the rest
//! of the pipeline works with the `f64` aliases exported here.

pub mod analysis;
pub mod blacklist;
pub mod commit_sharing;
pub mod components;
pub mod config;
pub mod dedup_output;
pub mod dot;
mod error;
pub mod extsort;
pub mod graph;
mod ids;
pub mod ingest;
mod num;
pub mod pipeline;
pub mod scoring;
pub mod tsv;

pub use error::{Error, Result};
pub use ids::{CommitId, ProjectId};
pub use num::Real;

/// Scalar used for project scores throughout the pipeline.
pub type Score = f64;

pub type MetricVector64 = scoring::MetricVector<f64>;
pub type ScoredProject64 = scoring::ScoredProject<f64>;
pub type ScoreTable64 = scoring::ScoreTable<f64>;
pub type RankKey64 = scoring::RankKey<f64>;
pub type ClusterSummary64 = dedup_output::ClusterSummary<f64>;
