//! Reputation-based ranking over a user-item rating graph.
//!
//! The engine alternates a reputation-weighted ranking step with a
//! disagreement-penalizing reputation step until the ranking vector reaches a
//! fixed point. Users can be clustered by rating similarity into subnetworks
//! that are ranked independently, which blunts both shilling attacks and
//! bribery. The `attack` and `bribery` modules provide the corresponding
//! adversarial tooling: seeded attack generators, closed-form bribery profits
//! with a definition-level oracle, and greedy optimal-strategy search.

#![forbid(unsafe_code)]

pub mod attack;
pub mod bribery;
pub mod cluster;
pub mod engine;
pub mod graph;
pub mod metrics;
pub mod multipartite;
pub mod similarity;
pub mod synth;

pub use graph::{ItemId, RatingGraph, RatingScale, UserId};
