//! Core library for `litfield`: semantic-neighborhood metrics over document
//! embeddings and hierarchical Bayesian regression of citation rates.
//!
//! The pipeline is organized as a chain of pure-ish stages:
//!
//! 1. [`corpus`] — ingest, validate, and persist bibliographic records from a
//!    pluggable provider (offline fixtures or a live HTTPS API).
//! 2. [`embed`] — build bag-of-words matrices, import externally computed
//!    embedding matrices, unit-normalize rows, and reduce dimensionality.
//! 3. [`atlas`] — grow a collection outward from a center publication in
//!    order of decreasing cosine similarity, snapshot k-NN neighborhoods, and
//!    identify publications whose neighborhoods have converged.
//! 4. [`metrics`] — per-publication regression inputs: neighborhood density,
//!    asymmetry, citation rate, reference count, and age.
//! 5. [`regress`] — per-field standardization, the hierarchical linear model,
//!    model-variant enumeration, and MCMC fitting with diagnostics.
//! 6. [`evaluate`] — stratified holdout split, six scoring metrics, and model
//!    ranking.
//!
//! Every stage is deterministic given its inputs and a seed; see [`seeding`]
//! for how per-stage and per-chain seeds are derived from the master seed.

pub mod atlas;
pub mod classify;
pub mod corpus;
pub mod embed;
pub mod evaluate;
pub mod metrics;
pub mod regress;
pub mod seeding;
pub mod synthetic;

pub use corpus::{CorpusStore, PublicationRecord};
pub use embed::{EmbeddingSet, Vocabulary};
pub use metrics::{MetricConfig, MetricRecord};
pub use regress::{ModelSpec, PosteriorSamples, PriorConfig, RegressionDataset};
