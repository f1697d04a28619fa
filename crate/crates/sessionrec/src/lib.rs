//! Session-context music recommendation.
//!
//! The library infers the latent context of a listening session from
//! social-tag embeddings and uses it to post-filter collaborative-filtering
//! recommendations:
//!
//! 1. [`ingest`] parses play logs, segments 15-minute sessions, derives
//!    implicit ratings from play-frequency percentiles and splits sessions
//!    into train/test.
//! 2. [`corpus`] normalizes tags and builds per-item tag sentences plus the
//!    frequency-filtered vocabulary.
//! 3. [`embedding`] trains skip-gram tag vectors with the exact full-softmax
//!    objective.
//! 4. [`pca`] projects tag vectors to one dimension and gives every item the
//!    mean projection of its tags — its context coordinate.
//! 5. [`cf`] trains k-NN, SVD, SVD++ and NMF recommenders on the implicit
//!    ratings and produces ranked candidate lists.
//! 6. [`postfilter`] re-ranks a session's candidates by distance to the
//!    session's reference context (plus two similarity baselines).
//! 7. [`eval`] scores every method x strategy cell with MAP@N and NDCG@N
//!    over the test sessions, and generates the planted-context synthetic
//!    datasets used by the benchmark suite.
//!
//! Data-parallel loops run on rayon under the default `parallel` feature
//! and degrade to sequential iterators without it; results are identical in
//! both modes.

pub mod catalog;
pub mod cf;
pub mod corpus;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod exec;
pub mod ingest;
pub mod pca;
pub mod postfilter;

pub use error::Error;

pub type Result<T> = std::result::Result<T, Error>;
