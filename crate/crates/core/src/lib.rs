//! Hybrid collaborative filtering over latent item topics.
//!
//! Items are profiled by an LDA model trained on their text, users are
//! projected into the same topic space as rating-weighted mixtures of the
//! items they rated ("personas"), and user neighborhoods are formed from the
//! product of topic-space similarity and rating-overlap (log-likelihood)
//! similarity. User-based and item-based CF baselines and a top-K
//! precision/recall harness ship alongside.
//!
//! The pipeline stages communicate through plain CSV artifacts; see
//! [`pipeline`] for the orchestration used by the `topiccf` binary.

pub mod error;
pub mod evaluate;
pub mod ingest;
pub mod lda;
pub mod persona;
pub mod pipeline;
pub mod recommend;
pub mod similarity;

pub use error::{Error, Result};

/// Opaque user identifier as it appears in rating files.
pub type UserId = u64;
/// Opaque item identifier as it appears in rating files and corpora.
pub type ItemId = u64;
