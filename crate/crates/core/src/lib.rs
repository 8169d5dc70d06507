//! Audiobook and podcast recommendation with a heterogeneous GraphSAGE over
//! a co-listening graph, feeding a two-tower retrieval model.
//!
//! The crate covers the whole offline loop: parsing or synthesizing
//! interaction logs, building the co-listening graph, training item
//! embeddings, training the user/item towers, exhaustive top-k retrieval,
//! and an evaluation harness with baselines, ablations and diagnostics.
//! See `examples/` for one runnable program per capability.

pub mod codec;
pub mod data;
pub mod error;
pub mod eval;
pub mod graph;
pub mod hgnn;
pub mod index;
pub mod linalg;
pub mod pipeline;
pub mod two_tower;

pub use error::{Error, Result};
