//! Topic and sentiment features for stock-price forecasting.
//!
//! The pipeline reads comments and daily bars, derives technical indicators,
//! scores comments with a lexicon rule engine, groups comments into topics
//! (embedding, manifold reduction, density clustering, class-based TF-IDF)
//! and trains small forecasters on the resulting daily feature table.

pub mod clusterer;
pub mod embeddings;
pub mod error;
pub mod eval;
pub mod frame;
pub mod indicators;
pub mod ingest;
pub mod nn;
pub mod pipeline;
pub mod plot;
pub mod reducer;
pub mod sentiment;
pub mod synth;
pub mod topics;

pub use error::{Error, Result};
