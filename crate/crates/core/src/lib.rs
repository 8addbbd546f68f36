//! Contrastive similarity-weighted embeddings for daily news sets.

pub mod augmentor;
pub mod corpus;
pub mod embedding;
pub mod error;
pub mod heads;
pub mod http;
pub mod metrics;
pub mod nn;
pub mod projnet;
pub mod retrieval;
pub mod simscore;
pub mod synth;

pub use error::{Error, Result};
