//! Federated pair-wise learning to rank for implicit feedback.
//!
//! A factorization model is split between a server (item embeddings and
//! biases) and clients (one user embedding each). Clients sample training
//! triples from their private interactions, update their own embedding
//! locally and send item updates to the server, keeping back a share of the
//! updates for consumed items. The crate also carries the centralized
//! baselines, the evaluation metrics, a sign-based leakage audit and the
//! experiment driver used by the `federank` binary.

pub mod baselines;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod federation;
pub mod model;
pub mod privacy;
pub mod rng;

pub use error::{Error, Result};
