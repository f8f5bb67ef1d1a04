//! Adversarial-neural Topic Model: a WGAN-GP trained generator that maps
//! Dirichlet topic mixtures to document word distributions, with topic,
//! embedding, coherence and event tooling around it.

pub mod checkpoint;
pub mod cli;
pub mod coherence;
pub mod config;
pub mod corpus;
pub mod error;
pub mod events;
pub mod network;
pub mod sampling;
pub mod topics;
pub mod training;

pub use error::{AtmError, Result};
