//! Deterministic, seedable simulation of federated learning under label
//! distribution skew.
//!
//! The crate is organized around the stages of a simulated training run:
//!
//! - [`labelstats`]: label histograms, normalization, Shannon entropy (bits);
//! - [`partition`]: splitting a pooled dataset across clients with
//!   quantity-based or Dirichlet label skew;
//! - [`selection`]: cohort selection, either entropy-greedy (FedEntOpt) with
//!   a FIFO exclusion buffer, or uniform random;
//! - [`privacy`]: Laplace-mechanism release of per-client label counts;
//! - [`fedcore`]: datasets, differentiable models, local SGD, and
//!   dataset-size-weighted aggregation (FedAvg);
//! - [`harness`]: experiment configuration, the round loop, metrics CSVs,
//!   and parameter sweeps.
//!
//! Every random decision is drawn from a named ChaCha stream derived from
//! the run seed (see [`rng`]), so any run is reproducible bit-for-bit from
//! its configuration.

pub mod error;
pub mod fedcore;
pub mod harness;
pub mod labelstats;
pub mod partition;
pub mod privacy;
pub mod rng;
pub mod selection;

pub use error::{Error, Result};
