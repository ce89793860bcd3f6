//! Deterministic simulator of federated learning under poisoning attacks.
//!
//! The crate is organised around small, pure building blocks:
//!
//! - [`nn`] — a flat-vector classifier core (forward pass, cross-entropy,
//!   exact backprop gradients, local SGD, parameter-vector algebra)
//! - [`data`] / [`partition`] — labelled datasets, synthetic blob generation
//!   and the IID / one-class-expert / Dirichlet client partitioners
//! - [`attacks`] — data/model poisoning adversaries and validation-report
//!   forging adversaries, each behind a common trait and registered by name
//! - [`representative`] — bijective and cluster representative-model
//!   generators with provenance back to local updates
//! - [`validation`] — the per-class loss-impact validation protocol,
//!   imputation of missing report cells and outlier filtering of validators
//! - [`defense`] — ranking/filtering, clipping, aggregation, the two
//!   validation-based defenses and the FedAvg/FedOracle/RFA baselines,
//!   all behind the [`defense::Defense`] trait and a name registry
//! - [`inversion`] — the gradient-inversion privacy probe
//! - [`sim`] — the round/simulation orchestrator and metric computation
//! - [`config`] / [`presets`] / [`report`] — experiment configuration,
//!   the scenario catalog and bit-exact result emission
//!
//! Every operation is deterministic given a configuration and a 64-bit seed.

pub mod attacks;
pub mod config;
pub mod data;
pub mod defense;
pub mod error;
pub mod inversion;
pub mod nn;
pub mod partition;
pub mod presets;
pub mod report;
pub mod representative;
pub mod rng;
pub mod sim;
pub mod validation;

pub use error::Error;

/// Crate result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Version string stamped into emitted summaries.
pub const VERSION: &str = concat!("fedshield-", env!("CARGO_PKG_VERSION"));
