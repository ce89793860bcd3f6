//! Representative-model generation.
//!
//! A representative model is a fusion of local updates that is handed to
//! validators instead of any single client's update. Two generators exist:
//! the bijective scheme (one representative per update, sibling
//! contributions weighted by rectified cosine similarity and norm ratio)
//! and dynamic K-means clustering with silhouette-based cluster-count
//! selection. Both record provenance back to the contributing clients.

mod bijective;
mod cluster;

pub use bijective::{bijective_generate, similarity};
pub use cluster::{cluster_generate, kmeans, silhouette};

use serde::{Deserialize, Serialize};

use crate::nn::ParamVector;
use crate::{Error, Result};

/// A generated representative: its parameters, the update relative to the
/// round's global model, and the contribution weights of the local updates
/// that formed it.
#[derive(Clone, Debug)]
pub struct RepresentativeModel {
    pub params: ParamVector,
    pub update: ParamVector,
    /// `(update index, weight)` pairs; weights form a probability vector.
    pub contributions: Vec<(usize, f64)>,
    /// Base update index for the bijective scheme.
    pub base_id: Option<usize>,
}

impl RepresentativeModel {
    /// Total contribution weight of the given update indices.
    pub fn contribution_of(&self, indices: &[usize]) -> f64 {
        self.contributions
            .iter()
            .filter(|(i, _)| indices.contains(i))
            .map(|(_, w)| w)
            .sum()
    }
}

/// Mapping from representatives back to the local updates they stand for.
/// For the bijective scheme each representative maps to its base update
/// only; for clustering it maps to every member of the cluster.
#[derive(Clone, Debug, PartialEq)]
pub struct RepMapping {
    pub members: Vec<Vec<usize>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepMode {
    Bijective,
    Cluster,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RepConfig {
    pub mode: RepMode,
    /// Sibling contribution rate in (0, 1).
    #[serde(default = "default_tau")]
    pub tau: f64,
    /// Cluster-count search bounds.
    #[serde(default = "default_k1")]
    pub k1: usize,
    #[serde(default)]
    pub k2: Option<usize>,
}

fn default_tau() -> f64 {
    0.75
}

fn default_k1() -> usize {
    2
}

impl RepConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        if !(0.0..1.0).contains(&self.tau) {
            return Err(Error::InvalidConfig(format!(
                "tau must be in (0, 1), got {}",
                self.tau
            )));
        }
        let k2 = self.k2.unwrap_or(n / 2);
        if self.mode == RepMode::Cluster && (self.k1 < 2 || self.k1 > k2 || k2 > n) {
            return Err(Error::InvalidConfig(format!(
                "need 2 <= k1 <= k2 <= n, got k1={} k2={k2} n={n}",
                self.k1
            )));
        }
        Ok(())
    }

    pub fn k2_or_default(&self, n: usize) -> usize {
        self.k2.unwrap_or(n / 2)
    }
}
