//! Experiment configuration: a sectioned TOML file mirroring the simulator's
//! components one-to-one. Unknown keys are errors.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::attacks::{self, AttackConfig};
use crate::defense::DefenseRegistry;
use crate::nn::TrainConfig;
use crate::representative::{RepConfig, RepMode};
use crate::validation::ValidationConfig;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distribution {
    Iid,
    OneClassExpert,
    Dirichlet,
}

/// Federation-level settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub num_clients: usize,
    pub clients_per_round: usize,
    pub num_rounds: usize,
    pub malicious_fraction: f64,
    pub num_validators: usize,
    pub classes: usize,
    pub distribution: Distribution,
    #[serde(default = "default_alpha")]
    pub dirichlet_alpha: f64,
    pub defense: String,
    pub attack: String,
    pub seed: u64,
}

fn default_alpha() -> f64 {
    0.5
}

/// Synthetic-task settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default = "default_samples_per_client")]
    pub samples_per_client: usize,
    #[serde(default = "default_test_samples")]
    pub test_samples: usize,
    #[serde(default = "default_spread")]
    pub spread: f64,
    #[serde(default = "default_radius")]
    pub radius: f64,
    /// Optional confusable class pair (a, b): b's mean moves next to a's.
    #[serde(default)]
    pub confusable_pair: Option<(usize, usize)>,
    #[serde(default = "default_pair_distance")]
    pub pair_distance: f64,
}

fn default_dim() -> usize {
    32
}

fn default_samples_per_client() -> usize {
    200
}

fn default_test_samples() -> usize {
    2000
}

fn default_spread() -> f64 {
    0.5
}

fn default_radius() -> f64 {
    4.0
}

fn default_pair_distance() -> f64 {
    1.0
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            dim: default_dim(),
            samples_per_client: default_samples_per_client(),
            test_samples: default_test_samples(),
            spread: default_spread(),
            radius: default_radius(),
            confusable_pair: None,
            pair_distance: default_pair_distance(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default = "default_hidden")]
    pub hidden_dims: Vec<usize>,
}

fn default_hidden() -> Vec<usize> {
    vec![16]
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden_dims: default_hidden(),
        }
    }
}

/// Full experiment description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub sim: SimConfig,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub model: ModelConfig,
    pub train: TrainConfig,
    #[serde(default)]
    pub attack: AttackConfig,
    pub representative: RepConfig,
    #[serde(default)]
    pub validation: ValidationConfig,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let s = &self.sim;
        if s.num_clients == 0 || s.clients_per_round == 0 || s.clients_per_round > s.num_clients
        {
            return Err(Error::InvalidConfig(format!(
                "need 1 <= clients_per_round <= num_clients, got {} of {}",
                s.clients_per_round, s.num_clients
            )));
        }
        if !(0.0..0.5).contains(&s.malicious_fraction) {
            return Err(Error::InvalidConfig(format!(
                "malicious_fraction must be in [0, 0.5), got {}",
                s.malicious_fraction
            )));
        }
        if s.num_validators < 2 || s.num_validators > s.num_clients {
            return Err(Error::InvalidConfig(format!(
                "need 2 <= num_validators <= num_clients, got {}",
                s.num_validators
            )));
        }
        if s.classes < 2 || s.classes > self.data.dim {
            return Err(Error::InvalidConfig(format!(
                "need 2 <= classes <= dim, got classes={} dim={}",
                s.classes, self.data.dim
            )));
        }
        if s.distribution == Distribution::Dirichlet && s.dirichlet_alpha <= 0.0 {
            return Err(Error::InvalidConfig(
                "dirichlet_alpha must be positive".into(),
            ));
        }
        DefenseRegistry::builtin().create(&s.defense)?;
        if !attacks::attack_names().contains(&s.attack.as_str()) {
            return Err(Error::UnknownStrategy {
                family: "attack",
                name: s.attack.clone(),
                known: attacks::attack_names().join(", "),
            });
        }
        self.train.validate()?;
        self.attack.validate(s.classes, self.train.batch_size)?;
        self.representative.validate(s.clients_per_round)?;
        self.validation.validate()?;
        // the defense name pins the representative mode
        match (s.defense.as_str(), self.representative.mode) {
            ("flshield_bijective", RepMode::Cluster)
            | ("flshield_cluster", RepMode::Bijective) => {
                return Err(Error::InvalidConfig(format!(
                    "defense {} conflicts with representative mode {:?}",
                    s.defense, self.representative.mode
                )));
            }
            _ => {}
        }
        Ok(())
    }

    /// Contamination bound handed to outlier detection.
    pub fn contamination(&self) -> f64 {
        self.validation
            .contamination
            .unwrap_or((self.sim.malicious_fraction + 0.05).min(0.49))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::ConfigIo {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::from_toml(&text)
    }
}
