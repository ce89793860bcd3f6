//! Poisoning adversaries and validation-report forging adversaries.
//!
//! Data/model attacks implement [`Attack`] and hook into the round at three
//! points: dataset poisoning before local training, per-batch poisoning
//! during training, and update replacement after benign clients trained.
//! Validator attacks implement [`crate::validation::ReportForger`] and
//! rewrite malicious validators' reports. Both families are registered by
//! name and selected at runtime.

mod poison;
mod trigger;
pub mod validator;

pub use poison::{ipma_update, tlfa_poison, DbaAttack, IpmaAttack, TlfaAttack};
pub use trigger::{apply_trigger, dba_poison_batch, TriggerSpec};
pub use validator::{forger_by_name, forger_names};

use serde::{Deserialize, Serialize};

use crate::nn::{BatchPoisoner, ParamVector};
use crate::data::LabeledDataset;
use crate::{Error, Result};

/// Attack parameters, shared by all attack kinds; unused fields are ignored
/// by attacks that do not need them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackConfig {
    /// Source class whose labels a label-flipping adversary rewrites.
    #[serde(default = "default_source")]
    pub source_class: usize,
    /// Target class those labels become.
    #[serde(default = "default_target")]
    pub target_class: usize,
    /// Strength of the inner-product manipulation.
    #[serde(default = "default_epsilon")]
    pub epsilon_att: f64,
    /// Poisoned samples per batch for the backdoor.
    #[serde(default = "default_pspb")]
    pub pspb: usize,
    /// Number of parts the backdoor trigger is split into.
    #[serde(default = "default_trigger_parts")]
    pub trigger_parts: usize,
    /// Backdoor target class.
    #[serde(default = "default_trigger_target")]
    pub trigger_target: usize,
    /// Validator attack name; see [`forger_names`].
    #[serde(default = "default_validator_attack")]
    pub validator_attack: String,
    /// First attack-active round (1-based); defaults to `ceil(0.25 * T)`.
    #[serde(default)]
    pub active_from: Option<usize>,
    /// Last attack-active round (1-based, inclusive); defaults to `T`.
    #[serde(default)]
    pub active_to: Option<usize>,
}

fn default_source() -> usize {
    5
}

fn default_target() -> usize {
    3
}

fn default_epsilon() -> f64 {
    1.0
}

fn default_pspb() -> usize {
    8
}

fn default_trigger_parts() -> usize {
    4
}

fn default_trigger_target() -> usize {
    1
}

fn default_validator_attack() -> String {
    "none".into()
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            source_class: default_source(),
            target_class: default_target(),
            epsilon_att: default_epsilon(),
            pspb: default_pspb(),
            trigger_parts: default_trigger_parts(),
            trigger_target: default_trigger_target(),
            validator_attack: default_validator_attack(),
            active_from: None,
            active_to: None,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self, num_classes: usize, batch_size: usize) -> Result<()> {
        if self.source_class == self.target_class {
            return Err(Error::InvalidConfig(
                "source and target class must differ".into(),
            ));
        }
        if self.source_class >= num_classes
            || self.target_class >= num_classes
            || self.trigger_target >= num_classes
        {
            return Err(Error::InvalidConfig("attack class out of range".into()));
        }
        if self.epsilon_att <= 0.0 {
            return Err(Error::InvalidConfig("epsilon_att must be positive".into()));
        }
        if self.pspb > batch_size {
            return Err(Error::InvalidConfig(format!(
                "pspb {} exceeds batch size {batch_size}",
                self.pspb
            )));
        }
        forger_by_name(&self.validator_attack)?;
        Ok(())
    }

    /// Attack-active round interval (1-based, inclusive).
    pub fn active_window(&self, num_rounds: usize) -> (usize, usize) {
        let from = self
            .active_from
            .unwrap_or_else(|| ((0.25 * num_rounds as f64).ceil() as usize).max(1));
        let to = self.active_to.unwrap_or(num_rounds);
        (from, to)
    }
}

/// A poisoning strategy. Hooks default to no-ops so each attack overrides
/// only the stage it manipulates.
pub trait Attack {
    fn name(&self) -> &'static str;

    /// Rewrite a malicious client's dataset before local training.
    fn poison_dataset(&self, data: &LabeledDataset) -> LabeledDataset {
        data.clone()
    }

    /// Per-batch poisoner for a malicious client; `part_index` selects the
    /// client's share of a distributed trigger.
    fn batch_poisoner(&self, _part_index: usize) -> Option<Box<dyn BatchPoisoner>> {
        None
    }

    /// True when malicious clients submit a crafted update instead of
    /// training; the controller then calls [`Attack::craft_update`] once
    /// with the round's benign updates.
    fn needs_benign_updates(&self) -> bool {
        false
    }

    fn craft_update(&self, _benign: &[ParamVector]) -> Result<Option<ParamVector>> {
        Ok(None)
    }
}

/// The benign baseline: malicious flags exist but clients behave honestly.
pub struct NoAttack;

impl Attack for NoAttack {
    fn name(&self) -> &'static str {
        "none"
    }
}

/// Registered attack names.
pub fn attack_names() -> &'static [&'static str] {
    &["none", "tlfa", "ipma", "dba"]
}

/// Build an attack strategy by name. The trigger is derived from the
/// training pool by the caller (its value depends on the dataset).
pub fn attack_by_name(
    name: &str,
    cfg: &AttackConfig,
    trigger: &TriggerSpec,
) -> Result<Box<dyn Attack>> {
    match name {
        "none" => Ok(Box::new(NoAttack)),
        "tlfa" => Ok(Box::new(TlfaAttack {
            source_class: cfg.source_class,
            target_class: cfg.target_class,
        })),
        "ipma" => Ok(Box::new(IpmaAttack {
            epsilon: cfg.epsilon_att,
        })),
        "dba" => Ok(Box::new(DbaAttack {
            trigger: trigger.clone(),
            pspb: cfg.pspb,
        })),
        other => Err(Error::UnknownStrategy {
            family: "attack",
            name: other.to_string(),
            known: attack_names().join(", "),
        }),
    }
}
