//! The three poisoning strategies: targeted label flipping, inner-product
//! manipulation, and the distributed trigger backdoor.

use super::trigger::{dba_poison_batch, TriggerSpec};
use super::Attack;
use crate::data::LabeledDataset;
use crate::nn::{BatchPoisoner, ParamVector};
use crate::nn::params::mean_of;
use crate::{Error, Result};

/// Flip every source-class label to the target class; features untouched.
pub fn tlfa_poison(data: &LabeledDataset, source: usize, target: usize) -> LabeledDataset {
    let labels = data
        .labels()
        .iter()
        .map(|&y| if y == source { target } else { y })
        .collect();
    LabeledDataset::new(data.features().to_vec(), labels, data.dim())
        .expect("shape preserved by relabeling")
}

/// The negated, scaled mean of the benign updates; every malicious
/// participant submits this identical vector.
pub fn ipma_update(benign: &[ParamVector], epsilon: f64) -> Result<ParamVector> {
    if benign.is_empty() {
        return Err(Error::EmptyDataset("ipma needs benign updates"));
    }
    let refs: Vec<&ParamVector> = benign.iter().collect();
    Ok(mean_of(&refs)?.scale(-epsilon))
}

pub struct TlfaAttack {
    pub source_class: usize,
    pub target_class: usize,
}

impl Attack for TlfaAttack {
    fn name(&self) -> &'static str {
        "tlfa"
    }

    fn poison_dataset(&self, data: &LabeledDataset) -> LabeledDataset {
        tlfa_poison(data, self.source_class, self.target_class)
    }
}

pub struct IpmaAttack {
    pub epsilon: f64,
}

impl Attack for IpmaAttack {
    fn name(&self) -> &'static str {
        "ipma"
    }

    fn needs_benign_updates(&self) -> bool {
        true
    }

    fn craft_update(&self, benign: &[ParamVector]) -> Result<Option<ParamVector>> {
        ipma_update(benign, self.epsilon).map(Some)
    }
}

pub struct DbaAttack {
    pub trigger: TriggerSpec,
    pub pspb: usize,
}

struct DbaPoisoner {
    part: Vec<usize>,
    value: f64,
    target: usize,
    pspb: usize,
}

impl BatchPoisoner for DbaPoisoner {
    fn poison(&self, features: &mut [f64], labels: &mut [usize], dim: usize) {
        dba_poison_batch(
            features,
            labels,
            dim,
            &self.part,
            self.value,
            self.target,
            self.pspb,
        );
    }
}

impl Attack for DbaAttack {
    fn name(&self) -> &'static str {
        "dba"
    }

    fn batch_poisoner(&self, part_index: usize) -> Option<Box<dyn BatchPoisoner>> {
        Some(Box::new(DbaPoisoner {
            part: self.trigger.part(part_index).to_vec(),
            value: self.trigger.trigger_value,
            target: self.trigger.target_class,
            pspb: self.pspb,
        }))
    }
}
