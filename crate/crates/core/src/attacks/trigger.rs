//! Backdoor trigger definition and batch poisoning.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A feature-space trigger: selected features forced to a fixed value,
/// split into contiguous parts distributed across malicious clients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TriggerSpec {
    pub feature_indices: Vec<usize>,
    pub trigger_value: f64,
    pub num_parts: usize,
    pub target_class: usize,
}

impl TriggerSpec {
    pub fn new(
        feature_indices: Vec<usize>,
        trigger_value: f64,
        num_parts: usize,
        target_class: usize,
    ) -> Result<Self> {
        if feature_indices.is_empty() || num_parts == 0 || num_parts > feature_indices.len() {
            return Err(Error::InvalidConfig(format!(
                "trigger needs 1 <= parts <= features, got {} parts over {} features",
                num_parts,
                feature_indices.len()
            )));
        }
        Ok(TriggerSpec {
            feature_indices,
            trigger_value,
            num_parts,
            target_class,
        })
    }

    /// Default desk-scale trigger: the first `ceil(dim / 8)` features set to
    /// the dataset's maximum feature value.
    pub fn for_dataset(
        data: &crate::data::LabeledDataset,
        num_parts: usize,
        target_class: usize,
    ) -> Result<Self> {
        let dim = data.dim();
        let count = dim.div_ceil(8).max(num_parts);
        let indices: Vec<usize> = (0..count).collect();
        let maxes = data.per_feature_max();
        let value = indices
            .iter()
            .map(|&i| maxes[i])
            .fold(f64::NEG_INFINITY, f64::max);
        TriggerSpec::new(indices, value, num_parts, target_class)
    }

    /// The contiguous feature slice forming one part; parts partition the
    /// trigger's features.
    pub fn part(&self, index: usize) -> &[usize] {
        let n = self.feature_indices.len();
        let base = n / self.num_parts;
        let extra = n % self.num_parts;
        let i = index % self.num_parts;
        let start = i * base + i.min(extra);
        let len = base + usize::from(i < extra);
        &self.feature_indices[start..start + len]
    }
}

/// Overwrite the part's features with the trigger value.
pub fn apply_trigger(x: &mut [f64], part: &[usize], value: f64) {
    for &i in part {
        x[i] = value;
    }
}

/// Stamp exactly `min(pspb, rows)` leading samples of a batch with one
/// trigger part and the backdoor label.
pub fn dba_poison_batch(
    features: &mut [f64],
    labels: &mut [usize],
    dim: usize,
    part: &[usize],
    trigger_value: f64,
    target_class: usize,
    pspb: usize,
) {
    let rows = labels.len();
    for r in 0..pspb.min(rows) {
        apply_trigger(&mut features[r * dim..(r + 1) * dim], part, trigger_value);
        labels[r] = target_class;
    }
}
