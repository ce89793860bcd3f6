//! Local mini-batch SGD, with an optional per-batch poisoning hook.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::model::{gradient, Architecture};
use super::params::ParamVector;
use crate::data::LabeledDataset;
use crate::rng::{self, tag};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.learning_rate < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "bad train config: epochs={}, lr={}, batch={}",
                self.epochs, self.learning_rate, self.batch_size
            )));
        }
        Ok(())
    }
}

/// Hook applied to each mini-batch before the gradient step. Implementors
/// mutate features/labels in place; the clean pass uses no hook.
pub trait BatchPoisoner {
    fn poison(&self, features: &mut [f64], labels: &mut [usize], dim: usize);
}

/// Mini-batch SGD from `global`, returning `final_params - global`.
/// Deterministic given `cfg.seed`.
pub fn local_train(
    global: &ParamVector,
    arch: &Architecture,
    data: &LabeledDataset,
    cfg: &TrainConfig,
) -> Result<ParamVector> {
    local_train_poisoned(global, arch, data, cfg, None)
}

/// As [`local_train`], routing every batch through `poisoner` when present.
pub fn local_train_poisoned(
    global: &ParamVector,
    arch: &Architecture,
    data: &LabeledDataset,
    cfg: &TrainConfig,
    poisoner: Option<&dyn BatchPoisoner>,
) -> Result<ParamVector> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset("local training data"));
    }
    let mut params = global.clone();
    let mut rng = rng::stream(cfg.seed, &[tag::LOCAL_TRAIN]);
    let n = data.len();
    let dim = data.dim();
    let batch = cfg.batch_size.min(n);
    let mut order: Vec<usize> = (0..n).collect();
    let mut feats = vec![0.0; batch * dim];
    let mut labels = vec![0usize; batch];

    for _ in 0..cfg.epochs {
        for i in (1..n).rev() {
            let j = rng.random_range(0..=i);
            order.swap(i, j);
        }
        for chunk in order.chunks(batch) {
            let rows = chunk.len();
            for (r, &idx) in chunk.iter().enumerate() {
                feats[r * dim..(r + 1) * dim].copy_from_slice(data.row(idx));
                labels[r] = data.label(idx);
            }
            if let Some(p) = poisoner {
                p.poison(&mut feats[..rows * dim], &mut labels[..rows], dim);
            }
            let g = gradient(&params, arch, &feats[..rows * dim], &labels[..rows])?;
            params.add_scaled_in_place(&g, -cfg.learning_rate);
        }
    }
    params.sub(global)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::glorot_init;

    fn setup() -> (Architecture, ParamVector, LabeledDataset) {
        let arch = Architecture::new(2, vec![3], 2).unwrap();
        let params = glorot_init(&arch, &mut rng::stream(1, &[tag::INIT]));
        let data = LabeledDataset::new(
            vec![1.0, 0.0, 0.8, 0.2, -1.0, -0.1, -0.7, 0.3],
            vec![0, 0, 1, 1],
            2,
        )
        .unwrap();
        (arch, params, data)
    }

    #[test]
    fn zero_learning_rate_moves_nothing() {
        let (arch, params, data) = setup();
        let cfg = TrainConfig {
            epochs: 3,
            learning_rate: 0.0,
            batch_size: 2,
            seed: 4,
        };
        let update = local_train(&params, &arch, &data, &cfg).unwrap();
        assert!(update.0.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_full_batch_step_is_one_gradient_step() {
        let (arch, params, data) = setup();
        let lr = 0.25;
        let cfg = TrainConfig {
            epochs: 1,
            learning_rate: lr,
            batch_size: data.len(),
            seed: 9,
        };
        let update = local_train(&params, &arch, &data, &cfg).unwrap();
        let g = gradient(&params, &arch, data.features(), data.labels()).unwrap();
        // shuffling permutes the single batch; the mean gradient is identical
        let expected = g.scale(-lr);
        for (u, e) in update.0.iter().zip(&expected.0) {
            assert!((u - e).abs() < 1e-12, "{u} vs {e}");
        }
    }

    #[test]
    fn identical_seeds_give_bitwise_identical_updates() {
        let (arch, params, data) = setup();
        let cfg = TrainConfig {
            epochs: 4,
            learning_rate: 0.1,
            batch_size: 2,
            seed: 1234,
        };
        let a = local_train(&params, &arch, &data, &cfg).unwrap();
        let b = local_train(&params, &arch, &data, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let (arch, params, _) = setup();
        let cfg = TrainConfig {
            epochs: 1,
            learning_rate: 0.1,
            batch_size: 2,
            seed: 0,
        };
        let empty = LabeledDataset::empty(2);
        assert!(local_train(&params, &arch, &empty, &cfg).is_err());
    }

    #[test]
    fn poisoner_hook_sees_every_batch() {
        struct FlipAll;
        impl BatchPoisoner for FlipAll {
            fn poison(&self, _f: &mut [f64], labels: &mut [usize], _d: usize) {
                for y in labels.iter_mut() {
                    *y = 1 - *y;
                }
            }
        }
        let (arch, params, data) = setup();
        let cfg = TrainConfig {
            epochs: 1,
            learning_rate: 0.3,
            batch_size: data.len(),
            seed: 2,
        };
        let poisoned =
            local_train_poisoned(&params, &arch, &data, &cfg, Some(&FlipAll)).unwrap();
        let flipped_labels: Vec<usize> = data.labels().iter().map(|&y| 1 - y).collect();
        let flipped =
            LabeledDataset::new(data.features().to_vec(), flipped_labels, 2).unwrap();
        let direct = local_train(&params, &arch, &flipped, &cfg).unwrap();
        assert_eq!(poisoned, direct);
    }
}
