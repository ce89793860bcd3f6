//! Labelled datasets and synthetic blob generation.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::rng::{self, tag};
use crate::{Error, Result};

/// Feature matrix (row-major) plus integer class labels.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    features: Vec<f64>,
    labels: Vec<usize>,
    dim: usize,
}

impl LabeledDataset {
    pub fn new(features: Vec<f64>, labels: Vec<usize>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig("feature dim must be positive".into()));
        }
        if features.len() != labels.len() * dim {
            return Err(Error::DimensionMismatch {
                context: "features vs labels",
                expected: labels.len() * dim,
                got: features.len(),
            });
        }
        Ok(LabeledDataset {
            features,
            labels,
            dim,
        })
    }

    pub fn empty(dim: usize) -> Self {
        LabeledDataset {
            features: Vec::new(),
            labels: Vec::new(),
            dim,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn set_label(&mut self, i: usize, y: usize) {
        self.labels[i] = y;
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn push(&mut self, row: &[f64], label: usize) {
        debug_assert_eq!(row.len(), self.dim);
        self.features.extend_from_slice(row);
        self.labels.push(label);
    }

    /// New dataset holding the given rows, in order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut out = LabeledDataset::empty(self.dim);
        for &i in indices {
            out.push(self.row(i), self.label(i));
        }
        out
    }

    /// Row indices grouped by class, preserving order.
    pub fn indices_by_class(&self, num_classes: usize) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); num_classes];
        for (i, &y) in self.labels.iter().enumerate() {
            groups[y].push(i);
        }
        groups
    }

    /// Per-class sample counts.
    pub fn class_histogram(&self, num_classes: usize) -> Vec<usize> {
        let mut counts = vec![0; num_classes];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    /// Per-feature maximum over all rows; zero-length data yields zeros.
    pub fn per_feature_max(&self) -> Vec<f64> {
        let mut maxes = vec![f64::NEG_INFINITY; self.dim];
        for r in 0..self.len() {
            for (m, v) in maxes.iter_mut().zip(self.row(r)) {
                if *v > *m {
                    *m = *v;
                }
            }
        }
        if self.is_empty() {
            maxes.fill(0.0);
        }
        maxes
    }
}

/// Synthetic Gaussian-blob task description. Class means sit on scaled
/// coordinate axes; an optional confusable pair moves one class next to
/// another to create a genuinely hard decision boundary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlobSpec {
    pub classes: usize,
    pub dim: usize,
    pub per_class: usize,
    /// Standard deviation of each cluster.
    pub spread: f64,
    /// Distance of each class mean from the origin.
    #[serde(default = "default_radius")]
    pub radius: f64,
    /// Optional (class_a, class_b): class_b's mean is placed near class_a's.
    #[serde(default)]
    pub confusable_pair: Option<(usize, usize)>,
    /// Distance between the confusable pair's means.
    #[serde(default = "default_pair_distance")]
    pub pair_distance: f64,
}

fn default_radius() -> f64 {
    4.0
}

fn default_pair_distance() -> f64 {
    1.0
}

impl BlobSpec {
    pub fn validate(&self) -> Result<()> {
        if self.per_class == 0 {
            return Err(Error::EmptyDataset("per_class must be positive"));
        }
        if self.classes < 2 || self.classes > self.dim {
            return Err(Error::InvalidConfig(format!(
                "need 2 <= classes <= dim, got classes={} dim={}",
                self.classes, self.dim
            )));
        }
        if self.spread < 0.0 || self.radius <= 0.0 || self.pair_distance <= 0.0 {
            return Err(Error::InvalidConfig("blob scales must be positive".into()));
        }
        if let Some((a, b)) = self.confusable_pair {
            if a >= self.classes || b >= self.classes || a == b {
                return Err(Error::InvalidConfig(format!(
                    "bad confusable pair ({a}, {b}) for {} classes",
                    self.classes
                )));
            }
        }
        Ok(())
    }

    /// Deterministic class means.
    pub fn class_means(&self) -> Vec<Vec<f64>> {
        let mut means: Vec<Vec<f64>> = (0..self.classes)
            .map(|c| {
                let mut m = vec![0.0; self.dim];
                m[c] = self.radius;
                m
            })
            .collect();
        if let Some((a, b)) = self.confusable_pair {
            // park class b next to class a, offset along b's own axis
            let mut m = means[a].clone();
            m[b] = self.pair_distance;
            means[b] = m;
        }
        means
    }

    /// Smallest pairwise distance between class means.
    pub fn min_mean_distance(&self) -> f64 {
        let means = self.class_means();
        let mut best = f64::INFINITY;
        for i in 0..means.len() {
            for j in (i + 1)..means.len() {
                let d: f64 = means[i]
                    .iter()
                    .zip(&means[j])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                best = best.min(d);
            }
        }
        best
    }
}

/// Gaussian clusters with controllable overlap; deterministic per seed.
pub fn synth_blobs(spec: &BlobSpec, seed: u64, stream_tag: u64) -> Result<LabeledDataset> {
    spec.validate()?;
    let means = spec.class_means();
    let mut rng = rng::stream(seed, &[tag::BLOBS, stream_tag]);
    let mut data = LabeledDataset::empty(spec.dim);
    let mut row = vec![0.0; spec.dim];
    for (c, mean) in means.iter().enumerate() {
        for _ in 0..spec.per_class {
            for (v, m) in row.iter_mut().zip(mean) {
                let n: f64 = StandardNormal.sample(&mut rng);
                *v = m + spec.spread * n;
            }
            data.push(&row, c);
        }
    }
    // deterministic shuffle so classes are interleaved
    let mut order: Vec<usize> = (0..data.len()).collect();
    for i in (1..order.len()).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    Ok(data.subset(&order))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{self, Architecture};

    fn spec() -> BlobSpec {
        BlobSpec {
            classes: 4,
            dim: 8,
            per_class: 50,
            spread: 0.3,
            radius: 4.0,
            confusable_pair: None,
            pair_distance: 1.0,
        }
    }

    #[test]
    fn per_class_zero_is_an_error() {
        let mut s = spec();
        s.per_class = 0;
        assert!(synth_blobs(&s, 1, 0).is_err());
    }

    #[test]
    fn means_respect_minimum_distance() {
        let mut s = spec();
        s.confusable_pair = Some((1, 3));
        s.pair_distance = 1.5;
        assert!((s.min_mean_distance() - 1.5).abs() < 1e-12);
        let s2 = spec();
        assert!((s2.min_mean_distance() - 4.0 * (2.0f64).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn near_zero_spread_is_perfectly_separable() {
        let mut s = spec();
        s.spread = 1e-6;
        let data = synth_blobs(&s, 7, 0).unwrap();
        let arch = Architecture::new(s.dim, vec![], s.classes).unwrap();
        let mut params = nn::ParamVector::zeros(arch.param_count());
        // 30 full-batch steps is plenty for separated blobs
        for _ in 0..30 {
            let g = nn::gradient(&params, &arch, data.features(), data.labels()).unwrap();
            params.add_scaled_in_place(&g, -0.5);
        }
        let preds = nn::predict(&params, &arch, data.features()).unwrap();
        let correct = preds
            .iter()
            .zip(data.labels())
            .filter(|(p, y)| p == y)
            .count();
        assert_eq!(correct, data.len());
    }

    #[test]
    fn blob_generation_is_deterministic() {
        let a = synth_blobs(&spec(), 9, 1).unwrap();
        let b = synth_blobs(&spec(), 9, 1).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn histogram_counts_every_class() {
        let data = synth_blobs(&spec(), 3, 0).unwrap();
        assert_eq!(data.class_histogram(4), vec![50, 50, 50, 50]);
    }
}
