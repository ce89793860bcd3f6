//! Outlier detection over per-validator report vectors.
//!
//! Each validator's complete (imputed) report is flattened to a vector;
//! detectors return the indices of validators whose reports survive.
//! Detection is disabled (everything kept, with a warning) below three
//! validators, and a detector never drops more than the configured
//! contamination fraction.

use log::warn;

use super::linalg;
use crate::{Error, Result};

pub trait OutlierDetector {
    fn name(&self) -> &'static str;
    /// Indices of validators to keep.
    fn kept(&self, vectors: &[Vec<f64>], contamination: f64) -> Vec<usize>;
}

/// Registered strategy names.
pub fn names() -> &'static [&'static str] {
    &["robust_mahalanobis", "mad_zscore", "none"]
}

pub fn by_name(name: &str) -> Result<Box<dyn OutlierDetector>> {
    match name {
        "robust_mahalanobis" => Ok(Box::new(RobustMahalanobis)),
        "mad_zscore" => Ok(Box::new(MadZscore)),
        "none" => Ok(Box::new(NoDetection)),
        other => Err(Error::UnknownStrategy {
            family: "outlier detection",
            name: other.to_string(),
            known: names().join(", "),
        }),
    }
}

struct NoDetection;

impl OutlierDetector for NoDetection {
    fn name(&self) -> &'static str {
        "none"
    }

    fn kept(&self, vectors: &[Vec<f64>], _contamination: f64) -> Vec<usize> {
        (0..vectors.len()).collect()
    }
}

fn median_of(mut values: Vec<f64>) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n % 2 == 0 {
        (values[n / 2 - 1] + values[n / 2]) * 0.5
    } else {
        values[n / 2]
    }
}

fn too_few(k: usize) -> bool {
    if k < 3 {
        warn!("outlier detection disabled: only {k} validators");
        return true;
    }
    false
}

/// Keep at most `ceil(contamination * k)` flagged validators, preferring
/// the most extreme scores. Scores tied with unflagged ones stay kept.
fn cap_flags(scores: &[f64], flagged: Vec<usize>, contamination: f64) -> Vec<usize> {
    let cap = (contamination * scores.len() as f64).ceil() as usize;
    if flagged.len() <= cap {
        return flagged;
    }
    let mut ranked = flagged;
    ranked.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    ranked.truncate(cap);
    ranked
}

/// Modified z-score per coordinate (median / MAD with the 0.6745 consistency
/// factor); a validator is flagged when any coordinate exceeds 3.5.
struct MadZscore;

const MAD_CUTOFF: f64 = 3.5;

impl OutlierDetector for MadZscore {
    fn name(&self) -> &'static str {
        "mad_zscore"
    }

    fn kept(&self, vectors: &[Vec<f64>], contamination: f64) -> Vec<usize> {
        let k = vectors.len();
        if too_few(k) {
            return (0..k).collect();
        }
        let dim = vectors[0].len();
        // per-coordinate medians and MADs; a pooled MAD floor guards
        // against by-chance tiny MADs at this sample size
        let mut meds = vec![0.0; dim];
        let mut mads = vec![0.0; dim];
        for c in 0..dim {
            let column: Vec<f64> = vectors.iter().map(|v| v[c]).collect();
            meds[c] = median_of(column.clone());
            mads[c] = median_of(column.iter().map(|x| (x - meds[c]).abs()).collect());
        }
        let mad_floor = median_of(mads.clone());
        let mut max_z = vec![0.0f64; k];
        for c in 0..dim {
            let mad = mads[c].max(mad_floor);
            for (v, vector) in vectors.iter().enumerate() {
                let dev = (vector[c] - meds[c]).abs();
                let z = if mad > 1e-12 {
                    0.6745 * dev / mad
                } else if dev > 1e-9 {
                    f64::INFINITY
                } else {
                    0.0
                };
                max_z[v] = max_z[v].max(z);
            }
        }
        let flagged: Vec<usize> = (0..k).filter(|&v| max_z[v] > MAD_CUTOFF).collect();
        let flagged = cap_flags(&max_z, flagged, contamination);
        (0..k).filter(|v| !flagged.contains(v)).collect()
    }
}

/// Mahalanobis distances from the coordinate-wise median under a
/// shrinkage-regularised covariance fitted on the central
/// `1 - contamination` fraction; the threshold is the larger of the
/// `1 - contamination` distance quantile and a robust z cut on the
/// distances themselves, so tight benign clouds are never split.
struct RobustMahalanobis;

impl OutlierDetector for RobustMahalanobis {
    fn name(&self) -> &'static str {
        "robust_mahalanobis"
    }

    fn kept(&self, vectors: &[Vec<f64>], contamination: f64) -> Vec<usize> {
        let k = vectors.len();
        if too_few(k) {
            return (0..k).collect();
        }
        let dim = vectors[0].len();
        let center: Vec<f64> = (0..dim)
            .map(|c| median_of(vectors.iter().map(|v| v[c]).collect()))
            .collect();

        // central subset by Euclidean distance from the median center
        let euclid: Vec<f64> = vectors
            .iter()
            .map(|v| {
                v.iter()
                    .zip(&center)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect();
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| euclid[a].partial_cmp(&euclid[b]).unwrap().then(a.cmp(&b)));
        let central_count = (((1.0 - contamination) * k as f64).ceil() as usize).clamp(2, k);
        let central = &order[..central_count];

        // shrinkage covariance of the central subset
        let mut cov = vec![0.0; dim * dim];
        for &v in central {
            let d: Vec<f64> = vectors[v].iter().zip(&center).map(|(a, b)| a - b).collect();
            for i in 0..dim {
                for j in 0..=i {
                    cov[i * dim + j] += d[i] * d[j];
                }
            }
        }
        for i in 0..dim {
            for j in 0..=i {
                cov[i * dim + j] /= central_count as f64;
                cov[j * dim + i] = cov[i * dim + j];
            }
        }
        // with fewer validators than report dimensions the sample covariance
        // is rank deficient; strong shrinkage toward a scaled identity keeps
        // distances stable for points outside the central subspace
        let trace: f64 = (0..dim).map(|i| cov[i * dim + i]).sum();
        let ridge = trace / dim as f64 + 1e-9;
        for i in 0..dim {
            cov[i * dim + i] += ridge;
        }

        let chol = match linalg::cholesky(&cov, dim) {
            Some(l) => l,
            None => {
                warn!("covariance not positive definite; outlier detection skipped");
                return (0..k).collect();
            }
        };
        let dist: Vec<f64> = vectors
            .iter()
            .map(|v| {
                let d: Vec<f64> = v.iter().zip(&center).map(|(a, b)| a - b).collect();
                let x = linalg::cholesky_solve(&chol, dim, &d);
                d.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>().max(0.0).sqrt()
            })
            .collect();

        // contamination quantile of the distances
        let mut sorted = dist.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let q_idx = (((1.0 - contamination) * k as f64).ceil() as usize).clamp(1, k) - 1;
        let quantile = sorted[q_idx];
        // scale cut from the central subset's own distances so a benign
        // cloud with ordinary spread is never split
        let central_dists: Vec<f64> = central.iter().map(|&v| dist[v]).collect();
        let mut cd = central_dists;
        cd.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let q75_central = cd[((0.75 * cd.len() as f64).ceil() as usize).clamp(1, cd.len()) - 1];
        let threshold = quantile.max(3.0 * q75_central);

        let flagged: Vec<usize> = (0..k).filter(|&v| dist[v] > threshold + 1e-12).collect();
        let flagged = cap_flags(&dist, flagged, contamination);
        (0..k).filter(|v| !flagged.contains(v)).collect()
    }
}
