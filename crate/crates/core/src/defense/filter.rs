//! Ranking, filtering, clipping, aggregation and round scoring.

use crate::nn::ParamVector;
use crate::representative::RepMapping;
use crate::validation::{MMatrix, Projection};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct FilterOutcome {
    /// Indices of the accepted representatives.
    pub accepted_reps: Vec<usize>,
    /// Local updates resolved through the mapping, ascending and distinct.
    pub accepted_clients: Vec<usize>,
    /// Projected score per representative.
    pub scores: Vec<f64>,
    pub projection: Projection,
}

/// Score each representative by projecting the validator-mean vector (the
/// minimum over classes by default), accept the top `ceil(m / 2)` (ties to
/// the lower index), and resolve the accepted local updates through the
/// mapping.
pub fn rank_and_filter(
    m_list: &[MMatrix],
    mapping: &RepMapping,
    projection: Projection,
) -> Result<FilterOutcome> {
    if m_list.is_empty() {
        return Err(Error::EmptyDataset("filtering needs report matrices"));
    }
    let scores: Vec<f64> = m_list
        .iter()
        .map(|m| {
            let mean = m.validator_mean();
            match projection {
                Projection::Minimum => mean.iter().cloned().fold(f64::INFINITY, f64::min),
                Projection::Mean => mean.iter().sum::<f64>() / mean.len() as f64,
            }
        })
        .collect();

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    let keep = scores.len().div_ceil(2);
    let mut accepted_reps = order[..keep].to_vec();
    accepted_reps.sort_unstable();

    let mut accepted_clients: Vec<usize> = accepted_reps
        .iter()
        .flat_map(|&r| mapping.members[r].iter().copied())
        .collect();
    accepted_clients.sort_unstable();
    accepted_clients.dedup();

    Ok(FilterOutcome {
        accepted_reps,
        accepted_clients,
        scores,
        projection,
    })
}

/// Norm-bounded clipping: each update is scaled by
/// `min(1, median_norm / norm)`; zero updates pass through.
pub fn clip_updates(updates: &[ParamVector]) -> Vec<ParamVector> {
    let mut norms: Vec<f64> = updates.iter().map(|u| u.l2_norm()).collect();
    if norms.is_empty() {
        return Vec::new();
    }
    let mut sorted = norms.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    let bound = if n % 2 == 0 {
        (sorted[n / 2 - 1] + sorted[n / 2]) * 0.5
    } else {
        sorted[n / 2]
    };
    updates
        .iter()
        .zip(norms.iter_mut())
        .map(|(u, norm)| {
            if *norm > bound && *norm > 0.0 {
                u.scale(bound / *norm)
            } else {
                u.clone()
            }
        })
        .collect()
}

/// New global model: previous plus the mean of the given updates.
pub fn aggregate(global: &ParamVector, updates: &[ParamVector]) -> Result<ParamVector> {
    if updates.is_empty() {
        return Err(Error::EmptyDataset("aggregation needs updates"));
    }
    let mut mean = ParamVector::zeros(global.len());
    for u in updates {
        mean.add_scaled_in_place(u, 1.0);
    }
    for v in mean.0.iter_mut() {
        *v /= updates.len() as f64;
    }
    global.add(&mean)
}

/// Round detection rates in percent: the share of malicious updates
/// rejected and of benign updates accepted. Empty sides count as perfect.
pub fn score_round(accepted: &[usize], malicious: &[bool]) -> (f64, f64) {
    let total_mal = malicious.iter().filter(|&&m| m).count();
    let total_benign = malicious.len() - total_mal;
    let accepted_mal = accepted.iter().filter(|&&i| malicious[i]).count();
    let accepted_benign = accepted.len() - accepted_mal;
    let tpr = if total_mal == 0 {
        100.0
    } else {
        100.0 * (total_mal - accepted_mal) as f64 / total_mal as f64
    };
    let tnr = if total_benign == 0 {
        100.0
    } else {
        100.0 * accepted_benign as f64 / total_benign as f64
    };
    (tpr, tnr)
}
