//! Baseline aggregation rules: plain averaging, oracle filtering, and the
//! geometric-median rule.

use crate::nn::params::mean_of;
use crate::nn::ParamVector;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BaselineMethod {
    FedAvg,
    FedOracle,
    Rfa,
}

impl BaselineMethod {
    pub fn name(&self) -> &'static str {
        match self {
            BaselineMethod::FedAvg => "fedavg",
            BaselineMethod::FedOracle => "fedoracle",
            BaselineMethod::Rfa => "rfa",
        }
    }
}

/// Geometric median by Weiszfeld iteration from the mean, stopping after 50
/// iterations or a relative movement below 1e-8.
pub fn geometric_median(points: &[ParamVector]) -> Result<ParamVector> {
    let refs: Vec<&ParamVector> = points.iter().collect();
    let mut estimate = mean_of(&refs)?;
    for _ in 0..50 {
        let mut weight_sum = 0.0;
        let mut next = ParamVector::zeros(estimate.len());
        let mut coincident = None;
        for p in points {
            let dist = p.sub(&estimate)?.l2_norm();
            if dist < 1e-12 {
                coincident = Some(p);
                continue;
            }
            let w = 1.0 / dist;
            next.add_scaled_in_place(p, w);
            weight_sum += w;
        }
        if weight_sum == 0.0 {
            // every point coincides with the estimate
            return Ok(estimate);
        }
        let mut next = next.scale(1.0 / weight_sum);
        if let Some(p) = coincident {
            // standard correction: stay at the data point unless the pull
            // away from it is strong
            let pull = next.sub(p)?.l2_norm();
            if pull < 1e-12 {
                return Ok(p.clone());
            }
            next = p.add(&next.sub(p)?.scale(0.5))?;
        }
        let movement = next.sub(&estimate)?.l2_norm();
        let scale = estimate.l2_norm().max(1.0);
        estimate = next;
        if movement / scale < 1e-8 {
            break;
        }
    }
    Ok(estimate)
}

/// Apply a baseline rule; returns the new global model and the participant
/// indices whose updates entered the aggregate.
pub fn baseline_aggregate(
    method: BaselineMethod,
    global: &ParamVector,
    updates: &[ParamVector],
    malicious: &[bool],
) -> Result<(ParamVector, Vec<usize>)> {
    if updates.is_empty() {
        return Err(Error::EmptyDataset("baseline aggregation needs updates"));
    }
    match method {
        BaselineMethod::FedAvg => {
            let accepted: Vec<usize> = (0..updates.len()).collect();
            Ok((super::aggregate(global, updates)?, accepted))
        }
        BaselineMethod::FedOracle => {
            let accepted: Vec<usize> = (0..updates.len()).filter(|&i| !malicious[i]).collect();
            if accepted.is_empty() {
                return Err(Error::EmptyDataset("oracle found no benign updates"));
            }
            let benign: Vec<ParamVector> =
                accepted.iter().map(|&i| updates[i].clone()).collect();
            Ok((super::aggregate(global, &benign)?, accepted))
        }
        BaselineMethod::Rfa => {
            let median = geometric_median(updates)?;
            let accepted: Vec<usize> = (0..updates.len()).collect();
            Ok((global.add(&median)?, accepted))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pv(v: &[f64]) -> ParamVector {
        ParamVector(v.to_vec())
    }

    #[test]
    fn oracle_with_all_benign_equals_fedavg() {
        let g = pv(&[0.0, 0.0]);
        let updates = [pv(&[1.0, 0.0]), pv(&[0.0, 1.0])];
        let flags = [false, false];
        let (avg, _) =
            baseline_aggregate(BaselineMethod::FedAvg, &g, &updates, &flags).unwrap();
        let (oracle, accepted) =
            baseline_aggregate(BaselineMethod::FedOracle, &g, &updates, &flags).unwrap();
        assert_eq!(avg, oracle);
        assert_eq!(accepted, vec![0, 1]);
    }

    #[test]
    fn oracle_drops_malicious_updates() {
        let g = pv(&[0.0]);
        let updates = [pv(&[1.0]), pv(&[-99.0])];
        let (out, accepted) =
            baseline_aggregate(BaselineMethod::FedOracle, &g, &updates, &[false, true])
                .unwrap();
        assert_eq!(out, pv(&[1.0]));
        assert_eq!(accepted, vec![0]);
    }

    #[test]
    fn rfa_majority_wins() {
        let v = pv(&[1.0, 1.0]);
        let w = pv(&[10.0, -4.0]);
        let median = geometric_median(&[v.clone(), v.clone(), w.clone()]).unwrap();
        let to_v = median.sub(&v).unwrap().l2_norm();
        let to_w = median.sub(&w).unwrap().l2_norm();
        assert!(to_v < to_w);
        assert!(to_v < 1e-6, "median pinned to the majority point");
    }

    #[test]
    fn rfa_one_dimensional_oracle() {
        let points = [pv(&[0.0]), pv(&[0.0]), pv(&[0.0]), pv(&[10.0])];
        let median = geometric_median(&points).unwrap();
        assert!(median.0[0].abs() < 1e-3, "got {}", median.0[0]);
    }

    #[test]
    fn rfa_identical_points_return_immediately() {
        let points = [pv(&[2.0, 3.0]), pv(&[2.0, 3.0])];
        assert_eq!(geometric_median(&points).unwrap(), pv(&[2.0, 3.0]));
    }
}
