//! Bijective representative generation.
//!
//! Each local update serves as the base of exactly one representative. The
//! representative is the global model plus `(1 - tau)` of the base update
//! plus `tau` times a weighted mean of the sibling updates, where sibling
//! `u` of base `w` carries weight `s(w, u) * |w| / |u|` and
//! `s(w, u) = max(0, cos(w, u))`. Opposing updates therefore contribute
//! nothing, and siblings are rescaled to the base's magnitude.

use super::{RepMapping, RepresentativeModel};
use crate::nn::ParamVector;
use crate::{Error, Result};

/// Rectified cosine similarity in [0, 1].
pub fn similarity(w: &ParamVector, u: &ParamVector) -> Result<f64> {
    Ok(w.cosine_similarity(u)?.max(0.0))
}

/// One representative per update plus the identity mapping.
///
/// Degenerate cases: a base whose siblings all have zero similarity (or
/// zero norm) degenerates to `global + base`, with the full contribution
/// weight on the base.
pub fn bijective_generate(
    global: &ParamVector,
    updates: &[ParamVector],
    tau: f64,
) -> Result<(Vec<RepresentativeModel>, RepMapping)> {
    if updates.len() < 2 {
        return Err(Error::InsufficientSamples {
            context: "bijective generation needs at least two updates",
            needed: 2,
            available: updates.len(),
        });
    }
    let norms: Vec<f64> = updates.iter().map(|u| u.l2_norm()).collect();
    let mut reps = Vec::with_capacity(updates.len());

    for (b, base) in updates.iter().enumerate() {
        let mut weights = vec![0.0; updates.len()];
        let mut weight_sum = 0.0;
        for (j, sibling) in updates.iter().enumerate() {
            if j == b || norms[j] == 0.0 {
                continue;
            }
            let w = similarity(base, sibling)? * norms[b] / norms[j];
            weights[j] = w;
            weight_sum += w;
        }

        let mut update = base.scale(1.0 - tau);
        let mut contributions: Vec<(usize, f64)> = Vec::new();
        if weight_sum > 0.0 && tau > 0.0 {
            let mut sibling_term = ParamVector::zeros(base.len());
            for (j, sibling) in updates.iter().enumerate() {
                if weights[j] > 0.0 {
                    let share = weights[j] / weight_sum;
                    sibling_term.add_scaled_in_place(sibling, share);
                    contributions.push((j, tau * share));
                }
            }
            update.add_scaled_in_place(&sibling_term, tau);
            contributions.push((b, 1.0 - tau));
        } else {
            // no agreeing siblings: the representative is the base itself
            update = base.clone();
            contributions.push((b, 1.0));
        }
        contributions.sort_by(|a, b| a.0.cmp(&b.0));

        reps.push(RepresentativeModel {
            params: global.add(&update)?,
            update,
            contributions,
            base_id: Some(b),
        });
    }
    let mapping = RepMapping {
        members: (0..updates.len()).map(|i| vec![i]).collect(),
    };
    Ok((reps, mapping))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    fn pv(v: &[f64]) -> ParamVector {
        ParamVector(v.to_vec())
    }

    #[test]
    fn similarity_examples() {
        let v = pv(&[0.5, -2.0]);
        assert!((similarity(&v, &v).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(similarity(&v, &v.scale(-1.0)).unwrap(), 0.0);
        let s = similarity(&pv(&[1.0, 1.0]), &pv(&[1.0, 0.0])).unwrap();
        assert!((s - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn tau_zero_returns_the_local_model() {
        let global = pv(&[1.0, 2.0]);
        let updates = [pv(&[0.5, 0.0]), pv(&[0.4, 0.1])];
        let (reps, _) = bijective_generate(&global, &updates, 0.0).unwrap();
        for (rep, u) in reps.iter().zip(&updates) {
            let expected = global.add(u).unwrap();
            for (a, b) in rep.params.0.iter().zip(&expected.0) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn identical_updates_reproduce_themselves() {
        let global = pv(&[0.0, 0.0, 1.0]);
        let v = pv(&[1.0, -2.0, 0.5]);
        let (reps, _) = bijective_generate(&global, &[v.clone(), v.clone()], 0.75).unwrap();
        for rep in &reps {
            let expected = global.add(&v).unwrap();
            for (a, b) in rep.params.0.iter().zip(&expected.0) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    /// Straight-line reimplementation of the representative formula used as
    /// an independent oracle.
    fn brute_force_rep(
        global: &[f64],
        updates: &[Vec<f64>],
        base: usize,
        tau: f64,
    ) -> Vec<f64> {
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let cos = |a: &[f64], b: &[f64]| {
            let d: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            let na = norm(a);
            let nb = norm(b);
            if na == 0.0 || nb == 0.0 {
                0.0
            } else {
                d / (na * nb)
            }
        };
        let w = &updates[base];
        let dim = w.len();
        let mut num = vec![0.0; dim];
        let mut den = 0.0;
        for (j, u) in updates.iter().enumerate() {
            if j == base || norm(u) == 0.0 {
                continue;
            }
            let s = cos(w, u).max(0.0);
            let coeff = s * norm(w) / norm(u);
            for (acc, &ui) in num.iter_mut().zip(u) {
                *acc += coeff * ui;
            }
            den += coeff;
        }
        let mut out = vec![0.0; dim];
        for i in 0..dim {
            let sibling = if den > 0.0 { num[i] / den } else { 0.0 };
            let base_coeff = if den > 0.0 && tau > 0.0 { 1.0 - tau } else { 1.0 };
            out[i] = global[i] + base_coeff * w[i] + tau * sibling * if den > 0.0 { 1.0 } else { 0.0 };
        }
        out
    }

    #[test]
    fn matches_brute_force_on_the_spec_example() {
        let global = pv(&[0.0, 0.0]);
        let updates = [pv(&[2.0, 0.0]), pv(&[1.0, 1.0]), pv(&[0.0, -3.0])];
        let (reps, _) = bijective_generate(&global, &updates, 0.75).unwrap();
        let raw: Vec<Vec<f64>> = updates.iter().map(|u| u.0.clone()).collect();
        for (b, rep) in reps.iter().enumerate() {
            let oracle = brute_force_rep(&global.0, &raw, b, 0.75);
            for (a, o) in rep.params.0.iter().zip(&oracle) {
                assert!((a - o).abs() < 1e-12, "base {b}: {a} vs {o}");
            }
        }
    }

    #[test]
    fn matches_brute_force_on_random_instances() {
        let mut r = rng::stream(77, &[1]);
        for trial in 0..200 {
            let n = r.random_range(2..8);
            let dim = r.random_range(2..12);
            let tau = r.random_range(0.05..0.95);
            let global: Vec<f64> = (0..dim).map(|_| r.random_range(-1.0..1.0)).collect();
            let raw: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..dim).map(|_| r.random_range(-2.0..2.0)).collect())
                .collect();
            let updates: Vec<ParamVector> = raw.iter().map(|v| pv(v)).collect();
            let (reps, _) = bijective_generate(&pv(&global), &updates, tau).unwrap();
            for (b, rep) in reps.iter().enumerate() {
                let oracle = brute_force_rep(&global, &raw, b, tau);
                for (a, o) in rep.params.0.iter().zip(&oracle) {
                    let rel = (a - o).abs() / o.abs().max(1.0);
                    assert!(rel < 1e-10, "trial {trial} base {b}: {a} vs {o}");
                }
            }
        }
    }

    #[test]
    fn opposing_siblings_degenerate_to_the_base() {
        let global = pv(&[0.0, 0.0]);
        let updates = [pv(&[1.0, 0.0]), pv(&[-1.0, 0.0]), pv(&[-2.0, 0.0])];
        let (reps, _) = bijective_generate(&global, &updates, 0.75).unwrap();
        assert_eq!(reps[0].params, pv(&[1.0, 0.0]));
        assert_eq!(reps[0].contributions, vec![(0, 1.0)]);
    }

    #[test]
    fn zero_norm_siblings_are_skipped() {
        let global = pv(&[0.0, 0.0]);
        let updates = [pv(&[1.0, 0.0]), pv(&[0.0, 0.0]), pv(&[1.0, 0.0])];
        let (reps, _) = bijective_generate(&global, &updates, 0.5).unwrap();
        assert!(reps[0].contributions.iter().all(|&(j, _)| j != 1));
    }

    #[test]
    fn contributions_form_a_probability_vector() {
        let mut r = rng::stream(78, &[2]);
        for _ in 0..50 {
            let n = r.random_range(2..7);
            let updates: Vec<ParamVector> = (0..n)
                .map(|_| pv(&[r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)]))
                .collect();
            let (reps, _) =
                bijective_generate(&pv(&[0.0, 0.0]), &updates, 0.75).unwrap();
            for rep in &reps {
                let total: f64 = rep.contributions.iter().map(|(_, w)| w).sum();
                assert!((total - 1.0).abs() < 1e-9);
                assert!(rep.contributions.iter().all(|&(_, w)| w >= 0.0));
            }
        }
    }

    #[test]
    fn single_update_is_rejected() {
        let result = bijective_generate(&pv(&[0.0]), &[pv(&[1.0])], 0.75);
        assert!(result.is_err());
    }
}
