//! Dynamic clustering of local updates into representative models.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{RepMapping, RepresentativeModel};
use crate::nn::ParamVector;
use crate::{Error, Result};

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn distinct_points(points: &[ParamVector]) -> usize {
    let mut keys: Vec<Vec<u64>> = points
        .iter()
        .map(|p| p.0.iter().map(|v| v.to_bits()).collect())
        .collect();
    keys.sort();
    keys.dedup();
    keys.len()
}

/// Lloyd's algorithm from k-means++ seeding, iterated to an assignment
/// fixed point or 100 rounds. Deterministic given the rng.
pub fn kmeans(points: &[ParamVector], k: usize, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
    let n = points.len();
    if k == 0 || k > n {
        return Err(Error::InvalidClusterCount {
            k,
            reason: format!("need 1 <= k <= {n} points"),
        });
    }
    if k > distinct_points(points) {
        return Err(Error::InvalidClusterCount {
            k,
            reason: format!("only {} distinct points", distinct_points(points)),
        });
    }

    // k-means++ seeding
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    centroids.push(points[rng.random_range(0..n)].0.clone());
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(&p.0, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random_range(0.0..total);
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            // all remaining mass zero: duplicates were excluded above, so
            // this can only happen transiently; pick uniformly
            rng.random_range(0..n)
        };
        centroids.push(points[next].0.clone());
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(&p.0, centroids.last().unwrap()));
        }
    }

    let dim = points[0].len();
    let mut assignment = vec![usize::MAX; n];
    for _ in 0..100 {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (c, centroid) in centroids.iter().enumerate() {
                let d = sq_dist(&p.0, centroid);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            if assignment[i] != best {
                assignment[i] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (i, p) in points.iter().enumerate() {
            counts[assignment[i]] += 1;
            for (s, &v) in sums[assignment[i]].iter_mut().zip(&p.0) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for s in sums[c].iter_mut() {
                    *s /= counts[c] as f64;
                }
                centroids[c] = sums[c].clone();
            }
            // empty clusters keep their centroid; the next assignment pass
            // may repopulate them
        }
    }
    Ok(assignment)
}

/// Mean silhouette score with Euclidean distances. Singleton clusters
/// contribute 0, as does a degenerate clustering with zero distances.
pub fn silhouette(points: &[ParamVector], assignment: &[usize]) -> Result<f64> {
    let n = points.len();
    if n != assignment.len() || n == 0 {
        return Err(Error::DimensionMismatch {
            context: "silhouette assignment",
            expected: n,
            got: assignment.len(),
        });
    }
    let k = assignment.iter().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; k];
    for &a in assignment {
        sizes[a] += 1;
    }

    let mut total = 0.0;
    for i in 0..n {
        let own = assignment[i];
        if sizes[own] <= 1 {
            continue; // contributes 0
        }
        let mut dist_sums = vec![0.0; k];
        for j in 0..n {
            if i == j {
                continue;
            }
            dist_sums[assignment[j]] += sq_dist(&points[i].0, &points[j].0).sqrt();
        }
        let a = dist_sums[own] / (sizes[own] - 1) as f64;
        let mut b = f64::INFINITY;
        for c in 0..k {
            if c != own && sizes[c] > 0 {
                b = b.min(dist_sums[c] / sizes[c] as f64);
            }
        }
        if !b.is_finite() {
            continue;
        }
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    Ok(total / n as f64)
}

/// Evaluate K-means for each cluster count in `[k1, min(k2, n-1)]`, keep the
/// count with the best silhouette (ties to the smaller count), and build one
/// representative per cluster as the global model plus the mean member
/// update. Contributions are uniform over members.
pub fn cluster_generate(
    global: &ParamVector,
    updates: &[ParamVector],
    k1: usize,
    k2: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<RepresentativeModel>, RepMapping)> {
    let n = updates.len();
    if n < 3 {
        return Err(Error::InsufficientSamples {
            context: "cluster generation needs at least three updates",
            needed: 3,
            available: n,
        });
    }
    let hi = k2.min(n - 1);
    if k1 < 2 || k1 > hi {
        return Err(Error::InvalidClusterCount {
            k: k1,
            reason: format!("need 2 <= k1 <= min(k2, n-1) = {hi}"),
        });
    }
    let max_k = distinct_points(updates).min(hi);

    let mut best: Option<(f64, Vec<usize>)> = None;
    for k in k1..=max_k.max(k1) {
        let assignment = if k <= max_k {
            kmeans(updates, k, rng)?
        } else {
            // fewer distinct points than k1: everything is (near-)identical,
            // fall back to a single-cluster-like assignment via k = max_k
            kmeans(updates, max_k.max(1), rng)?
        };
        let score = silhouette(updates, &assignment)?;
        let better = match &best {
            None => true,
            Some((s, _)) => score > *s,
        };
        if better {
            best = Some((score, assignment));
        }
    }
    let (_, assignment) = best.expect("at least one clustering evaluated");

    // renumber clusters densely in first-appearance order
    let mut relabel: Vec<Option<usize>> = vec![None; n];
    let mut next = 0;
    let mut dense = vec![0usize; n];
    for (i, &a) in assignment.iter().enumerate() {
        let label = relabel[a].unwrap_or_else(|| {
            let l = next;
            relabel[a] = Some(l);
            next += 1;
            l
        });
        dense[i] = label;
    }

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); next];
    for (i, &c) in dense.iter().enumerate() {
        members[c].push(i);
    }

    let mut reps = Vec::with_capacity(next);
    for cluster in &members {
        let mut mean = ParamVector::zeros(updates[0].len());
        for &i in cluster {
            mean.add_scaled_in_place(&updates[i], 1.0);
        }
        for v in mean.0.iter_mut() {
            *v /= cluster.len() as f64;
        }
        let share = 1.0 / cluster.len() as f64;
        reps.push(RepresentativeModel {
            params: global.add(&mean)?,
            update: mean,
            contributions: cluster.iter().map(|&i| (i, share)).collect(),
            base_id: None,
        });
    }
    Ok((reps, RepMapping { members }))
}
