//! Validation-report forging by adversary-controlled validators.
//!
//! Both attacks estimate the benign validators' reports from the malicious
//! validators' own truthful evaluations, then submit crafted reports that
//! raise the scores of malicious representatives and depress benign ones
//! while trying to stay inside the server's outlier envelope.

use crate::validation::{outlier, ForgeContext, NMatrix, ReportForger};
use crate::{Error, Result};

/// Registered validator-attack names.
pub fn forger_names() -> &'static [&'static str] {
    &["none", "fa_adp", "fa_adv"]
}

pub fn forger_by_name(name: &str) -> Result<Option<Box<dyn ReportForger>>> {
    match name {
        "none" => Ok(None),
        "fa_adv" => Ok(Some(Box::new(FaAdv::default()))),
        "fa_adp" => Ok(Some(Box::new(FaAdp::default()))),
        other => Err(Error::UnknownStrategy {
            family: "validator attack",
            name: other.to_string(),
            known: forger_names().join(", "),
        }),
    }
}

/// Per-cell mean over the malicious validators' observed truthful cells;
/// this doubles as the attacker's estimate of the benign mean report.
fn estimate_benign(own: &[NMatrix]) -> Vec<f64> {
    let reps = own[0].reps;
    let classes = own[0].classes;
    let mut sum = vec![0.0; reps * classes];
    let mut count = vec![0usize; reps * classes];
    for n in own {
        for e in 0..reps {
            for c in 0..classes {
                if let Some(v) = n.get(e, c) {
                    sum[e * classes + c] += v;
                    count[e * classes + c] += 1;
                }
            }
        }
    }
    sum.iter()
        .zip(&count)
        .map(|(s, &k)| if k > 0 { s / k as f64 } else { 0.0 })
        .collect()
}

/// Truthful matrices with missing cells filled from the estimate.
fn fill_missing(own: &[NMatrix], estimate: &[f64]) -> Vec<Vec<f64>> {
    let classes = own[0].classes;
    own.iter()
        .map(|n| {
            (0..n.reps * classes)
                .map(|i| n.get(i / classes, i % classes).unwrap_or(estimate[i]))
                .collect()
        })
        .collect()
}

fn score_of(mean_row: &[f64]) -> f64 {
    mean_row.iter().cloned().fold(f64::INFINITY, f64::min)
}

fn argmin_class(mean_row: &[f64]) -> usize {
    let mut best = 0;
    for (c, &v) in mean_row.iter().enumerate() {
        if v < mean_row[best] {
            best = c;
        }
    }
    best
}

/// Representatives ranked descending by score (ties to the lower index);
/// the first `accept_count` pass the filter.
fn ranking(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    order
}

/// One crafted cell: all malicious validators write `injected` into
/// (rep, class) so the estimated validator mean lands on `target_mean`.
#[derive(Clone, Debug, PartialEq)]
pub struct CraftedCell {
    pub rep: usize,
    pub class: usize,
    pub injected: f64,
    pub target_mean: f64,
}

pub struct AdvOutcome {
    /// Complete crafted matrices, one per malicious validator.
    pub matrices: Vec<Vec<f64>>,
    pub cells: Vec<CraftedCell>,
}

/// Report forging by minimal targeted alteration.
///
/// Representatives are processed in order of score distance from the
/// bottom-ranked one. A filtered malicious representative is pulled up to
/// just above the lowest accepted score; an accepted benign representative
/// is pushed down to just below the highest filtered score. Each move
/// rewrites a single (representative, arg-min class) cell in every
/// malicious validator's report, solving the mean equation exactly. When a
/// stealth check is supplied (the server runs outlier detection), the
/// attack simulates it after every move and stops before the first move
/// that would expose the malicious validators.
#[allow(clippy::too_many_arguments)]
pub fn fa_adv_craft(
    benign_estimate: &[f64],
    own_filled: &[Vec<f64>],
    rep_malicious: &[bool],
    k_benign: usize,
    accept_count: usize,
    classes: usize,
    margin_scale: f64,
    stealth: Option<&dyn Fn(&[Vec<f64>]) -> bool>,
) -> AdvOutcome {
    let k_m = own_filled.len();
    let m = rep_malicious.len();
    let mut crafted: Vec<Vec<f64>> = own_filled.to_vec();
    let mut cells = Vec::new();
    if k_m == 0 || !rep_malicious.iter().any(|&b| b) || accept_count >= m {
        return AdvOutcome {
            matrices: crafted,
            cells,
        };
    }
    let k_total = (k_benign + k_m) as f64;

    // working estimate of the per-cell validator mean
    let mut mean: Vec<f64> = (0..m * classes)
        .map(|i| {
            let own_sum: f64 = crafted.iter().map(|n| n[i]).sum();
            (k_benign as f64 * benign_estimate[i] + own_sum) / k_total
        })
        .collect();

    let scores: Vec<f64> = (0..m)
        .map(|e| score_of(&mean[e * classes..(e + 1) * classes]))
        .collect();
    let bottom = scores.iter().cloned().fold(f64::INFINITY, f64::min);
    let spread = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - bottom;
    let margin = 1e-6 + margin_scale * spread;

    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        let da = (scores[a] - bottom).abs();
        let db = (scores[b] - bottom).abs();
        da.partial_cmp(&db).unwrap().then(a.cmp(&b))
    });

    for &x in &order {
        let current: Vec<f64> = (0..m)
            .map(|e| score_of(&mean[e * classes..(e + 1) * classes]))
            .collect();
        let ranked = ranking(&current);
        let accepted = &ranked[..accept_count];
        let filtered = &ranked[accept_count..];
        let is_accepted = accepted.contains(&x);

        let target = if rep_malicious[x] && !is_accepted {
            // lowest accepted score, topped by a margin
            let boundary = accepted
                .iter()
                .map(|&e| current[e])
                .fold(f64::INFINITY, f64::min);
            Some(boundary + margin)
        } else if !rep_malicious[x] && is_accepted {
            // highest filtered score, undercut by a margin
            let boundary = filtered
                .iter()
                .map(|&e| current[e])
                .fold(f64::NEG_INFINITY, f64::max);
            Some(boundary - margin)
        } else {
            None
        };
        let Some(target) = target else { continue };

        let class = argmin_class(&mean[x * classes..(x + 1) * classes]);
        let idx = x * classes + class;
        let injected =
            (k_total * target - k_benign as f64 * benign_estimate[idx]) / k_m as f64;

        let previous: Vec<f64> = crafted.iter().map(|n| n[idx]).collect();
        for n in crafted.iter_mut() {
            n[idx] = injected;
        }
        if let Some(check) = stealth {
            if !check(&crafted) {
                for (n, prev) in crafted.iter_mut().zip(previous) {
                    n[idx] = prev;
                }
                break;
            }
        }
        mean[idx] = target;
        cells.push(CraftedCell {
            rep: x,
            class,
            injected,
            target_mean: target,
        });
    }

    AdvOutcome {
        matrices: crafted,
        cells,
    }
}

pub struct FaAdv {
    pub margin_scale: f64,
}

impl Default for FaAdv {
    fn default() -> Self {
        FaAdv { margin_scale: 0.05 }
    }
}

impl ReportForger for FaAdv {
    fn name(&self) -> &'static str {
        "fa_adv"
    }

    fn forge(&self, ctx: &ForgeContext<'_>) -> Vec<NMatrix> {
        let own = ctx.own_truthful;
        if own.is_empty() {
            return Vec::new();
        }
        let classes = own[0].classes;
        let estimate = estimate_benign(own);
        let filled = fill_missing(own, &estimate);

        // simulate the server's detector on the estimated validator set
        let stealth_check = ctx.detector.map(|method| {
            let detector = outlier::by_name(method).expect("validated config");
            let estimate = estimate.clone();
            let k_b = ctx.benign_validators;
            let contamination = ctx.contamination;
            move |crafted: &[Vec<f64>]| -> bool {
                let mut vectors: Vec<Vec<f64>> = (0..k_b).map(|_| estimate.clone()).collect();
                vectors.extend(crafted.iter().cloned());
                let kept = detector.kept(&vectors, contamination);
                (k_b..k_b + crafted.len()).all(|i| kept.contains(&i))
            }
        });
        let stealth_ref: Option<&dyn Fn(&[Vec<f64>]) -> bool> = match &stealth_check {
            Some(f) => Some(f),
            None => None,
        };

        let outcome = fa_adv_craft(
            &estimate,
            &filled,
            ctx.malicious_reps,
            ctx.benign_validators,
            ctx.accept_count,
            classes,
            self.margin_scale,
            stealth_ref,
        );

        // submit the truthful report with only the designated cells altered
        own.iter()
            .enumerate()
            .map(|(v, truthful)| {
                let mut n = truthful.clone();
                for cell in &outcome.cells {
                    n.set(cell.rep, cell.class, Some(outcome.matrices[v][cell.rep * classes + cell.class]));
                }
                n
            })
            .collect()
    }
}

/// Gradient-ascent report forging over three objectives: raise malicious
/// representatives' scores, depress benign ones, and stay near the benign
/// mean. Scores enter the objective through a signed square, so the ascent
/// direction always increases a malicious score regardless of its sign.
pub struct FaAdp {
    pub step: f64,
    pub iterations: usize,
    pub grid: Vec<f64>,
}

impl Default for FaAdp {
    fn default() -> Self {
        FaAdp {
            step: 0.01,
            iterations: 1000,
            grid: vec![0.1, 1.0, 10.0],
        }
    }
}

pub struct AdpOutcome {
    pub matrices: Vec<Vec<f64>>,
    /// Mean over malicious representatives' cells after each iteration.
    pub trajectory: Vec<f64>,
}

/// One (lambda1, lambda2) ascent run.
pub fn fa_adp_optimize(
    benign_estimate: &[f64],
    own_filled: &[Vec<f64>],
    rep_malicious: &[bool],
    classes: usize,
    lambda1: f64,
    lambda2: f64,
    step: f64,
    iterations: usize,
) -> AdpOutcome {
    let k_m = own_filled.len();
    let m = rep_malicious.len();
    let mut crafted: Vec<Vec<f64>> = own_filled.to_vec();
    let mut trajectory = Vec::with_capacity(iterations);
    if k_m == 0 {
        return AdpOutcome {
            matrices: crafted,
            trajectory,
        };
    }

    let malicious_cells: Vec<usize> = (0..m)
        .filter(|&e| rep_malicious[e])
        .flat_map(|e| (e * classes..(e + 1) * classes))
        .collect();

    for _ in 0..iterations {
        // mean over the malicious validators' rows
        let mut mu = vec![0.0; m * classes];
        for n in &crafted {
            for (acc, &v) in mu.iter_mut().zip(n.iter()) {
                *acc += v;
            }
        }
        for v in mu.iter_mut() {
            *v /= k_m as f64;
        }

        // score terms: signed-square subgradient at the arg-min class
        for e in 0..m {
            let row = &mu[e * classes..(e + 1) * classes];
            let cl = argmin_class(row);
            let g = row[cl];
            let pull = 2.0 * g.abs() / k_m as f64;
            let delta = if rep_malicious[e] {
                step * pull
            } else {
                -step * lambda1 * pull
            };
            for n in crafted.iter_mut() {
                n[e * classes + cl] += delta;
            }
        }

        // stealth term: move every cell toward the benign estimate without
        // overshooting it
        if lambda2 > 0.0 {
            for n in crafted.iter_mut() {
                for (v, &b) in n.iter_mut().zip(benign_estimate) {
                    let diff = *v - b;
                    let pull = (step * lambda2).min(diff.abs());
                    *v -= pull * diff.signum();
                }
            }
        }

        let mal_mean = malicious_cells
            .iter()
            .map(|&i| crafted.iter().map(|n| n[i]).sum::<f64>() / k_m as f64)
            .sum::<f64>()
            / malicious_cells.len().max(1) as f64;
        trajectory.push(mal_mean);
    }

    AdpOutcome {
        matrices: crafted,
        trajectory,
    }
}

impl ReportForger for FaAdp {
    fn name(&self) -> &'static str {
        "fa_adp"
    }

    fn forge(&self, ctx: &ForgeContext<'_>) -> Vec<NMatrix> {
        let own = ctx.own_truthful;
        if own.is_empty() || !ctx.malicious_reps.iter().any(|&b| b) {
            return own.to_vec();
        }
        let classes = own[0].classes;
        let m = ctx.malicious_reps.len();
        let estimate = estimate_benign(own);
        let filled = fill_missing(own, &estimate);
        let k_b = ctx.benign_validators as f64;
        let k_m = filled.len() as f64;

        // grid search: simulate the filter on the estimated validator set
        // and keep the cell that slips the most malicious representatives
        // through, breaking ties by total malicious score
        let mut best: Option<(usize, f64, Vec<Vec<f64>>)> = None;
        for &l1 in &self.grid {
            for &l2 in &self.grid {
                let outcome = fa_adp_optimize(
                    &estimate,
                    &filled,
                    ctx.malicious_reps,
                    classes,
                    l1,
                    l2,
                    self.step,
                    self.iterations,
                );
                let scores: Vec<f64> = (0..m)
                    .map(|e| {
                        let mean_row: Vec<f64> = (0..classes)
                            .map(|c| {
                                let i = e * classes + c;
                                let own_sum: f64 =
                                    outcome.matrices.iter().map(|n| n[i]).sum();
                                (k_b * estimate[i] + own_sum) / (k_b + k_m)
                            })
                            .collect();
                        score_of(&mean_row)
                    })
                    .collect();
                let ranked = ranking(&scores);
                let slipped = ranked[..ctx.accept_count]
                    .iter()
                    .filter(|&&e| ctx.malicious_reps[e])
                    .count();
                let mal_total: f64 = (0..m)
                    .filter(|&e| ctx.malicious_reps[e])
                    .map(|e| scores[e])
                    .sum();
                let better = match &best {
                    None => true,
                    Some((s, t, _)) => slipped > *s || (slipped == *s && mal_total > *t),
                };
                if better {
                    best = Some((slipped, mal_total, outcome.matrices));
                }
            }
        }
        let matrices = best.expect("non-empty grid").2;

        matrices
            .into_iter()
            .map(|flat| {
                let mut n = NMatrix::new(m, classes);
                for e in 0..m {
                    for c in 0..classes {
                        n.set(e, c, Some(flat[e * classes + c]));
                    }
                }
                n
            })
            .collect()
    }
}
