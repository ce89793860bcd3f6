//! Gradient-inversion privacy probe.
//!
//! Reconstructs training inputs whose model gradient matches a target
//! vector in cosine distance, optionally with a total-variation prior and
//! jointly optimised soft labels. The input gradient of the cosine
//! objective is exact: for each candidate coordinate a forward tangent pass
//! propagates through both the forward activations and the backward deltas,
//! yielding the mixed second-order term without numerical differencing.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::nn::{Architecture, ParamVector};
use crate::rng::{self, tag};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InversionConfig {
    pub iterations: usize,
    pub step_size: f64,
    pub tv_weight: f64,
    pub batch_size: usize,
    pub knows_labels: bool,
    pub seed: u64,
    /// Treat the target as a model update (negated accumulated gradient)
    /// rather than a raw gradient.
    pub target_is_update: bool,
}

impl Default for InversionConfig {
    fn default() -> Self {
        InversionConfig {
            iterations: 2000,
            step_size: 0.1,
            tv_weight: 0.0,
            batch_size: 1,
            knows_labels: true,
            seed: 0,
            target_is_update: false,
        }
    }
}

pub struct InversionResult {
    /// Reconstructed batch, row-major (batch_size x input_dim).
    pub features: Vec<f64>,
    /// Final soft labels per sample (one-hot when labels were known).
    pub labels: Vec<Vec<f64>>,
    pub objective: f64,
    pub restarts: usize,
}

/// Per-sample forward/backward state for the tangent passes.
struct SampleTrace {
    // z[l]: input to layer l (z[0] is the sample itself)
    z: Vec<Vec<f64>>,
    // pre-activations per layer
    a: Vec<Vec<f64>>,
    p: Vec<f64>,
    // deltas per layer, already scaled by 1/batch
    delta: Vec<Vec<f64>>,
}

struct Workspace<'a> {
    arch: &'a Architecture,
    params: &'a [f64],
    shapes: Vec<(usize, usize)>,
    offsets: Vec<(usize, usize)>,
}

impl<'a> Workspace<'a> {
    fn new(arch: &'a Architecture, params: &'a ParamVector) -> Self {
        Workspace {
            arch,
            params: params.as_slice(),
            shapes: arch.layer_shapes(),
            offsets: arch.layer_offsets(),
        }
    }

    fn w(&self, l: usize) -> &[f64] {
        let (in_dim, out_dim) = self.shapes[l];
        let (w_off, _) = self.offsets[l];
        &self.params[w_off..w_off + out_dim * in_dim]
    }

    fn b(&self, l: usize) -> &[f64] {
        let (_, out_dim) = self.shapes[l];
        let (_, b_off) = self.offsets[l];
        &self.params[b_off..b_off + out_dim]
    }

    /// Forward + backward for one sample with soft labels `q`; deltas carry
    /// the 1/batch factor so the summed gradient is the batch mean.
    fn trace(&self, x: &[f64], q: &[f64], inv_batch: f64) -> SampleTrace {
        let layers = self.shapes.len();
        let mut z: Vec<Vec<f64>> = vec![x.to_vec()];
        let mut a: Vec<Vec<f64>> = Vec::with_capacity(layers);
        for l in 0..layers {
            let (in_dim, out_dim) = self.shapes[l];
            let w = self.w(l);
            let b = self.b(l);
            let zin = &z[l];
            let mut al = vec![0.0; out_dim];
            for o in 0..out_dim {
                let mut acc = b[o];
                let row = &w[o * in_dim..(o + 1) * in_dim];
                for i in 0..in_dim {
                    acc += row[i] * zin[i];
                }
                al[o] = acc;
            }
            if l + 1 < layers {
                z.push(al.iter().map(|&v| v.max(0.0)).collect());
            }
            a.push(al);
        }
        let logits = a.last().unwrap();
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|&v| (v - m).exp()).collect();
        let sum: f64 = exps.iter().sum();
        let p: Vec<f64> = exps.iter().map(|e| e / sum).collect();

        let mut delta: Vec<Vec<f64>> = vec![Vec::new(); layers];
        delta[layers - 1] = p
            .iter()
            .zip(q)
            .map(|(&pi, &qi)| (pi - qi) * inv_batch)
            .collect();
        for l in (0..layers - 1).rev() {
            let (in_dim, out_dim) = self.shapes[l + 1];
            let w = self.w(l + 1);
            let upper = delta[l + 1].clone();
            let mut d = vec![0.0; in_dim];
            for o in 0..out_dim {
                let row = &w[o * in_dim..(o + 1) * in_dim];
                for i in 0..in_dim {
                    d[i] += upper[o] * row[i];
                }
            }
            for (di, &ai) in d.iter_mut().zip(&a[l]) {
                if ai <= 0.0 {
                    *di = 0.0;
                }
            }
            delta[l] = d;
        }
        SampleTrace { z, a, p, delta }
    }

    /// Accumulate this sample's parameter gradient into `g`.
    fn accumulate_gradient(&self, trace: &SampleTrace, g: &mut [f64]) {
        for l in 0..self.shapes.len() {
            let (in_dim, out_dim) = self.shapes[l];
            let (w_off, b_off) = self.offsets[l];
            let d = &trace.delta[l];
            let zin = &trace.z[l];
            for o in 0..out_dim {
                let dv = d[o];
                let grow = &mut g[w_off + o * in_dim..w_off + (o + 1) * in_dim];
                for i in 0..in_dim {
                    grow[i] += dv * zin[i];
                }
            }
            for o in 0..out_dim {
                g[b_off + o] += d[o];
            }
        }
    }

    /// Directional derivative of `<grad, v>` along a tangent seeded either
    /// at one input coordinate or at one label logit. Two target vectors
    /// are evaluated in one pass.
    fn tangent(
        &self,
        trace: &SampleTrace,
        seed: TangentSeed,
        inv_batch: f64,
        v1: &[f64],
        v2: &[f64],
    ) -> (f64, f64) {
        let layers = self.shapes.len();
        // tangents of the layer inputs
        let mut z_dot: Vec<Vec<f64>> = Vec::with_capacity(layers);
        match seed {
            TangentSeed::Input(q) => {
                let mut z0 = vec![0.0; trace.z[0].len()];
                z0[q] = 1.0;
                z_dot.push(z0);
            }
            TangentSeed::Label(_) => {
                z_dot.push(vec![0.0; trace.z[0].len()]);
            }
        }
        let mut a_dot_last: Vec<f64> = Vec::new();
        for l in 0..layers {
            let (in_dim, out_dim) = self.shapes[l];
            let w = self.w(l);
            let zin_dot = &z_dot[l];
            let mut a_dot = vec![0.0; out_dim];
            // skip the matmul when the tangent input is all zero
            if zin_dot.iter().any(|&v| v != 0.0) {
                for o in 0..out_dim {
                    let row = &w[o * in_dim..(o + 1) * in_dim];
                    let mut acc = 0.0;
                    for i in 0..in_dim {
                        acc += row[i] * zin_dot[i];
                    }
                    a_dot[o] = acc;
                }
            }
            if l + 1 < layers {
                let rectified: Vec<f64> = a_dot
                    .iter()
                    .zip(&trace.a[l])
                    .map(|(&ad, &av)| if av > 0.0 { ad } else { 0.0 })
                    .collect();
                z_dot.push(rectified);
            } else {
                a_dot_last = a_dot;
            }
        }

        // delta tangents
        let mut delta_dot: Vec<Vec<f64>> = vec![Vec::new(); layers];
        let c = self.arch.num_classes;
        let p = &trace.p;
        delta_dot[layers - 1] = match seed {
            TangentSeed::Input(_) => {
                // p_dot = (diag(p) - p p^T) a_dot
                let dot: f64 = p.iter().zip(&a_dot_last).map(|(&pi, &ai)| pi * ai).sum();
                (0..c)
                    .map(|j| p[j] * (a_dot_last[j] - dot) * inv_batch)
                    .collect()
            }
            TangentSeed::Label((q, j)) => {
                // q_dot = (diag(q) - q q^T) e_j; delta_dot = -q_dot / batch
                (0..c)
                    .map(|i| {
                        let qd = if i == j { q[j] * (1.0 - q[j]) } else { -q[i] * q[j] };
                        -qd * inv_batch
                    })
                    .collect()
            }
        };
        for l in (0..layers - 1).rev() {
            let (in_dim, out_dim) = self.shapes[l + 1];
            let w = self.w(l + 1);
            let upper = &delta_dot[l + 1];
            let mut d = vec![0.0; in_dim];
            for o in 0..out_dim {
                let row = &w[o * in_dim..(o + 1) * in_dim];
                for i in 0..in_dim {
                    d[i] += upper[o] * row[i];
                }
            }
            for (di, &ai) in d.iter_mut().zip(&trace.a[l]) {
                if ai <= 0.0 {
                    *di = 0.0;
                }
            }
            delta_dot[l] = d;
        }

        // S_dot(v) = sum_l <delta_dot z^T + delta z_dot^T, V_l> + <delta_dot, v_b>
        let mut s1 = 0.0;
        let mut s2 = 0.0;
        for l in 0..layers {
            let (in_dim, out_dim) = self.shapes[l];
            let (w_off, b_off) = self.offsets[l];
            let d = &trace.delta[l];
            let dd = &delta_dot[l];
            let zin = &trace.z[l];
            let zd = &z_dot[l];
            for o in 0..out_dim {
                let r1 = &v1[w_off + o * in_dim..w_off + (o + 1) * in_dim];
                let r2 = &v2[w_off + o * in_dim..w_off + (o + 1) * in_dim];
                for i in 0..in_dim {
                    let term = dd[o] * zin[i] + d[o] * zd[i];
                    s1 += term * r1[i];
                    s2 += term * r2[i];
                }
                s1 += dd[o] * v1[b_off + o];
                s2 += dd[o] * v2[b_off + o];
            }
        }
        (s1, s2)
    }
}

#[derive(Clone, Copy)]
enum TangentSeed<'a> {
    Input(usize),
    Label((&'a [f64], usize)),
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&v| (v - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

/// Smooth total variation over adjacent features, per sample.
fn tv_value_and_grad(x: &[f64], dim: usize, grad: &mut [f64]) -> f64 {
    const EPS: f64 = 1e-8;
    let mut total = 0.0;
    for s in 0..x.len() / dim {
        let row = &x[s * dim..(s + 1) * dim];
        for i in 0..dim - 1 {
            let d = row[i + 1] - row[i];
            let mag = (d * d + EPS).sqrt();
            total += mag;
            let g = d / mag;
            grad[s * dim + i + 1] += g;
            grad[s * dim + i] -= g;
        }
    }
    total
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: usize,
}

impl Adam {
    fn new(len: usize) -> Self {
        Adam {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        const EPS: f64 = 1e-8;
        self.t += 1;
        let bc1 = 1.0 - B1.powi(self.t as i32);
        let bc2 = 1.0 - B2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = B1 * self.m[i] + (1.0 - B1) * grad[i];
            self.v[i] = B2 * self.v[i] + (1.0 - B2) * grad[i] * grad[i];
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            params[i] -= lr * mhat / (vhat.sqrt() + EPS);
        }
    }
}

/// Reconstruct a batch whose gradient at `global` matches the target in
/// cosine distance. Restarts from a fresh seed on numerical failure (at
/// most three times) and returns the best iterate seen.
pub fn invert(
    target: &ParamVector,
    global: &ParamVector,
    arch: &Architecture,
    known_labels: Option<&[usize]>,
    cfg: &InversionConfig,
) -> Result<InversionResult> {
    if cfg.iterations == 0 || cfg.batch_size == 0 {
        return Err(Error::InvalidConfig(
            "inversion needs iterations and a batch".into(),
        ));
    }
    if target.len() != arch.param_count() {
        return Err(Error::DimensionMismatch {
            context: "inversion target vs architecture",
            expected: arch.param_count(),
            got: target.len(),
        });
    }
    if cfg.knows_labels {
        match known_labels {
            Some(l) if l.len() == cfg.batch_size => {}
            _ => {
                return Err(Error::InvalidConfig(
                    "knows_labels requires one label per sample".into(),
                ))
            }
        }
    }

    let gradient_target = if cfg.target_is_update {
        target.scale(-1.0)
    } else {
        target.clone()
    };
    let t = gradient_target.as_slice();
    let t_norm = gradient_target.l2_norm();

    let ws = Workspace::new(arch, global);
    let dim = arch.input_dim;
    let c = arch.num_classes;
    let batch = cfg.batch_size;
    let inv_batch = 1.0 / batch as f64;

    let mut best: Option<InversionResult> = None;
    'restarts: for attempt in 0..=3usize {
        let mut rng = rng::stream(cfg.seed, &[tag::INVERSION, attempt as u64]);
        let mut x: Vec<f64> = (0..batch * dim)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let mut label_logits: Vec<f64> = if cfg.knows_labels {
            Vec::new()
        } else {
            (0..batch * c).map(|_| 0.1 * rng.random_range(-1.0..1.0)).collect()
        };
        let mut adam_x = Adam::new(x.len());
        let mut adam_l = Adam::new(label_logits.len());
        let mut best_local: Option<(f64, Vec<f64>, Vec<Vec<f64>>)> = None;

        for _ in 0..cfg.iterations {
            // soft labels per sample
            let labels: Vec<Vec<f64>> = (0..batch)
                .map(|s| {
                    if cfg.knows_labels {
                        let mut q = vec![0.0; c];
                        q[known_labels.unwrap()[s]] = 1.0;
                        q
                    } else {
                        softmax(&label_logits[s * c..(s + 1) * c])
                    }
                })
                .collect();

            // batch gradient and per-sample traces
            let mut g = vec![0.0; arch.param_count()];
            let traces: Vec<SampleTrace> = (0..batch)
                .map(|s| {
                    let trace = ws.trace(&x[s * dim..(s + 1) * dim], &labels[s], inv_batch);
                    ws.accumulate_gradient(&trace, &mut g);
                    trace
                })
                .collect();
            let g_norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            let s_t: f64 = g.iter().zip(t).map(|(a, b)| a * b).sum();
            let cos = if g_norm > 1e-300 && t_norm > 1e-300 {
                s_t / (g_norm * t_norm)
            } else {
                0.0
            };

            let mut grad_x = vec![0.0; x.len()];
            let tv = if cfg.tv_weight > 0.0 {
                tv_value_and_grad(&x, dim, &mut grad_x)
            } else {
                0.0
            };
            for v in grad_x.iter_mut() {
                *v *= cfg.tv_weight;
            }
            let objective = 1.0 - cos + cfg.tv_weight * tv;
            if !objective.is_finite() {
                if attempt == 3 {
                    break;
                }
                continue 'restarts;
            }
            let is_better = best_local.as_ref().map_or(true, |(b, _, _)| objective < *b);
            if is_better {
                best_local = Some((objective, x.clone(), labels.clone()));
            }

            // cosine gradient via tangent passes
            if g_norm > 1e-300 && t_norm > 1e-300 {
                let c1 = 1.0 / (g_norm * t_norm);
                let c2 = s_t / (g_norm.powi(3) * t_norm);
                for s in 0..batch {
                    for q in 0..dim {
                        let (st, sg) =
                            ws.tangent(&traces[s], TangentSeed::Input(q), inv_batch, t, &g);
                        grad_x[s * dim + q] += -st * c1 + sg * c2;
                    }
                }
                if !cfg.knows_labels {
                    let mut grad_l = vec![0.0; label_logits.len()];
                    for s in 0..batch {
                        for j in 0..c {
                            let (st, sg) = ws.tangent(
                                &traces[s],
                                TangentSeed::Label((&labels[s], j)),
                                inv_batch,
                                t,
                                &g,
                            );
                            grad_l[s * c + j] = -st * c1 + sg * c2;
                        }
                    }
                    adam_l.step(&mut label_logits, &grad_l, cfg.step_size);
                }
            }
            adam_x.step(&mut x, &grad_x, cfg.step_size);
        }

        if let Some((objective, features, labels)) = best_local {
            let candidate = InversionResult {
                features,
                labels,
                objective,
                restarts: attempt,
            };
            let better = best.as_ref().map_or(true, |b| candidate.objective < b.objective);
            if better {
                best = Some(candidate);
            }
            break;
        }
    }
    best.ok_or_else(|| Error::InvalidConfig("inversion failed to produce an iterate".into()))
}

/// Matched mean squared error between a reconstructed batch and the true
/// batch: greedy one-to-one assignment on pairwise MSE followed by
/// improving swaps, then the mean over matched pairs. Permutation-invariant
/// in both arguments.
pub fn reconstruction_error(
    reconstructed: &[f64],
    truth: &[f64],
    dim: usize,
) -> Result<f64> {
    if dim == 0 || reconstructed.len() % dim != 0 || truth.len() % dim != 0 {
        return Err(Error::DimensionMismatch {
            context: "reconstruction batches vs dim",
            expected: dim,
            got: reconstructed.len(),
        });
    }
    let n_rec = reconstructed.len() / dim;
    let n_true = truth.len() / dim;
    if n_rec == 0 || n_true == 0 {
        return Err(Error::EmptyDataset("reconstruction error"));
    }
    let pairs = n_rec.min(n_true);
    let mse = |a: usize, b: usize| -> f64 {
        let ra = &reconstructed[a * dim..(a + 1) * dim];
        let rb = &truth[b * dim..(b + 1) * dim];
        ra.iter().zip(rb).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / dim as f64
    };

    // greedy assignment
    let mut rec_used = vec![false; n_rec];
    let mut true_used = vec![false; n_true];
    let mut matches: Vec<(usize, usize)> = Vec::with_capacity(pairs);
    for _ in 0..pairs {
        let mut best: Option<(f64, usize, usize)> = None;
        for a in 0..n_rec {
            if rec_used[a] {
                continue;
            }
            for b in 0..n_true {
                if true_used[b] {
                    continue;
                }
                let cost = mse(a, b);
                if best.as_ref().map_or(true, |(c, _, _)| cost < *c) {
                    best = Some((cost, a, b));
                }
            }
        }
        let (_, a, b) = best.unwrap();
        rec_used[a] = true;
        true_used[b] = true;
        matches.push((a, b));
    }

    // local swap improvement
    let mut improved = true;
    while improved {
        improved = false;
        for i in 0..matches.len() {
            for j in (i + 1)..matches.len() {
                let (a1, b1) = matches[i];
                let (a2, b2) = matches[j];
                let current = mse(a1, b1) + mse(a2, b2);
                let swapped = mse(a1, b2) + mse(a2, b1);
                if swapped + 1e-15 < current {
                    matches[i] = (a1, b2);
                    matches[j] = (a2, b1);
                    improved = true;
                }
            }
        }
    }

    Ok(matches.iter().map(|&(a, b)| mse(a, b)).sum::<f64>() / pairs as f64)
}
