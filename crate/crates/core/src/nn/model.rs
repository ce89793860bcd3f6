//! MLP forward pass, numerically stable cross-entropy, and exact gradients
//! via manual backpropagation.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::params::ParamVector;
use crate::data::LabeledDataset;
use crate::{Error, Result};

/// Classifier shape. Empty `hidden_dims` gives softmax regression.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub num_classes: usize,
}

impl Architecture {
    pub fn new(input_dim: usize, hidden_dims: Vec<usize>, num_classes: usize) -> Result<Self> {
        if input_dim == 0 || num_classes < 2 || hidden_dims.iter().any(|&h| h == 0) {
            return Err(Error::InvalidConfig(format!(
                "bad architecture: input_dim={input_dim}, hidden={hidden_dims:?}, classes={num_classes}"
            )));
        }
        Ok(Architecture {
            input_dim,
            hidden_dims,
            num_classes,
        })
    }

    /// Per-layer (in, out) dimensions, input to output.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 2);
        dims.push(self.input_dim);
        dims.extend_from_slice(&self.hidden_dims);
        dims.push(self.num_classes);
        dims.windows(2).map(|w| (w[0], w[1])).collect()
    }

    /// Total parameter count: weights then biases per layer.
    pub fn param_count(&self) -> usize {
        self.layer_shapes()
            .iter()
            .map(|(i, o)| o * i + o)
            .sum()
    }

    /// Offset of each layer's (weights, biases) in the flat vector.
    pub(crate) fn layer_offsets(&self) -> Vec<(usize, usize)> {
        let mut offsets = Vec::new();
        let mut pos = 0;
        for (i, o) in self.layer_shapes() {
            offsets.push((pos, pos + o * i));
            pos += o * i + o;
        }
        offsets
    }

    fn check_params(&self, params: &ParamVector) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::DimensionMismatch {
                context: "parameter vector vs architecture",
                expected: self.param_count(),
                got: params.len(),
            });
        }
        Ok(())
    }

    fn check_input(&self, x: &[f64]) -> Result<usize> {
        if x.is_empty() || x.len() % self.input_dim != 0 {
            return Err(Error::DimensionMismatch {
                context: "input batch vs input_dim",
                expected: self.input_dim,
                got: x.len(),
            });
        }
        Ok(x.len() / self.input_dim)
    }
}

/// Seeded per-layer uniform initialisation in
/// `[-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out))]`; biases zero.
pub fn glorot_init(arch: &Architecture, rng: &mut ChaCha8Rng) -> ParamVector {
    let mut values = Vec::with_capacity(arch.param_count());
    for (fan_in, fan_out) in arch.layer_shapes() {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        for _ in 0..fan_in * fan_out {
            values.push(rng.random_range(-bound..bound));
        }
        values.extend(std::iter::repeat(0.0).take(fan_out));
    }
    ParamVector(values)
}

/// Forward activations kept around for backprop: pre-activations per layer
/// plus the post-rectifier outputs feeding the next layer.
struct ForwardTrace {
    // pre[l]: rows x out_l
    pre: Vec<Vec<f64>>,
    // post[l]: rows x out_l (rectified); last layer unused
    post: Vec<Vec<f64>>,
}

fn forward_trace(
    params: &ParamVector,
    arch: &Architecture,
    x: &[f64],
    rows: usize,
) -> ForwardTrace {
    let shapes = arch.layer_shapes();
    let offsets = arch.layer_offsets();
    let p = params.as_slice();
    let num_layers = shapes.len();
    let mut pre: Vec<Vec<f64>> = Vec::with_capacity(num_layers);
    let mut post: Vec<Vec<f64>> = Vec::with_capacity(num_layers);

    for (l, &(in_dim, out_dim)) in shapes.iter().enumerate() {
        let (w_off, b_off) = offsets[l];
        let w = &p[w_off..w_off + out_dim * in_dim];
        let b = &p[b_off..b_off + out_dim];
        let input: &[f64] = if l == 0 { x } else { &post[l - 1] };
        let mut a = vec![0.0; rows * out_dim];
        for r in 0..rows {
            let xr = &input[r * in_dim..(r + 1) * in_dim];
            let ar = &mut a[r * out_dim..(r + 1) * out_dim];
            for o in 0..out_dim {
                let wrow = &w[o * in_dim..(o + 1) * in_dim];
                let mut acc = b[o];
                for i in 0..in_dim {
                    acc += wrow[i] * xr[i];
                }
                ar[o] = acc;
            }
        }
        let z = if l + 1 < num_layers {
            a.iter().map(|&v| v.max(0.0)).collect()
        } else {
            Vec::new()
        };
        pre.push(a);
        post.push(z);
    }
    ForwardTrace { pre, post }
}

/// Logits for a feature row or batch; shape (rows, num_classes), row-major.
pub fn forward(params: &ParamVector, arch: &Architecture, x: &[f64]) -> Result<Vec<f64>> {
    arch.check_params(params)?;
    let rows = arch.check_input(x)?;
    let trace = forward_trace(params, arch, x, rows);
    Ok(trace.pre.last().unwrap().clone())
}

/// Predicted class per row (argmax of logits, ties to the lowest index).
pub fn predict(params: &ParamVector, arch: &Architecture, x: &[f64]) -> Result<Vec<usize>> {
    let logits = forward(params, arch, x)?;
    let c = arch.num_classes;
    Ok(logits
        .chunks(c)
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect())
}

/// Per-row `-log softmax(logits)[label]` with max-shift log-sum-exp.
fn per_row_nll(logits: &[f64], num_classes: usize, labels: &[usize]) -> Vec<f64> {
    logits
        .chunks(num_classes)
        .zip(labels)
        .map(|(row, &y)| {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|&v| (v - m).exp()).sum::<f64>().ln();
            lse - row[y]
        })
        .collect()
}

/// Mean cross-entropy of a logits batch against integer labels.
pub fn cross_entropy(logits: &[f64], num_classes: usize, labels: &[usize]) -> Result<f64> {
    if labels.is_empty() || logits.len() != labels.len() * num_classes {
        return Err(Error::DimensionMismatch {
            context: "logits vs labels",
            expected: labels.len() * num_classes,
            got: logits.len(),
        });
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= num_classes) {
        return Err(Error::InvalidConfig(format!(
            "label {bad} out of range for {num_classes} classes"
        )));
    }
    let nll = per_row_nll(logits, num_classes, labels);
    Ok(nll.iter().sum::<f64>() / labels.len() as f64)
}

/// Mean cross-entropy of `params` on a dataset.
pub fn loss_mean(params: &ParamVector, arch: &Architecture, data: &LabeledDataset) -> Result<f64> {
    let logits = forward(params, arch, data.features())?;
    cross_entropy(&logits, arch.num_classes, data.labels())
}

/// Per-sample cross-entropy losses of `params` on a dataset.
pub fn per_sample_losses(
    params: &ParamVector,
    arch: &Architecture,
    data: &LabeledDataset,
) -> Result<Vec<f64>> {
    let logits = forward(params, arch, data.features())?;
    Ok(per_row_nll(&logits, arch.num_classes, data.labels()))
}

/// Exact gradient of the mean cross-entropy over a batch, flattened in the
/// same order as [`ParamVector`].
pub fn gradient(
    params: &ParamVector,
    arch: &Architecture,
    x: &[f64],
    labels: &[usize],
) -> Result<ParamVector> {
    arch.check_params(params)?;
    let rows = arch.check_input(x)?;
    if labels.len() != rows {
        return Err(Error::DimensionMismatch {
            context: "labels vs batch rows",
            expected: rows,
            got: labels.len(),
        });
    }
    if rows == 0 {
        return Err(Error::EmptyDataset("gradient of empty batch"));
    }

    let shapes = arch.layer_shapes();
    let offsets = arch.layer_offsets();
    let p = params.as_slice();
    let num_layers = shapes.len();
    let trace = forward_trace(params, arch, x, rows);

    // delta at the softmax head: (softmax - onehot) / rows
    let c = arch.num_classes;
    let logits = trace.pre.last().unwrap();
    let mut delta = vec![0.0; rows * c];
    for r in 0..rows {
        let row = &logits[r * c..(r + 1) * c];
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|&v| (v - m).exp()).collect();
        let sum: f64 = exps.iter().sum();
        let d = &mut delta[r * c..(r + 1) * c];
        for j in 0..c {
            d[j] = exps[j] / sum / rows as f64;
        }
        d[labels[r]] -= 1.0 / rows as f64;
    }

    let mut grad = vec![0.0; arch.param_count()];
    // walk layers output -> input
    for l in (0..num_layers).rev() {
        let (in_dim, out_dim) = shapes[l];
        let (w_off, b_off) = offsets[l];
        let input: &[f64] = if l == 0 { x } else { &trace.post[l - 1] };

        {
            let gw = &mut grad[w_off..w_off + out_dim * in_dim];
            for r in 0..rows {
                let d = &delta[r * out_dim..(r + 1) * out_dim];
                let xr = &input[r * in_dim..(r + 1) * in_dim];
                for o in 0..out_dim {
                    let grow = &mut gw[o * in_dim..(o + 1) * in_dim];
                    let dv = d[o];
                    for i in 0..in_dim {
                        grow[i] += dv * xr[i];
                    }
                }
            }
        }
        {
            let gb = &mut grad[b_off..b_off + out_dim];
            for r in 0..rows {
                let d = &delta[r * out_dim..(r + 1) * out_dim];
                for o in 0..out_dim {
                    gb[o] += d[o];
                }
            }
        }

        if l > 0 {
            let w = &p[w_off..w_off + out_dim * in_dim];
            let prev_pre = &trace.pre[l - 1];
            let mut next_delta = vec![0.0; rows * in_dim];
            for r in 0..rows {
                let d = &delta[r * out_dim..(r + 1) * out_dim];
                let nd = &mut next_delta[r * in_dim..(r + 1) * in_dim];
                for o in 0..out_dim {
                    let wrow = &w[o * in_dim..(o + 1) * in_dim];
                    let dv = d[o];
                    for i in 0..in_dim {
                        nd[i] += dv * wrow[i];
                    }
                }
                let ar = &prev_pre[r * in_dim..(r + 1) * in_dim];
                for i in 0..in_dim {
                    if ar[i] <= 0.0 {
                        nd[i] = 0.0;
                    }
                }
            }
            delta = next_delta;
        }
    }
    Ok(ParamVector(grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn arch(i: usize, h: &[usize], c: usize) -> Architecture {
        Architecture::new(i, h.to_vec(), c).unwrap()
    }

    #[test]
    fn zero_params_give_zero_logits_and_uniform_loss() {
        let a = arch(4, &[], 10);
        let p = ParamVector::zeros(a.param_count());
        let logits = forward(&p, &a, &[1.0, -2.0, 0.5, 3.0]).unwrap();
        assert!(logits.iter().all(|&v| v == 0.0));
        let loss = cross_entropy(&logits, 10, &[3]).unwrap();
        assert!((loss - (10.0f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn hand_computed_linear_logits() {
        // 1 feature, 2 classes, W = [1, -1], b = 0, x = 2 -> logits [2, -2]
        let a = arch(1, &[], 2);
        let p = ParamVector(vec![1.0, -1.0, 0.0, 0.0]);
        let logits = forward(&p, &a, &[2.0]).unwrap();
        assert_eq!(logits, vec![2.0, -2.0]);
    }

    #[test]
    fn batch_shape_contract() {
        let a = arch(3, &[5], 4);
        let p = glorot_init(&a, &mut rng::stream(1, &[rng::tag::INIT]));
        let x = vec![0.1; 9];
        let logits = forward(&p, &a, &x).unwrap();
        assert_eq!(logits.len(), 3 * 4);
    }

    #[test]
    fn saturated_softmax_loss_is_near_zero() {
        let loss = cross_entropy(&[1000.0, 0.0], 2, &[0]).unwrap();
        assert!(loss >= 0.0 && loss < 1e-12);
    }

    #[test]
    fn hand_evaluated_two_class_loss() {
        // -log(e^1 / (e^1 + e^2)) = ln(1 + e)
        let loss = cross_entropy(&[1.0, 2.0], 2, &[0]).unwrap();
        assert!((loss - (1.0 + std::f64::consts::E).ln()).abs() < 1e-12);
        assert!((loss - 1.313262).abs() < 1e-6);
    }

    #[test]
    fn loss_is_finite_for_huge_logits() {
        let loss = cross_entropy(&[1e4, -1e4, 0.0], 3, &[1]).unwrap();
        assert!(loss.is_finite());
    }

    #[test]
    fn gradient_zero_at_a_stationary_point() {
        // Two identical inputs with conflicting labels: at zero parameters
        // the softmax is uniform and the mean gradient cancels exactly.
        let a = arch(2, &[], 2);
        let p = ParamVector::zeros(a.param_count());
        let x = vec![0.7, -0.3, 0.7, -0.3];
        let g = gradient(&p, &a, &x, &[0, 1]).unwrap();
        assert!(g.l2_norm() < 1e-6);
    }

    #[test]
    fn duplicated_batch_matches_single_batch_gradient() {
        let a = arch(3, &[4], 3);
        let p = glorot_init(&a, &mut rng::stream(5, &[rng::tag::INIT]));
        let x = vec![0.3, -1.0, 0.8, 2.0, 0.1, -0.4];
        let labels = [2usize, 0];
        let mut xx = x.clone();
        xx.extend_from_slice(&x);
        let g1 = gradient(&p, &a, &x, &labels).unwrap();
        let g2 = gradient(&p, &a, &xx, &[2, 0, 2, 0]).unwrap();
        for (u, v) in g1.0.iter().zip(&g2.0) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    /// Central-difference oracle for the backprop gradient.
    fn finite_difference(
        params: &ParamVector,
        a: &Architecture,
        x: &[f64],
        labels: &[usize],
    ) -> Vec<f64> {
        let h = 1e-5;
        let mut fd = vec![0.0; params.len()];
        for j in 0..params.len() {
            let mut plus = params.clone();
            plus.0[j] += h;
            let mut minus = params.clone();
            minus.0[j] -= h;
            let lp = cross_entropy(&forward(&plus, a, x).unwrap(), a.num_classes, labels).unwrap();
            let lm = cross_entropy(&forward(&minus, a, x).unwrap(), a.num_classes, labels).unwrap();
            fd[j] = (lp - lm) / (2.0 * h);
        }
        fd
    }

    #[test]
    fn gradient_matches_central_differences() {
        let cases = [
            arch(3, &[], 2),
            arch(4, &[5], 3),
            arch(2, &[3, 3], 4),
        ];
        for (case, a) in cases.iter().enumerate() {
            let mut r = rng::stream(90 + case as u64, &[rng::tag::INIT]);
            let p = glorot_init(a, &mut r);
            let rows = 3;
            let x: Vec<f64> = (0..rows * a.input_dim)
                .map(|_| r.random_range(-2.0..2.0))
                .collect();
            let labels: Vec<usize> =
                (0..rows).map(|_| r.random_range(0..a.num_classes)).collect();
            let g = gradient(&p, a, &x, &labels).unwrap();
            let fd = finite_difference(&p, a, &x, &labels);
            for (j, (&gv, &fv)) in g.0.iter().zip(&fd).enumerate() {
                let rel = (gv - fv).abs() / fv.abs().max(1e-8);
                assert!(
                    rel < 1e-4 || (gv - fv).abs() < 1e-8,
                    "case {case} coord {j}: grad {gv} vs fd {fv}"
                );
            }
        }
    }

    #[test]
    fn full_batch_descent_decreases_loss_monotonically() {
        let a = arch(2, &[], 2);
        let mut r = rng::stream(11, &[rng::tag::INIT]);
        let mut p = glorot_init(&a, &mut r);
        // separable toy data
        let x = vec![1.0, 0.0, 0.9, 0.1, -1.0, 0.0, -0.8, -0.2];
        let labels = [0usize, 0, 1, 1];
        let mut prev = cross_entropy(&forward(&p, &a, &x).unwrap(), 2, &labels).unwrap();
        for _ in 0..20 {
            let g = gradient(&p, &a, &x, &labels).unwrap();
            p.add_scaled_in_place(&g, -0.1);
            let loss = cross_entropy(&forward(&p, &a, &x).unwrap(), 2, &labels).unwrap();
            assert!(loss < prev);
            prev = loss;
        }
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        let a = arch(6, &[4], 3);
        let p1 = glorot_init(&a, &mut rng::stream(3, &[rng::tag::INIT]));
        let p2 = glorot_init(&a, &mut rng::stream(3, &[rng::tag::INIT]));
        assert_eq!(p1, p2);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let a = arch(3, &[], 2);
        let p = ParamVector::zeros(a.param_count());
        assert!(forward(&p, &a, &[1.0, 2.0]).is_err());
        let bad = ParamVector::zeros(5);
        assert!(forward(&bad, &a, &[1.0, 2.0, 3.0]).is_err());
    }
}
