//! Global-model metrics and clustering fidelity.

use serde::Serialize;

use crate::attacks::{apply_trigger, TriggerSpec};
use crate::data::LabeledDataset;
use crate::nn::{self, Architecture, ParamVector};
use crate::Result;

/// Test-set metrics of a global model, in percent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Metrics {
    /// Accuracy over the full test set.
    pub ma: f64,
    /// Recall of the attack's source class.
    pub rcl: f64,
    /// Fraction of source-class samples predicted as the target class.
    pub asr: f64,
    /// Fraction of non-target samples with the full trigger applied that
    /// are predicted as the trigger's target class.
    pub ba: f64,
}

/// Compute main accuracy, source-class recall, attack success rate and
/// backdoor accuracy on a held-out test set.
pub fn compute_metrics(
    params: &ParamVector,
    arch: &Architecture,
    test: &LabeledDataset,
    source_class: usize,
    target_class: usize,
    trigger: &TriggerSpec,
) -> Result<Metrics> {
    let preds = nn::predict(params, arch, test.features())?;
    let n = test.len();
    let mut correct = 0usize;
    let mut source_total = 0usize;
    let mut source_correct = 0usize;
    let mut source_flipped = 0usize;
    for (i, &pred) in preds.iter().enumerate() {
        let y = test.label(i);
        if pred == y {
            correct += 1;
        }
        if y == source_class {
            source_total += 1;
            if pred == y {
                source_correct += 1;
            }
            if pred == target_class {
                source_flipped += 1;
            }
        }
    }

    // backdoor accuracy: full trigger on every non-target-class sample
    let mut triggered = LabeledDataset::empty(test.dim());
    let mut row = vec![0.0; test.dim()];
    for i in 0..n {
        if test.label(i) == trigger.target_class {
            continue;
        }
        row.copy_from_slice(test.row(i));
        apply_trigger(&mut row, &trigger.feature_indices, trigger.trigger_value);
        triggered.push(&row, test.label(i));
    }
    let ba = if triggered.is_empty() {
        0.0
    } else {
        let tpred = nn::predict(params, arch, triggered.features())?;
        100.0 * tpred.iter().filter(|&&p| p == trigger.target_class).count() as f64
            / triggered.len() as f64
    };

    let pct = |num: usize, den: usize| {
        if den == 0 {
            0.0
        } else {
            100.0 * num as f64 / den as f64
        }
    };
    Ok(Metrics {
        ma: pct(correct, n),
        rcl: pct(source_correct, source_total),
        asr: pct(source_flipped, source_total),
        ba,
    })
}

/// Cluster-size-weighted majority purity of a benign/malicious clustering,
/// in [0.5, 1] for non-empty clusters.
pub fn fidelity_score(members: &[Vec<usize>], malicious: &[bool]) -> f64 {
    let mut weighted = 0.0;
    let mut total = 0usize;
    for cluster in members {
        if cluster.is_empty() {
            continue;
        }
        let mal = cluster.iter().filter(|&&i| malicious[i]).count();
        let majority = mal.max(cluster.len() - mal);
        weighted += majority as f64;
        total += cluster.len();
    }
    if total == 0 {
        return 0.5;
    }
    weighted / total as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arch() -> Architecture {
        Architecture::new(2, vec![], 3).unwrap()
    }

    /// Constant classifier: zero weights, one-hot bias.
    fn constant_classifier(class: usize) -> ParamVector {
        let a = arch();
        let mut p = ParamVector::zeros(a.param_count());
        let bias_offset = 3 * 2;
        p.0[bias_offset + class] = 1.0;
        p
    }

    fn test_set() -> LabeledDataset {
        let mut d = LabeledDataset::empty(2);
        for i in 0..6 {
            d.push(&[1.0, 0.0], i % 3);
        }
        d
    }

    fn trigger() -> TriggerSpec {
        TriggerSpec::new(vec![0], 9.0, 1, 2).unwrap()
    }

    #[test]
    fn perfect_classifier_on_its_own_class() {
        // constant-0 classifier on an all-zero-label set: MA 100, ASR 0
        let mut d = LabeledDataset::empty(2);
        for _ in 0..5 {
            d.push(&[0.3, 0.4], 0);
        }
        let m = compute_metrics(&constant_classifier(0), &arch(), &d, 0, 1, &trigger()).unwrap();
        assert_eq!(m.ma, 100.0);
        assert_eq!(m.rcl, 100.0);
        assert_eq!(m.asr, 0.0);
    }

    #[test]
    fn constant_target_classifier_maximises_asr() {
        let m =
            compute_metrics(&constant_classifier(1), &arch(), &test_set(), 0, 1, &trigger())
                .unwrap();
        assert_eq!(m.asr, 100.0);
        assert_eq!(m.rcl, 0.0);
    }

    #[test]
    fn recount_oracle_on_a_hand_labeled_case() {
        // constant-2 classifier; labels are 0,1,2,0,1,2
        let m =
            compute_metrics(&constant_classifier(2), &arch(), &test_set(), 0, 1, &trigger())
                .unwrap();
        // manual confusion recount: 2 of 6 correct; source class 0 has 2
        // samples, none predicted 0 or 1
        assert!((m.ma - 100.0 * 2.0 / 6.0).abs() < 1e-12);
        assert_eq!(m.rcl, 0.0);
        assert_eq!(m.asr, 0.0);
        // trigger target is 2: all 4 non-class-2 samples predict 2
        assert_eq!(m.ba, 100.0);
    }

    #[test]
    fn fidelity_examples() {
        // perfectly pure clusters
        let malicious = [true, true, false, false];
        assert_eq!(
            fidelity_score(&[vec![0, 1], vec![2, 3]], &malicious),
            1.0
        );
        // every cluster half malicious
        assert_eq!(
            fidelity_score(&[vec![0, 2], vec![1, 3]], &malicious),
            0.5
        );
        // sizes 4 (3 benign, 1 malicious) and 2 (2 malicious)
        let flags = [false, false, false, true, true, true];
        let f = fidelity_score(&[vec![0, 1, 2, 3], vec![4, 5]], &flags);
        assert!((f - 5.0 / 6.0).abs() < 1e-12);
    }
}
