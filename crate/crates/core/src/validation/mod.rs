//! Validation of representative models by client validators.
//!
//! Each validator computes a per-class loss-impact vector for every
//! representative: the mean cross-entropy of the previous global model minus
//! the mean cross-entropy of the representative, per class, on a bounded
//! subsample of the validator's holdout data. Classes with too few samples
//! are reported as missing and later imputed server-side. Reports are
//! grouped two ways: per representative (all validators) and per validator
//! (all representatives); outlier detection runs on the per-validator
//! grouping and drops forged reports before filtering.

pub mod impute;
pub mod outlier;

mod linalg;

use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::nn::{self, Architecture, ParamVector};
use crate::representative::RepresentativeModel;
use crate::rng::{self, tag};
use crate::{Error, Result};

/// Per-class loss-impact vector with explicit missing cells and the number
/// of samples used per class.
#[derive(Clone, Debug, PartialEq)]
pub struct LipcVector {
    pub values: Vec<Option<f64>>,
    pub used: Vec<usize>,
}

/// One validator's reports for all representatives (rows = representatives).
#[derive(Clone, Debug, PartialEq)]
pub struct NMatrix {
    pub reps: usize,
    pub classes: usize,
    pub cells: Vec<Option<f64>>,
}

impl NMatrix {
    pub fn new(reps: usize, classes: usize) -> Self {
        NMatrix {
            reps,
            classes,
            cells: vec![None; reps * classes],
        }
    }

    pub fn get(&self, rep: usize, class: usize) -> Option<f64> {
        self.cells[rep * self.classes + class]
    }

    pub fn set(&mut self, rep: usize, class: usize, value: Option<f64>) {
        self.cells[rep * self.classes + class] = value;
    }

    pub fn set_row(&mut self, rep: usize, row: &LipcVector) {
        for (class, &v) in row.values.iter().enumerate() {
            self.set(rep, class, v);
        }
    }
}

/// Post-filtering reports for one representative (rows = kept validators).
#[derive(Clone, Debug, PartialEq)]
pub struct MMatrix {
    pub validators: usize,
    pub classes: usize,
    pub cells: Vec<f64>,
}

impl MMatrix {
    pub fn row(&self, v: usize) -> &[f64] {
        &self.cells[v * self.classes..(v + 1) * self.classes]
    }

    /// Mean over validators, per class.
    pub fn validator_mean(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.classes];
        for v in 0..self.validators {
            for (m, &x) in mean.iter_mut().zip(self.row(v)) {
                *m += x;
            }
        }
        for m in mean.iter_mut() {
            *m /= self.validators as f64;
        }
        mean
    }
}

/// Projection of the per-class mean vector to a scalar ranking score.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Projection {
    Minimum,
    Mean,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidationConfig {
    /// Minimum samples of a class for its cell to be reported.
    #[serde(default = "default_n1")]
    pub n1: usize,
    /// Maximum samples of a class used per evaluation.
    #[serde(default = "default_n2")]
    pub n2: usize,
    /// Imputation strategy name; see [`impute::names`].
    #[serde(default = "default_imputation")]
    pub imputation: String,
    /// Outlier detection strategy name; see [`outlier::names`].
    #[serde(default = "default_outlier")]
    pub outlier: String,
    /// Expected fraction of corrupted reports; defaults to the simulation's
    /// malicious fraction plus a 0.05 margin when absent.
    #[serde(default)]
    pub contamination: Option<f64>,
    /// Sample validators from the round's participants instead of the full
    /// client pool.
    #[serde(default)]
    pub validators_from_round: bool,
    #[serde(default = "default_projection")]
    pub projection: Projection,
}

fn default_n1() -> usize {
    10
}

fn default_n2() -> usize {
    30
}

fn default_imputation() -> String {
    "iterative".into()
}

fn default_outlier() -> String {
    "robust_mahalanobis".into()
}

fn default_projection() -> Projection {
    Projection::Minimum
}

impl Default for ValidationConfig {
    fn default() -> Self {
        ValidationConfig {
            n1: default_n1(),
            n2: default_n2(),
            imputation: default_imputation(),
            outlier: default_outlier(),
            contamination: None,
            validators_from_round: false,
            projection: default_projection(),
        }
    }
}

impl ValidationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n1 > self.n2 || self.n1 == 0 {
            return Err(Error::InvalidConfig(format!(
                "need 1 <= n1 <= n2, got n1={} n2={}",
                self.n1, self.n2
            )));
        }
        impute::by_name(&self.imputation)?;
        outlier::by_name(&self.outlier)?;
        if let Some(c) = self.contamination {
            if !(0.0..1.0).contains(&c) {
                return Err(Error::InvalidConfig(format!(
                    "contamination must be in [0, 1), got {c}"
                )));
            }
        }
        Ok(())
    }
}

/// Per-class subsample indices for a validator's data: `None` when the
/// class has fewer than `n1` samples, otherwise `min(n2, count)` indices
/// drawn without replacement. Sampling is seeded per
/// (round, validator, class) so reruns and per-representative evaluations
/// reuse identical subsamples; classes at or below `n2` are taken whole.
fn class_subsamples(
    data: &LabeledDataset,
    classes: usize,
    n1: usize,
    n2: usize,
    master: u64,
    round: usize,
    validator_id: usize,
) -> Vec<Option<Vec<usize>>> {
    let by_class = data.indices_by_class(classes);
    by_class
        .into_iter()
        .enumerate()
        .map(|(class, mut idxs)| {
            if idxs.len() < n1 {
                return None;
            }
            if idxs.len() > n2 {
                let mut rng = rng::stream(
                    master,
                    &[tag::LIPC_SAMPLE, round as u64, validator_id as u64, class as u64],
                );
                for i in 0..n2 {
                    let j = rand::Rng::random_range(&mut rng, i..idxs.len());
                    idxs.swap(i, j);
                }
                idxs.truncate(n2);
            }
            Some(idxs)
        })
        .collect()
}

fn mean_loss_on(
    params: &ParamVector,
    arch: &Architecture,
    data: &LabeledDataset,
    idxs: &[usize],
) -> Result<f64> {
    let subset = data.subset(idxs);
    nn::loss_mean(params, arch, &subset)
}

/// Loss impact per class of one representative on one validator's data.
pub fn compute_lipc(
    rep: &RepresentativeModel,
    global: &ParamVector,
    arch: &Architecture,
    val_data: &LabeledDataset,
    n1: usize,
    n2: usize,
    master: u64,
    round: usize,
    validator_id: usize,
) -> Result<LipcVector> {
    let classes = arch.num_classes;
    let samples = class_subsamples(val_data, classes, n1, n2, master, round, validator_id);
    let mut values = Vec::with_capacity(classes);
    let mut used = Vec::with_capacity(classes);
    for idxs in &samples {
        match idxs {
            Some(idxs) => {
                let g_loss = mean_loss_on(global, arch, val_data, idxs)?;
                let e_loss = mean_loss_on(&rep.params, arch, val_data, idxs)?;
                values.push(Some(g_loss - e_loss));
                used.push(idxs.len());
            }
            None => {
                values.push(None);
                used.push(0);
            }
        }
    }
    Ok(LipcVector { values, used })
}

/// Accuracy difference per class (representative minus global), with the
/// same subsampling and missing-cell rules as the loss-impact metric. Used
/// only by the metric-ablation harness.
pub fn compute_adpc(
    rep: &RepresentativeModel,
    global: &ParamVector,
    arch: &Architecture,
    val_data: &LabeledDataset,
    n1: usize,
    n2: usize,
    master: u64,
    round: usize,
    validator_id: usize,
) -> Result<LipcVector> {
    let classes = arch.num_classes;
    let samples = class_subsamples(val_data, classes, n1, n2, master, round, validator_id);
    let mut values = Vec::with_capacity(classes);
    let mut used = Vec::with_capacity(classes);
    for (class, idxs) in samples.iter().enumerate() {
        match idxs {
            Some(idxs) => {
                let subset = val_data.subset(idxs);
                let acc = |params: &ParamVector| -> Result<f64> {
                    let preds = nn::predict(params, arch, subset.features())?;
                    let hits = preds.iter().filter(|&&p| p == class).count();
                    Ok(hits as f64 / idxs.len() as f64)
                };
                values.push(Some(acc(&rep.params)? - acc(global)?));
                used.push(idxs.len());
            }
            None => {
                values.push(None);
                used.push(0);
            }
        }
    }
    Ok(LipcVector { values, used })
}

/// A validator taking part in a round.
pub struct ValidatorInput<'a> {
    pub client_id: usize,
    pub data: &'a LabeledDataset,
    pub malicious: bool,
}

/// Hook for validator-side report forging; implemented by the validation
/// attacks. Receives only the malicious validators' own truthful reports
/// plus round metadata, and returns the reports they submit instead.
pub trait ReportForger {
    fn name(&self) -> &'static str;
    fn forge(&self, ctx: &ForgeContext<'_>) -> Vec<NMatrix>;
}

pub struct ForgeContext<'a> {
    /// Truthful reports of the malicious validators, in validator order.
    pub own_truthful: &'a [NMatrix],
    /// Which representatives were crafted by malicious clients.
    pub malicious_reps: &'a [bool],
    /// Number of benign validators in the round.
    pub benign_validators: usize,
    /// Representatives accepted by the filter: ceil(m / 2).
    pub accept_count: usize,
    /// Whether the server runs outlier detection, and with which method.
    pub detector: Option<&'a str>,
    pub contamination: f64,
}

/// Everything the round needs from validation, plus diagnostics.
pub struct ValidationOutcome {
    /// Per-representative report matrices over the surviving validators.
    pub m_matrices: Vec<MMatrix>,
    /// Indices (into the validator list) that survived outlier detection.
    pub kept: Vec<usize>,
    pub filtered: usize,
    /// Imputed, complete reports of every validator (kept or not).
    pub imputed: Vec<Vec<f64>>,
    pub validator_malicious: Vec<bool>,
    pub validator_ids: Vec<usize>,
}

/// Run the validation protocol for a round: truthful report computation,
/// validator-attack forging, imputation, outlier filtering, and assembly of
/// the per-representative matrices from the surviving reports.
#[allow(clippy::too_many_arguments)]
pub fn run_validation(
    global: &ParamVector,
    arch: &Architecture,
    reps: &[RepresentativeModel],
    malicious_reps: &[bool],
    validators: &[ValidatorInput<'_>],
    cfg: &ValidationConfig,
    contamination: f64,
    forger: Option<&dyn ReportForger>,
    master: u64,
    round: usize,
) -> Result<ValidationOutcome> {
    let classes = arch.num_classes;
    let m = reps.len();
    if m == 0 || validators.is_empty() {
        return Err(Error::EmptyDataset("validation needs reps and validators"));
    }

    // truthful reports; global-model losses are shared across representatives
    let mut n_set: Vec<NMatrix> = Vec::with_capacity(validators.len());
    for v in validators {
        let samples =
            class_subsamples(v.data, classes, cfg.n1, cfg.n2, master, round, v.client_id);
        let mut g_loss = vec![0.0; classes];
        for (class, idxs) in samples.iter().enumerate() {
            if let Some(idxs) = idxs {
                g_loss[class] = mean_loss_on(global, arch, v.data, idxs)?;
            }
        }
        let mut n = NMatrix::new(m, classes);
        for (e, rep) in reps.iter().enumerate() {
            for (class, idxs) in samples.iter().enumerate() {
                if let Some(idxs) = idxs {
                    let e_loss = mean_loss_on(&rep.params, arch, v.data, idxs)?;
                    n.set(e, class, Some(g_loss[class] - e_loss));
                }
            }
        }
        n_set.push(n);
    }

    // malicious validators submit forged reports
    let mal_idx: Vec<usize> = (0..validators.len())
        .filter(|&i| validators[i].malicious)
        .collect();
    if let (Some(forger), false) = (forger, mal_idx.is_empty()) {
        let own: Vec<NMatrix> = mal_idx.iter().map(|&i| n_set[i].clone()).collect();
        let ctx = ForgeContext {
            own_truthful: &own,
            malicious_reps,
            benign_validators: validators.len() - mal_idx.len(),
            accept_count: m.div_ceil(2),
            detector: match cfg.outlier.as_str() {
                "none" => None,
                other => Some(other),
            },
            contamination,
        };
        let forged = forger.forge(&ctx);
        debug_assert_eq!(forged.len(), mal_idx.len());
        for (&i, crafted) in mal_idx.iter().zip(forged) {
            n_set[i] = crafted;
        }
    }

    let imputer = impute::by_name(&cfg.imputation)?;
    let imputed = imputer.impute(&n_set);

    let detector = outlier::by_name(&cfg.outlier)?;
    let kept = detector.kept(&imputed, contamination);
    if kept.is_empty() {
        return Err(Error::AllValidatorsFiltered);
    }
    let filtered = validators.len() - kept.len();

    let mut m_matrices = Vec::with_capacity(m);
    for e in 0..m {
        let mut cells = Vec::with_capacity(kept.len() * classes);
        for &v in &kept {
            cells.extend_from_slice(&imputed[v][e * classes..(e + 1) * classes]);
        }
        m_matrices.push(MMatrix {
            validators: kept.len(),
            classes,
            cells,
        });
    }

    Ok(ValidationOutcome {
        m_matrices,
        kept,
        filtered,
        imputed,
        validator_malicious: validators.iter().map(|v| v.malicious).collect(),
        validator_ids: validators.iter().map(|v| v.client_id).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::glorot_init;

    fn arch() -> Architecture {
        Architecture::new(4, vec![], 3).unwrap()
    }

    fn rep_from(params: ParamVector, global: &ParamVector) -> RepresentativeModel {
        let update = params.sub(global).unwrap();
        RepresentativeModel {
            params,
            update,
            contributions: vec![(0, 1.0)],
            base_id: Some(0),
        }
    }

    fn dataset(per_class: &[usize]) -> LabeledDataset {
        let mut d = LabeledDataset::empty(4);
        for (class, &count) in per_class.iter().enumerate() {
            for i in 0..count {
                let x = [class as f64, i as f64 * 0.1, 0.5, -0.5];
                d.push(&x, class);
            }
        }
        d
    }

    #[test]
    fn identical_models_give_exact_zero_cells() {
        let a = arch();
        let g = glorot_init(&a, &mut rng::stream(1, &[tag::INIT]));
        let rep = rep_from(g.clone(), &g);
        let data = dataset(&[12, 12, 12]);
        let l = compute_lipc(&rep, &g, &a, &data, 5, 10, 7, 0, 0).unwrap();
        assert!(l.values.iter().all(|v| v == &Some(0.0)));
    }

    #[test]
    fn class_below_threshold_is_missing() {
        let a = arch();
        let g = glorot_init(&a, &mut rng::stream(2, &[tag::INIT]));
        let rep = rep_from(g.clone(), &g);
        let data = dataset(&[4, 12, 12]); // class 0 has n1 - 1 samples
        let l = compute_lipc(&rep, &g, &a, &data, 5, 10, 7, 0, 0).unwrap();
        assert_eq!(l.values[0], None);
        assert_eq!(l.used[0], 0);
        assert!(l.values[1].is_some());
    }

    #[test]
    fn sampling_bound_caps_at_n2() {
        let a = arch();
        let g = glorot_init(&a, &mut rng::stream(3, &[tag::INIT]));
        let rep = rep_from(g.clone(), &g);
        let data = dataset(&[40, 8, 12]);
        let l = compute_lipc(&rep, &g, &a, &data, 5, 10, 7, 3, 2).unwrap();
        assert_eq!(l.used[0], 10);
        assert_eq!(l.used[1], 8);
        assert_eq!(l.used[2], 10);
    }

    #[test]
    fn hand_built_two_class_loss_difference() {
        // softmax regression on 1 feature, 2 classes; representative halves
        // the class-0 loss relative to the global model
        let a = Architecture::new(1, vec![], 2).unwrap();
        let g = ParamVector::zeros(a.param_count()); // uniform: loss ln 2
        let mut rep_params = ParamVector::zeros(a.param_count());
        // W = [[w0], [w1]], b: logits for x=1: [w0 + b0, w1 + b1]
        rep_params.0[0] = 1.0; // class-0 logit 1, class-1 logit 0 at x = 1
        let rep = rep_from(rep_params.clone(), &g);
        let mut data = LabeledDataset::empty(1);
        for _ in 0..6 {
            data.push(&[1.0], 0);
        }
        for _ in 0..6 {
            data.push(&[0.0], 1);
        }
        let l = compute_lipc(&rep, &g, &a, &data, 5, 10, 7, 0, 0).unwrap();
        // per-sample oracle: global loss ln 2 everywhere; rep loss for
        // class 0 at x=1 is -log(e / (e + 1)); for class 1 at x=0 it is
        // unchanged (logits both 0)
        let ln2 = std::f64::consts::LN_2;
        let rep_loss0 = (1.0 + (-1.0f64).exp()).ln();
        assert!((l.values[0].unwrap() - (ln2 - rep_loss0)).abs() < 1e-12);
        assert!((l.values[1].unwrap() - 0.0).abs() < 1e-12);
    }

    #[test]
    fn subsamples_are_stable_per_round_validator_class() {
        let data = dataset(&[40, 40, 40]);
        let a = class_subsamples(&data, 3, 5, 10, 99, 4, 2);
        let b = class_subsamples(&data, 3, 5, 10, 99, 4, 2);
        assert_eq!(a, b);
        let c = class_subsamples(&data, 3, 5, 10, 99, 5, 2);
        assert_ne!(a, c);
    }

    #[test]
    fn adpc_zero_for_identical_models_and_one_for_a_solved_class() {
        let a = Architecture::new(1, vec![], 2).unwrap();
        let g = ParamVector::zeros(a.param_count());
        let rep_same = rep_from(g.clone(), &g);
        let mut data = LabeledDataset::empty(1);
        for _ in 0..8 {
            data.push(&[1.0], 0);
        }
        for _ in 0..8 {
            data.push(&[-1.0], 1);
        }
        let z = compute_adpc(&rep_same, &g, &a, &data, 5, 10, 1, 0, 0).unwrap();
        assert!(z.values.iter().all(|v| v == &Some(0.0)));

        // global predicts class 0 everywhere (tie -> lowest index); a
        // representative that solves class 1 gains a full point there
        let mut solved = ParamVector::zeros(a.param_count());
        solved.0[0] = 1.0;
        solved.0[1] = -1.0;
        let rep = rep_from(solved, &g);
        let d = compute_adpc(&rep, &g, &a, &data, 5, 10, 1, 0, 0).unwrap();
        assert_eq!(d.values[1], Some(1.0));
        assert_eq!(d.values[0], Some(0.0));
    }
}
