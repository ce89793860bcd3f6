//! Imputation of missing report cells.
//!
//! Reports are stacked into one matrix with a row per (validator,
//! representative) pair and a column per class; a validator lacking class
//! samples leaves that column empty across all of its rows. Strategies fill
//! those cells from the observed cells of the other validators.

use super::linalg;
use super::NMatrix;
use crate::{Error, Result};

pub trait Imputer {
    fn name(&self) -> &'static str;
    /// Complete, flattened (reps x classes) report per validator.
    fn impute(&self, reports: &[NMatrix]) -> Vec<Vec<f64>>;
}

/// Registered strategy names.
pub fn names() -> &'static [&'static str] {
    &["iterative", "mean", "median"]
}

pub fn by_name(name: &str) -> Result<Box<dyn Imputer>> {
    match name {
        "mean" => Ok(Box::new(MeanImputer)),
        "median" => Ok(Box::new(MedianImputer)),
        "iterative" => Ok(Box::new(IterativeImputer::default())),
        other => Err(Error::UnknownStrategy {
            family: "imputation",
            name: other.to_string(),
            known: names().join(", "),
        }),
    }
}

struct Stacked {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    missing: Vec<(usize, usize)>,
}

fn stack(reports: &[NMatrix]) -> Stacked {
    let reps = reports.first().map_or(0, |n| n.reps);
    let cols = reports.first().map_or(0, |n| n.classes);
    let rows = reports.len() * reps;
    let mut values = vec![0.0; rows * cols];
    let mut missing = Vec::new();
    for (v, n) in reports.iter().enumerate() {
        for e in 0..reps {
            let row = v * reps + e;
            for c in 0..cols {
                match n.get(e, c) {
                    Some(x) => values[row * cols + c] = x,
                    None => missing.push((row, c)),
                }
            }
        }
    }
    Stacked {
        rows,
        cols,
        values,
        missing,
    }
}

fn unstack(stacked: &Stacked, reports: &[NMatrix]) -> Vec<Vec<f64>> {
    let reps = reports.first().map_or(0, |n| n.reps);
    let cols = stacked.cols;
    reports
        .iter()
        .enumerate()
        .map(|(v, _)| {
            stacked.values[v * reps * cols..(v + 1) * reps * cols].to_vec()
        })
        .collect()
}

/// Per-column statistic over observed cells; 0.0 for all-missing columns.
fn column_fill(stacked: &Stacked, median: bool) -> Vec<f64> {
    let mut fills = vec![0.0; stacked.cols];
    for c in 0..stacked.cols {
        let mut observed: Vec<f64> = (0..stacked.rows)
            .filter(|&r| !stacked.missing.contains(&(r, c)))
            .map(|r| stacked.values[r * stacked.cols + c])
            .collect();
        if observed.is_empty() {
            continue;
        }
        fills[c] = if median {
            observed.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let n = observed.len();
            if n % 2 == 0 {
                (observed[n / 2 - 1] + observed[n / 2]) * 0.5
            } else {
                observed[n / 2]
            }
        } else {
            observed.iter().sum::<f64>() / observed.len() as f64
        };
    }
    fills
}

struct MeanImputer;

impl Imputer for MeanImputer {
    fn name(&self) -> &'static str {
        "mean"
    }

    fn impute(&self, reports: &[NMatrix]) -> Vec<Vec<f64>> {
        let mut stacked = stack(reports);
        let fills = column_fill(&stacked, false);
        for &(r, c) in &stacked.missing.clone() {
            stacked.values[r * stacked.cols + c] = fills[c];
        }
        unstack(&stacked, reports)
    }
}

struct MedianImputer;

impl Imputer for MedianImputer {
    fn name(&self) -> &'static str {
        "median"
    }

    fn impute(&self, reports: &[NMatrix]) -> Vec<Vec<f64>> {
        let mut stacked = stack(reports);
        let fills = column_fill(&stacked, true);
        for &(r, c) in &stacked.missing.clone() {
            stacked.values[r * stacked.cols + c] = fills[c];
        }
        unstack(&stacked, reports)
    }
}

/// Round-robin ridge regression of each incomplete column on the others,
/// initialised from column means. The small ridge term keeps the column
/// regressions well-posed at desk scale.
pub struct IterativeImputer {
    pub sweeps: usize,
    pub lambda: f64,
}

impl Default for IterativeImputer {
    fn default() -> Self {
        IterativeImputer {
            sweeps: 10,
            lambda: 1e-3,
        }
    }
}

impl Imputer for IterativeImputer {
    fn name(&self) -> &'static str {
        "iterative"
    }

    fn impute(&self, reports: &[NMatrix]) -> Vec<Vec<f64>> {
        let mut stacked = stack(reports);
        if stacked.missing.is_empty() {
            return unstack(&stacked, reports);
        }
        let cols = stacked.cols;
        let fills = column_fill(&stacked, false);
        for &(r, c) in &stacked.missing {
            stacked.values[r * cols + c] = fills[c];
        }

        let mut missing_by_col: Vec<Vec<usize>> = vec![Vec::new(); cols];
        for &(r, c) in &stacked.missing {
            missing_by_col[c].push(r);
        }
        let observed_by_col: Vec<Vec<usize>> = (0..cols)
            .map(|c| {
                let miss: &Vec<usize> = &missing_by_col[c];
                (0..stacked.rows).filter(|r| !miss.contains(r)).collect()
            })
            .collect();

        for _ in 0..self.sweeps {
            for c in 0..cols {
                if missing_by_col[c].is_empty() || observed_by_col[c].is_empty() {
                    continue;
                }
                let feat_cols: Vec<usize> = (0..cols).filter(|&j| j != c).collect();
                let width = feat_cols.len() + 1;
                let rows = observed_by_col[c].len();
                let mut x = Vec::with_capacity(rows * width);
                let mut y = Vec::with_capacity(rows);
                for &r in &observed_by_col[c] {
                    for &j in &feat_cols {
                        x.push(stacked.values[r * cols + j]);
                    }
                    x.push(1.0);
                    y.push(stacked.values[r * cols + c]);
                }
                let beta = linalg::ridge(&x, &y, rows, width, self.lambda);
                for &r in &missing_by_col[c] {
                    let mut pred = beta[width - 1];
                    for (k, &j) in feat_cols.iter().enumerate() {
                        pred += beta[k] * stacked.values[r * cols + j];
                    }
                    stacked.values[r * cols + c] = pred;
                }
            }
        }
        unstack(&stacked, reports)
    }
}
