//! Bit-exact result emission: the per-round CSV and the summary JSON.
//!
//! CSV schema (fixed): `round,ma,rcl,asr,ba,tpr,tnr,fidelity,
//! accepted_malicious,filtered_validators` — one row per round, headers
//! mandatory, `.` decimal separator, shortest-roundtrip float formatting.
//! Reruns of the same (config, seed) produce byte-identical files.

use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::sim::{RoundReport, SimulationResult};

pub const CSV_HEADER: &str =
    "round,ma,rcl,asr,ba,tpr,tnr,fidelity,accepted_malicious,filtered_validators";

fn fmt(value: f64) -> String {
    // shortest-roundtrip formatting; never locale dependent
    format!("{value}")
}

pub fn rounds_csv(reports: &[RoundReport]) -> String {
    let mut out = String::with_capacity(64 * (reports.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in reports {
        let fidelity = r.fidelity.map(fmt).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.round,
            fmt(r.ma),
            fmt(r.rcl),
            fmt(r.asr),
            fmt(r.ba),
            fmt(r.tpr),
            fmt(r.tnr),
            fidelity,
            r.accepted_malicious,
            r.filtered_validators,
        ));
    }
    out
}

/// Mean over the attack-active rounds (all rounds when no attack ran).
fn active_mean<F: Fn(&RoundReport) -> Option<f64>>(reports: &[RoundReport], f: F) -> Option<f64> {
    let active: Vec<&RoundReport> = reports.iter().filter(|r| r.attack_active).collect();
    let pool: Vec<&RoundReport> = if active.is_empty() {
        reports.iter().collect()
    } else {
        active
    };
    let values: Vec<f64> = pool.iter().filter_map(|r| f(r)).collect();
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

#[derive(Debug, Serialize)]
pub struct FinalMetrics {
    pub round: usize,
    pub ma: f64,
    pub rcl: f64,
    pub asr: f64,
    pub ba: f64,
}

#[derive(Debug, Serialize)]
pub struct ActiveMeans {
    pub tpr: Option<f64>,
    pub tnr: Option<f64>,
    pub fidelity: Option<f64>,
    pub accepted_malicious: Option<f64>,
    pub filtered_validators: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct Summary<'a> {
    pub version: &'static str,
    pub attack_window: (usize, usize),
    pub final_metrics: Option<FinalMetrics>,
    pub means_over_attack_rounds: ActiveMeans,
    pub config: &'a ExperimentConfig,
}

pub fn summary(result: &SimulationResult) -> Summary<'_> {
    let reports = &result.reports;
    let final_metrics = reports.last().map(|r| FinalMetrics {
        round: r.round,
        ma: r.ma,
        rcl: r.rcl,
        asr: r.asr,
        ba: r.ba,
    });
    Summary {
        version: crate::VERSION,
        attack_window: result.config.attack.active_window(result.config.sim.num_rounds),
        final_metrics,
        means_over_attack_rounds: ActiveMeans {
            tpr: active_mean(reports, |r| Some(r.tpr)),
            tnr: active_mean(reports, |r| Some(r.tnr)),
            fidelity: active_mean(reports, |r| r.fidelity),
            accepted_malicious: active_mean(reports, |r| Some(r.accepted_malicious as f64)),
            filtered_validators: active_mean(reports, |r| Some(r.filtered_validators as f64)),
        },
        config: &result.config,
    }
}

pub fn summary_json(result: &SimulationResult) -> String {
    serde_json::to_string_pretty(&summary(result)).expect("summary serialises")
}

/// Parse a rounds CSV back into the numeric columns (used by the
/// consistency checks; not a general CSV reader).
pub fn parse_rounds_csv(text: &str) -> Vec<RoundReport> {
    let mut reports = Vec::new();
    for line in text.lines().skip(1) {
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols.len(), 10, "csv schema drift: {line}");
        reports.push(RoundReport {
            round: cols[0].parse().unwrap(),
            ma: cols[1].parse().unwrap(),
            rcl: cols[2].parse().unwrap(),
            asr: cols[3].parse().unwrap(),
            ba: cols[4].parse().unwrap(),
            tpr: cols[5].parse().unwrap(),
            tnr: cols[6].parse().unwrap(),
            fidelity: if cols[7].is_empty() {
                None
            } else {
                Some(cols[7].parse().unwrap())
            },
            accepted_malicious: cols[8].parse().unwrap(),
            filtered_validators: cols[9].parse().unwrap(),
            attack_active: false,
            accepted_ids: Vec::new(),
            rejected_ids: Vec::new(),
        });
    }
    reports
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(round: usize, fidelity: Option<f64>) -> RoundReport {
        RoundReport {
            round,
            ma: 95.5,
            rcl: 80.25,
            asr: 3.125,
            ba: 0.0,
            tpr: 100.0,
            tnr: 83.33333333333333,
            fidelity,
            accepted_malicious: 0,
            filtered_validators: 1,
            attack_active: round >= 2,
            accepted_ids: vec![1, 2],
            rejected_ids: vec![3],
        }
    }

    #[test]
    fn csv_schema_and_roundtrip() {
        let reports = vec![report(1, None), report(2, Some(0.875))];
        let text = rounds_csv(&reports);
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER);
        assert!(text.ends_with('\n'));
        let parsed = parse_rounds_csv(&text);
        assert_eq!(parsed.len(), 2);
        assert_eq!(parsed[0].ma, 95.5);
        assert_eq!(parsed[0].fidelity, None);
        assert_eq!(parsed[1].fidelity, Some(0.875));
        assert_eq!(parsed[1].tnr, 83.33333333333333);
    }

    #[test]
    fn active_mean_uses_only_attack_rounds() {
        let reports = vec![report(1, None), report(2, Some(0.5)), report(3, Some(1.0))];
        let mean = active_mean(&reports, |r| r.fidelity).unwrap();
        assert!((mean - 0.75).abs() < 1e-12);
    }
}
