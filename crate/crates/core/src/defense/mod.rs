//! Defense strategies behind a common trait, registered by name.
//!
//! The two validation-based defenses run the full pipeline (representative
//! generation, validation, ranking/filtering, clipping, aggregation); the
//! baselines aggregate directly. Strategy selection happens at runtime via
//! configuration or the command line.

mod baselines;
mod filter;
mod flshield;

pub use baselines::{baseline_aggregate, geometric_median, BaselineMethod};
pub use filter::{aggregate, clip_updates, rank_and_filter, score_round, FilterOutcome};
pub use flshield::FlShield;

use std::collections::BTreeMap;

use crate::nn::{Architecture, ParamVector};
use crate::representative::{RepConfig, RepMode};
use crate::validation::{Projection, ReportForger, ValidationConfig, ValidatorInput};
use crate::{Error, Result};

/// Everything a defense may need for one round. Baselines ignore the
/// validation fields.
pub struct RoundContext<'a> {
    pub global: &'a ParamVector,
    pub arch: &'a Architecture,
    /// Local updates of the round's participants, ascending client order.
    pub updates: &'a [ParamVector],
    /// Ground-truth malice flags per participant (oracle + scoring only).
    pub malicious: &'a [bool],
    /// Candidate validators for the round.
    pub validators: Vec<ValidatorInput<'a>>,
    pub rep_cfg: &'a RepConfig,
    pub val_cfg: &'a ValidationConfig,
    pub contamination: f64,
    pub forger: Option<&'a dyn ReportForger>,
    pub master_seed: u64,
    /// 1-based round index.
    pub round: usize,
}

/// Per-representative diagnostics emitted by the validation defenses.
#[derive(Clone, Debug)]
pub struct RepStat {
    pub malicious: bool,
    pub score: f64,
    pub accepted: bool,
}

/// Post-validation snapshot used by distribution-consistency analyses.
#[derive(Clone, Debug)]
pub struct ValidatorDiag {
    /// Imputed, complete report per validator.
    pub imputed: Vec<Vec<f64>>,
    pub malicious: Vec<bool>,
    pub client_ids: Vec<usize>,
    pub kept: Vec<usize>,
}

pub struct DefenseOutcome {
    pub new_global: ParamVector,
    /// Participant indices whose updates entered the aggregate.
    pub accepted: Vec<usize>,
    pub fidelity: Option<f64>,
    pub filtered_validators: usize,
    pub rep_stats: Vec<RepStat>,
    pub validator_diag: Option<ValidatorDiag>,
}

/// An aggregation/defense strategy applied once per round.
pub trait Defense {
    fn name(&self) -> &'static str;
    fn run_round(&self, ctx: &RoundContext<'_>) -> Result<DefenseOutcome>;
}

struct BaselineDefense {
    method: BaselineMethod,
}

impl Defense for BaselineDefense {
    fn name(&self) -> &'static str {
        self.method.name()
    }

    fn run_round(&self, ctx: &RoundContext<'_>) -> Result<DefenseOutcome> {
        let (new_global, accepted) =
            baseline_aggregate(self.method, ctx.global, ctx.updates, ctx.malicious)?;
        Ok(DefenseOutcome {
            new_global,
            accepted,
            fidelity: None,
            filtered_validators: 0,
            rep_stats: Vec::new(),
            validator_diag: None,
        })
    }
}

type DefenseFactory = fn() -> Box<dyn Defense>;

/// Name-indexed strategy registry.
pub struct DefenseRegistry {
    factories: BTreeMap<&'static str, DefenseFactory>,
}

impl DefenseRegistry {
    pub fn builtin() -> Self {
        let mut factories: BTreeMap<&'static str, DefenseFactory> = BTreeMap::new();
        factories.insert("fedavg", || {
            Box::new(BaselineDefense {
                method: BaselineMethod::FedAvg,
            })
        });
        factories.insert("fedoracle", || {
            Box::new(BaselineDefense {
                method: BaselineMethod::FedOracle,
            })
        });
        factories.insert("rfa", || {
            Box::new(BaselineDefense {
                method: BaselineMethod::Rfa,
            })
        });
        factories.insert("flshield_bijective", || {
            Box::new(FlShield {
                mode: RepMode::Bijective,
            })
        });
        factories.insert("flshield_cluster", || {
            Box::new(FlShield {
                mode: RepMode::Cluster,
            })
        });
        DefenseRegistry { factories }
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.factories.keys().copied().collect()
    }

    pub fn create(&self, name: &str) -> Result<Box<dyn Defense>> {
        self.factories
            .get(name)
            .map(|f| f())
            .ok_or_else(|| Error::UnknownStrategy {
                family: "defense",
                name: name.to_string(),
                known: self.names().join(", "),
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_knows_all_five_defenses() {
        let reg = DefenseRegistry::builtin();
        assert_eq!(
            reg.names(),
            vec![
                "fedavg",
                "fedoracle",
                "flshield_bijective",
                "flshield_cluster",
                "rfa"
            ]
        );
        for name in reg.names() {
            assert_eq!(reg.create(name).unwrap().name(), name);
        }
        assert!(reg.create("krum").is_err());
    }
}
