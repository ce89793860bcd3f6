//! Federation orchestration: client setup, the per-round training loop,
//! and the full simulation driver.
//!
//! Determinism contract: every random decision derives from the master seed
//! plus structured tags, so a `(config, seed)` pair fully determines every
//! emitted number. Participants are processed in ascending client order, so
//! results do not depend on scheduling.

pub mod metrics;

use log::{info, warn};
use serde::Serialize;

use crate::attacks::{attack_by_name, forger_by_name, Attack, TriggerSpec};
use crate::config::{Distribution, ExperimentConfig};
use crate::data::{synth_blobs, BlobSpec, LabeledDataset};
use crate::defense::{score_round, Defense, DefenseRegistry, RepStat, RoundContext, ValidatorDiag};
use crate::nn::{self, Architecture, ParamVector, TrainConfig};
use crate::partition::{
    partition_dirichlet, partition_iid, partition_one_class_expert, sample_participants,
    split_holdout,
};
use crate::rng::{self, tag};
use crate::validation::{ReportForger, ValidatorInput};
use crate::{Error, Result};

/// A simulated client with its data split and ground-truth malice flag.
#[derive(Clone, Debug)]
pub struct ClientState {
    pub id: usize,
    pub train_data: LabeledDataset,
    pub validation_data: LabeledDataset,
    pub is_malicious: bool,
}

/// Per-round metrics; the first ten fields form the CSV schema.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RoundReport {
    pub round: usize,
    pub ma: f64,
    pub rcl: f64,
    pub asr: f64,
    pub ba: f64,
    pub tpr: f64,
    pub tnr: f64,
    pub fidelity: Option<f64>,
    pub accepted_malicious: usize,
    pub filtered_validators: usize,
    #[serde(skip)]
    pub attack_active: bool,
    #[serde(skip)]
    pub accepted_ids: Vec<u64>,
    #[serde(skip)]
    pub rejected_ids: Vec<u64>,
}

/// Non-CSV diagnostics kept per round for analysis suites.
#[derive(Clone, Debug, Default)]
pub struct RoundDiag {
    pub rep_stats: Vec<RepStat>,
    pub validator_diag: Option<ValidatorDiag>,
}

pub struct SimulationResult {
    pub config: ExperimentConfig,
    pub reports: Vec<RoundReport>,
    pub diagnostics: Vec<RoundDiag>,
    pub final_global: ParamVector,
}

pub struct Simulation {
    cfg: ExperimentConfig,
    arch: Architecture,
    clients: Vec<ClientState>,
    test_set: LabeledDataset,
    global: ParamVector,
    trigger: TriggerSpec,
    attack: Box<dyn Attack>,
    forger: Option<Box<dyn ReportForger>>,
    defense: Box<dyn Defense>,
    dba_rank: Vec<usize>,
    next_round: usize,
    sybil_counter: u64,
}

impl Simulation {
    pub fn new(cfg: ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let s = &cfg.sim;
        if cfg.validation.validators_from_round && s.num_validators > s.clients_per_round {
            return Err(Error::InvalidConfig(format!(
                "num_validators {} exceeds clients_per_round {}",
                s.num_validators, s.clients_per_round
            )));
        }
        let seed = s.seed;
        let arch = Architecture::new(cfg.data.dim, cfg.model.hidden_dims.clone(), s.classes)?;

        let pool_size = s.num_clients * cfg.data.samples_per_client;
        let train_pool = synth_blobs(
            &BlobSpec {
                classes: s.classes,
                dim: cfg.data.dim,
                per_class: pool_size.div_ceil(s.classes),
                spread: cfg.data.spread,
                radius: cfg.data.radius,
                confusable_pair: cfg.data.confusable_pair,
                pair_distance: cfg.data.pair_distance,
            },
            seed,
            0,
        )?;
        let test_set = synth_blobs(
            &BlobSpec {
                classes: s.classes,
                dim: cfg.data.dim,
                per_class: cfg.data.test_samples.div_ceil(s.classes),
                spread: cfg.data.spread,
                radius: cfg.data.radius,
                confusable_pair: cfg.data.confusable_pair,
                pair_distance: cfg.data.pair_distance,
            },
            seed,
            1,
        )?;

        let trigger = TriggerSpec::for_dataset(
            &train_pool,
            cfg.attack.trigger_parts,
            cfg.attack.trigger_target,
        )?;

        let mut part_rng = rng::stream(seed, &[tag::PARTITION]);
        let shards = match s.distribution {
            Distribution::Iid => partition_iid(&train_pool, s.num_clients, &mut part_rng)?,
            Distribution::OneClassExpert => {
                partition_one_class_expert(&train_pool, s.num_clients, s.classes, &mut part_rng)?
            }
            Distribution::Dirichlet => partition_dirichlet(
                &train_pool,
                s.num_clients,
                s.classes,
                s.dirichlet_alpha,
                cfg.train.batch_size,
                &mut part_rng,
            )?,
        };

        let num_malicious = (s.malicious_fraction * s.num_clients as f64).floor() as usize;
        let malicious_ids = sample_participants(
            s.num_clients,
            num_malicious,
            &mut rng::stream(seed, &[tag::MALICIOUS]),
        )?;

        let mut clients = Vec::with_capacity(s.num_clients);
        for (id, shard) in shards.into_iter().enumerate() {
            let mut holdout_rng = rng::stream(seed, &[tag::HOLDOUT, id as u64]);
            let (train_data, validation_data) =
                split_holdout(&shard, s.classes, 0.3, &mut holdout_rng)?;
            clients.push(ClientState {
                id,
                train_data,
                validation_data,
                is_malicious: malicious_ids.contains(&id),
            });
        }

        // stable trigger-part rank per malicious client
        let mut dba_rank = vec![0usize; s.num_clients];
        let mut rank = 0;
        for client in &clients {
            if client.is_malicious {
                dba_rank[client.id] = rank;
                rank += 1;
            }
        }

        let global = nn::glorot_init(&arch, &mut rng::stream(seed, &[tag::INIT]));
        let attack = attack_by_name(&s.attack, &cfg.attack, &trigger)?;
        let forger = forger_by_name(&cfg.attack.validator_attack)?;
        let defense = DefenseRegistry::builtin().create(&s.defense)?;

        Ok(Simulation {
            cfg,
            arch,
            clients,
            test_set,
            global,
            trigger,
            attack,
            forger,
            defense,
            dba_rank,
            next_round: 1,
            sybil_counter: 0,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn clients(&self) -> &[ClientState] {
        &self.clients
    }

    pub fn test_set(&self) -> &LabeledDataset {
        &self.test_set
    }

    pub fn global(&self) -> &ParamVector {
        &self.global
    }

    pub fn trigger(&self) -> &TriggerSpec {
        &self.trigger
    }

    pub fn attack_window(&self) -> (usize, usize) {
        self.cfg.attack.active_window(self.cfg.sim.num_rounds)
    }

    /// Local update of one participant, honest or poisoned.
    fn train_participant(&self, client: &ClientState, round: usize, active: bool) -> Result<ParamVector> {
        let train_cfg = TrainConfig {
            epochs: self.cfg.train.epochs,
            learning_rate: self.cfg.train.learning_rate,
            batch_size: self.cfg.train.batch_size,
            seed: rng::derive(
                self.cfg.sim.seed,
                &[tag::LOCAL_TRAIN, round as u64, client.id as u64],
            ),
        };
        if client.is_malicious && active {
            let poisoned = self.attack.poison_dataset(&client.train_data);
            let poisoner = self.attack.batch_poisoner(self.dba_rank[client.id]);
            return nn::local_train_poisoned(
                &self.global,
                &self.arch,
                &poisoned,
                &train_cfg,
                poisoner.as_deref(),
            );
        }
        nn::local_train(&self.global, &self.arch, &client.train_data, &train_cfg)
    }

    /// Execute one round: local training (with attack routing), the
    /// configured defense, and metric computation.
    pub fn run_round(&mut self) -> Result<(RoundReport, RoundDiag)> {
        let round = self.next_round;
        self.next_round += 1;
        let s = &self.cfg.sim;
        let (from, to) = self.attack_window();
        let active = round >= from && round <= to && s.attack != "none";
        let forging = round >= from
            && round <= to
            && self.forger.is_some()
            && self.cfg.attack.validator_attack != "none";

        let mut participants = sample_participants(
            s.num_clients,
            s.clients_per_round,
            &mut rng::stream(s.seed, &[tag::PARTICIPANTS, round as u64]),
        )?;
        participants.sort_unstable();

        // local training; malicious clients route through the attack
        let mut updates: Vec<Option<ParamVector>> = vec![None; participants.len()];
        let mut malicious = Vec::with_capacity(participants.len());
        for (slot, &id) in participants.iter().enumerate() {
            let client = &self.clients[id];
            malicious.push(client.is_malicious);
            if client.is_malicious && active && self.attack.needs_benign_updates() {
                continue; // crafted below from the benign updates
            }
            updates[slot] = Some(self.train_participant(client, round, active)?);
        }
        if active && self.attack.needs_benign_updates() {
            let benign: Vec<ParamVector> = participants
                .iter()
                .enumerate()
                .filter(|(_, &id)| !self.clients[id].is_malicious)
                .filter_map(|(slot, _)| updates[slot].clone())
                .collect();
            let crafted = self.attack.craft_update(&benign)?;
            for (slot, &id) in participants.iter().enumerate() {
                if self.clients[id].is_malicious {
                    updates[slot] = crafted.clone();
                }
            }
        }
        let updates: Vec<ParamVector> = updates
            .into_iter()
            .map(|u| u.ok_or(Error::EmptyDataset("missing participant update")))
            .collect::<Result<_>>()?;

        // validator pool per config
        let validator_pool: Vec<usize> = if self.cfg.validation.validators_from_round {
            participants.clone()
        } else {
            (0..s.num_clients).collect()
        };
        let picked = sample_participants(
            validator_pool.len(),
            s.num_validators.min(validator_pool.len()),
            &mut rng::stream(s.seed, &[tag::VALIDATORS, round as u64]),
        )?;
        let mut validator_ids: Vec<usize> = picked.iter().map(|&i| validator_pool[i]).collect();
        validator_ids.sort_unstable();
        let validators: Vec<ValidatorInput<'_>> = validator_ids
            .iter()
            .map(|&id| ValidatorInput {
                client_id: id,
                data: &self.clients[id].validation_data,
                malicious: self.clients[id].is_malicious,
            })
            .collect();

        let ctx = RoundContext {
            global: &self.global,
            arch: &self.arch,
            updates: &updates,
            malicious: &malicious,
            validators,
            rep_cfg: &self.cfg.representative,
            val_cfg: &self.cfg.validation,
            contamination: self.cfg.contamination(),
            forger: if forging {
                self.forger.as_deref()
            } else {
                None
            },
            master_seed: s.seed,
            round,
        };

        let (outcome, aborted) = match self.defense.run_round(&ctx) {
            Ok(outcome) => (Some(outcome), false),
            Err(Error::AllValidatorsFiltered) => {
                warn!("round {round}: all validators filtered; keeping the global model");
                (None, true)
            }
            Err(e) => return Err(e),
        };

        let (accepted, fidelity, filtered_validators, rep_stats, validator_diag) = match outcome
        {
            Some(o) => {
                self.global = o.new_global;
                (
                    o.accepted,
                    o.fidelity,
                    o.filtered_validators,
                    o.rep_stats,
                    o.validator_diag,
                )
            }
            None => (Vec::new(), None, ctx.validators.len(), Vec::new(), None),
        };
        let _ = aborted;

        let (tpr, tnr) = score_round(&accepted, &malicious);
        let m = metrics::compute_metrics(
            &self.global,
            &self.arch,
            &self.test_set,
            self.cfg.attack.source_class,
            self.cfg.attack.target_class,
            &self.trigger,
        )?;

        // sybil churn: malicious participants carry fresh external ids
        let mut external = Vec::with_capacity(participants.len());
        for &id in &participants {
            if self.clients[id].is_malicious {
                external.push(s.num_clients as u64 + self.sybil_counter);
                self.sybil_counter += 1;
            } else {
                external.push(id as u64);
            }
        }
        let accepted_ids: Vec<u64> = accepted.iter().map(|&slot| external[slot]).collect();
        let rejected_ids: Vec<u64> = (0..participants.len())
            .filter(|slot| !accepted.contains(slot))
            .map(|slot| external[slot])
            .collect();
        let accepted_malicious = accepted.iter().filter(|&&slot| malicious[slot]).count();

        info!(
            "round {round}: ma {:.2} rcl {:.2} tpr {:.2} tnr {:.2}",
            m.ma, m.rcl, tpr, tnr
        );
        Ok((
            RoundReport {
                round,
                ma: m.ma,
                rcl: m.rcl,
                asr: m.asr,
                ba: m.ba,
                tpr,
                tnr,
                fidelity,
                accepted_malicious,
                filtered_validators,
                attack_active: active,
                accepted_ids,
                rejected_ids,
            },
            RoundDiag {
                rep_stats,
                validator_diag,
            },
        ))
    }

    /// Run all configured rounds.
    pub fn run(cfg: ExperimentConfig) -> Result<SimulationResult> {
        let rounds = cfg.sim.num_rounds;
        let mut sim = Simulation::new(cfg)?;
        let mut reports = Vec::with_capacity(rounds);
        let mut diagnostics = Vec::with_capacity(rounds);
        for _ in 0..rounds {
            let (report, diag) = sim.run_round()?;
            reports.push(report);
            diagnostics.push(diag);
        }
        Ok(SimulationResult {
            config: sim.cfg,
            reports,
            diagnostics,
            final_global: sim.global,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    fn small_cfg(defense: &str, attack: &str) -> ExperimentConfig {
        let mut cfg = presets::by_name("tlfa_iid").unwrap().config;
        cfg.sim.defense = defense.into();
        cfg.sim.attack = attack.into();
        cfg.representative.mode = if defense == "flshield_cluster" {
            crate::representative::RepMode::Cluster
        } else {
            crate::representative::RepMode::Bijective
        };
        cfg.sim.num_clients = 8;
        cfg.sim.clients_per_round = 8;
        cfg.sim.num_rounds = 3;
        cfg.sim.num_validators = 4;
        cfg.sim.malicious_fraction = 0.25;
        cfg.data.samples_per_client = 120;
        cfg.data.test_samples = 300;
        cfg.train.epochs = 1;
        cfg
    }

    #[test]
    fn zero_rounds_return_the_initial_model() {
        let mut cfg = small_cfg("fedavg", "none");
        cfg.sim.num_rounds = 0;
        let result = Simulation::run(cfg.clone()).unwrap();
        assert!(result.reports.is_empty());
        let sim = Simulation::new(cfg).unwrap();
        assert_eq!(&result.final_global, sim.global());
    }

    #[test]
    fn fedavg_round_aggregates_the_plain_mean() {
        let cfg = small_cfg("fedavg", "none");
        let mut sim = Simulation::new(cfg.clone()).unwrap();
        let before = sim.global().clone();
        // recompute expected updates through the public training pieces
        let mut expected_updates = Vec::new();
        for client in sim.clients() {
            let tc = TrainConfig {
                epochs: cfg.train.epochs,
                learning_rate: cfg.train.learning_rate,
                batch_size: cfg.train.batch_size,
                seed: rng::derive(cfg.sim.seed, &[tag::LOCAL_TRAIN, 1, client.id as u64]),
            };
            expected_updates
                .push(nn::local_train(&before, sim.arch(), &client.train_data, &tc).unwrap());
        }
        sim.run_round().unwrap();
        let expected =
            crate::defense::aggregate(&before, &expected_updates).unwrap();
        assert_eq!(sim.global(), &expected);
    }

    #[test]
    fn fedoracle_scores_are_perfect_by_construction() {
        let cfg = small_cfg("fedoracle", "tlfa");
        let result = Simulation::run(cfg).unwrap();
        for report in &result.reports {
            assert_eq!(report.tpr, 100.0);
            assert_eq!(report.tnr, 100.0);
            assert_eq!(report.accepted_malicious, 0);
        }
    }

    #[test]
    fn identical_configs_produce_identical_report_streams() {
        let cfg = small_cfg("flshield_bijective", "tlfa");
        let a = Simulation::run(cfg.clone()).unwrap();
        let b = Simulation::run(cfg).unwrap();
        assert_eq!(a.reports, b.reports);
        assert_eq!(a.final_global, b.final_global);
    }

    #[test]
    fn rounds_before_the_window_match_a_benign_run() {
        let mut attacked = small_cfg("fedavg", "ipma");
        attacked.attack.active_from = Some(3);
        attacked.sim.num_rounds = 3;
        let benign = {
            let mut c = attacked.clone();
            c.sim.attack = "none".into();
            c
        };
        let a = Simulation::run(attacked).unwrap();
        let b = Simulation::run(benign).unwrap();
        // rounds 1 and 2 are identical; round 3 diverges
        assert_eq!(a.reports[0].ma, b.reports[0].ma);
        assert_eq!(a.reports[1].ma, b.reports[1].ma);
        assert!(a.reports[2].attack_active);
        assert_ne!(a.reports[2].ma, b.reports[2].ma);
    }

    #[test]
    fn malicious_count_is_exact_and_fixed() {
        let cfg = small_cfg("fedavg", "tlfa");
        let sim = Simulation::new(cfg.clone()).unwrap();
        let count = sim.clients().iter().filter(|c| c.is_malicious).count();
        assert_eq!(
            count,
            (cfg.sim.malicious_fraction * cfg.sim.num_clients as f64).floor() as usize
        );
    }

    #[test]
    fn client_data_is_conserved_and_disjoint() {
        let cfg = small_cfg("fedavg", "none");
        let sim = Simulation::new(cfg).unwrap();
        use std::collections::BTreeSet;
        let mut seen: BTreeSet<Vec<u64>> = BTreeSet::new();
        for client in sim.clients() {
            assert!(!client.train_data.is_empty());
            assert!(!client.validation_data.is_empty());
            for (set, len) in [
                (&client.train_data, client.train_data.len()),
                (&client.validation_data, client.validation_data.len()),
            ] {
                for i in 0..len {
                    let key: Vec<u64> = set.row(i).iter().map(|v| v.to_bits()).collect();
                    assert!(seen.insert(key), "duplicate sample across clients");
                }
            }
            // holdout is ~30% of the shard
            let total = client.train_data.len() + client.validation_data.len();
            let expect = (0.3 * total as f64).ceil() as usize;
            assert_eq!(client.validation_data.len(), expect);
        }
    }
}
