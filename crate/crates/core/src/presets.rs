//! Versioned scenario presets.
//!
//! Each preset bundles a complete experiment configuration. The catalog is
//! immutable: tweaking a scenario means adding a new preset (or bumping the
//! version), never silently changing an existing one.

use crate::attacks::AttackConfig;
use crate::config::{DataConfig, Distribution, ExperimentConfig, ModelConfig, SimConfig};
use crate::nn::TrainConfig;
use crate::representative::{RepConfig, RepMode};
use crate::validation::{Projection, ValidationConfig};
use crate::{Error, Result};

#[derive(Clone, Debug)]
pub struct Preset {
    pub name: &'static str,
    pub version: &'static str,
    pub summary: &'static str,
    pub config: ExperimentConfig,
}

fn desk_base(defense: &str, attack: &str) -> ExperimentConfig {
    ExperimentConfig {
        sim: SimConfig {
            num_clients: 20,
            clients_per_round: 20,
            num_rounds: 40,
            malicious_fraction: 0.4,
            num_validators: 10,
            classes: 10,
            distribution: Distribution::Iid,
            dirichlet_alpha: 0.5,
            defense: defense.into(),
            attack: attack.into(),
            seed: 7,
        },
        data: DataConfig {
            dim: 32,
            samples_per_client: 200,
            test_samples: 2000,
            spread: 0.5,
            radius: 4.0,
            confusable_pair: Some((3, 5)),
            pair_distance: 1.0,
        },
        model: ModelConfig {
            hidden_dims: vec![16],
        },
        train: TrainConfig {
            epochs: 2,
            learning_rate: 0.1,
            batch_size: 16,
            seed: 0,
        },
        attack: AttackConfig::default(),
        representative: RepConfig {
            mode: if defense == "flshield_cluster" {
                RepMode::Cluster
            } else {
                RepMode::Bijective
            },
            tau: 0.75,
            k1: 2,
            k2: None,
        },
        validation: ValidationConfig {
            n1: 5,
            n2: 15,
            imputation: "iterative".into(),
            outlier: "robust_mahalanobis".into(),
            contamination: None,
            validators_from_round: false,
            projection: Projection::Minimum,
        },
    }
}

/// The full catalog, in stable order.
pub fn catalog() -> Vec<Preset> {
    let mut presets = Vec::new();

    let mut benign = desk_base("fedavg", "none");
    benign.sim.clients_per_round = 10;
    benign.sim.malicious_fraction = 0.0;
    presets.push(Preset {
        name: "benign_iid",
        version: "1",
        summary: "sanity run: no attack, plain averaging, sampled rounds",
        config: benign,
    });

    presets.push(Preset {
        name: "tlfa_iid",
        version: "1",
        summary: "targeted label flipping on IID shards, validation defense",
        config: desk_base("flshield_bijective", "tlfa"),
    });

    let mut tlfa_oce = desk_base("flshield_bijective", "tlfa");
    tlfa_oce.sim.distribution = Distribution::OneClassExpert;
    presets.push(Preset {
        name: "tlfa_one_class_expert",
        version: "1",
        summary: "label flipping with one-class-expert clients",
        config: tlfa_oce,
    });

    let mut tlfa_dir = desk_base("flshield_bijective", "tlfa");
    tlfa_dir.sim.distribution = Distribution::Dirichlet;
    tlfa_dir.sim.dirichlet_alpha = 0.5;
    presets.push(Preset {
        name: "tlfa_dirichlet",
        version: "1",
        summary: "label flipping with Dirichlet(0.5) client skew",
        config: tlfa_dir,
    });

    let mut ipma = desk_base("flshield_bijective", "ipma");
    // slow-training regime: the negated-mean attack throttles undefended
    // averaging for the whole run
    ipma.train.epochs = 1;
    ipma.train.learning_rate = 0.01;
    ipma.train.batch_size = 32;
    ipma.attack.active_from = Some(1);
    presets.push(Preset {
        name: "ipma_iid",
        version: "1",
        summary: "inner-product manipulation from round one, slow training",
        config: ipma,
    });

    let mut dba = desk_base("flshield_bijective", "dba");
    dba.attack.pspb = 8;
    presets.push(Preset {
        name: "dba_iid",
        version: "1",
        summary: "distributed trigger backdoor, four parts, IID shards",
        config: dba,
    });

    let mut fa_adp = desk_base("flshield_bijective", "tlfa");
    fa_adp.attack.validator_attack = "fa_adp".into();
    presets.push(Preset {
        name: "tlfa_fa_adp",
        version: "1",
        summary: "label flipping plus gradient-crafted validation reports",
        config: fa_adp,
    });

    let mut fa_adv = desk_base("flshield_bijective", "tlfa");
    fa_adv.attack.validator_attack = "fa_adv".into();
    presets.push(Preset {
        name: "tlfa_fa_adv",
        version: "1",
        summary: "label flipping plus minimally-altered validation reports",
        config: fa_adv,
    });

    let mut no_detector = desk_base("flshield_bijective", "tlfa");
    no_detector.attack.validator_attack = "fa_adv".into();
    no_detector.validation.outlier = "none".into();
    presets.push(Preset {
        name: "tlfa_fa_adv_nodetector",
        version: "1",
        summary: "report forging with outlier detection switched off",
        config: no_detector,
    });

    let mut mean_proj = desk_base("flshield_bijective", "tlfa");
    mean_proj.validation.projection = Projection::Mean;
    presets.push(Preset {
        name: "tlfa_mean_projection",
        version: "1",
        summary: "ablation: rank by the class mean instead of the minimum",
        config: mean_proj,
    });

    let mut cluster = desk_base("flshield_cluster", "tlfa");
    cluster.representative.mode = RepMode::Cluster;
    presets.push(Preset {
        name: "tlfa_cluster",
        version: "1",
        summary: "label flipping against the clustering defense",
        config: cluster,
    });

    let mut inversion = desk_base("fedavg", "none");
    inversion.sim.num_clients = 8;
    inversion.sim.clients_per_round = 8;
    inversion.sim.num_rounds = 1;
    inversion.sim.malicious_fraction = 0.0;
    inversion.sim.num_validators = 4;
    inversion.model.hidden_dims = vec![];
    inversion.data.samples_per_client = 120;
    inversion.data.test_samples = 500;
    presets.push(Preset {
        name: "inversion_probe",
        version: "1",
        summary: "one-round setup for the reconstruction probe",
        config: inversion,
    });

    presets
}

pub fn names() -> Vec<&'static str> {
    catalog().iter().map(|p| p.name).collect()
}

pub fn by_name(name: &str) -> Result<Preset> {
    catalog()
        .into_iter()
        .find(|p| p.name == name)
        .ok_or_else(|| Error::UnknownStrategy {
            family: "preset",
            name: name.to_string(),
            known: names().join(", "),
        })
}
