//! The validation-based defense pipeline: representative generation,
//! validation, ranking/filtering, clipping, aggregation.

use super::{
    aggregate, clip_updates, rank_and_filter, Defense, DefenseOutcome, RepStat, RoundContext,
    ValidatorDiag,
};
use crate::nn::ParamVector;
use crate::representative::{bijective_generate, cluster_generate, RepMapping, RepMode};
use crate::rng::{self, tag};
use crate::sim::metrics::fidelity_score;
use crate::validation::run_validation;
use crate::Result;

pub struct FlShield {
    pub mode: RepMode,
}

impl FlShield {
    fn generate(
        &self,
        ctx: &RoundContext<'_>,
    ) -> Result<(Vec<crate::representative::RepresentativeModel>, RepMapping)> {
        match self.mode {
            RepMode::Bijective => {
                bijective_generate(ctx.global, ctx.updates, ctx.rep_cfg.tau)
            }
            RepMode::Cluster => {
                let n = ctx.updates.len();
                let k2 = ctx.rep_cfg.k2_or_default(n);
                let mut rng = rng::stream(ctx.master_seed, &[tag::KMEANS, ctx.round as u64]);
                cluster_generate(ctx.global, ctx.updates, ctx.rep_cfg.k1, k2, &mut rng)
            }
        }
    }
}

impl Defense for FlShield {
    fn name(&self) -> &'static str {
        match self.mode {
            RepMode::Bijective => "flshield_bijective",
            RepMode::Cluster => "flshield_cluster",
        }
    }

    fn run_round(&self, ctx: &RoundContext<'_>) -> Result<DefenseOutcome> {
        let (reps, mapping) = self.generate(ctx)?;

        // a representative is malicious when its base update is, or when a
        // strict majority of its cluster members are
        let rep_malicious: Vec<bool> = mapping
            .members
            .iter()
            .map(|members| {
                let mal = members.iter().filter(|&&i| ctx.malicious[i]).count();
                2 * mal > members.len()
            })
            .collect();

        let validation = run_validation(
            ctx.global,
            ctx.arch,
            &reps,
            &rep_malicious,
            &ctx.validators,
            ctx.val_cfg,
            ctx.contamination,
            ctx.forger,
            ctx.master_seed,
            ctx.round,
        )?;

        let filter = rank_and_filter(&validation.m_matrices, &mapping, ctx.val_cfg.projection)?;

        let accepted_updates: Vec<ParamVector> = filter
            .accepted_clients
            .iter()
            .map(|&i| ctx.updates[i].clone())
            .collect();
        let clipped = clip_updates(&accepted_updates);
        let new_global = aggregate(ctx.global, &clipped)?;

        let fidelity = match self.mode {
            RepMode::Cluster => Some(fidelity_score(&mapping.members, ctx.malicious)),
            RepMode::Bijective => None,
        };

        let rep_stats: Vec<RepStat> = rep_malicious
            .iter()
            .zip(&filter.scores)
            .enumerate()
            .map(|(i, (&malicious, &score))| RepStat {
                malicious,
                score,
                accepted: filter.accepted_reps.contains(&i),
            })
            .collect();

        Ok(DefenseOutcome {
            new_global,
            accepted: filter.accepted_clients,
            fidelity,
            filtered_validators: validation.filtered,
            rep_stats,
            validator_diag: Some(ValidatorDiag {
                imputed: validation.imputed,
                malicious: validation.validator_malicious,
                client_ids: validation.validator_ids,
                kept: validation.kept,
            }),
        })
    }
}
