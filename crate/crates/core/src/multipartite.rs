//! Per-component ranking: the fixed point runs independently inside each
//! affinity component, and a size-weighted display ranking summarizes the
//! per-component views for users outside any cluster.

use rayon::prelude::*;

use crate::cluster::{AffinityPartition, ComponentId};
use crate::engine::{
    ranking_step_masked, run_fixed_point_masked, EngineConfig, EngineError, EngineState,
};
use crate::graph::{ItemId, RatingGraph};

/// Per-component engine states plus the assembled display ranking.
#[derive(Debug, Clone)]
pub struct MultipartiteResult {
    component_states: Vec<EngineState>,
    component_sizes: Vec<usize>,
    display: Vec<Option<f64>>,
    ranked_by: Vec<Vec<ComponentId>>,
}

impl MultipartiteResult {
    pub fn n_components(&self) -> usize {
        self.component_states.len()
    }

    pub fn component_state(&self, c: ComponentId) -> &EngineState {
        &self.component_states[c.0]
    }

    pub fn component_states(&self) -> &[EngineState] {
        &self.component_states
    }

    pub fn component_sizes(&self) -> &[usize] {
        &self.component_sizes
    }

    /// Ranking of `i` inside one component; None when no member rated it.
    pub fn cluster_ranking(&self, c: ComponentId, i: ItemId) -> Option<f64> {
        self.component_states[c.0].rankings[i.0]
    }

    /// Size-weighted average of the per-component rankings of `i`, over the
    /// components holding at least one rater of it.
    pub fn display_ranking(&self, i: ItemId) -> Option<f64> {
        self.display[i.0]
    }

    pub fn display(&self) -> &[Option<f64>] {
        &self.display
    }

    /// Components holding at least one rater of `i`.
    pub fn ranked_by(&self, i: ItemId) -> &[ComponentId] {
        &self.ranked_by[i.0]
    }

    pub fn all_converged(&self) -> bool {
        self.component_states.iter().all(|s| s.converged)
    }

    /// Per-user reputations, each read from the user's own component run.
    pub fn merged_reputations(&self, p: &AffinityPartition) -> Vec<f64> {
        (0..p.n_users())
            .map(|u| {
                let c = p.component_of(crate::graph::UserId(u)).expect("user in partition");
                self.component_states[c.0].reputations[u]
            })
            .collect()
    }
}

/// Runs the fixed point inside every component of the partition.
pub fn rank_multipartite(
    g: &RatingGraph,
    p: &AffinityPartition,
    cfg: &EngineConfig,
) -> Result<MultipartiteResult, EngineError> {
    cfg.validate()?;
    let bound = EngineConfig::stability_bound(g.scale().delta());
    if cfg.lambda >= bound && !cfg.safeguard_denominator {
        return Err(EngineError::UnsafeLambda {
            lambda: cfg.lambda,
            bound,
        });
    }
    let states: Vec<EngineState> = p
        .components()
        .par_iter()
        .map(|members| run_fixed_point_masked(g, cfg, members))
        .collect();
    Ok(assemble(g, p, states))
}

/// One masked ranking step per component from frozen reputations, without any
/// reputation refinement. Used to evaluate partitions against externally given
/// reputations and to track bribed rankings under the frozen-reputation rule.
pub fn rank_multipartite_frozen(
    g: &RatingGraph,
    p: &AffinityPartition,
    c: &[f64],
) -> MultipartiteResult {
    let states: Vec<EngineState> = p
        .components()
        .iter()
        .map(|members| {
            let mut mask = vec![false; g.n_users()];
            for u in members {
                mask[u.0] = true;
            }
            EngineState {
                reputations: c.to_vec(),
                rankings: ranking_step_masked(g, c, &mask, false),
                iterations: 0,
                converged: true,
            }
        })
        .collect();
    assemble(g, p, states)
}

fn assemble(
    g: &RatingGraph,
    p: &AffinityPartition,
    states: Vec<EngineState>,
) -> MultipartiteResult {
    let component_sizes: Vec<usize> = p.components().iter().map(Vec::len).collect();
    let mut display = Vec::with_capacity(g.n_items());
    let mut ranked_by = Vec::with_capacity(g.n_items());
    for i in g.items() {
        let holders: Vec<ComponentId> = p
            .component_ids()
            .filter(|c| states[c.0].rankings[i.0].is_some())
            .collect();
        if holders.is_empty() {
            display.push(None);
        } else {
            let mut num = 0.0;
            let mut den = 0.0;
            for &c in &holders {
                let w = component_sizes[c.0] as f64;
                num += w * states[c.0].rankings[i.0].expect("holder ranks item");
                den += w;
            }
            display.push(Some(num / den));
        }
        ranked_by.push(holders);
    }
    MultipartiteResult {
        component_states: states,
        component_sizes,
        display,
        ranked_by,
    }
}
