//! End-to-end planning: possible worlds from evidence, a plan per world in
//! rank order with reuse of earlier plans, then the merged super-plan.

use thiserror::Error;

use crate::dsl::DomainSpec;
use crate::evidence::{generate_pstates_with, rank_pstates, EvidenceError, EvidenceSet};
use crate::exec::Execution;
use crate::merge::{above_threshold, insert_ka_operators, merge_plans, MergeError};
use crate::model::{PState, Plan, SuperPlan};
use crate::planner::{plan_with, resume_plan, PlanError, PlanTrace, PlannerConfig};
use crate::reuse::{reapply_plan, select_best_partial, PartialReuse, Reapplication};

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub planner: PlannerConfig,
    /// Overrides the domain's coverage threshold.
    pub threshold: Option<(f64, f64)>,
    pub execution: Execution,
}

impl PipelineConfig {
    pub fn for_spec(spec: &DomainSpec) -> Self {
        PipelineConfig {
            planner: PlannerConfig::for_spec(spec),
            threshold: None,
            execution: Execution::default(),
        }
    }
}

/// How a world's plan was obtained. Donors are indices into the library of
/// plans built so far, in creation order.
#[derive(Clone, Debug, PartialEq)]
pub enum PlanSource {
    Planned,
    Reapplied { donor: usize },
    Resumed { donor: usize, prefix_len: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct WorldPlan {
    pub world: String,
    pub plan: Plan,
    pub source: PlanSource,
    pub trace: PlanTrace,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineOutput {
    /// All possible worlds, most supported first.
    pub worlds: Vec<PState>,
    /// One entry per world at or above the threshold, in rank order.
    pub plans: Vec<WorldPlan>,
    pub superplan: SuperPlan,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Evidence(#[from] EvidenceError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Merge(#[from] MergeError),
}

pub fn run_pipeline(
    spec: &DomainSpec,
    evidence: &EvidenceSet,
    config: &PipelineConfig,
) -> Result<PipelineOutput, PipelineError> {
    let worlds = generate_pstates_with(evidence, &spec.compat, spec.n_levels, config.execution)?;
    let worlds = rank_pstates(worlds);
    let threshold = config.threshold.unwrap_or(spec.coverage_threshold);
    log::info!("{} possible worlds", worlds.len());

    let mut library: Vec<Plan> = Vec::new();
    let mut plans = Vec::new();
    for w in worlds.iter().filter(|w| above_threshold(w, threshold)) {
        let wp = plan_world(spec, w, &library, config)?;
        log::info!("world `{}`: {:?}", w.id, wp.source);
        if !matches!(wp.source, PlanSource::Reapplied { .. }) {
            library.push(wp.plan.clone());
        }
        plans.push(wp);
    }
    let per_world: Vec<Plan> = plans.iter().map(|p| p.plan.clone()).collect();
    let merged = merge_plans(&per_world, &worlds, threshold)?;
    let superplan = insert_ka_operators(&merged, &worlds);
    Ok(PipelineOutput {
        worlds,
        plans,
        superplan,
    })
}

/// Tries every library plan in `ps` (concurrently), then reuses the best
/// full or partial fit, and plans from scratch otherwise.
fn plan_world(
    spec: &DomainSpec,
    ps: &PState,
    library: &[Plan],
    config: &PipelineConfig,
) -> Result<WorldPlan, PlanError> {
    let attempts = config
        .execution
        .map(library, |donor| reapply_plan(donor, ps, spec));

    let mut best_full: Option<(usize, Plan)> = None;
    let mut partials: Vec<(usize, PartialReuse)> = Vec::new();
    for (i, r) in attempts.into_iter().enumerate() {
        match r {
            Reapplication::Full(p) => {
                if best_full
                    .as_ref()
                    .is_none_or(|(_, b)| p.root_ef() > b.root_ef())
                {
                    best_full = Some((i, p));
                }
            }
            Reapplication::Partial(p) => partials.push((i, p)),
            Reapplication::None => {}
        }
    }
    if let Some((donor, plan)) = best_full {
        return Ok(WorldPlan {
            world: ps.id.clone(),
            plan,
            source: PlanSource::Reapplied { donor },
            trace: PlanTrace::default(),
        });
    }

    let candidates: Vec<PartialReuse> = partials.iter().map(|(_, p)| p.clone()).collect();
    if let Some(k) = select_best_partial(&candidates) {
        let (donor, part) = partials.swap_remove(k);
        let prefix_len = part.prefix_len;
        match resume_plan(part.tree, part.resume, ps, spec, &config.planner) {
            Ok(out) => {
                return Ok(WorldPlan {
                    world: ps.id.clone(),
                    plan: out.plan,
                    source: PlanSource::Resumed { donor, prefix_len },
                    trace: out.trace,
                })
            }
            Err(PlanError::NoPlan { .. }) => {
                log::debug!(
                    "resuming donor {donor} in `{}` failed; planning afresh",
                    ps.id
                );
            }
            Err(e) => return Err(e),
        }
    }

    let out = plan_with(ps, spec, &config.planner)?;
    Ok(WorldPlan {
        world: ps.id.clone(),
        plan: out.plan,
        source: PlanSource::Planned,
        trace: out.trace,
    })
}

/// Plans every world from scratch, without reuse.
pub fn plan_worlds_independently(
    spec: &DomainSpec,
    worlds: &[PState],
    config: &PlannerConfig,
    execution: Execution,
) -> Vec<Result<Plan, PlanError>> {
    execution.map(worlds, |w| plan_with(w, spec, config).map(|o| o.plan))
}
