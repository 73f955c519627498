//! Domain types shared by the planner, evidence, merging and sensitivity
//! modules: propositions, possible worlds (P-states), reduction operators,
//! plan trees and super-plans.

mod operator;
mod plan;
mod state;
mod superplan;
mod term;

pub use operator::{
    CausalRule, CompatibilityRelation, Planfail, PlotEntry, PlotMode, ProbabilityRule,
    ProbabilityTable, ReductionOperator,
};
pub use plan::{
    Expansion, NodeDocument, NodeId, NodeStatus, Plan, PlanDocument, PlanNode, PlanTree, Step,
    Values,
};
pub use state::{
    AbstractionLevel, CompatViolation, Edit, EditKind, EvidentialInterval, ModelError, PState,
};
pub use superplan::{
    Alternative, BranchPoint, KnowledgeAcquisitionOperator, Observation, OutcomeMapping, SuperNode,
    SuperPlan,
};
pub use term::{Bindings, Proposition, Term};

/// Closed-world query: whether `p` holds at `level` of `ps`.
pub fn holds(ps: &PState, level: usize, p: &Proposition) -> Result<bool, ModelError> {
    ps.holds(level, p)
}

/// Returns `ps` with `edits` applied in order.
pub fn apply_edits(ps: &PState, edits: &[Edit]) -> Result<PState, ModelError> {
    ps.apply_edits(edits)
}

pub fn enforce_compatibility(
    ps: &PState,
    relations: &[CompatibilityRelation],
) -> Result<PState, CompatViolation> {
    ps.enforce_compatibility(relations)
}
