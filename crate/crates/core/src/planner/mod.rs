//! Best-first construction of the strategy hierarchy for one P-state.
//!
//! The search repeatedly walks the active solution in execution order,
//! expands the first unexpanded node it meets, propagates the new values
//! towards the root and then reviews earlier OR choices.

mod apply;
mod deduce;
mod review;
mod trace;
mod update;

use std::sync::Arc;

use thiserror::Error;

use crate::dsl::DomainSpec;
use crate::model::{
    Bindings, Expansion, ModelError, NodeId, PState, Plan, PlanNode, PlanTree, Planfail, PlotMode,
    ReductionOperator, Values,
};
use crate::sensitivity::{distinguishable, ErrorBoundedEF};

pub use apply::{
    apply_leaf, check_and_satisfy_preconditions, operator_probability, postconditions_hold,
    rank_candidates, Candidate, HelperApplication, LeafOutcome, PreconditionOutcome,
};
pub use deduce::{deduce_effects, stratify};
pub use review::{review_decisions, ReviewPolicy, Switch};
pub use trace::{replay, PlanTrace, TraceEvent, TraceKind, TraceParseError};
pub use update::{
    and_values, best_child, expected_fulfilment, propagate_updates, recompute_subtree,
    recomputed_values, update_and_node, update_or_node,
};

#[derive(Clone, Debug, PartialEq)]
pub struct PlannerConfig {
    pub review: ReviewPolicy,
    /// Maximum number of plan nodes a search may create.
    pub node_budget: usize,
    pub helper_depth: usize,
    pub trace: bool,
    /// Relative (probability, fulfilment) errors; when set, OR choices whose
    /// EF ranges overlap are flagged in the trace.
    pub error_bounds: Option<(f64, f64)>,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            review: ReviewPolicy::default(),
            node_budget: 100_000,
            helper_depth: 3,
            trace: false,
            error_bounds: None,
        }
    }
}

impl PlannerConfig {
    pub fn for_spec(spec: &DomainSpec) -> Self {
        PlannerConfig {
            review: spec.review,
            ..PlannerConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("no plan for world `{world}`: {reason}")]
    NoPlan { world: String, reason: String },
    #[error("search budget of {budget} nodes exhausted for world `{world}`")]
    Budget { world: String, budget: usize },
    #[error("unknown operator `{0}`")]
    UnknownOperator(String),
    #[error("causal rules are not stratifiable")]
    Unstratifiable,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// A finished search: the plan plus its trace.
#[derive(Clone, Debug, PartialEq)]
pub struct PlanOutcome {
    pub plan: Plan,
    pub trace: PlanTrace,
}

/// Plans for `ps` with the domain's own review policy and default limits.
pub fn plan_for_pstate(ps: &PState, spec: &DomainSpec) -> Result<Plan, PlanError> {
    plan_with(ps, spec, &PlannerConfig::for_spec(spec)).map(|o| o.plan)
}

pub fn plan_with(
    ps: &PState,
    spec: &DomainSpec,
    config: &PlannerConfig,
) -> Result<PlanOutcome, PlanError> {
    let mut search = Search::new(spec, config, ps)?;
    search.init_root()?;
    search.run()
}

/// Continues a donor plan tree in a new world. The nodes in `keep` already
/// carry states for `ps`; `fail` is ruled inapplicable and the search picks
/// up from there.
pub fn resume_plan(
    tree: PlanTree,
    fail: NodeId,
    ps: &PState,
    spec: &DomainSpec,
    config: &PlannerConfig,
) -> Result<PlanOutcome, PlanError> {
    let mut search = Search::new(spec, config, ps)?;
    search.tree = tree;
    let op = search.tree.node(fail).operator.clone();
    search.trace.record(
        TraceKind::Reuse,
        fail,
        &op,
        None,
        None,
        Some("resume".into()),
    );
    search.fail(fail, "failed during reapplication")?;
    search.run()
}

/// Leaf node for a helper that achieves a precondition of `parent`.
pub(crate) fn helper_node(parent: NodeId, h: HelperApplication, fulfilment: f64) -> PlanNode {
    let mut node = PlanNode::new(
        &h.operator,
        h.level,
        h.bindings,
        Values::new(fulfilment, h.probability),
    );
    node.parent = Some(parent);
    node.expansion = Expansion::Leaf;
    node.pstate_before = Some(Arc::new(h.before));
    node.pstate_ready = node.pstate_before.clone();
    node.pstate_after = Some(Arc::new(h.after));
    node.side_effects = h.side_effects;
    node
}

/// Mutable state of one search.
pub(crate) struct Search<'a> {
    spec: &'a DomainSpec,
    config: &'a PlannerConfig,
    rule_order: Vec<usize>,
    initial: Arc<PState>,
    pub(crate) tree: PlanTree,
    trace: PlanTrace,
}

enum Walk {
    Done(Arc<PState>),
    Tip(NodeId),
    Failed(NodeId, &'static str),
}

fn same_state(a: &Option<Arc<PState>>, b: &Arc<PState>) -> bool {
    a.as_ref().is_some_and(|a| Arc::ptr_eq(a, b) || **a == **b)
}

impl<'a> Search<'a> {
    fn new(
        spec: &'a DomainSpec,
        config: &'a PlannerConfig,
        ps: &PState,
    ) -> Result<Self, PlanError> {
        let rule_order = stratify(&spec.causal_rules).map_err(|_| PlanError::Unstratifiable)?;
        let goal = spec
            .goal_operator()
            .ok_or_else(|| PlanError::UnknownOperator(spec.goal.clone()))?;
        let root = PlanNode::new(
            &goal.name,
            goal.level,
            Bindings::new(),
            Values::new(0.0, 0.0),
        );
        Ok(Search {
            spec,
            config,
            rule_order,
            initial: Arc::new(ps.clone()),
            tree: PlanTree::with_root(root),
            trace: PlanTrace::new(config.trace),
        })
    }

    fn world(&self) -> String {
        self.initial.id.clone()
    }

    fn operator(&self, name: &str) -> Result<&'a ReductionOperator, PlanError> {
        self.spec
            .operator(name)
            .ok_or_else(|| PlanError::UnknownOperator(name.to_string()))
    }

    fn init_root(&mut self) -> Result<(), PlanError> {
        let goal = self.operator(&self.spec.goal)?;
        let p = operator_probability(goal, &self.initial, &Bindings::new());
        let v = Values::new(self.spec.goal_fulfilment, p);
        let root = self.tree.root;
        let node = self.tree.node_mut(root);
        node.base = v;
        node.set_current(v);
        self.trace.record(
            TraceKind::Update,
            root,
            &goal.name,
            None,
            Some(v),
            Some("create".into()),
        );
        Ok(())
    }

    fn set_values(&mut self, id: NodeId, v: Values) {
        let before = self.tree.node(id).current;
        if before == v {
            return;
        }
        self.tree.node_mut(id).set_current(v);
        let op = self.tree.node(id).operator.clone();
        self.trace
            .record(TraceKind::Update, id, &op, Some(before), Some(v), None);
    }

    fn propagate(&mut self, from: NodeId) {
        for (id, before, after) in propagate_updates(&mut self.tree, from) {
            let op = self.tree.node(id).operator.clone();
            self.trace
                .record(TraceKind::Update, id, &op, Some(before), Some(after), None);
        }
    }

    fn run(mut self) -> Result<PlanOutcome, PlanError> {
        loop {
            if self.tree.nodes.len() > self.config.node_budget {
                return Err(PlanError::Budget {
                    world: self.world(),
                    budget: self.config.node_budget,
                });
            }
            match self.walk(self.tree.root, self.initial.clone())? {
                Walk::Tip(id) => {
                    self.expand(id)?;
                    self.review();
                }
                Walk::Failed(id, reason) => self.fail(id, reason)?,
                Walk::Done(_) => {
                    if !self.review() {
                        break;
                    }
                }
            }
        }
        let world = self.world();
        Ok(PlanOutcome {
            plan: Plan::from_tree(self.tree, &world),
            trace: self.trace,
        })
    }

    /// Follows the active solution in execution order, threading the state.
    fn walk(&mut self, id: NodeId, state: Arc<PState>) -> Result<Walk, PlanError> {
        if self.tree.node(id).failed {
            return Ok(Walk::Failed(id, "inapplicable node in active solution"));
        }
        if !same_state(&self.tree.node(id).pstate_before, &state) {
            let node = self.tree.node(id);
            if node.is_expanded() || node.redundant {
                self.collapse(id);
            }
            self.tree.node_mut(id).pstate_before = Some(state.clone());
        }
        let node = self.tree.node(id);
        if node.redundant {
            return Ok(Walk::Done(
                node.pstate_after
                    .clone()
                    .expect("redundant node has a result state"),
            ));
        }
        let ready = node.pstate_ready.clone().unwrap_or_else(|| state.clone());
        let end = match node.expansion {
            Expansion::Unexpanded => return Ok(Walk::Tip(id)),
            Expansion::Leaf => {
                return Ok(Walk::Done(
                    node.pstate_after.clone().expect("leaf has a result state"),
                ))
            }
            Expansion::And => {
                let children = node.children.clone();
                let mut s = ready;
                for c in children {
                    match self.walk(c, s)? {
                        Walk::Done(next) => s = next,
                        other => return Ok(other),
                    }
                }
                s
            }
            Expansion::Or => {
                let Some(c) = node.selected_child() else {
                    return Ok(Walk::Failed(id, "no applicable alternative"));
                };
                match self.walk(c, ready)? {
                    Walk::Done(next) => next,
                    other => return Ok(other),
                }
            }
        };
        if same_state(&self.tree.node(id).pstate_after, &end) {
            return Ok(Walk::Done(end));
        }
        let op = self.operator(&self.tree.node(id).operator)?;
        if !postconditions_hold(op, &self.tree.node(id).bindings, &end)? {
            return Ok(Walk::Failed(id, "postconditions not achieved"));
        }
        self.tree.node_mut(id).pstate_after = Some(end.clone());
        Ok(Walk::Done(end))
    }

    /// Discards the expansion of a node whose input state changed.
    fn collapse(&mut self, id: NodeId) {
        let node = self.tree.node_mut(id);
        node.expansion = Expansion::Unexpanded;
        node.redundant = false;
        node.children.clear();
        node.helpers.clear();
        node.selected = None;
        node.pstate_ready = None;
        node.pstate_after = None;
        node.side_effects.clear();
        let base = node.base;
        self.set_values(id, base);
        self.propagate(id);
    }

    fn expand(&mut self, id: NodeId) -> Result<(), PlanError> {
        let node = self.tree.node(id);
        let op = self.operator(&node.operator)?;
        let before_state = node
            .pstate_before
            .clone()
            .expect("walk sets the input state");
        let bindings = node.bindings.clone();
        let values = node.current;
        self.trace
            .record(TraceKind::Expand, id, &op.name, Some(values), None, None);

        let outcome = check_and_satisfy_preconditions(
            self.spec,
            &self.rule_order,
            op,
            &bindings,
            &before_state,
            self.config.helper_depth,
        )?;
        let (bindings, ready, helpers) = match outcome {
            PreconditionOutcome::Accepted {
                bindings,
                state,
                helpers,
            } => (bindings, state, helpers),
            PreconditionOutcome::Rejected { reason } => {
                return self.fail(id, &reason);
            }
        };
        let ready = Arc::new(ready);
        let mut helper_ids = Vec::new();
        for h in helpers {
            let (operator, achieves) = (h.operator.clone(), h.achieves.clone());
            let hn = helper_node(id, h, values.fulfilment);
            let hid = self.tree.add(hn);
            self.trace.record(
                TraceKind::SatisfyPrecondition,
                hid,
                &operator,
                None,
                None,
                Some(format!(
                    "{}>{}",
                    achieves.to_string().replace(' ', "_"),
                    op.name
                )),
            );
            helper_ids.push(hid);
        }
        {
            let node = self.tree.node_mut(id);
            node.bindings = bindings.clone();
            node.helpers = helper_ids;
            node.pstate_ready = Some(ready.clone());
        }

        if op.is_leaf() {
            match apply_leaf(self.spec, &self.rule_order, op, &bindings, &ready)? {
                LeafOutcome::Applied {
                    state,
                    side_effects,
                    ..
                } => {
                    let node = self.tree.node_mut(id);
                    node.expansion = Expansion::Leaf;
                    node.pstate_after = Some(Arc::new(state));
                    node.side_effects = side_effects;
                    Ok(())
                }
                LeafOutcome::Failed(reason) => self.fail(id, &reason),
            }
        } else {
            self.instantiate_children(id, op, &bindings, &ready)
        }
    }

    fn instantiate_children(
        &mut self,
        id: NodeId,
        op: &ReductionOperator,
        bindings: &Bindings,
        ready: &PState,
    ) -> Result<(), PlanError> {
        let mut children = Vec::new();
        for (name, fulfilment) in op.subgoals() {
            let child_op = self.operator(name)?;
            let p = operator_probability(child_op, ready, bindings);
            let v = Values::new(fulfilment, p);
            let mut child = PlanNode::new(name, child_op.level, bindings.clone(), v);
            child.parent = Some(id);
            let cid = self.tree.add(child);
            self.trace.record(
                TraceKind::Update,
                cid,
                name,
                None,
                Some(v),
                Some("create".into()),
            );
            children.push(cid);
        }
        let node = self.tree.node_mut(id);
        node.children = children;
        match op.plot_mode {
            PlotMode::DoAll => {
                node.expansion = Expansion::And;
                let v = recomputed_values(&self.tree, id);
                self.set_values(id, v);
                self.propagate(id);
                Ok(())
            }
            PlotMode::ChooseOne => {
                node.expansion = Expansion::Or;
                self.select(id)
            }
        }
    }

    /// Picks the best applicable alternative of an OR node, or fails it.
    fn select(&mut self, id: NodeId) -> Result<(), PlanError> {
        let before = self.tree.node(id).current;
        if !update_or_node(&mut self.tree, id) {
            return self.fail(id, "no applicable alternative");
        }
        let after = self.tree.node(id).current;
        let chosen = self.tree.node(id).selected_child().expect("selected");
        let op = self.tree.node(id).operator.clone();
        let note = format!("child={}", self.tree.node(chosen).operator);
        self.trace.record(
            TraceKind::Select,
            id,
            &op,
            Some(before),
            Some(after),
            Some(note),
        );
        self.check_distinguishable(id);
        self.propagate(id);
        Ok(())
    }

    fn check_distinguishable(&mut self, id: NodeId) {
        let Some((pe, fe)) = self.config.error_bounds else {
            return;
        };
        let node = self.tree.node(id);
        let Some(sel) = node.selected_child() else {
            return;
        };
        let chosen = self.tree.node(sel);
        let bounded = |v: Values| ErrorBoundedEF::new(v.probability, v.fulfilment, pe, fe);
        for &c in &node.children {
            let other = self.tree.node(c);
            if c == sel || other.failed {
                continue;
            }
            let (ok, margin) = distinguishable(&bounded(chosen.current), &bounded(other.current));
            if !ok {
                let note = format!("{}~{}:margin={margin}", chosen.operator, other.operator);
                let op = node.operator.clone();
                self.trace
                    .record(TraceKind::Warning, id, &op, None, None, Some(note));
                return;
            }
        }
    }

    /// Rules `id` inapplicable and applies its planfail directive.
    fn fail(&mut self, id: NodeId, reason: &str) -> Result<(), PlanError> {
        let op = self.operator(&self.tree.node(id).operator)?;
        let values = self.tree.node(id).current;
        {
            let node = self.tree.node_mut(id);
            node.failed = true;
            node.helpers.clear();
        }
        self.trace.record(
            TraceKind::Planfail,
            id,
            &op.name,
            Some(values),
            None,
            Some(format!("{}:{}", op.planfail, reason).replace(' ', "_")),
        );
        match &op.planfail {
            Planfail::Backtrack => self.backtrack(id, reason),
            Planfail::RejectBranch => match self.tree.node(id).parent {
                Some(parent) => self.fail(parent, "branch rejected"),
                None => Err(self.no_plan(reason)),
            },
            Planfail::Recover(target) => {
                if self.recovery_tried(id, target) {
                    return self.backtrack(id, reason);
                }
                self.recover(id, target)
            }
        }
    }

    fn no_plan(&self, reason: &str) -> PlanError {
        PlanError::NoPlan {
            world: self.world(),
            reason: format!("goal `{}` failed: {reason}", self.spec.goal),
        }
    }

    fn backtrack(&mut self, id: NodeId, reason: &str) -> Result<(), PlanError> {
        let Some(parent) = self.tree.node(id).parent else {
            return Err(self.no_plan(reason));
        };
        if self.tree.node(parent).helpers.contains(&id) {
            return self.fail(parent, "helper failed");
        }
        match self.tree.node(parent).expansion {
            Expansion::Or => self.select(parent),
            _ => self.fail(parent, "child failed"),
        }
    }

    fn recovery_tried(&self, id: NodeId, target: &str) -> bool {
        let mut cur = Some(id);
        while let Some(c) = cur {
            let n = self.tree.node(c);
            if n.operator == target {
                return true;
            }
            cur = n.recovered_from;
        }
        false
    }

    /// Puts the recovery operator in the failed node's slot.
    fn recover(&mut self, id: NodeId, target: &str) -> Result<(), PlanError> {
        let rec_op = self.operator(target)?;
        let failed = self.tree.node(id).clone();
        let parent = failed.parent;
        let context = match parent {
            Some(p) => self.tree.node(p).pstate_ready.clone(),
            None => Some(self.initial.clone()),
        }
        .or_else(|| failed.pstate_before.clone())
        .unwrap_or_else(|| self.initial.clone());
        let inherited = match parent {
            Some(p) => self.tree.node(p).bindings.clone(),
            None => Bindings::new(),
        };
        let p = operator_probability(rec_op, &context, &inherited);
        let v = Values::new(failed.base.fulfilment, p);
        let mut node = PlanNode::new(target, rec_op.level, inherited, v);
        node.parent = parent;
        node.recovered_from = Some(id);
        let nid = self.tree.add(node);
        self.trace.record(
            TraceKind::Update,
            nid,
            target,
            None,
            Some(v),
            Some(format!("recovers={id}")),
        );
        match parent {
            None => {
                self.tree.root = nid;
                Ok(())
            }
            Some(p) => {
                let slot = self
                    .tree
                    .node(p)
                    .children
                    .iter()
                    .position(|&c| c == id)
                    .expect("failed node is a child of its parent");
                self.tree.node_mut(p).children[slot] = nid;
                match self.tree.node(p).expansion {
                    Expansion::Or => self.select(p),
                    _ => {
                        let v = recomputed_values(&self.tree, p);
                        self.set_values(p, v);
                        self.propagate(p);
                        Ok(())
                    }
                }
            }
        }
    }

    /// Runs one review pass; returns whether any selection changed.
    fn review(&mut self) -> bool {
        let switches = review_decisions(&mut self.tree, &self.config.review);
        for s in &switches {
            let before = self.tree.node(s.parent).current;
            let after = self.tree.node(s.to).current;
            self.tree.node_mut(s.parent).set_current(after);
            let op = self.tree.node(s.parent).operator.clone();
            let note = format!(
                "from={}:{}_to={}:{}",
                self.tree.node(s.from).operator,
                s.from,
                self.tree.node(s.to).operator,
                s.to
            );
            self.trace.record(
                TraceKind::ReviewSwitch,
                s.parent,
                &op,
                Some(before),
                Some(after),
                Some(note),
            );
            self.propagate(s.parent);
        }
        !switches.is_empty()
    }
}
