//! Reapplying a finished plan to a new P-state.
//!
//! The donor's active solution is replayed in execution order against the
//! new world. Operators are re-checked and re-applied, so bindings, helper
//! steps and values follow the new world while the donor's choices are kept.

use std::sync::Arc;

use crate::dsl::DomainSpec;
use crate::model::{Bindings, Expansion, ModelError, NodeId, PState, Plan, PlanTree, Values};
use crate::planner::{
    apply_leaf, check_and_satisfy_preconditions, helper_node, operator_probability,
    postconditions_hold, recomputed_values, stratify, LeafOutcome, PlannerConfig,
    PreconditionOutcome,
};

/// Outcome of replaying a donor plan.
#[derive(Clone, Debug, PartialEq)]
pub enum Reapplication {
    Full(Plan),
    Partial(PartialReuse),
    None,
}

/// A donor whose replay broke down part-way.
#[derive(Clone, Debug, PartialEq)]
pub struct PartialReuse {
    /// Donor execution steps before the failure point.
    pub prefix_len: usize,
    /// The node that could not be replayed; planning resumes there.
    pub resume: NodeId,
    /// Donor tree with the replayed part carrying the new world's states.
    pub tree: PlanTree,
    pub donor_ef: f64,
}

enum Replayed {
    Done(Arc<PState>),
    Failed(NodeId),
}

struct Replay<'a> {
    spec: &'a DomainSpec,
    rule_order: Vec<usize>,
    helper_depth: usize,
    tree: PlanTree,
}

/// Replays `plan` in `ps`. Operators whose preconditions fail but whose
/// postconditions already hold are redundant and skipped.
pub fn reapply_plan(plan: &Plan, ps: &PState, spec: &DomainSpec) -> Reapplication {
    let Ok(rule_order) = stratify(&spec.causal_rules) else {
        return Reapplication::None;
    };
    let mut replay = Replay {
        spec,
        rule_order,
        helper_depth: PlannerConfig::default().helper_depth,
        tree: plan.tree.clone(),
    };
    let root = replay.tree.root;
    let outcome = match replay.node(root, Bindings::new(), Arc::new(ps.clone())) {
        Ok(o) => o,
        Err(e) => {
            log::debug!("reapplication in `{}` stopped: {e}", ps.id);
            return Reapplication::None;
        }
    };
    refresh_values(&mut replay.tree, root);
    match outcome {
        Replayed::Done(_) => Reapplication::Full(Plan::from_tree(replay.tree, &ps.id)),
        Replayed::Failed(id) if id == root => Reapplication::None,
        Replayed::Failed(id) => Reapplication::Partial(PartialReuse {
            prefix_len: steps_before(&plan.tree, id),
            resume: id,
            tree: replay.tree,
            donor_ef: plan.root_ef(),
        }),
    }
}

/// Longest prefix first, then the better donor, then the earlier donor.
pub fn select_best_partial(candidates: &[PartialReuse]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, c) in candidates.iter().enumerate() {
        let better = match best {
            None => true,
            Some(b) => {
                let b = &candidates[b];
                c.prefix_len > b.prefix_len
                    || (c.prefix_len == b.prefix_len && c.donor_ef > b.donor_ef)
            }
        };
        if better {
            best = Some(i);
        }
    }
    best
}

/// Donor leaf applications that precede `id` and its helpers.
fn steps_before(tree: &PlanTree, id: NodeId) -> usize {
    let order = tree.active_preorder();
    let Some(pos) = order.iter().position(|&n| n == id) else {
        return 0;
    };
    let start = pos - tree.node(id).helpers.len();
    order[..start]
        .iter()
        .map(|&n| tree.node(n))
        .filter(|n| n.expansion == Expansion::Leaf && !n.redundant)
        .count()
}

/// Resets a node to an unexpanded candidate with probability `p`.
fn reset(tree: &mut PlanTree, id: NodeId, p: f64) {
    let node = tree.node_mut(id);
    node.expansion = Expansion::Unexpanded;
    node.children.clear();
    node.helpers.clear();
    node.selected = None;
    node.failed = false;
    node.redundant = false;
    node.pstate_before = None;
    node.pstate_ready = None;
    node.pstate_after = None;
    node.side_effects.clear();
    node.base.probability = p;
    let base = node.base;
    node.set_current(base);
}

/// Recomputes values bottom-up over the active solution, keeping OR choices.
fn refresh_values(tree: &mut PlanTree, id: NodeId) {
    let node = tree.node(id);
    if node.redundant {
        let v = Values::new(node.base.fulfilment, 1.0);
        tree.node_mut(id).set_current(v);
        return;
    }
    match node.expansion {
        Expansion::And | Expansion::Or => {
            let active: Vec<NodeId> = match node.expansion {
                Expansion::And => node.children.clone(),
                _ => node.selected_child().into_iter().collect(),
            };
            for c in active {
                refresh_values(tree, c);
            }
            let v = recomputed_values(tree, id);
            tree.node_mut(id).set_current(v);
        }
        Expansion::Leaf | Expansion::Unexpanded => {
            let base = node.base;
            tree.node_mut(id).set_current(base);
        }
    }
}

impl Replay<'_> {
    fn node(
        &mut self,
        id: NodeId,
        inherited: Bindings,
        state: Arc<PState>,
    ) -> Result<Replayed, ModelError> {
        let Some(op) = self.spec.operator(&self.tree.node(id).operator) else {
            return Ok(Replayed::Failed(id));
        };
        {
            let node = self.tree.node_mut(id);
            node.bindings = inherited.clone();
            node.pstate_before = Some(state.clone());
            node.helpers.clear();
            node.side_effects.clear();
        }
        let pre = check_and_satisfy_preconditions(
            self.spec,
            &self.rule_order,
            op,
            &inherited,
            &state,
            self.helper_depth,
        )?;
        let (bindings, ready, helpers) = match pre {
            PreconditionOutcome::Accepted {
                bindings,
                state,
                helpers,
            } => (bindings, Arc::new(state), helpers),
            PreconditionOutcome::Rejected { .. } => {
                let done = state
                    .level(op.level)?
                    .first_match(&op.postconditions, &inherited);
                return Ok(match done {
                    Some(b) if !op.postconditions.is_empty() => {
                        let node = self.tree.node_mut(id);
                        node.bindings = b;
                        node.redundant = true;
                        node.pstate_after = Some(state.clone());
                        Replayed::Done(state)
                    }
                    _ => Replayed::Failed(id),
                });
            }
        };
        let fulfilment = self.tree.node(id).current.fulfilment;
        let helper_ids: Vec<NodeId> = helpers
            .into_iter()
            .map(|h| self.tree.add(helper_node(id, h, fulfilment)))
            .collect();
        {
            let node = self.tree.node_mut(id);
            node.bindings = bindings.clone();
            node.helpers = helper_ids;
            node.pstate_ready = Some(ready.clone());
        }

        let end = match self.tree.node(id).expansion {
            Expansion::Unexpanded => return Ok(Replayed::Failed(id)),
            Expansion::Leaf => {
                match apply_leaf(self.spec, &self.rule_order, op, &bindings, &ready)? {
                    LeafOutcome::Applied {
                        state,
                        side_effects,
                        ..
                    } => {
                        let state = Arc::new(state);
                        let node = self.tree.node_mut(id);
                        node.pstate_after = Some(state.clone());
                        node.side_effects = side_effects;
                        return Ok(Replayed::Done(state));
                    }
                    LeafOutcome::Failed(_) => return Ok(Replayed::Failed(id)),
                }
            }
            Expansion::And => {
                let children = self.tree.node(id).children.clone();
                self.rebase_children(&children, &bindings, &ready);
                let mut s = ready;
                for (k, &c) in children.iter().enumerate() {
                    match self.node(c, bindings.clone(), s)? {
                        Replayed::Done(next) => s = next,
                        Replayed::Failed(f) => {
                            // Later steps were planned for the donor's world.
                            for &rest in &children[k + 1..] {
                                let p = self.tree.node(rest).base.probability;
                                reset(&mut self.tree, rest, p);
                            }
                            return Ok(Replayed::Failed(f));
                        }
                    }
                }
                s
            }
            Expansion::Or => {
                let children = self.tree.node(id).children.clone();
                self.rebase_children(&children, &bindings, &ready);
                let Some(sel) = self.tree.node(id).selected_child() else {
                    return Ok(Replayed::Failed(id));
                };
                for &c in &children {
                    if c != sel {
                        let p = self.tree.node(c).base.probability;
                        reset(&mut self.tree, c, p);
                    }
                }
                match self.node(sel, bindings.clone(), ready)? {
                    Replayed::Done(next) => next,
                    failed => return Ok(failed),
                }
            }
        };
        if !postconditions_hold(op, &bindings, &end)? {
            return Ok(Replayed::Failed(id));
        }
        self.tree.node_mut(id).pstate_after = Some(end.clone());
        Ok(Replayed::Done(end))
    }

    /// Re-evaluates the children's probabilities in the new world.
    fn rebase_children(&mut self, children: &[NodeId], bindings: &Bindings, ready: &PState) {
        for &c in children {
            let Some(op) = self.spec.operator(&self.tree.node(c).operator) else {
                continue;
            };
            let p = operator_probability(op, ready, bindings);
            let node = self.tree.node_mut(c);
            node.base.probability = p;
            node.bindings = bindings.clone();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_domain;
    use crate::model::EvidentialInterval;
    use crate::planner::{plan_for_pstate, resume_plan};

    // A five-step sequence; step k needs (ok k) except the first.
    const CHAIN: &str = "
levels 1
goal Run
operator Run
  level 1
  plot do-all
    S1 10
    S2 10
    S3 10
    S4 10
    S5 10
  probability default 1
end
operator S1
  level 1
  plot do-all
    assert (s1)
  probability default 1
end
operator S2
  level 1
  necessary (ok 2)
  plot do-all
    assert (s2)
  probability default 1
end
operator S3
  level 1
  necessary (ok 3)
  plot do-all
    assert (s3)
  probability default 1
end
operator S4
  level 1
  necessary (ok 4)
  plot do-all
    assert (s4)
  probability default 1
  postconditions (s4)
end
operator S5
  level 1
  necessary (ok 5)
  plot do-all
    assert (s5)
  probability default 1
end
";

    fn state(id: &str, facts: &[&str]) -> PState {
        let mut ps = PState::new(id, 1, EvidentialInterval::certain());
        for f in facts {
            ps.levels[0].propositions.insert(f.parse().unwrap());
        }
        ps
    }

    fn names(plan: &Plan) -> Vec<&str> {
        plan.execution_sequence
            .iter()
            .map(|s| s.operator.as_str())
            .collect()
    }

    const ALL: [&str; 4] = ["(ok 2)", "(ok 3)", "(ok 4)", "(ok 5)"];

    #[test]
    fn origin_world_reapplies_fully() {
        let spec = parse_domain(CHAIN).unwrap();
        let origin = state("a", &ALL);
        let plan = plan_for_pstate(&origin, &spec).unwrap();
        match reapply_plan(&plan, &origin, &spec) {
            Reapplication::Full(p) => {
                assert_eq!(p.execution_sequence, plan.execution_sequence);
                assert_eq!(p.root_values(), plan.root_values());
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_fourth_precondition_gives_prefix_three() {
        let spec = parse_domain(CHAIN).unwrap();
        let plan = plan_for_pstate(&state("a", &ALL), &spec).unwrap();
        let b = state("b", &["(ok 2)", "(ok 3)", "(ok 5)"]);
        let Reapplication::Partial(part) = reapply_plan(&plan, &b, &spec) else {
            panic!("expected a partial reapplication");
        };
        assert_eq!(part.prefix_len, 3);
        assert_eq!(part.tree.node(part.resume).operator, "S4");
    }

    #[test]
    fn redundant_step_is_skipped() {
        let spec = parse_domain(CHAIN).unwrap();
        let plan = plan_for_pstate(&state("a", &ALL), &spec).unwrap();
        let b = state("b", &["(ok 2)", "(ok 3)", "(ok 5)", "(s4)"]);
        match reapply_plan(&plan, &b, &spec) {
            Reapplication::Full(p) => assert_eq!(names(&p), ["S1", "S2", "S3", "S5"]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn failing_root_gives_none() {
        let text = CHAIN.replace(
            "operator Run\n  level 1\n",
            "operator Run\n  level 1\n  necessary (go)\n",
        );
        let spec = parse_domain(&text).unwrap();
        let mut facts = ALL.to_vec();
        facts.push("(go)");
        let plan = plan_for_pstate(&state("a", &facts), &spec).unwrap();
        assert_eq!(
            reapply_plan(&plan, &state("b", &ALL), &spec),
            Reapplication::None
        );
    }

    #[test]
    fn best_partial_ordering() {
        let spec = parse_domain(CHAIN).unwrap();
        let plan = plan_for_pstate(&state("a", &ALL), &spec).unwrap();
        let Reapplication::Partial(base) = reapply_plan(&plan, &state("b", &["(ok 2)"]), &spec)
        else {
            panic!()
        };
        let with = |prefix_len, donor_ef| PartialReuse {
            prefix_len,
            donor_ef,
            ..base.clone()
        };
        assert_eq!(select_best_partial(&[with(5, 1.0), with(2, 9.0)]), Some(0));
        assert_eq!(
            select_best_partial(&[with(2, 700.0), with(2, 810.0)]),
            Some(1)
        );
        assert_eq!(
            select_best_partial(&[with(2, 810.0), with(2, 810.0)]),
            Some(0)
        );
        assert_eq!(select_best_partial(&[with(1, 1.0)]), Some(0));
        assert_eq!(select_best_partial(&[]), None);
    }

    #[test]
    fn resume_matches_planning_from_scratch() {
        let spec = parse_domain(include_str!("../fixtures/air_combat.domain")).unwrap();
        let ev =
            crate::dsl::parse_evidence(include_str!("../fixtures/two_world.evidence")).unwrap();
        let worlds = crate::evidence::generate_pstates(&ev, &spec.compat, spec.n_levels).unwrap();
        let (clear, overcast) = (&worlds[0], &worlds[1]);
        assert_eq!(clear.id, "visibility=clear");
        let donor = plan_for_pstate(clear, &spec).unwrap();
        let Reapplication::Partial(part) = reapply_plan(&donor, overcast, &spec) else {
            panic!("overcast lacks visual contact");
        };
        assert_eq!(part.prefix_len, 0);
        assert_eq!(part.tree.node(part.resume).operator, "VR_Attack");
        let cfg = PlannerConfig::for_spec(&spec);
        let resumed = resume_plan(part.tree, part.resume, overcast, &spec, &cfg).unwrap();
        let scratch = plan_for_pstate(overcast, &spec).unwrap();
        assert_eq!(resumed.plan.execution_sequence, scratch.execution_sequence);
        assert_eq!(resumed.plan.root_values(), scratch.root_values());
    }
}
