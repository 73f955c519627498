use crate::dsl::DomainSpec;
use crate::model::{Bindings, Edit, ModelError, PState, Proposition, ReductionOperator, Values};

use super::deduce::deduce_effects;

/// Probability of `op` succeeding in `ps`, evaluated at the operator's level.
pub fn operator_probability(op: &ReductionOperator, ps: &PState, bindings: &Bindings) -> f64 {
    match ps.level(op.level) {
        Ok(level) => op.probability.evaluate(level, bindings),
        Err(_) => op.probability.default,
    }
}

/// A plot entry of an operator with the values its child would start with.
#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub plot_index: usize,
    pub operator: String,
    pub values: Values,
}

/// Subgoals of `op` ordered by EF, highest first; ties keep plot order.
/// Unknown subgoal names are skipped.
pub fn rank_candidates(
    spec: &DomainSpec,
    op: &ReductionOperator,
    ps: &PState,
    bindings: &Bindings,
) -> Vec<Candidate> {
    let mut out: Vec<Candidate> = op
        .subgoals()
        .enumerate()
        .filter_map(|(i, (name, f))| {
            let child = spec.operator(name)?;
            Some(Candidate {
                plot_index: i,
                operator: name.to_string(),
                values: Values::new(f, operator_probability(child, ps, bindings)),
            })
        })
        .collect();
    out.sort_by(|a, b| b.values.ef().total_cmp(&a.values.ef()));
    out
}

#[derive(Clone, Debug, PartialEq)]
pub enum LeafOutcome {
    Applied {
        state: PState,
        /// Plot edits that changed the state.
        changed: Vec<Edit>,
        /// Changes made by causal rules.
        side_effects: Vec<Edit>,
    },
    Failed(String),
}

/// Applies a tactical operator's edits, then causal deduction and the
/// compatibility relations, then checks its postconditions.
pub fn apply_leaf(
    spec: &DomainSpec,
    rule_order: &[usize],
    op: &ReductionOperator,
    bindings: &Bindings,
    ps: &PState,
) -> Result<LeafOutcome, ModelError> {
    let mut edits = Vec::new();
    for e in op.edits() {
        match e.ground(bindings) {
            Some(g) => edits.push(g),
            None => {
                return Ok(LeafOutcome::Failed(format!(
                    "edit `{e}` has unbound variables"
                )))
            }
        }
    }
    let (state, changed) = ps.apply_edits_tracked(&edits)?;
    let (state, side_effects) = deduce_effects(&state, &spec.causal_rules, rule_order, &changed)?;
    let state = match state.enforce_compatibility(&spec.compat) {
        Ok(s) => s,
        Err(v) => return Ok(LeafOutcome::Failed(v.to_string())),
    };
    if !postconditions_hold(op, bindings, &state)? {
        return Ok(LeafOutcome::Failed("postconditions not achieved".into()));
    }
    Ok(LeafOutcome::Applied {
        state,
        changed,
        side_effects,
    })
}

pub fn postconditions_hold(
    op: &ReductionOperator,
    bindings: &Bindings,
    ps: &PState,
) -> Result<bool, ModelError> {
    Ok(!ps
        .level(op.level)?
        .match_all(&op.postconditions, bindings)
        .is_empty())
}

/// A helper operator inserted to achieve a satisfiable precondition.
#[derive(Clone, Debug, PartialEq)]
pub struct HelperApplication {
    pub operator: String,
    pub level: usize,
    pub bindings: Bindings,
    pub probability: f64,
    pub achieves: Proposition,
    pub before: PState,
    pub after: PState,
    pub side_effects: Vec<Edit>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum PreconditionOutcome {
    Accepted {
        bindings: Bindings,
        state: PState,
        /// In execution order.
        helpers: Vec<HelperApplication>,
    },
    Rejected {
        reason: String,
    },
}

/// Tests necessary preconditions read-only, then achieves unsatisfied
/// satisfiable preconditions with a depth-bounded search over tactical
/// operators at the same or a more detailed level.
pub fn check_and_satisfy_preconditions(
    spec: &DomainSpec,
    rule_order: &[usize],
    op: &ReductionOperator,
    bindings: &Bindings,
    ps: &PState,
    depth_bound: usize,
) -> Result<PreconditionOutcome, ModelError> {
    let level = ps.level(op.level)?;
    let necessary = level.match_all(&op.necessary, bindings);
    if necessary.is_empty() {
        return Ok(PreconditionOutcome::Rejected {
            reason: "necessary preconditions do not hold".into(),
        });
    }
    for b in necessary {
        if let Some((bindings, state, helpers)) = satisfy(
            spec,
            rule_order,
            op,
            &op.satisfiable,
            b,
            ps.clone(),
            depth_bound,
        )? {
            return Ok(PreconditionOutcome::Accepted {
                bindings,
                state,
                helpers,
            });
        }
    }
    Ok(PreconditionOutcome::Rejected {
        reason: "satisfiable preconditions could not be achieved".into(),
    })
}

type Satisfied = (Bindings, PState, Vec<HelperApplication>);

fn satisfy(
    spec: &DomainSpec,
    rule_order: &[usize],
    op: &ReductionOperator,
    goals: &[Proposition],
    bindings: Bindings,
    ps: PState,
    depth: usize,
) -> Result<Option<Satisfied>, ModelError> {
    if let Some(b) = ps.level(op.level)?.first_match(goals, &bindings) {
        return Ok(Some((b, ps, Vec::new())));
    }
    let mut b = bindings;
    let mut state = ps;
    let mut helpers = Vec::new();
    for goal in goals {
        if let Some(nb) = state
            .level(op.level)?
            .first_match(std::slice::from_ref(goal), &b)
        {
            b = nb;
            continue;
        }
        let Some(target) = goal.ground(&b) else {
            log::debug!(
                "cannot plan for non-ground precondition {goal} of {}",
                op.name
            );
            return Ok(None);
        };
        match achieve(spec, rule_order, op.level, &target, &state, depth)? {
            Some((next, mut hs)) => {
                state = next;
                helpers.append(&mut hs);
            }
            None => return Ok(None),
        }
    }
    // Later helpers may have undone earlier goals.
    match state.level(op.level)?.first_match(goals, &b) {
        Some(b) => Ok(Some((b, state, helpers))),
        None => Ok(None),
    }
}

/// Finds a tactical operator whose postconditions achieve `target` (a
/// ground literal at `level`), trying candidates by probability.
fn achieve(
    spec: &DomainSpec,
    rule_order: &[usize],
    level: usize,
    target: &Proposition,
    ps: &PState,
    depth: usize,
) -> Result<Option<(PState, Vec<HelperApplication>)>, ModelError> {
    if depth == 0 {
        return Ok(None);
    }
    let mut candidates: Vec<(f64, usize, &ReductionOperator, Bindings)> = Vec::new();
    for (i, h) in spec.operators.iter().enumerate() {
        if !h.is_leaf() || h.level < level {
            continue;
        }
        if let Some(b) = h
            .postconditions
            .iter()
            .find_map(|q| q.match_ground(target, &Bindings::new()))
        {
            candidates.push((operator_probability(h, ps, &b), i, h, b));
        }
    }
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    for (prob, _, h, b) in candidates {
        let pre = check_and_satisfy_preconditions(spec, rule_order, h, &b, ps, depth - 1)?;
        let PreconditionOutcome::Accepted {
            bindings,
            state,
            mut helpers,
        } = pre
        else {
            continue;
        };
        let LeafOutcome::Applied {
            state: after,
            side_effects,
            ..
        } = apply_leaf(spec, rule_order, h, &bindings, &state)?
        else {
            continue;
        };
        if !after.level(level)?.holds(target) {
            continue;
        }
        helpers.push(HelperApplication {
            operator: h.name.clone(),
            level: h.level,
            bindings,
            probability: prob,
            achieves: target.clone(),
            before: state,
            after: after.clone(),
            side_effects,
        });
        return Ok(Some((after, helpers)));
    }
    Ok(None)
}
