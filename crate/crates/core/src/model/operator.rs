use std::fmt;

use super::state::{AbstractionLevel, Edit};
use super::term::{Bindings, Proposition};

/// Directional cross-level constraint: whenever `if_pattern` holds at
/// `if_level`, `then_pattern` (under the same bindings) must hold at
/// `then_level`.
#[derive(Clone, Debug, PartialEq)]
pub struct CompatibilityRelation {
    pub if_level: usize,
    pub if_pattern: Proposition,
    pub then_level: usize,
    pub then_pattern: Proposition,
}

impl fmt::Display for CompatibilityRelation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} @{} => {} @{}",
            self.if_pattern, self.if_level, self.then_pattern, self.then_level
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlotMode {
    /// Alternatives; expands to an OR node.
    ChooseOne,
    /// Sequence; expands to an AND node.
    DoAll,
}

#[derive(Clone, Debug, PartialEq)]
pub enum PlotEntry {
    /// A goal-reduction step with the fulfilment the parent assigns to it.
    Subgoal { operator: String, fulfilment: f64 },
    /// Direct state changes (tactical operators only).
    StateEdit(Vec<Edit>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityRule {
    pub when: Vec<Proposition>,
    pub value: f64,
}

/// First matching rule wins; `default` applies when none match.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityTable {
    pub rules: Vec<ProbabilityRule>,
    pub default: f64,
}

impl ProbabilityTable {
    pub fn constant(value: f64) -> Self {
        ProbabilityTable {
            rules: Vec::new(),
            default: value,
        }
    }

    pub fn evaluate(&self, level: &AbstractionLevel, bindings: &Bindings) -> f64 {
        self.rules
            .iter()
            .find(|r| !level.match_all(&r.when, bindings).is_empty())
            .map_or(self.default, |r| r.value)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Planfail {
    /// Rule the operator inapplicable and let the parent try alternatives.
    Backtrack,
    /// Fail the parent as well, skipping its remaining alternatives.
    RejectBranch,
    /// Try the named operator in place of the failed one.
    Recover(String),
}

impl fmt::Display for Planfail {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Planfail::Backtrack => f.write_str("backtrack"),
            Planfail::RejectBranch => f.write_str("reject-branch"),
            Planfail::Recover(op) => write!(f, "recover {op}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReductionOperator {
    pub name: String,
    pub level: usize,
    /// Observed and never planned for.
    pub necessary: Vec<Proposition>,
    /// May be achieved by inserting helper operators first.
    pub satisfiable: Vec<Proposition>,
    pub plot_mode: PlotMode,
    pub plot: Vec<PlotEntry>,
    pub probability: ProbabilityTable,
    pub postconditions: Vec<Proposition>,
    pub planfail: Planfail,
}

impl ReductionOperator {
    /// A tactical operator: its plot only edits the state.
    pub fn is_leaf(&self) -> bool {
        !self
            .plot
            .iter()
            .any(|e| matches!(e, PlotEntry::Subgoal { .. }))
    }

    pub fn subgoals(&self) -> impl Iterator<Item = (&str, f64)> {
        self.plot.iter().filter_map(|e| match e {
            PlotEntry::Subgoal {
                operator,
                fulfilment,
            } => Some((operator.as_str(), *fulfilment)),
            PlotEntry::StateEdit(_) => None,
        })
    }

    pub fn edits(&self) -> impl Iterator<Item = &Edit> {
        self.plot.iter().flat_map(|e| match e {
            PlotEntry::StateEdit(edits) => edits.as_slice(),
            PlotEntry::Subgoal { .. } => &[],
        })
    }
}

/// Trigger-fired deduction of context dependent side effects.
#[derive(Clone, Debug, PartialEq)]
pub struct CausalRule {
    pub name: String,
    /// Matched against the literal a change made true; `(not p)` fires on
    /// retraction of `p`.
    pub trigger: Proposition,
    /// Restricts the trigger to changes at one level.
    pub trigger_level: Option<usize>,
    /// Evaluated at the level of the triggering change.
    pub condition: Vec<Proposition>,
    pub effects: Vec<Edit>,
}

impl CausalRule {
    pub fn triggered_by(&self, change: &Edit) -> Option<Bindings> {
        if self.trigger_level.is_some_and(|l| l != change.level) {
            return None;
        }
        self.trigger
            .match_ground(&change.as_literal(), &Bindings::new())
    }

    /// Whether one of this rule's effects could fire `other`.
    pub fn may_trigger(&self, other: &CausalRule) -> bool {
        self.effects.iter().any(|e| {
            other.trigger_level.is_none_or(|l| l == e.level)
                && e.as_literal().could_unify(&other.trigger)
        })
    }
}
