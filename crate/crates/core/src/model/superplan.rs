use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::plan::Step;
use super::state::EvidentialInterval;
use super::term::Proposition;

/// Merged execution tree over all per-world plans.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuperPlan {
    pub worlds: BTreeSet<String>,
    pub nodes: Vec<SuperNode>,
}

/// One element of a linear segment. A branch, when present, ends the segment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SuperNode {
    Action(Step),
    Branch(BranchPoint),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchPoint {
    /// Observation that selects the alternative at execution time.
    pub ka: Option<KnowledgeAcquisitionOperator>,
    pub alternatives: Vec<Alternative>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Alternative {
    pub worlds: BTreeSet<String>,
    /// Combined evidence of `worlds`, used when no observation discriminates.
    pub weight: Option<EvidentialInterval>,
    pub nodes: Vec<SuperNode>,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Observation {
    pub level: usize,
    pub proposition: Proposition,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeMapping {
    /// Truth value of each observed proposition, in `observe` order.
    pub values: Vec<bool>,
    pub alternative: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeAcquisitionOperator {
    pub observe: Vec<Observation>,
    pub outcomes: Vec<OutcomeMapping>,
}

impl KnowledgeAcquisitionOperator {
    pub fn alternative_for(&self, values: &[bool]) -> Option<usize> {
        self.outcomes
            .iter()
            .find(|o| o.values == values)
            .map(|o| o.alternative)
    }
}

impl SuperPlan {
    /// Every root-to-leaf action sequence with the worlds that reach its end.
    pub fn flatten(&self) -> Vec<(Vec<Step>, BTreeSet<String>)> {
        let mut out = Vec::new();
        flatten_into(&self.nodes, Vec::new(), &self.worlds, &mut out);
        out
    }

    pub fn branch_points(&self) -> Vec<&BranchPoint> {
        let mut out = Vec::new();
        collect_branches(&self.nodes, &mut out);
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("super-plan serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

fn flatten_into(
    nodes: &[SuperNode],
    mut prefix: Vec<Step>,
    worlds: &BTreeSet<String>,
    out: &mut Vec<(Vec<Step>, BTreeSet<String>)>,
) {
    for node in nodes {
        match node {
            SuperNode::Action(step) => prefix.push(step.clone()),
            SuperNode::Branch(b) => {
                for alt in &b.alternatives {
                    flatten_into(&alt.nodes, prefix.clone(), &alt.worlds, out);
                }
                return;
            }
        }
    }
    out.push((prefix, worlds.clone()));
}

fn collect_branches<'a>(nodes: &'a [SuperNode], out: &mut Vec<&'a BranchPoint>) {
    for node in nodes {
        if let SuperNode::Branch(b) = node {
            out.push(b);
            for alt in &b.alternatives {
                collect_branches(&alt.nodes, out);
            }
        }
    }
}
