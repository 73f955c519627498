use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::state::{Edit, PState};
use super::term::Bindings;

/// Index of a node in a [`PlanTree`] arena.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub usize);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A {fulfilment, probability} pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Values {
    pub fulfilment: f64,
    pub probability: f64,
}

impl Values {
    pub fn new(fulfilment: f64, probability: f64) -> Self {
        Values {
            fulfilment,
            probability,
        }
    }

    pub fn ef(&self) -> f64 {
        self.fulfilment * self.probability
    }
}

impl fmt::Display for Values {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{{{},{},{}}}",
            self.fulfilment,
            self.probability,
            self.ef()
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Expansion {
    Unexpanded,
    Leaf,
    And,
    Or,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlanNode {
    pub operator: String,
    pub level: usize,
    pub bindings: Bindings,
    /// Values assigned when the node was instantiated.
    pub base: Values,
    /// Values after the latest update pass.
    pub current: Values,
    pub ef: f64,
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
    pub expansion: Expansion,
    /// Index into `children` of the active alternative of an OR node.
    pub selected: Option<usize>,
    /// Ruled inapplicable during planning.
    pub failed: bool,
    /// Helper applications that achieve satisfiable preconditions; they
    /// execute before this node.
    pub helpers: Vec<NodeId>,
    pub pstate_before: Option<Arc<PState>>,
    /// State after helpers ran, which the plot is applied to.
    pub pstate_ready: Option<Arc<PState>>,
    pub pstate_after: Option<Arc<PState>>,
    pub side_effects: Vec<Edit>,
    pub recovered_from: Option<NodeId>,
    /// Skipped during reapplication because its postconditions already held.
    pub redundant: bool,
}

impl PlanNode {
    pub fn new(operator: &str, level: usize, bindings: Bindings, base: Values) -> Self {
        PlanNode {
            operator: operator.to_string(),
            level,
            bindings,
            base,
            current: base,
            ef: base.ef(),
            parent: None,
            children: Vec::new(),
            expansion: Expansion::Unexpanded,
            selected: None,
            failed: false,
            helpers: Vec::new(),
            pstate_before: None,
            pstate_ready: None,
            pstate_after: None,
            side_effects: Vec::new(),
            recovered_from: None,
            redundant: false,
        }
    }

    pub fn set_current(&mut self, v: Values) {
        self.current = v;
        self.ef = v.ef();
    }

    pub fn selected_child(&self) -> Option<NodeId> {
        self.selected.map(|i| self.children[i])
    }

    pub fn is_expanded(&self) -> bool {
        self.expansion != Expansion::Unexpanded
    }
}

/// Arena holding the AND/OR strategy hierarchy.
#[derive(Clone, Debug, PartialEq)]
pub struct PlanTree {
    pub nodes: Vec<PlanNode>,
    pub root: NodeId,
}

impl PlanTree {
    pub fn with_root(root: PlanNode) -> Self {
        PlanTree {
            nodes: vec![root],
            root: NodeId(0),
        }
    }

    pub fn node(&self, id: NodeId) -> &PlanNode {
        &self.nodes[id.0]
    }

    pub fn node_mut(&mut self, id: NodeId) -> &mut PlanNode {
        &mut self.nodes[id.0]
    }

    pub fn add(&mut self, node: PlanNode) -> NodeId {
        self.nodes.push(node);
        NodeId(self.nodes.len() - 1)
    }

    pub fn root_values(&self) -> Values {
        self.node(self.root).current
    }

    /// Nodes of the selected solution in pre-order; helpers precede the node
    /// they serve.
    pub fn active_preorder(&self) -> Vec<NodeId> {
        let mut out = Vec::new();
        self.collect_active(self.root, &mut out);
        out
    }

    fn collect_active(&self, id: NodeId, out: &mut Vec<NodeId>) {
        let node = self.node(id);
        out.extend(node.helpers.iter().copied());
        out.push(id);
        if node.redundant {
            return;
        }
        match node.expansion {
            Expansion::And => {
                for &c in &node.children {
                    self.collect_active(c, out);
                }
            }
            Expansion::Or => {
                if let Some(c) = node.selected_child() {
                    self.collect_active(c, out);
                }
            }
            Expansion::Leaf | Expansion::Unexpanded => {}
        }
    }

    /// In-order ground leaf applications of the selected subtree.
    pub fn execution_sequence(&self) -> Vec<Step> {
        self.active_preorder()
            .into_iter()
            .map(|id| self.node(id))
            .filter(|n| n.expansion == Expansion::Leaf && !n.redundant)
            .map(|n| Step::new(&n.operator, n.bindings.clone()))
            .collect()
    }

    /// Deepest operator level exposed in the selected subtree under `id`.
    pub fn deepest_level(&self, id: NodeId) -> usize {
        let node = self.node(id);
        if node.redundant {
            return node.level;
        }
        let below = match node.expansion {
            Expansion::And => node
                .children
                .iter()
                .map(|&c| self.deepest_level(c))
                .max()
                .unwrap_or(node.level),
            Expansion::Or => node
                .selected_child()
                .map_or(node.level, |c| self.deepest_level(c)),
            Expansion::Leaf | Expansion::Unexpanded => node.level,
        };
        below.max(node.level)
    }

    /// Ids reachable from the root through children and helpers, in pre-order.
    pub fn reachable(&self) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut stack = vec![self.root];
        while let Some(id) = stack.pop() {
            out.push(id);
            let node = self.node(id);
            for &c in node.children.iter().rev() {
                stack.push(c);
            }
            for &h in node.helpers.iter().rev() {
                stack.push(h);
            }
        }
        out
    }
}

/// A ground operator application.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Step {
    pub operator: String,
    #[serde(default)]
    pub bindings: Bindings,
}

impl Step {
    pub fn new(operator: &str, bindings: Bindings) -> Self {
        Step {
            operator: operator.to_string(),
            bindings,
        }
    }
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.operator)?;
        if !self.bindings.is_empty() {
            let args: Vec<String> = self
                .bindings
                .iter()
                .map(|(k, v)| format!("?{k}={v}"))
                .collect();
            write!(f, "({})", args.join(","))?;
        }
        Ok(())
    }
}

/// A completed plan and the worlds it works for.
#[derive(Clone, Debug, PartialEq)]
pub struct Plan {
    pub tree: PlanTree,
    pub worlds: BTreeSet<String>,
    pub execution_sequence: Vec<Step>,
}

impl Plan {
    pub fn from_tree(tree: PlanTree, world: &str) -> Self {
        let execution_sequence = tree.execution_sequence();
        Plan {
            tree,
            worlds: BTreeSet::from([world.to_string()]),
            execution_sequence,
        }
    }

    pub fn root_values(&self) -> Values {
        self.tree.root_values()
    }

    pub fn root_ef(&self) -> f64 {
        self.tree.node(self.tree.root).ef
    }

    /// JSON document of the plan: worlds, values, execution sequence and the
    /// reachable strategy hierarchy.
    pub fn to_document(&self) -> PlanDocument {
        PlanDocument {
            worlds: self.worlds.iter().cloned().collect(),
            root_values: self.root_values(),
            root_ef: self.root_ef(),
            execution_sequence: self.execution_sequence.clone(),
            tree: self.node_document(self.tree.root, true),
        }
    }

    fn node_document(&self, id: NodeId, active: bool) -> NodeDocument {
        let node = self.tree.node(id);
        let status = if node.failed {
            NodeStatus::Failed
        } else if active && node.redundant {
            NodeStatus::Redundant
        } else if active {
            NodeStatus::Active
        } else {
            NodeStatus::Suspended
        };
        let children = node
            .children
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                let child_active = active
                    && !node.redundant
                    && match node.expansion {
                        Expansion::Or => node.selected == Some(i),
                        _ => true,
                    };
                self.node_document(c, child_active)
            })
            .collect();
        NodeDocument {
            id: id.0,
            operator: node.operator.clone(),
            level: node.level,
            bindings: node.bindings.clone(),
            base: [node.base.fulfilment, node.base.probability],
            current: [node.current.fulfilment, node.current.probability],
            ef: node.ef,
            expansion: node.expansion,
            status,
            selected: node.selected,
            side_effects: node.side_effects.iter().map(ToString::to_string).collect(),
            helpers: node
                .helpers
                .iter()
                .map(|&h| self.node_document(h, active))
                .collect(),
            children,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeStatus {
    Active,
    Suspended,
    Failed,
    Redundant,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanDocument {
    pub worlds: Vec<String>,
    pub root_values: Values,
    pub root_ef: f64,
    pub execution_sequence: Vec<Step>,
    pub tree: NodeDocument,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeDocument {
    pub id: usize,
    pub operator: String,
    pub level: usize,
    pub bindings: Bindings,
    pub base: [f64; 2],
    pub current: [f64; 2],
    pub ef: f64,
    pub expansion: Expansion,
    pub status: NodeStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub selected: Option<usize>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub side_effects: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub helpers: Vec<NodeDocument>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub children: Vec<NodeDocument>,
}
