use crate::model::{Expansion, NodeId, PlanTree, Values};

/// Expected fulfilment: fulfilment times probability of success.
pub fn expected_fulfilment(fulfilment: f64, probability: f64) -> f64 {
    fulfilment * probability
}

/// Index of the applicable child with the greatest EF, first in plot order
/// on ties.
pub fn best_child(tree: &PlanTree, id: NodeId) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &c) in tree.node(id).children.iter().enumerate() {
        let child = tree.node(c);
        if child.failed {
            continue;
        }
        if best.is_none_or(|(_, ef)| child.ef > ef) {
            best = Some((i, child.ef));
        }
    }
    best.map(|(i, _)| i)
}

/// Selects the best applicable child and copies its values into the parent.
/// Returns `false` when every child is inapplicable.
pub fn update_or_node(tree: &mut PlanTree, id: NodeId) -> bool {
    let Some(i) = best_child(tree, id) else {
        return false;
    };
    let v = tree.node(tree.node(id).children[i]).current;
    let node = tree.node_mut(id);
    node.selected = Some(i);
    node.set_current(v);
    true
}

/// Product of child probabilities, minimum of child fulfilments.
pub fn and_values(children: impl IntoIterator<Item = Values>) -> Values {
    let mut p = 1.0;
    let mut f = f64::INFINITY;
    let mut any = false;
    for v in children {
        any = true;
        p *= v.probability;
        f = f.min(v.fulfilment);
    }
    if !any {
        f = 0.0;
    }
    Values::new(f, p)
}

pub fn update_and_node(tree: &mut PlanTree, id: NodeId) {
    let v = and_values(tree.node(id).children.iter().map(|&c| tree.node(c).current));
    tree.node_mut(id).set_current(v);
}

/// Values a node should have given its children, keeping OR selections.
pub fn recomputed_values(tree: &PlanTree, id: NodeId) -> Values {
    let node = tree.node(id);
    match node.expansion {
        Expansion::And => and_values(node.children.iter().map(|&c| tree.node(c).current)),
        Expansion::Or => node
            .selected_child()
            .map_or(node.current, |c| tree.node(c).current),
        Expansion::Leaf | Expansion::Unexpanded => node.current,
    }
}

/// Recomputes the ancestors of `changed` bottom-up, stopping at the root or
/// at the first ancestor whose values do not change. Returns each change as
/// (node, before, after).
pub fn propagate_updates(tree: &mut PlanTree, changed: NodeId) -> Vec<(NodeId, Values, Values)> {
    let mut out = Vec::new();
    let mut cur = tree.node(changed).parent;
    while let Some(id) = cur {
        if tree.node(id).failed {
            break;
        }
        let before = tree.node(id).current;
        let after = recomputed_values(tree, id);
        if after == before {
            break;
        }
        tree.node_mut(id).set_current(after);
        out.push((id, before, after));
        cur = tree.node(id).parent;
    }
    out
}

/// Full bottom-up recomputation of the selected solution, keeping OR
/// selections. Only nodes below `id` that are expanded are recomputed.
pub fn recompute_subtree(tree: &PlanTree, id: NodeId) -> Values {
    let node = tree.node(id);
    match node.expansion {
        Expansion::And => and_values(node.children.iter().map(|&c| recompute_subtree(tree, c))),
        Expansion::Or => node
            .selected_child()
            .map_or(node.current, |c| recompute_subtree(tree, c)),
        Expansion::Leaf | Expansion::Unexpanded => node.current,
    }
}
