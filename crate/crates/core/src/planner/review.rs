use serde::{Deserialize, Serialize};

use crate::model::{Expansion, NodeId, PlanTree};

/// Offset rule for revisiting earlier OR choices: a suspended sibling wins
/// back the slot only when its EF exceeds the selected branch's EF by more
/// than `rho x level-difference x sibling EF`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReviewPolicy {
    pub rho: f64,
}

impl Default for ReviewPolicy {
    fn default() -> Self {
        ReviewPolicy { rho: 0.1 }
    }
}

impl ReviewPolicy {
    pub fn new(rho: f64) -> Self {
        ReviewPolicy { rho }
    }

    /// Offset a candidate at `candidate_depth` must clear to displace a
    /// selection whose subtree reaches `selected_depth`.
    pub fn offset(&self, selected_depth: usize, candidate_depth: usize, candidate_ef: f64) -> f64 {
        let delta = selected_depth.saturating_sub(candidate_depth) as f64;
        if delta == 0.0 || candidate_ef == 0.0 {
            return 0.0;
        }
        self.rho * delta * candidate_ef
    }

    pub fn should_switch(
        &self,
        selected_ef: f64,
        selected_depth: usize,
        candidate_ef: f64,
        candidate_depth: usize,
    ) -> bool {
        if self.rho.is_infinite() {
            return false;
        }
        candidate_ef > selected_ef + self.offset(selected_depth, candidate_depth, candidate_ef)
    }
}

/// A switch made during review.
#[derive(Clone, Debug, PartialEq)]
pub struct Switch {
    pub parent: NodeId,
    pub from: NodeId,
    pub to: NodeId,
}

/// Visits the OR nodes of the active solution from the root down and
/// re-selects where a suspended or untried sibling beats the current choice
/// by more than the offset. At most one switch per OR node per call; the
/// caller re-propagates values afterwards.
pub fn review_decisions(tree: &mut PlanTree, policy: &ReviewPolicy) -> Vec<Switch> {
    let mut switches = Vec::new();
    let mut stack = vec![tree.root];
    while let Some(id) = stack.pop() {
        let node = tree.node(id);
        match node.expansion {
            Expansion::Or => {
                let Some(sel_idx) = node.selected else {
                    continue;
                };
                let sel = node.children[sel_idx];
                let sel_ef = tree.node(sel).ef;
                let sel_depth = tree.deepest_level(sel);
                let mut best: Option<(usize, f64)> = None;
                for (i, &c) in node.children.iter().enumerate() {
                    let child = tree.node(c);
                    if i == sel_idx || child.failed {
                        continue;
                    }
                    let cand_depth = tree.deepest_level(c);
                    if policy.should_switch(sel_ef, sel_depth, child.ef, cand_depth)
                        && best.is_none_or(|(_, ef)| child.ef > ef)
                    {
                        best = Some((i, child.ef));
                    }
                }
                if let Some((i, _)) = best {
                    let to = node.children[i];
                    tree.node_mut(id).selected = Some(i);
                    switches.push(Switch {
                        parent: id,
                        from: sel,
                        to,
                    });
                    stack.push(to);
                } else {
                    stack.push(sel);
                }
            }
            Expansion::And => {
                for &c in node.children.iter().rev() {
                    stack.push(c);
                }
            }
            Expansion::Leaf | Expansion::Unexpanded => {}
        }
    }
    switches
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn offset_scales_with_level_gap() {
        let p = ReviewPolicy::new(0.1);
        assert_eq!(p.offset(3, 3, 828.0), 0.0);
        assert!((p.offset(4, 3, 828.0) - 82.8).abs() < 1e-9);
        assert_eq!(p.offset(2, 3, 828.0), 0.0);
    }

    #[test]
    fn switch_requires_strict_gain() {
        let p = ReviewPolicy::new(0.0);
        assert!(p.should_switch(810.0, 4, 828.0, 3));
        assert!(!p.should_switch(828.0, 4, 828.0, 3));
        let inf = ReviewPolicy::new(f64::INFINITY);
        assert!(!inf.should_switch(0.0, 4, 1000.0, 3));
    }
}
