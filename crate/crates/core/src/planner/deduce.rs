use std::collections::BTreeSet;

use crate::model::{CausalRule, Edit, ModelError, PState};

/// Orders rules so that a rule only ever triggers rules after it. On a
/// cycle, returns the rule indices forming it.
pub fn stratify(rules: &[CausalRule]) -> Result<Vec<usize>, Vec<usize>> {
    let n = rules.len();
    let edges: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| rules[i].may_trigger(&rules[j]))
                .collect()
        })
        .collect();
    let mut indegree = vec![0usize; n];
    for targets in &edges {
        for &j in targets {
            indegree[j] += 1;
        }
    }
    let mut ready: BTreeSet<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(i) = ready.pop_first() {
        order.push(i);
        for &j in &edges[i] {
            indegree[j] -= 1;
            if indegree[j] == 0 {
                ready.insert(j);
            }
        }
    }
    if order.len() == n {
        return Ok(order);
    }
    // Walk backwards inside the remaining subgraph until a node repeats.
    let left: BTreeSet<usize> = (0..n).filter(|i| !order.contains(i)).collect();
    // Every rule left over still has a predecessor among the leftovers.
    let mut path = Vec::new();
    let mut cur = *left.iter().next().expect("cycle has members");
    loop {
        if let Some(pos) = path.iter().position(|&x| x == cur) {
            let mut cycle: Vec<usize> = path[pos..].to_vec();
            cycle.reverse();
            let min = (0..cycle.len()).min_by_key(|&k| cycle[k]).unwrap_or(0);
            cycle.rotate_left(min);
            return Err(cycle);
        }
        path.push(cur);
        cur = *left
            .iter()
            .find(|&&j| edges[j].contains(&cur))
            .expect("leftover rule has a leftover predecessor");
    }
}

/// Fires causal rules triggered by `changed` (and by their own effects) in
/// stratified order. Returns the new state and the effects that actually
/// changed it, in firing order.
pub fn deduce_effects(
    ps: &PState,
    rules: &[CausalRule],
    order: &[usize],
    changed: &[Edit],
) -> Result<(PState, Vec<Edit>), ModelError> {
    let mut state = ps.clone();
    let mut changes: Vec<Edit> = changed.to_vec();
    let mut log = Vec::new();
    for &ri in order {
        let rule = &rules[ri];
        let mut i = 0;
        while i < changes.len() {
            let change = changes[i].clone();
            i += 1;
            let Some(b) = rule.triggered_by(&change) else {
                continue;
            };
            let sols = state.level(change.level)?.match_all(&rule.condition, &b);
            for sol in sols {
                let edits: Vec<Edit> = rule.effects.iter().filter_map(|e| e.ground(&sol)).collect();
                let (next, did) = state.apply_edits_tracked(&edits)?;
                state = next;
                for d in did {
                    log::debug!("rule {} deduced {}", rule.name, d);
                    log.push(d.clone());
                    changes.push(d);
                }
            }
        }
    }
    Ok((state, log))
}
