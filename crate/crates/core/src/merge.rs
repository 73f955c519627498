//! Merging per-world plans into a super-plan and choosing the observations
//! that decide between its branches.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::model::{
    Alternative, BranchPoint, EvidentialInterval, KnowledgeAcquisitionOperator, Observation,
    OutcomeMapping, PState, Plan, Step, SuperNode, SuperPlan,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MergeError {
    #[error("world `{0}` is above the coverage threshold but has no plan")]
    Uncovered(String),
}

/// Whether a world's evidence reaches the (support, plausibility) threshold.
pub fn above_threshold(ps: &PState, threshold: (f64, f64)) -> bool {
    ps.interval.support() >= threshold.0 && ps.interval.plausibility() >= threshold.1
}

/// Builds the trie of the plans' execution sequences. Identical prefixes are
/// shared and each divergence becomes a branch point.
pub fn merge_plans(
    plans: &[Plan],
    worlds: &[PState],
    threshold: (f64, f64),
) -> Result<SuperPlan, MergeError> {
    let covered: BTreeSet<&str> = plans
        .iter()
        .flat_map(|p| p.worlds.iter().map(String::as_str))
        .collect();
    if let Some(w) = worlds
        .iter()
        .find(|w| above_threshold(w, threshold) && !covered.contains(w.id.as_str()))
    {
        return Err(MergeError::Uncovered(w.id.clone()));
    }

    // Plans with equal sequences contribute one path.
    let mut paths: Vec<Path> = Vec::new();
    for p in plans {
        match paths
            .iter_mut()
            .find(|(s, _)| *s == p.execution_sequence.as_slice())
        {
            Some((_, ws)) => ws.extend(p.worlds.iter().cloned()),
            None => paths.push((&p.execution_sequence, p.worlds.clone())),
        }
    }
    Ok(SuperPlan {
        worlds: covered.into_iter().map(String::from).collect(),
        nodes: build(paths),
    })
}

/// A remaining action sequence and the worlds that follow it.
type Path<'a> = (&'a [Step], BTreeSet<String>);

fn build(mut paths: Vec<Path>) -> Vec<SuperNode> {
    let mut nodes = Vec::new();
    loop {
        let first = paths.first().and_then(|(s, _)| s.first());
        let shared = first.is_some() && paths.iter().all(|(s, _)| s.first() == first);
        if shared {
            nodes.push(SuperNode::Action(first.cloned().expect("checked")));
            for (s, _) in &mut paths {
                *s = &s[1..];
            }
            continue;
        }
        if paths.len() <= 1 {
            return nodes;
        }
        // Group by next step, in order of first appearance; `None` ends a path.
        let mut groups: Vec<(Option<&Step>, Vec<Path>)> = Vec::new();
        for (s, ws) in paths {
            let key = s.first();
            let rest = if s.is_empty() { s } else { &s[1..] };
            match groups.iter_mut().find(|(k, _)| *k == key) {
                Some((_, g)) => g.push((rest, ws)),
                None => groups.push((key, vec![(rest, ws)])),
            }
        }
        let alternatives = groups
            .into_iter()
            .map(|(key, group)| {
                let worlds = group
                    .iter()
                    .flat_map(|(_, ws)| ws.iter().cloned())
                    .collect();
                let mut sub = Vec::new();
                if let Some(step) = key {
                    sub.push(SuperNode::Action(step.clone()));
                    sub.extend(build(group));
                }
                Alternative {
                    worlds,
                    weight: None,
                    nodes: sub,
                }
            })
            .collect();
        nodes.push(SuperNode::Branch(BranchPoint {
            ka: None,
            alternatives,
        }));
        return nodes;
    }
}

/// Attaches to every branch point either an observation that identifies the
/// alternative or, when no set of observations can, evidence weights.
pub fn insert_ka_operators(sp: &SuperPlan, worlds: &[PState]) -> SuperPlan {
    let by_id: BTreeMap<&str, &PState> = worlds.iter().map(|w| (w.id.as_str(), w)).collect();
    let mut out = sp.clone();
    annotate(&mut out.nodes, &by_id);
    out
}

fn annotate(nodes: &mut [SuperNode], worlds: &BTreeMap<&str, &PState>) {
    for node in nodes {
        let SuperNode::Branch(b) = node else {
            continue;
        };
        let groups: Vec<Vec<&PState>> = b
            .alternatives
            .iter()
            .map(|a| {
                a.worlds
                    .iter()
                    .filter_map(|w| worlds.get(w.as_str()).copied())
                    .collect()
            })
            .collect();
        match discriminate(&groups) {
            Some(ka) => {
                b.ka = Some(ka);
                for a in &mut b.alternatives {
                    a.weight = None;
                }
            }
            None => {
                b.ka = None;
                for (a, g) in b.alternatives.iter_mut().zip(&groups) {
                    a.weight = Some(combined_interval(g));
                }
            }
        }
        for a in &mut b.alternatives {
            annotate(&mut a.nodes, worlds);
        }
    }
}

/// Evidence for "one of these worlds": summed support and plausibility,
/// capped at 1.
pub fn combined_interval(worlds: &[&PState]) -> EvidentialInterval {
    let s: f64 = worlds.iter().map(|w| w.interval.support()).sum();
    let p: f64 = worlds.iter().map(|w| w.interval.plausibility()).sum();
    EvidentialInterval::from_sums(s.min(1.0), p.min(1.0))
        .unwrap_or_else(|_| EvidentialInterval::vacuous())
}

/// Every ground atom mentioned at any level of any of the worlds.
fn features(groups: &[Vec<&PState>]) -> BTreeSet<Observation> {
    let mut out = BTreeSet::new();
    for w in groups.iter().flatten() {
        for l in &w.levels {
            for p in &l.propositions {
                out.insert(Observation {
                    level: l.index,
                    proposition: p.atom(),
                });
            }
        }
    }
    out
}

fn observe(w: &PState, o: &Observation) -> bool {
    w.holds(o.level, &o.proposition).unwrap_or(false)
}

/// Greedy set cover: repeatedly observe the proposition that separates the
/// most still-unseparated pairs of alternatives. A proposition separates a
/// pair when it is constant over each side's worlds and differs between them.
fn discriminate(groups: &[Vec<&PState>]) -> Option<KnowledgeAcquisitionOperator> {
    let feats: Vec<Observation> = features(groups).into_iter().collect();
    let constant: Vec<Vec<Option<bool>>> = feats
        .iter()
        .map(|f| {
            groups
                .iter()
                .map(|g| {
                    let mut vals = g.iter().map(|w| observe(w, f));
                    let first = vals.next()?;
                    vals.all(|v| v == first).then_some(first)
                })
                .collect()
        })
        .collect();
    let separates = |k: usize, (i, j): (usize, usize)| match (constant[k][i], constant[k][j]) {
        (Some(a), Some(b)) => a != b,
        _ => false,
    };
    let n = groups.len();
    let mut open: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .collect();
    let mut chosen = Vec::new();
    while !open.is_empty() {
        let (best, gain) = (0..feats.len())
            .map(|k| (k, open.iter().filter(|&&p| separates(k, p)).count()))
            .fold((0, 0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if gain == 0 {
            return None;
        }
        open.retain(|&p| !separates(best, p));
        chosen.push(best);
    }
    chosen.sort_unstable();
    let observe_list: Vec<Observation> = chosen.iter().map(|&k| feats[k].clone()).collect();
    let mut outcomes: Vec<OutcomeMapping> = Vec::new();
    for (alt, g) in groups.iter().enumerate() {
        for w in g {
            let values: Vec<bool> = observe_list.iter().map(|o| observe(w, o)).collect();
            if !outcomes.iter().any(|o| o.values == values) {
                outcomes.push(OutcomeMapping {
                    values,
                    alternative: alt,
                });
            }
        }
    }
    Some(KnowledgeAcquisitionOperator {
        observe: observe_list,
        outcomes,
    })
}
