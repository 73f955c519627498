//! Shared generators and oracles for the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::Rng;
use uplan::evidence::{FocalSet, Frame, MassFunction};
use uplan::model::{
    Bindings, EvidentialInterval, Expansion, NodeId, PState, Plan, PlanNode, PlanTree, Step, Values,
};
use uplan::planner::{and_values, update_and_node, update_or_node};

pub const DOMAIN: &str = include_str!("../../fixtures/air_combat.domain");
pub const TWO_WORLD: &str = include_str!("../../fixtures/two_world.evidence");
pub const SINGLE_WORLD: &str = include_str!("../../fixtures/single_world.evidence");

/// A random hierarchy: every node is its own operator, leaves only assert
/// a fresh fact, and nothing has preconditions.
#[derive(Clone, Debug)]
pub enum Shape {
    Leaf { p: f64 },
    And { p: f64, kids: Vec<(f64, Shape)> },
    Or { p: f64, kids: Vec<(f64, Shape)> },
}

pub struct RandomDomain {
    pub root: Shape,
    pub goal_fulfilment: f64,
    pub text: String,
}

/// Knobs for [`random_domain_with`].
#[derive(Clone, Copy, Debug)]
pub struct Gen {
    /// Every fulfilment is 1000 instead of uniform in [1, 1000].
    pub uniform_fulfilment: bool,
    /// Abstract operators have probability 1, so their estimates bound
    /// every expansion from above.
    pub optimistic_abstract: bool,
}

impl Gen {
    pub const GENERAL: Gen = Gen {
        uniform_fulfilment: false,
        optimistic_abstract: false,
    };
    pub const ADMISSIBLE: Gen = Gen {
        uniform_fulfilment: true,
        optimistic_abstract: true,
    };

    fn fulfilment(self, rng: &mut impl Rng) -> f64 {
        if self.uniform_fulfilment {
            1000.0
        } else {
            rng.gen_range(1.0..=1000.0)
        }
    }
}

fn shape(rng: &mut impl Rng, g: Gen, level: usize, max_level: usize) -> Shape {
    let p = rng.gen_range(0.05..=1.0);
    if level == max_level || rng.gen_bool(0.2) {
        return Shape::Leaf { p };
    }
    let p = if g.optimistic_abstract { 1.0 } else { p };
    let n = rng.gen_range(1..=3);
    let kids = (0..n)
        .map(|_| (g.fulfilment(rng), shape(rng, g, level + 1, max_level)))
        .collect();
    if rng.gen_bool(0.5) {
        Shape::And { p, kids }
    } else {
        Shape::Or { p, kids }
    }
}

fn emit(s: &Shape, level: usize, next: &mut usize, out: &mut String) -> String {
    let name = format!("N{next}");
    *next += 1;
    let mut body = String::new();
    let p = match s {
        Shape::Leaf { p } => {
            let _ = writeln!(body, "  plot do-all\n    assert (done {name})");
            p
        }
        Shape::And { p, kids } | Shape::Or { p, kids } => {
            let mode = if matches!(s, Shape::And { .. }) {
                "do-all"
            } else {
                "choose-one"
            };
            let _ = writeln!(body, "  plot {mode}");
            for (f, k) in kids {
                let child = emit(k, level + 1, next, out);
                let _ = writeln!(body, "    {child} {f}");
            }
            p
        }
    };
    let _ = write!(
        out,
        "operator {name}\n  level {level}\n{body}  probability default {p}\nend\n"
    );
    name
}

pub fn random_domain(rng: &mut impl Rng) -> RandomDomain {
    random_domain_with(rng, Gen::GENERAL)
}

pub fn random_domain_with(rng: &mut impl Rng, g: Gen) -> RandomDomain {
    let root = shape(rng, g, 1, 3);
    let goal_fulfilment = g.fulfilment(rng);
    let mut ops = String::new();
    let mut next = 0;
    let name = emit(&root, 1, &mut next, &mut ops);
    let text = format!("levels 3\ngoal {name} {goal_fulfilment}\nreview offset 0\n{ops}");
    RandomDomain {
        root,
        goal_fulfilment,
        text,
    }
}

/// Final values of every combination of OR choices.
pub fn all_values(s: &Shape, f: f64) -> Vec<Values> {
    match s {
        Shape::Leaf { p } => vec![Values::new(f, *p)],
        Shape::Or { kids, .. } => kids.iter().flat_map(|(cf, k)| all_values(k, *cf)).collect(),
        Shape::And { kids, .. } => {
            let mut acc: Vec<Vec<Values>> = vec![Vec::new()];
            for (cf, k) in kids {
                let opts = all_values(k, *cf);
                acc = acc
                    .iter()
                    .flat_map(|prefix| {
                        opts.iter().map(move |v| {
                            let mut x = prefix.clone();
                            x.push(*v);
                            x
                        })
                    })
                    .collect();
            }
            acc.into_iter().map(and_values).collect()
        }
    }
}

pub fn exhaustive_best_ef(d: &RandomDomain) -> f64 {
    all_values(&d.root, d.goal_fulfilment)
        .iter()
        .map(Values::ef)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Bottom-up evaluation with each OR taking its max-EF child.
pub fn greedy_values(s: &Shape, f: f64) -> Values {
    match s {
        Shape::Leaf { p } => Values::new(f, *p),
        Shape::Or { kids, .. } => kids
            .iter()
            .map(|(cf, k)| greedy_values(k, *cf))
            .fold(None::<Values>, |best, v| match best {
                Some(b) if b.ef() >= v.ef() => Some(b),
                _ => Some(v),
            })
            .expect("or node has children"),
        Shape::And { kids, .. } => and_values(kids.iter().map(|(cf, k)| greedy_values(k, *cf))),
    }
}

pub fn empty_world(levels: usize) -> PState {
    PState::new("w", levels, EvidentialInterval::certain())
}

/// Builds a fully expanded strategy tree for `s` and initialises every
/// internal node bottom-up with the update rules.
pub fn strategy_tree(s: &Shape, goal_fulfilment: f64) -> PlanTree {
    let p = shape_probability(s);
    let mut tree = PlanTree::with_root(PlanNode::new(
        "N0",
        1,
        Bindings::new(),
        Values::new(goal_fulfilment, p),
    ));
    let root = tree.root;
    fill(&mut tree, root, s);
    tree
}

fn shape_probability(s: &Shape) -> f64 {
    match s {
        Shape::Leaf { p } | Shape::And { p, .. } | Shape::Or { p, .. } => *p,
    }
}

fn fill(tree: &mut PlanTree, id: NodeId, s: &Shape) {
    let kids = match s {
        Shape::Leaf { .. } => {
            tree.node_mut(id).expansion = Expansion::Leaf;
            return;
        }
        Shape::And { kids, .. } | Shape::Or { kids, .. } => kids,
    };
    let level = tree.node(id).level + 1;
    for (f, k) in kids {
        let name = format!("N{}", tree.nodes.len());
        let mut n = PlanNode::new(
            &name,
            level,
            Bindings::new(),
            Values::new(*f, shape_probability(k)),
        );
        n.parent = Some(id);
        let c = tree.add(n);
        tree.node_mut(id).children.push(c);
        fill(tree, c, k);
    }
    if matches!(s, Shape::And { .. }) {
        tree.node_mut(id).expansion = Expansion::And;
        update_and_node(tree, id);
    } else {
        tree.node_mut(id).expansion = Expansion::Or;
        update_or_node(tree, id);
    }
}

pub fn random_shape(rng: &mut impl Rng) -> (Shape, f64) {
    let d = random_domain(rng);
    (d.root, d.goal_fulfilment)
}

/// A mass function with up to four focal sets on `frame`.
pub fn random_mass(rng: &mut impl Rng, frame: &Frame) -> MassFunction {
    let full = frame.full_set();
    let n = rng.gen_range(1..=4);
    let mut sets: Vec<FocalSet> = Vec::new();
    while sets.len() < n {
        let s = rng.gen_range(1..=full);
        if !sets.contains(&s) {
            sets.push(s);
        }
        if sets.len() as u64 == full {
            break;
        }
    }
    let raw: Vec<f64> = sets.iter().map(|_| rng.gen_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let mut entries: Vec<(FocalSet, f64)> = sets
        .into_iter()
        .zip(raw.iter().map(|w| w / total))
        .collect();
    // Absorb rounding so the masses sum to 1 within the constructor's check.
    let sum: f64 = entries.iter().map(|e| e.1).sum();
    entries[0].1 += 1.0 - sum;
    MassFunction::new(frame, entries).expect("valid random mass")
}

pub fn random_frame(rng: &mut impl Rng, name: &str) -> Frame {
    let n = rng.gen_range(1..=4);
    let names: Vec<String> = (0..n).map(|i| format!("e{i}")).collect();
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    Frame::new(name, &refs)
}

/// A plan carrying only an execution sequence, for merge tests.
pub fn sequence_plan(world: &str, ops: &[&str]) -> Plan {
    let tree = PlanTree::with_root(PlanNode::new(
        "Goal",
        1,
        Bindings::new(),
        Values::new(1.0, 1.0),
    ));
    Plan {
        tree,
        worlds: BTreeSet::from([world.to_string()]),
        execution_sequence: ops.iter().map(|o| Step::new(o, Bindings::new())).collect(),
    }
}
