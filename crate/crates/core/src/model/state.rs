use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::operator::CompatibilityRelation;
use super::term::{Bindings, Proposition};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("abstraction level {level} out of range 1..={n}")]
    LevelOutOfRange { level: usize, n: usize },
    #[error("proposition {0} is not ground")]
    NotGround(Proposition),
    #[error("invalid evidential interval [{support}, {plausibility}]")]
    InvalidInterval { support: f64, plausibility: f64 },
}

/// Dempster–Shafer (support, plausibility) pair; serialized as `[s, p]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 2]", into = "[f64; 2]")]
pub struct EvidentialInterval {
    support: f64,
    plausibility: f64,
}

impl EvidentialInterval {
    pub fn new(support: f64, plausibility: f64) -> Result<Self, ModelError> {
        let ok = (0.0..=1.0).contains(&support)
            && (0.0..=1.0).contains(&plausibility)
            && support <= plausibility;
        if ok {
            Ok(EvidentialInterval {
                support,
                plausibility,
            })
        } else {
            Err(ModelError::InvalidInterval {
                support,
                plausibility,
            })
        }
    }

    /// Like [`new`](Self::new) but first clamps round-off of up to 1e-9 that
    /// pushes a value past 0, 1, or the other bound.
    pub fn from_sums(support: f64, plausibility: f64) -> Result<Self, ModelError> {
        const SLACK: f64 = 1e-9;
        let clamp = |x: f64| {
            if (-SLACK..0.0).contains(&x) {
                0.0
            } else if x > 1.0 && x <= 1.0 + SLACK {
                1.0
            } else {
                x
            }
        };
        let (mut s, p) = (clamp(support), clamp(plausibility));
        if s > p && s - p <= SLACK {
            s = p;
        }
        Self::new(s, p)
    }

    pub fn certain() -> Self {
        EvidentialInterval {
            support: 1.0,
            plausibility: 1.0,
        }
    }

    pub fn vacuous() -> Self {
        EvidentialInterval {
            support: 0.0,
            plausibility: 1.0,
        }
    }

    pub fn support(&self) -> f64 {
        self.support
    }

    pub fn plausibility(&self) -> f64 {
        self.plausibility
    }
}

impl TryFrom<[f64; 2]> for EvidentialInterval {
    type Error = ModelError;
    fn try_from(v: [f64; 2]) -> Result<Self, Self::Error> {
        EvidentialInterval::new(v[0], v[1])
    }
}

impl From<EvidentialInterval> for [f64; 2] {
    fn from(i: EvidentialInterval) -> Self {
        [i.support, i.plausibility]
    }
}

impl fmt::Display for EvidentialInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.support, self.plausibility)
    }
}

/// The description of a world at one abstraction level (1 = coarsest).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AbstractionLevel {
    pub index: usize,
    pub propositions: BTreeSet<Proposition>,
}

impl AbstractionLevel {
    pub fn new(index: usize) -> Self {
        AbstractionLevel {
            index,
            propositions: BTreeSet::new(),
        }
    }

    /// Closed-world truth of a ground proposition at this level. A negative
    /// proposition holds when it is stored explicitly or its atom is absent.
    pub fn holds(&self, p: &Proposition) -> bool {
        if p.positive {
            self.propositions.contains(p)
        } else {
            self.propositions.contains(p) || !self.propositions.contains(&p.atom())
        }
    }

    /// All extensions of `bindings` under which `pattern` holds here.
    ///
    /// Positive patterns enumerate stored facts. Negative patterns are
    /// negation as failure: they succeed (without binding) when no stored
    /// fact matches the atom.
    pub fn match_pattern(&self, pattern: &Proposition, bindings: &Bindings) -> Vec<Bindings> {
        let pat = pattern.substitute(bindings);
        if pat.positive {
            return self
                .propositions
                .iter()
                .filter_map(|fact| pat.match_ground(fact, bindings))
                .collect();
        }
        if pat.is_ground() {
            return if self.holds(&pat) {
                vec![bindings.clone()]
            } else {
                vec![]
            };
        }
        let atom = pat.atom();
        let explicit: Vec<Bindings> = self
            .propositions
            .iter()
            .filter_map(|fact| pat.match_ground(fact, bindings))
            .collect();
        if !explicit.is_empty() {
            return explicit;
        }
        let any_positive = self
            .propositions
            .iter()
            .any(|fact| atom.match_ground(fact, bindings).is_some());
        if any_positive {
            vec![]
        } else {
            vec![bindings.clone()]
        }
    }

    /// All solutions of a conjunction, positive conjuncts first.
    pub fn match_all(&self, patterns: &[Proposition], bindings: &Bindings) -> Vec<Bindings> {
        let mut ordered: Vec<&Proposition> = patterns.iter().filter(|p| p.positive).collect();
        ordered.extend(patterns.iter().filter(|p| !p.positive));
        let mut frontier = vec![bindings.clone()];
        for pat in ordered {
            let mut next = Vec::new();
            for b in &frontier {
                next.extend(self.match_pattern(pat, b));
            }
            next.dedup();
            if next.is_empty() {
                return next;
            }
            frontier = next;
        }
        frontier
    }

    pub fn first_match(&self, patterns: &[Proposition], bindings: &Bindings) -> Option<Bindings> {
        self.match_all(patterns, bindings).into_iter().next()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EditKind {
    Assert,
    Retract,
}

/// A state change at a given level.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edit {
    pub kind: EditKind,
    pub proposition: Proposition,
    pub level: usize,
}

impl Edit {
    pub fn assert(proposition: Proposition, level: usize) -> Self {
        Edit {
            kind: EditKind::Assert,
            proposition,
            level,
        }
    }

    pub fn retract(proposition: Proposition, level: usize) -> Self {
        Edit {
            kind: EditKind::Retract,
            proposition,
            level,
        }
    }

    pub fn ground(&self, bindings: &Bindings) -> Option<Edit> {
        Some(Edit {
            kind: self.kind,
            proposition: self.proposition.ground(bindings)?,
            level: self.level,
        })
    }

    /// The literal that became true through this change.
    pub fn as_literal(&self) -> Proposition {
        match self.kind {
            EditKind::Assert => self.proposition.clone(),
            EditKind::Retract => self.proposition.negated(),
        }
    }
}

impl fmt::Display for Edit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kw = match self.kind {
            EditKind::Assert => "assert",
            EditKind::Retract => "retract",
        };
        write!(f, "{kw} {} @{}", self.proposition, self.level)
    }
}

impl Serialize for Edit {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

/// One possible world: a description at each of `n` abstraction levels plus
/// the evidential interval supporting it.
#[derive(Clone, Debug, PartialEq)]
pub struct PState {
    pub id: String,
    pub levels: Vec<AbstractionLevel>,
    pub interval: EvidentialInterval,
}

impl PState {
    pub fn new(id: impl Into<String>, n_levels: usize, interval: EvidentialInterval) -> Self {
        PState {
            id: id.into(),
            levels: (1..=n_levels).map(AbstractionLevel::new).collect(),
            interval,
        }
    }

    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn level(&self, level: usize) -> Result<&AbstractionLevel, ModelError> {
        if level == 0 || level > self.levels.len() {
            return Err(ModelError::LevelOutOfRange {
                level,
                n: self.levels.len(),
            });
        }
        Ok(&self.levels[level - 1])
    }

    fn level_mut(&mut self, level: usize) -> Result<&mut AbstractionLevel, ModelError> {
        let n = self.levels.len();
        if level == 0 || level > n {
            return Err(ModelError::LevelOutOfRange { level, n });
        }
        Ok(&mut self.levels[level - 1])
    }

    /// Closed-world query of a ground proposition.
    pub fn holds(&self, level: usize, p: &Proposition) -> Result<bool, ModelError> {
        let lvl = self.level(level)?;
        if !p.is_ground() {
            return Err(ModelError::NotGround(p.clone()));
        }
        Ok(lvl.holds(p))
    }

    /// Applies edits in order and returns the new state; `self` is untouched.
    pub fn apply_edits(&self, edits: &[Edit]) -> Result<PState, ModelError> {
        Ok(self.apply_edits_tracked(edits)?.0)
    }

    /// Like [`apply_edits`](Self::apply_edits) but also returns the edits
    /// that actually changed the state.
    pub fn apply_edits_tracked(&self, edits: &[Edit]) -> Result<(PState, Vec<Edit>), ModelError> {
        let mut next = self.clone();
        let mut changed = Vec::new();
        for edit in edits {
            if !edit.proposition.is_ground() {
                return Err(ModelError::NotGround(edit.proposition.clone()));
            }
            let lvl = next.level_mut(edit.level)?;
            let p = &edit.proposition;
            let did = match edit.kind {
                EditKind::Assert => {
                    let removed = lvl.propositions.remove(&p.negated());
                    lvl.propositions.insert(p.clone()) || removed
                }
                EditKind::Retract => {
                    let removed = lvl.propositions.remove(p);
                    if !removed {
                        log::debug!("retract of absent {} at level {} ignored", p, edit.level);
                    }
                    removed
                }
            };
            if did {
                changed.push(edit.clone());
            }
        }
        Ok((next, changed))
    }

    /// Propagates compatibility relations to a fixpoint, asserting entailed
    /// propositions. A relation whose consequent contradicts the state is
    /// reported instead of repaired.
    pub fn enforce_compatibility(
        &self,
        relations: &[CompatibilityRelation],
    ) -> Result<PState, CompatViolation> {
        let mut ps = self.clone();
        loop {
            let mut changed = false;
            for (index, rel) in relations.iter().enumerate() {
                let violation = |level: usize, proposition: Proposition| CompatViolation {
                    index,
                    relation: rel.to_string(),
                    level,
                    proposition,
                };
                let antecedent = ps
                    .level(rel.if_level)
                    .map_err(|_| violation(rel.if_level, rel.if_pattern.clone()))?;
                let sols = antecedent.match_pattern(&rel.if_pattern, &Bindings::new());
                for b in sols {
                    let Some(q) = rel.then_pattern.ground(&b) else {
                        return Err(violation(rel.then_level, rel.then_pattern.substitute(&b)));
                    };
                    let target = ps
                        .level_mut(rel.then_level)
                        .map_err(|_| violation(rel.then_level, q.clone()))?;
                    if target.holds(&q) {
                        continue;
                    }
                    if !q.positive || target.propositions.contains(&q.negated()) {
                        return Err(violation(rel.then_level, q));
                    }
                    target.propositions.insert(q);
                    changed = true;
                }
            }
            if !changed {
                return Ok(ps);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("compatibility relation #{index} `{relation}` violated at level {level}: {proposition} cannot hold")]
pub struct CompatViolation {
    pub index: usize,
    pub relation: String,
    pub level: usize,
    pub proposition: Proposition,
}
