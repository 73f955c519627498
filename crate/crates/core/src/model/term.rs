use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Variable name (without the leading `?`) to constant.
pub type Bindings = BTreeMap<String, String>;

/// An argument of a proposition: a constant, or a `?variable` inside an
/// operator pattern.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    Const(String),
    Var(String),
}

impl Term {
    pub fn constant(name: impl Into<String>) -> Self {
        Term::Const(name.into())
    }

    pub fn var(name: impl Into<String>) -> Self {
        Term::Var(name.into())
    }

    pub fn is_var(&self) -> bool {
        matches!(self, Term::Var(_))
    }

    /// Resolves a variable through `bindings`; unbound variables stay as they are.
    pub fn resolve(&self, bindings: &Bindings) -> Term {
        match self {
            Term::Var(v) => match bindings.get(v) {
                Some(c) => Term::Const(c.clone()),
                None => self.clone(),
            },
            Term::Const(_) => self.clone(),
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Const(c) => f.write_str(c),
            Term::Var(v) => write!(f, "?{v}"),
        }
    }
}

/// A propositional statement `(predicate arg ...)`, possibly negated.
///
/// Inside a [`PState`](super::PState) propositions are ground; operator
/// slots hold patterns that may mention variables.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Proposition {
    pub predicate: String,
    pub args: Vec<Term>,
    pub positive: bool,
}

impl Proposition {
    pub fn new(predicate: impl Into<String>, args: Vec<Term>) -> Self {
        Proposition {
            predicate: predicate.into(),
            args,
            positive: true,
        }
    }

    /// Ground positive proposition from constant names.
    pub fn ground_atom(predicate: &str, args: &[&str]) -> Self {
        Proposition::new(predicate, args.iter().map(|a| Term::constant(*a)).collect())
    }

    pub fn negated(&self) -> Self {
        Proposition {
            positive: !self.positive,
            ..self.clone()
        }
    }

    /// The positive form of this proposition.
    pub fn atom(&self) -> Self {
        Proposition {
            positive: true,
            ..self.clone()
        }
    }

    pub fn is_ground(&self) -> bool {
        self.args.iter().all(|a| !a.is_var())
    }

    pub fn vars(&self) -> impl Iterator<Item = &str> {
        self.args.iter().filter_map(|a| match a {
            Term::Var(v) => Some(v.as_str()),
            Term::Const(_) => None,
        })
    }

    pub fn substitute(&self, bindings: &Bindings) -> Self {
        Proposition {
            predicate: self.predicate.clone(),
            args: self.args.iter().map(|a| a.resolve(bindings)).collect(),
            positive: self.positive,
        }
    }

    /// Substitutes and returns the result only when every variable was bound.
    pub fn ground(&self, bindings: &Bindings) -> Option<Self> {
        let p = self.substitute(bindings);
        p.is_ground().then_some(p)
    }

    /// One-way match of this pattern against a ground proposition, extending
    /// `bindings`. Polarity must agree.
    pub fn match_ground(&self, fact: &Proposition, bindings: &Bindings) -> Option<Bindings> {
        if self.positive != fact.positive
            || self.predicate != fact.predicate
            || self.args.len() != fact.args.len()
        {
            return None;
        }
        let mut out = bindings.clone();
        for (pat, val) in self.args.iter().zip(&fact.args) {
            let Term::Const(val) = val else { return None };
            match pat {
                Term::Const(c) => {
                    if c != val {
                        return None;
                    }
                }
                Term::Var(v) => match out.get(v) {
                    Some(bound) if bound != val => return None,
                    Some(_) => {}
                    None => {
                        out.insert(v.clone(), val.clone());
                    }
                },
            }
        }
        Some(out)
    }

    /// Whether two patterns could denote the same ground proposition. Variables
    /// are treated as renamed apart, so this is a conservative overlap test.
    pub fn could_unify(&self, other: &Proposition) -> bool {
        self.positive == other.positive
            && self.predicate == other.predicate
            && self.args.len() == other.args.len()
            && self
                .args
                .iter()
                .zip(&other.args)
                .all(|(a, b)| match (a, b) {
                    (Term::Const(x), Term::Const(y)) => x == y,
                    _ => true,
                })
    }
}

impl fmt::Display for Proposition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if !self.positive {
            f.write_str("(not ")?;
        }
        write!(f, "({}", self.predicate)?;
        for a in &self.args {
            write!(f, " {a}")?;
        }
        f.write_str(")")?;
        if !self.positive {
            f.write_str(")")?;
        }
        Ok(())
    }
}

impl FromStr for Proposition {
    type Err = crate::dsl::ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        crate::dsl::parse_proposition(s)
    }
}

impl Serialize for Proposition {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Proposition {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
