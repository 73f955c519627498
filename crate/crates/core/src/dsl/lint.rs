use std::collections::BTreeSet;
use std::fmt;

use super::DomainSpec;
use crate::model::{PlotEntry, PlotMode};
use crate::planner::stratify;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Severity {
    Warning,
    Error,
}

/// What a diagnostic is about, so callers can map it back to a location.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Subject {
    Operator(String),
    Rule(String),
    Domain,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Diagnostic {
    pub severity: Severity,
    pub subject: Subject,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Warning => "warning",
            Severity::Error => "error",
        };
        write!(f, "{sev}: {}", self.message)
    }
}

/// Structural checks that parsing alone does not catch.
pub fn lint_domain(spec: &DomainSpec) -> Vec<Diagnostic> {
    let mut out = Vec::new();

    if let Err(cycle) = stratify(&spec.causal_rules) {
        let names: Vec<&str> = cycle
            .iter()
            .map(|&i| spec.causal_rules[i].name.as_str())
            .collect();
        let msg = if names.len() == 1 {
            format!(
                "rule `{}` can trigger itself; rules are not stratifiable",
                names[0]
            )
        } else {
            format!(
                "rules {} trigger each other in a cycle; rules are not stratifiable",
                names
                    .iter()
                    .map(|n| format!("`{n}`"))
                    .collect::<Vec<_>>()
                    .join(" -> ")
            )
        };
        out.push(Diagnostic {
            severity: Severity::Error,
            subject: Subject::Rule(names[0].to_string()),
            message: msg,
        });
    }

    for op in &spec.operators {
        let subject = Subject::Operator(op.name.clone());
        let has_sub = op.subgoals().next().is_some();
        let has_edit = op.plot.iter().any(|e| matches!(e, PlotEntry::StateEdit(_)));
        if has_sub && has_edit {
            out.push(Diagnostic {
                severity: Severity::Error,
                subject: subject.clone(),
                message: format!(
                    "operator `{}` mixes subgoals and state edits in its plot",
                    op.name
                ),
            });
        }
        match (op.plot_mode, op.plot.len()) {
            (PlotMode::DoAll, 0) => out.push(Diagnostic {
                severity: Severity::Error,
                subject: subject.clone(),
                message: format!("do-all plot of `{}` has no entries", op.name),
            }),
            (PlotMode::ChooseOne, 0) => out.push(Diagnostic {
                severity: Severity::Warning,
                subject: subject.clone(),
                message: format!("choose-one plot of `{}` is empty and always fails", op.name),
            }),
            (PlotMode::ChooseOne, 1) if has_sub => out.push(Diagnostic {
                severity: Severity::Warning,
                subject: subject.clone(),
                message: format!("choose-one plot of `{}` has a single entry", op.name),
            }),
            _ => {}
        }
    }

    let reachable = reachable_operators(spec);
    for op in &spec.operators {
        if !reachable.contains(op.name.as_str()) {
            out.push(Diagnostic {
                severity: Severity::Warning,
                subject: Subject::Operator(op.name.clone()),
                message: format!(
                    "operator `{}` is unreachable from goal `{}`",
                    op.name, spec.goal
                ),
            });
        }
    }
    out
}

/// Operators the planner could ever instantiate: subgoals, recovery
/// targets and helper candidates for satisfiable preconditions.
pub fn reachable_operators(spec: &DomainSpec) -> BTreeSet<&str> {
    let mut seen: BTreeSet<&str> = BTreeSet::new();
    let mut stack = vec![spec.goal.as_str()];
    while let Some(name) = stack.pop() {
        let Some(op) = spec.operator(name) else {
            continue;
        };
        if !seen.insert(op.name.as_str()) {
            continue;
        }
        stack.extend(op.subgoals().map(|(s, _)| s));
        if let crate::model::Planfail::Recover(t) = &op.planfail {
            stack.push(t);
        }
        for goal in &op.satisfiable {
            for h in &spec.operators {
                if h.is_leaf()
                    && h.level >= op.level
                    && h.postconditions.iter().any(|q| q.could_unify(goal))
                {
                    stack.push(&h.name);
                }
            }
        }
    }
    seen
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_domain;

    const BASE: &str = "
levels 2
goal Root
operator Root
  level 1
  plot choose-one
    A 10
    B 5
  probability default 1
end
operator A
  level 2
  satisfiable (ready)
  plot do-all
    assert (done)
  probability default 1
end
operator B
  level 2
  plot do-all
    assert (other)
  probability default 1
end
operator Prep
  level 2
  plot do-all
    assert (ready)
  probability default 1
  postconditions (ready)
end
";

    #[test]
    fn clean_domain_has_no_errors() {
        let spec = parse_domain(BASE).unwrap();
        assert!(lint_domain(&spec).is_empty(), "{:?}", lint_domain(&spec));
    }

    #[test]
    fn self_triggering_rule_is_a_stratification_error() {
        let text =
            format!("{BASE}\nrule Loop\n  trigger (done)\n  effects\n    assert (done) @2\nend\n");
        let d = lint_domain(&parse_domain(&text).unwrap());
        assert!(d
            .iter()
            .any(|d| d.severity == Severity::Error && d.message.contains("stratifiable")));
    }

    #[test]
    fn two_rule_cycle_is_reported() {
        let text = format!(
            "{BASE}\nrule R1\n  trigger (x)\n  effects\n    assert (y) @1\nend\nrule R2\n  trigger (y)\n  effects\n    assert (x) @1\nend\n"
        );
        let d = lint_domain(&parse_domain(&text).unwrap());
        assert!(d.iter().any(|d| d.message.contains("`R1` -> `R2`")));
    }

    #[test]
    fn unreferenced_operator_is_unreachable() {
        let text = format!("{BASE}\noperator Lost\n  level 2\n  plot do-all\n    assert (z)\n  probability default 1\nend\n");
        let d = lint_domain(&parse_domain(&text).unwrap());
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].severity, Severity::Warning);
        assert!(d[0].message.contains("unreachable"));
        assert_eq!(d[0].subject, Subject::Operator("Lost".into()));
    }

    #[test]
    fn plot_shape_checks() {
        let text = BASE
            .replace("    A 10\n    B 5\n", "    A 10\n")
            .replace("    assert (other)\n", "");
        let d = lint_domain(&parse_domain(&text).unwrap());
        assert!(d
            .iter()
            .any(|d| d.severity == Severity::Warning && d.message.contains("single entry")));
        assert!(d
            .iter()
            .any(|d| d.severity == Severity::Error && d.message.contains("no entries")));
    }
}
