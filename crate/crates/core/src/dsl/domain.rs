use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use super::{fmt_number, Cursor, Location, ParseError, TokenKind};
use crate::model::{
    CausalRule, CompatibilityRelation, Edit, Planfail, PlotEntry, PlotMode, ProbabilityRule,
    ProbabilityTable, Proposition, ReductionOperator,
};
use crate::planner::ReviewPolicy;

const TOP_KEYWORDS: &[&str] = &[
    "levels",
    "goal",
    "review",
    "threshold",
    "compat",
    "rule",
    "operator",
];
const OPERATOR_SLOTS: &[&str] = &[
    "level",
    "necessary",
    "satisfiable",
    "plot",
    "probability",
    "postconditions",
    "planfail",
    "end",
];
const RULE_SLOTS: &[&str] = &["trigger", "when", "effects", "end"];
const EDIT_KEYWORDS: &[&str] = &["assert", "retract"];

/// A parsed domain: operators, causal rules, compatibility relations and the
/// planning parameters that travel with them.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainSpec {
    pub n_levels: usize,
    pub goal: String,
    /// Fulfilment of achieving the goal, given to the root node.
    pub goal_fulfilment: f64,
    pub review: ReviewPolicy,
    /// (support, plausibility) a world must reach to require a plan.
    pub coverage_threshold: (f64, f64),
    pub operators: Vec<ReductionOperator>,
    pub causal_rules: Vec<CausalRule>,
    pub compat: Vec<CompatibilityRelation>,
}

impl DomainSpec {
    pub fn operator(&self, name: &str) -> Option<&ReductionOperator> {
        self.operators.iter().find(|o| o.name == name)
    }

    pub fn goal_operator(&self) -> Option<&ReductionOperator> {
        self.operator(&self.goal)
    }
}

/// Where named items were declared, for diagnostics.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SourceSpans {
    pub goal: Option<Location>,
    pub operators: BTreeMap<String, Location>,
    pub rules: BTreeMap<String, Location>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParsedDomain {
    pub spec: DomainSpec,
    pub spans: SourceSpans,
}

pub fn parse_domain(text: &str) -> Result<DomainSpec, Vec<ParseError>> {
    parse_domain_with_spans(text).map(|p| p.spec)
}

pub fn parse_domain_with_spans(text: &str) -> Result<ParsedDomain, Vec<ParseError>> {
    let toks = super::tokenize(text);
    let mut p = DomainParser {
        cur: Cursor::new(&toks, text),
        spans: SourceSpans::default(),
        levels: None,
        goal: None,
        review: None,
        threshold: None,
        operators: Vec::new(),
        rules: Vec::new(),
        compat: Vec::new(),
        level_uses: Vec::new(),
        refs: Vec::new(),
        recover_refs: Vec::new(),
        binding_checks: Vec::new(),
    };
    p.parse_file();
    p.finish()
}

struct DomainParser<'a> {
    cur: Cursor<'a>,
    spans: SourceSpans,
    levels: Option<usize>,
    goal: Option<(String, f64)>,
    review: Option<ReviewPolicy>,
    threshold: Option<(f64, f64)>,
    operators: Vec<ReductionOperator>,
    rules: Vec<CausalRule>,
    compat: Vec<CompatibilityRelation>,
    level_uses: Vec<(usize, Location)>,
    /// (parent operator, subgoal, location)
    refs: Vec<(String, String, Location)>,
    recover_refs: Vec<(String, Location)>,
    /// Variables that must be bound by earlier patterns: (needed, available, location).
    binding_checks: Vec<(BTreeSet<String>, BTreeSet<String>, Location)>,
}

fn is_top(w: &str) -> bool {
    TOP_KEYWORDS.contains(&w)
}

fn var_set<'p>(props: impl IntoIterator<Item = &'p Proposition>) -> BTreeSet<String> {
    props
        .into_iter()
        .flat_map(|p| p.vars().map(str::to_string))
        .collect()
}

impl DomainParser<'_> {
    fn parse_file(&mut self) {
        while !self.cur.at_eof() {
            let start = self.cur.loc();
            let before = self.cur.peek().cloned();
            let result = match self.cur.peek_word() {
                Some("levels") => self.parse_levels(),
                Some("goal") => self.parse_goal(),
                Some("review") => self.parse_review(),
                Some("threshold") => self.parse_threshold(),
                Some("compat") => self.parse_compat(),
                Some("rule") => self.parse_rule(),
                Some("operator") => self.parse_operator(),
                Some(w) => Err(ParseError::new(
                    start,
                    format!("unknown keyword `{w}`"),
                    Some(w.to_string()),
                )),
                None => Err(self.cur.error("expected a declaration")),
            };
            if let Err(e) = result {
                self.cur.errors.push(e);
                if self.cur.peek() == before.as_ref() && self.cur.loc() == start {
                    self.cur.next();
                }
                self.cur.recover(|t| t.word().is_some_and(is_top));
            }
        }
    }

    fn level(&mut self) -> Result<usize, ParseError> {
        let loc = self.cur.loc();
        let n = self.cur.integer("a level number")?;
        self.level_uses.push((n, loc));
        Ok(n)
    }

    fn level_suffix(&mut self) -> Result<usize, ParseError> {
        self.cur.expect(&TokenKind::At)?;
        self.level()
    }

    fn probability(&mut self) -> Result<f64, ParseError> {
        let loc = self.cur.loc();
        let v = self.cur.number("a probability")?;
        if !(0.0..=1.0).contains(&v) {
            return Err(ParseError::new(
                loc,
                format!("probability {v} outside [0,1]"),
                Some(fmt_number(v)),
            ));
        }
        Ok(v)
    }

    fn fulfilment(&mut self) -> Result<f64, ParseError> {
        let loc = self.cur.loc();
        let v = self.cur.number("a fulfilment value")?;
        if v < 0.0 {
            return Err(ParseError::new(
                loc,
                format!("fulfilment {v} is negative"),
                Some(fmt_number(v)),
            ));
        }
        Ok(v)
    }

    fn name(&mut self, what: &str) -> Result<(String, Location), ParseError> {
        let (w, loc) = self.cur.expect_word(what)?;
        if w.starts_with('?')
            || is_top(w)
            || OPERATOR_SLOTS.contains(&w)
            || RULE_SLOTS.contains(&w)
            || EDIT_KEYWORDS.contains(&w)
        {
            return Err(ParseError::new(
                loc,
                format!("`{w}` cannot be used as {what}"),
                Some(w.to_string()),
            ));
        }
        Ok((w.to_string(), loc))
    }

    fn parse_levels(&mut self) -> Result<(), ParseError> {
        let kw = self.cur.expect_keyword("levels")?;
        let loc = self.cur.loc();
        let n = self.cur.integer("the number of abstraction levels")?;
        if n == 0 {
            return Err(ParseError::new(
                loc,
                "at least one abstraction level is required",
                None,
            ));
        }
        if self.levels.replace(n).is_some() {
            return Err(ParseError::new(kw, "duplicate levels declaration", None));
        }
        Ok(())
    }

    fn parse_goal(&mut self) -> Result<(), ParseError> {
        let kw = self.cur.expect_keyword("goal")?;
        let (name, loc) = self.name("a goal operator name")?;
        let f = if self
            .cur
            .peek_word()
            .is_some_and(|w| w.parse::<f64>().is_ok())
        {
            self.fulfilment()?
        } else {
            1.0
        };
        if self.goal.is_some() {
            return Err(ParseError::new(kw, "duplicate goal declaration", None));
        }
        self.goal = Some((name, f));
        self.spans.goal = Some(loc);
        Ok(())
    }

    fn parse_review(&mut self) -> Result<(), ParseError> {
        let kw = self.cur.expect_keyword("review")?;
        self.cur.expect_keyword("offset")?;
        let loc = self.cur.loc();
        let rho = match self.cur.peek_word() {
            Some("inf") => {
                self.cur.next();
                f64::INFINITY
            }
            _ => self.cur.number("an offset fraction")?,
        };
        if rho < 0.0 {
            return Err(ParseError::new(
                loc,
                "offset fraction must be non-negative",
                None,
            ));
        }
        if self.review.replace(ReviewPolicy::new(rho)).is_some() {
            return Err(ParseError::new(kw, "duplicate review declaration", None));
        }
        Ok(())
    }

    fn parse_threshold(&mut self) -> Result<(), ParseError> {
        let kw = self.cur.expect_keyword("threshold")?;
        let s = self.probability()?;
        let p = self.probability()?;
        if self.threshold.replace((s, p)).is_some() {
            return Err(ParseError::new(kw, "duplicate threshold declaration", None));
        }
        Ok(())
    }

    fn parse_compat(&mut self) -> Result<(), ParseError> {
        self.cur.expect_keyword("compat")?;
        let if_pattern = self.cur.proposition()?;
        let if_level = self.level_suffix()?;
        self.cur.expect(&TokenKind::Arrow)?;
        let then_loc = self.cur.loc();
        let then_pattern = self.cur.proposition()?;
        let then_level = self.level_suffix()?;
        self.binding_checks
            .push((var_set([&then_pattern]), var_set([&if_pattern]), then_loc));
        self.compat.push(CompatibilityRelation {
            if_level,
            if_pattern,
            then_level,
            then_pattern,
        });
        Ok(())
    }

    fn edit_line(&mut self, default_level: Option<usize>) -> Result<Edit, ParseError> {
        let (kw, _) = self.cur.expect_word("`assert` or `retract`")?;
        let prop = self.cur.proposition()?;
        let level = match default_level {
            Some(d) if !self.cur.peek_is(&TokenKind::At) => d,
            _ => self.level_suffix()?,
        };
        Ok(match kw {
            "assert" => Edit::assert(prop, level),
            _ => Edit::retract(prop, level),
        })
    }

    fn parse_rule(&mut self) -> Result<(), ParseError> {
        self.cur.expect_keyword("rule")?;
        let (name, loc) = self.name("a rule name")?;
        if self.spans.rules.contains_key(&name) {
            self.cur.errors.push(ParseError::new(
                loc,
                format!("duplicate rule `{name}`"),
                Some(name.clone()),
            ));
        } else {
            self.spans.rules.insert(name.clone(), loc);
        }
        let mut trigger = None;
        let mut trigger_level = None;
        let mut condition = Vec::new();
        let mut effects = Vec::new();
        let mut effects_loc = None;
        loop {
            let slot_loc = self.cur.loc();
            let res: Result<bool, ParseError> = match self.cur.peek_word() {
                Some("end") => {
                    self.cur.next();
                    break;
                }
                Some("trigger") => (|| {
                    self.cur.next();
                    let t = self.cur.proposition()?;
                    let l = if self.cur.peek_is(&TokenKind::At) {
                        Some(self.level_suffix()?)
                    } else {
                        None
                    };
                    if trigger.replace(t).is_some() {
                        return Err(ParseError::new(slot_loc, "duplicate trigger", None));
                    }
                    trigger_level = l;
                    Ok(true)
                })(),
                Some("when") => {
                    self.cur.next();
                    self.cur.propositions().map(|ps| {
                        condition.extend(ps);
                        true
                    })
                }
                Some("effects") => (|| {
                    self.cur.next();
                    effects_loc = Some(slot_loc);
                    while self
                        .cur
                        .peek_word()
                        .is_some_and(|w| EDIT_KEYWORDS.contains(&w))
                    {
                        effects.push(self.edit_line(None)?);
                    }
                    Ok(true)
                })(),
                Some(w) if is_top(w) => {
                    self.cur
                        .errors
                        .push(self.cur.error(format!("missing `end` for rule `{name}`")));
                    break;
                }
                None if self.cur.at_eof() => {
                    self.cur
                        .errors
                        .push(self.cur.error(format!("missing `end` for rule `{name}`")));
                    break;
                }
                _ => {
                    let e = self
                        .cur
                        .error("expected `trigger`, `when`, `effects` or `end`");
                    self.cur.next();
                    Err(e)
                }
            };
            if let Err(e) = res {
                self.cur.errors.push(e);
                self.cur.recover(|t| {
                    t.word()
                        .is_some_and(|w| RULE_SLOTS.contains(&w) || is_top(w))
                });
            }
        }
        let Some(trigger) = trigger else {
            return Err(ParseError::new(
                loc,
                format!("rule `{name}` has no trigger"),
                None,
            ));
        };
        let mut available = var_set([&trigger]);
        available.extend(var_set(&condition));
        let needed = var_set(effects.iter().map(|e| &e.proposition));
        self.binding_checks
            .push((needed, available, effects_loc.unwrap_or(loc)));
        self.rules.push(CausalRule {
            name,
            trigger,
            trigger_level,
            condition,
            effects,
        });
        Ok(())
    }

    fn parse_operator(&mut self) -> Result<(), ParseError> {
        self.cur.expect_keyword("operator")?;
        let (name, name_loc) = self.name("an operator name")?;
        let duplicate = self.spans.operators.contains_key(&name);
        if duplicate {
            self.cur.errors.push(ParseError::new(
                name_loc,
                format!("duplicate operator `{name}`"),
                Some(name.clone()),
            ));
        } else {
            self.spans.operators.insert(name.clone(), name_loc);
        }
        let mut b = OperatorBuilder::default();
        loop {
            let slot_loc = self.cur.loc();
            let res = match self.cur.peek_word() {
                Some("end") => {
                    self.cur.next();
                    break;
                }
                Some(slot) if OPERATOR_SLOTS.contains(&slot) => {
                    self.cur.next();
                    if !b.seen.insert(slot.to_string()) {
                        Err(ParseError::new(
                            slot_loc,
                            format!("duplicate `{slot}` slot"),
                            Some(slot.to_string()),
                        ))
                    } else {
                        self.operator_slot(slot, &name, &mut b)
                    }
                }
                Some(w) if is_top(w) => {
                    self.cur.errors.push(
                        self.cur
                            .error(format!("missing `end` for operator `{name}`")),
                    );
                    break;
                }
                None if self.cur.at_eof() => {
                    self.cur.errors.push(
                        self.cur
                            .error(format!("missing `end` for operator `{name}`")),
                    );
                    break;
                }
                _ => {
                    let e = self.cur.error("expected an operator slot or `end`");
                    self.cur.next();
                    Err(e)
                }
            };
            if let Err(e) = res {
                self.cur.errors.push(e);
                self.cur.recover(|t| {
                    t.word()
                        .is_some_and(|w| OPERATOR_SLOTS.contains(&w) || is_top(w))
                });
            }
        }
        let missing = |slot: &str| {
            ParseError::new(
                name_loc,
                format!("operator `{name}` is missing its `{slot}` slot"),
                None,
            )
        };
        let Some(level) = b.level else {
            return Err(missing("level"));
        };
        let Some(plot_mode) = b.plot_mode else {
            return Err(missing("plot"));
        };
        let Some(default) = b.default else {
            return Err(missing("probability default"));
        };
        if duplicate {
            return Ok(());
        }
        self.operators.push(ReductionOperator {
            name,
            level,
            necessary: b.necessary,
            satisfiable: b.satisfiable,
            plot_mode,
            plot: b.plot,
            probability: ProbabilityTable {
                rules: b.rules,
                default,
            },
            postconditions: b.postconditions,
            planfail: b.planfail.unwrap_or(Planfail::Backtrack),
        });
        Ok(())
    }

    fn operator_slot(
        &mut self,
        slot: &str,
        op_name: &str,
        b: &mut OperatorBuilder,
    ) -> Result<(), ParseError> {
        match slot {
            "level" => {
                b.level = Some(self.level()?);
            }
            "necessary" => b.necessary = self.cur.propositions()?,
            "satisfiable" => b.satisfiable = self.cur.propositions()?,
            "postconditions" => b.postconditions = self.cur.propositions()?,
            "plot" => {
                let (mode, loc) = self.cur.expect_word("`choose-one` or `do-all`")?;
                b.plot_mode = Some(match mode {
                    "choose-one" => PlotMode::ChooseOne,
                    "do-all" => PlotMode::DoAll,
                    other => {
                        return Err(ParseError::new(
                            loc,
                            format!("unknown plot mode `{other}`"),
                            Some(other.to_string()),
                        ))
                    }
                });
                loop {
                    match self.cur.peek_word() {
                        Some(w) if EDIT_KEYWORDS.contains(&w) => {
                            let e = self.edit_line(b.level)?;
                            match b.plot.last_mut() {
                                Some(PlotEntry::StateEdit(es)) => es.push(e),
                                _ => b.plot.push(PlotEntry::StateEdit(vec![e])),
                            }
                        }
                        Some(w) if !OPERATOR_SLOTS.contains(&w) && !is_top(w) => {
                            let (sub, loc) = self.name("a subgoal operator name")?;
                            let fulfilment = self.fulfilment()?;
                            self.refs.push((op_name.to_string(), sub.clone(), loc));
                            b.plot.push(PlotEntry::Subgoal {
                                operator: sub,
                                fulfilment,
                            });
                        }
                        _ => break,
                    }
                }
            }
            "probability" => loop {
                match self.cur.peek_word() {
                    Some("when") => {
                        let loc = self.cur.loc();
                        self.cur.next();
                        let when = self.cur.propositions()?;
                        if when.is_empty() {
                            return Err(ParseError::new(
                                loc,
                                "probability rule needs at least one condition",
                                None,
                            ));
                        }
                        self.cur.expect(&TokenKind::Arrow)?;
                        let value = self.probability()?;
                        b.rules.push(ProbabilityRule { when, value });
                    }
                    Some("default") => {
                        self.cur.next();
                        b.default = Some(self.probability()?);
                        break;
                    }
                    _ => return Err(self.cur.error("expected `when` or `default`")),
                }
            },
            "planfail" => {
                let (kw, loc) = self.cur.expect_word("a planfail directive")?;
                b.planfail = Some(match kw {
                    "backtrack" => Planfail::Backtrack,
                    "reject-branch" => Planfail::RejectBranch,
                    "recover" => {
                        let (target, tloc) = self.name("a recovery operator name")?;
                        self.recover_refs.push((target.clone(), tloc));
                        Planfail::Recover(target)
                    }
                    other => {
                        return Err(ParseError::new(
                            loc,
                            format!("unknown planfail directive `{other}`"),
                            Some(other.to_string()),
                        ))
                    }
                });
            }
            _ => unreachable!("slot list checked by caller"),
        }
        Ok(())
    }

    fn finish(mut self) -> Result<ParsedDomain, Vec<ParseError>> {
        let origin = Location { line: 1, column: 1 };
        let n = self.levels.unwrap_or_else(|| {
            self.cur
                .errors
                .push(ParseError::new(origin, "missing levels declaration", None));
            usize::MAX
        });
        if self.goal.is_none() {
            self.cur
                .errors
                .push(ParseError::new(origin, "missing goal declaration", None));
        }
        for &(l, loc) in &self.level_uses {
            if l == 0 || l > n {
                self.cur.errors.push(ParseError::new(
                    loc,
                    format!("level {l} out of range 1..={n}"),
                    Some(l.to_string()),
                ));
            }
        }
        let levels: BTreeMap<&str, usize> = self
            .operators
            .iter()
            .map(|o| (o.name.as_str(), o.level))
            .collect();
        for (parent, sub, loc) in &self.refs {
            match levels.get(sub.as_str()) {
                None => self.cur.errors.push(ParseError::new(
                    *loc,
                    format!("unresolved subgoal `{sub}` in operator `{parent}`"),
                    Some(sub.clone()),
                )),
                Some(&sl) => {
                    let pl = levels.get(parent.as_str()).copied().unwrap_or(0);
                    if sl < pl {
                        self.cur.errors.push(ParseError::new(
                            *loc,
                            format!(
                                "subgoal `{sub}` (level {sl}) is more abstract than `{parent}` (level {pl})"
                            ),
                            Some(sub.clone()),
                        ));
                    }
                }
            }
        }
        for (target, loc) in &self.recover_refs {
            if !levels.contains_key(target.as_str()) {
                self.cur.errors.push(ParseError::new(
                    *loc,
                    format!("unresolved recovery operator `{target}`"),
                    Some(target.clone()),
                ));
            }
        }
        if let (Some((goal, _)), Some(loc)) = (&self.goal, self.spans.goal) {
            match levels.get(goal.as_str()) {
                None => self.cur.errors.push(ParseError::new(
                    loc,
                    format!("goal `{goal}` is not a declared operator"),
                    Some(goal.clone()),
                )),
                Some(&l) if l != 1 => self.cur.errors.push(ParseError::new(
                    loc,
                    format!("goal `{goal}` must be at level 1, found level {l}"),
                    Some(goal.clone()),
                )),
                Some(_) => {}
            }
        }
        for (needed, available, loc) in &self.binding_checks {
            let unbound: Vec<&str> = needed.difference(available).map(String::as_str).collect();
            if !unbound.is_empty() {
                self.cur.errors.push(ParseError::new(
                    *loc,
                    format!("unbound variable(s) ?{}", unbound.join(" ?")),
                    None,
                ));
            }
        }
        if !self.cur.errors.is_empty() {
            let mut errors = self.cur.errors;
            errors.sort_by_key(|e| (e.line, e.column));
            return Err(errors);
        }
        let (goal, goal_fulfilment) = self.goal.unwrap_or_default();
        Ok(ParsedDomain {
            spec: DomainSpec {
                n_levels: n,
                goal,
                goal_fulfilment,
                review: self.review.unwrap_or_default(),
                coverage_threshold: self.threshold.unwrap_or((0.0, 0.0)),
                operators: self.operators,
                causal_rules: self.rules,
                compat: self.compat,
            },
            spans: self.spans,
        })
    }
}

#[derive(Default)]
struct OperatorBuilder {
    seen: BTreeSet<String>,
    level: Option<usize>,
    necessary: Vec<Proposition>,
    satisfiable: Vec<Proposition>,
    plot_mode: Option<PlotMode>,
    plot: Vec<PlotEntry>,
    rules: Vec<ProbabilityRule>,
    default: Option<f64>,
    postconditions: Vec<Proposition>,
    planfail: Option<Planfail>,
}

fn write_props(f: &mut fmt::Formatter<'_>, slot: &str, props: &[Proposition]) -> fmt::Result {
    if props.is_empty() {
        return Ok(());
    }
    write!(f, "  {slot}")?;
    for p in props {
        write!(f, " {p}")?;
    }
    writeln!(f)
}

impl fmt::Display for DomainSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "levels {}", self.n_levels)?;
        writeln!(f, "goal {} {}", self.goal, fmt_number(self.goal_fulfilment))?;
        writeln!(f, "review offset {}", fmt_number(self.review.rho))?;
        writeln!(
            f,
            "threshold {} {}",
            fmt_number(self.coverage_threshold.0),
            fmt_number(self.coverage_threshold.1)
        )?;
        if !self.compat.is_empty() {
            writeln!(f)?;
        }
        for c in &self.compat {
            writeln!(f, "compat {c}")?;
        }
        for r in &self.causal_rules {
            writeln!(f, "\nrule {}", r.name)?;
            write!(f, "  trigger {}", r.trigger)?;
            if let Some(l) = r.trigger_level {
                write!(f, " @{l}")?;
            }
            writeln!(f)?;
            write_props(f, "when", &r.condition)?;
            writeln!(f, "  effects")?;
            for e in &r.effects {
                writeln!(f, "    {e}")?;
            }
            writeln!(f, "end")?;
        }
        for op in &self.operators {
            writeln!(f, "\noperator {}", op.name)?;
            writeln!(f, "  level {}", op.level)?;
            write_props(f, "necessary", &op.necessary)?;
            write_props(f, "satisfiable", &op.satisfiable)?;
            let mode = match op.plot_mode {
                PlotMode::ChooseOne => "choose-one",
                PlotMode::DoAll => "do-all",
            };
            writeln!(f, "  plot {mode}")?;
            for entry in &op.plot {
                match entry {
                    PlotEntry::Subgoal {
                        operator,
                        fulfilment,
                    } => writeln!(f, "    {operator} {}", fmt_number(*fulfilment))?,
                    PlotEntry::StateEdit(edits) => {
                        for e in edits {
                            writeln!(f, "    {e}")?;
                        }
                    }
                }
            }
            writeln!(f, "  probability")?;
            for r in &op.probability.rules {
                write!(f, "    when")?;
                for p in &r.when {
                    write!(f, " {p}")?;
                }
                writeln!(f, " => {}", fmt_number(r.value))?;
            }
            writeln!(f, "    default {}", fmt_number(op.probability.default))?;
            write_props(f, "postconditions", &op.postconditions)?;
            writeln!(f, "  planfail {}", op.planfail)?;
            writeln!(f, "end")?;
        }
        Ok(())
    }
}
