use std::collections::BTreeMap;
use std::fmt;

use crate::model::{NodeId, Values};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TraceKind {
    Expand,
    Select,
    Update,
    ReviewSwitch,
    Planfail,
    SatisfyPrecondition,
    Warning,
    Reuse,
}

impl TraceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TraceKind::Expand => "expand",
            TraceKind::Select => "select",
            TraceKind::Update => "update",
            TraceKind::ReviewSwitch => "review-switch",
            TraceKind::Planfail => "planfail",
            TraceKind::SatisfyPrecondition => "satisfy-precondition",
            TraceKind::Warning => "warning",
            TraceKind::Reuse => "reuse",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "expand" => TraceKind::Expand,
            "select" => TraceKind::Select,
            "update" => TraceKind::Update,
            "review-switch" => TraceKind::ReviewSwitch,
            "planfail" => TraceKind::Planfail,
            "satisfy-precondition" => TraceKind::SatisfyPrecondition,
            "warning" => TraceKind::Warning,
            "reuse" => TraceKind::Reuse,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceEvent {
    pub seq: usize,
    pub kind: TraceKind,
    pub node: NodeId,
    pub operator: String,
    pub before: Option<Values>,
    pub after: Option<Values>,
    pub note: Option<String>,
}

fn fmt_values(v: &Option<Values>) -> String {
    v.map_or_else(|| "-".to_string(), |v| v.to_string())
}

impl fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} node={} op={} before={} after={}",
            self.seq,
            self.kind.as_str(),
            self.node,
            self.operator,
            fmt_values(&self.before),
            fmt_values(&self.after)
        )?;
        if let Some(note) = &self.note {
            write!(f, " note={note}")?;
        }
        Ok(())
    }
}

/// Ordered event log of one search. Every change to a node's current values
/// is logged as an `update`, so the final values can be rebuilt from it.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PlanTrace {
    pub events: Vec<TraceEvent>,
    pub enabled: bool,
}

impl PlanTrace {
    pub fn new(enabled: bool) -> Self {
        PlanTrace {
            events: Vec::new(),
            enabled,
        }
    }

    pub fn record(
        &mut self,
        kind: TraceKind,
        node: NodeId,
        operator: &str,
        before: Option<Values>,
        after: Option<Values>,
        note: Option<String>,
    ) {
        if !self.enabled {
            return;
        }
        let ev = TraceEvent {
            seq: self.events.len() + 1,
            kind,
            node,
            operator: operator.to_string(),
            before,
            after,
            note,
        };
        log::trace!("{ev}");
        self.events.push(ev);
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&e.to_string());
            out.push('\n');
        }
        out
    }

    pub fn of_kind(&self, kind: TraceKind) -> impl Iterator<Item = &TraceEvent> {
        self.events.iter().filter(move |e| e.kind == kind)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("trace line {line}: {message}")]
pub struct TraceParseError {
    pub line: usize,
    pub message: String,
}

fn parse_values(s: &str) -> Option<Option<Values>> {
    if s == "-" {
        return Some(None);
    }
    let inner = s.strip_prefix('{')?.strip_suffix('}')?;
    let mut it = inner.split(',').map(|x| x.parse::<f64>());
    let f = it.next()?.ok()?;
    let p = it.next()?.ok()?;
    Some(Some(Values::new(f, p)))
}

/// Rebuilds each node's latest values from the text form of a trace.
pub fn replay(text: &str) -> Result<BTreeMap<usize, Values>, TraceParseError> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let err = |message: &str| TraceParseError {
            line: i + 1,
            message: message.to_string(),
        };
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(' ');
        let _seq = parts.next();
        let kind = parts
            .next()
            .and_then(TraceKind::parse)
            .ok_or_else(|| err("unknown event kind"))?;
        let mut node = None;
        let mut after = None;
        for p in parts {
            if let Some(v) = p.strip_prefix("node=") {
                node = v.parse::<usize>().ok();
            } else if let Some(v) = p.strip_prefix("after=") {
                after = Some(parse_values(v).ok_or_else(|| err("malformed values"))?);
            }
        }
        let node = node.ok_or_else(|| err("missing node"))?;
        if matches!(
            kind,
            TraceKind::Update | TraceKind::ReviewSwitch | TraceKind::Select
        ) {
            if let Some(Some(v)) = after {
                out.insert(node, v);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_format_and_replay() {
        let mut t = PlanTrace::new(true);
        t.record(
            TraceKind::Update,
            NodeId(3),
            "Close_In",
            None,
            Some(Values::new(1000.0, 0.85)),
            None,
        );
        t.record(
            TraceKind::Update,
            NodeId(3),
            "Close_In",
            Some(Values::new(1000.0, 0.85)),
            Some(Values::new(1000.0, 0.81)),
            None,
        );
        let text = t.to_text();
        assert_eq!(
            text.lines().nth(1).unwrap(),
            "2 update node=3 op=Close_In before={1000,0.85,850} after={1000,0.81,810}"
        );
        let m = replay(&text).unwrap();
        assert_eq!(m[&3], Values::new(1000.0, 0.81));
    }

    #[test]
    fn disabled_trace_records_nothing() {
        let mut t = PlanTrace::new(false);
        t.record(TraceKind::Expand, NodeId(0), "X", None, None, None);
        assert!(t.events.is_empty());
    }
}
