use std::collections::BTreeSet;

use super::{Cursor, Location, ParseError, TokenKind};
use crate::evidence::{EvidenceSet, FocalSet, Frame, MassFunction, MAX_FRAME_ELEMENTS};

const KEYWORDS: &[&str] = &["fact", "frame", "mass"];

/// Parses an evidence file: `fact`, `frame` and `mass` declarations.
pub fn parse_evidence(text: &str) -> Result<EvidenceSet, Vec<ParseError>> {
    let toks = super::tokenize(text);
    let mut cur = Cursor::new(&toks, text);
    let mut ev = EvidenceSet::default();
    while !cur.at_eof() {
        let start = cur.loc();
        let pos_token = cur.peek().cloned();
        let res = match cur.peek_word() {
            Some("fact") => parse_fact(&mut cur, &mut ev),
            Some("frame") => parse_frame(&mut cur, &mut ev),
            Some("mass") => parse_mass(&mut cur, &mut ev),
            Some(w) => Err(ParseError::new(
                start,
                format!("unknown keyword `{w}`"),
                Some(w.to_string()),
            )),
            None => Err(cur.error("expected `fact`, `frame` or `mass`")),
        };
        if let Err(e) = res {
            cur.errors.push(e);
            if cur.peek() == pos_token.as_ref() && cur.loc() == start {
                cur.next();
            }
            cur.recover(|t| t.word().is_some_and(|w| KEYWORDS.contains(&w)));
        }
    }
    if cur.errors.is_empty() {
        Ok(ev)
    } else {
        Err(cur.errors)
    }
}

fn level(cur: &mut Cursor) -> Result<usize, ParseError> {
    let loc = cur.loc();
    let l = cur.level_suffix()?;
    if l == 0 {
        return Err(ParseError::new(loc, "levels are numbered from 1", None));
    }
    Ok(l)
}

fn ground(cur: &mut Cursor) -> Result<crate::model::Proposition, ParseError> {
    let loc = cur.loc();
    let p = cur.proposition()?;
    if !p.is_ground() {
        return Err(ParseError::new(
            loc,
            format!("evidence proposition {p} must be ground"),
            None,
        ));
    }
    Ok(p)
}

fn parse_fact(cur: &mut Cursor, ev: &mut EvidenceSet) -> Result<(), ParseError> {
    cur.expect_keyword("fact")?;
    let p = ground(cur)?;
    let l = level(cur)?;
    ev.facts.push((p, l));
    Ok(())
}

fn identifier<'a>(cur: &mut Cursor<'a>, what: &str) -> Result<(&'a str, Location), ParseError> {
    let (w, loc) = cur.expect_word(what)?;
    if w.starts_with('?') || KEYWORDS.contains(&w) {
        return Err(ParseError::new(
            loc,
            format!("`{w}` cannot be used as {what}"),
            Some(w.to_string()),
        ));
    }
    Ok((w, loc))
}

/// `{a b ...}` as element names.
fn braced<'a>(cur: &mut Cursor<'a>) -> Result<Vec<(&'a str, Location)>, ParseError> {
    cur.expect(&TokenKind::LBrace)?;
    let mut out = Vec::new();
    while !cur.peek_is(&TokenKind::RBrace) {
        out.push(identifier(cur, "an element name")?);
    }
    cur.expect(&TokenKind::RBrace)?;
    Ok(out)
}

fn parse_frame(cur: &mut Cursor, ev: &mut EvidenceSet) -> Result<(), ParseError> {
    cur.expect_keyword("frame")?;
    let (name, name_loc) = identifier(cur, "a frame name")?;
    let open = cur.loc();
    let elements = braced(cur)?;
    if ev.frame(name).is_some() {
        return Err(ParseError::new(
            name_loc,
            format!("duplicate frame `{name}`"),
            Some(name.to_string()),
        ));
    }
    if elements.is_empty() {
        return Err(ParseError::new(
            open,
            "a frame needs at least one element",
            None,
        ));
    }
    if elements.len() > MAX_FRAME_ELEMENTS {
        return Err(ParseError::new(
            open,
            format!("a frame may have at most {MAX_FRAME_ELEMENTS} elements"),
            None,
        ));
    }
    let mut seen = BTreeSet::new();
    for (e, loc) in &elements {
        if !seen.insert(*e) {
            return Err(ParseError::new(
                *loc,
                format!("duplicate element `{e}`"),
                Some(e.to_string()),
            ));
        }
    }
    let names: Vec<&str> = elements.iter().map(|(e, _)| *e).collect();
    let mut frame = Frame::new(name, &names);
    // Element mapping lines: `elem => (p) @N ...`
    while let Some(w) = cur.peek_word() {
        if KEYWORDS.contains(&w) {
            break;
        }
        let (elem, loc) = identifier(cur, "an element name")?;
        if frame.index_of(elem).is_none() {
            return Err(ParseError::new(
                loc,
                format!("`{elem}` is not an element of frame `{name}`"),
                Some(elem.to_string()),
            ));
        }
        cur.expect(&TokenKind::Arrow)?;
        let mut props = Vec::new();
        while cur.peek_is(&TokenKind::LParen) {
            let p = ground(cur)?;
            let l = level(cur)?;
            props.push((p, l));
        }
        if !props.is_empty() {
            frame
                .to_propositions
                .entry(elem.to_string())
                .or_default()
                .extend(props);
        }
    }
    ev.frames.push(frame);
    Ok(())
}

fn parse_mass(cur: &mut Cursor, ev: &mut EvidenceSet) -> Result<(), ParseError> {
    let kw = cur.expect_keyword("mass")?;
    let (name, name_loc) = identifier(cur, "a frame name")?;
    let Some(frame) = ev.frame(name) else {
        return Err(ParseError::new(
            name_loc,
            format!("unknown frame `{name}`"),
            Some(name.to_string()),
        ));
    };
    let mut entries: Vec<(FocalSet, f64)> = Vec::new();
    while cur.peek_is(&TokenKind::LBrace) {
        let open = cur.loc();
        let names = braced(cur)?;
        if names.is_empty() {
            return Err(ParseError::new(open, "empty focal set", None));
        }
        let mut set: FocalSet = 0;
        for (e, loc) in &names {
            let Some(i) = frame.index_of(e) else {
                return Err(ParseError::new(
                    *loc,
                    format!("`{e}` is not an element of frame `{name}`"),
                    Some(e.to_string()),
                ));
            };
            set |= frame.singleton(i);
        }
        if entries.iter().any(|(s, _)| *s == set) {
            return Err(ParseError::new(open, "focal set listed twice", None));
        }
        cur.expect(&TokenKind::Eq)?;
        let vloc = cur.loc();
        let v = cur.number("a mass value")?;
        if !(v > 0.0 && v <= 1.0) {
            return Err(ParseError::new(
                vloc,
                format!("mass {v} outside (0,1]"),
                Some(v.to_string()),
            ));
        }
        entries.push((set, v));
    }
    if entries.is_empty() {
        return Err(cur.error("expected at least one `{elements}=mass` entry"));
    }
    let sum: f64 = entries.iter().map(|(_, v)| v).sum();
    if (sum - 1.0).abs() > 1e-6 {
        let shown = (sum * 1e9).round() / 1e9;
        return Err(ParseError::new(kw, format!("masses sum to {shown}"), None));
    }
    if (sum - 1.0).abs() > 1e-12 {
        for (_, v) in &mut entries {
            *v /= sum;
        }
    }
    let m =
        MassFunction::new(frame, entries).map_err(|e| ParseError::new(kw, e.to_string(), None))?;
    ev.masses.push(m);
    Ok(())
}
