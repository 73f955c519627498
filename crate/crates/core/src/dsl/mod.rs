//! Text formats for domains and evidence: keyword blocks whose slot names
//! mirror the operator schema, with s-expression propositions and `;`
//! comments. See `docs/grammar.md` for the grammar.

mod domain;
mod evidence;
mod lexer;
mod lint;

use std::fmt;

pub use domain::{parse_domain, parse_domain_with_spans, DomainSpec, ParsedDomain, SourceSpans};
pub use evidence::parse_evidence;
pub use lexer::{tokenize, Location, Token, TokenKind};
pub use lint::{lint_domain, Diagnostic, Severity, Subject};

use crate::model::{Proposition, Term};

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub struct ParseError {
    pub file: String,
    pub line: usize,
    pub column: usize,
    pub message: String,
    pub token: Option<String>,
}

impl ParseError {
    pub fn new(loc: Location, message: impl Into<String>, token: Option<String>) -> Self {
        ParseError {
            file: "<input>".to_string(),
            line: loc.line,
            column: loc.column,
            message: message.into(),
            token,
        }
    }

    pub fn with_file(mut self, file: &str) -> Self {
        self.file = file.to_string();
        self
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{}:{}: {}",
            self.file, self.line, self.column, self.message
        )?;
        if let Some(tok) = &self.token {
            write!(f, " (at `{tok}`)")?;
        }
        Ok(())
    }
}

/// Token cursor with error collection, shared by both file parsers.
pub(crate) struct Cursor<'a> {
    toks: &'a [Token],
    pos: usize,
    end: Location,
    pub errors: Vec<ParseError>,
}

impl<'a> Cursor<'a> {
    pub fn new(toks: &'a [Token], src: &str) -> Self {
        let line = src.lines().count().max(1);
        let column = src.lines().last().map_or(1, |l| l.chars().count() + 1);
        Cursor {
            toks,
            pos: 0,
            end: Location { line, column },
            errors: Vec::new(),
        }
    }

    pub fn peek(&self) -> Option<&'a Token> {
        self.toks.get(self.pos)
    }

    pub fn peek_kind(&self) -> Option<&'a TokenKind> {
        self.peek().map(|t| &t.kind)
    }

    pub fn peek_word(&self) -> Option<&'a str> {
        self.peek().and_then(Token::word)
    }

    pub fn peek_is(&self, kind: &TokenKind) -> bool {
        self.peek_kind() == Some(kind)
    }

    pub fn next(&mut self) -> Option<&'a Token> {
        let t = self.toks.get(self.pos);
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    pub fn at_eof(&self) -> bool {
        self.pos >= self.toks.len()
    }

    pub fn loc(&self) -> Location {
        self.peek().map_or(self.end, |t| t.loc)
    }

    pub fn error(&self, message: impl Into<String>) -> ParseError {
        ParseError::new(self.loc(), message, self.peek().map(|t| t.kind.to_string()))
    }

    pub fn expect(&mut self, kind: &TokenKind) -> Result<Location, ParseError> {
        if self.peek_is(kind) {
            Ok(self.next().map(|t| t.loc).unwrap_or_default())
        } else {
            Err(self.error(format!("expected `{kind}`")))
        }
    }

    pub fn expect_word(&mut self, what: &str) -> Result<(&'a str, Location), ParseError> {
        match self.peek() {
            Some(Token {
                kind: TokenKind::Word(w),
                loc,
            }) => {
                self.pos += 1;
                Ok((w.as_str(), *loc))
            }
            _ => Err(self.error(format!("expected {what}"))),
        }
    }

    pub fn expect_keyword(&mut self, kw: &str) -> Result<Location, ParseError> {
        match self.peek_word() {
            Some(w) if w == kw => Ok(self.next().map(|t| t.loc).unwrap_or_default()),
            _ => Err(self.error(format!("expected `{kw}`"))),
        }
    }

    pub fn number(&mut self, what: &str) -> Result<f64, ParseError> {
        let loc = self.loc();
        let (w, _) = self.expect_word(what)?;
        match w.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(ParseError::new(
                loc,
                format!("expected {what}, found `{w}`"),
                Some(w.to_string()),
            )),
        }
    }

    pub fn integer(&mut self, what: &str) -> Result<usize, ParseError> {
        let loc = self.loc();
        let (w, _) = self.expect_word(what)?;
        w.parse::<usize>().map_err(|_| {
            ParseError::new(
                loc,
                format!("expected {what}, found `{w}`"),
                Some(w.to_string()),
            )
        })
    }

    /// `@N`
    pub fn level_suffix(&mut self) -> Result<usize, ParseError> {
        self.expect(&TokenKind::At)?;
        self.integer("a level number")
    }

    /// `(pred arg ...)` or `(not (pred arg ...))`.
    pub fn proposition(&mut self) -> Result<Proposition, ParseError> {
        self.expect(&TokenKind::LParen)?;
        let (head, head_loc) = self.expect_word("a predicate name")?;
        if head == "not" && self.peek_is(&TokenKind::LParen) {
            let inner = self.proposition()?;
            self.expect(&TokenKind::RParen)?;
            if !inner.positive {
                return Err(ParseError::new(head_loc, "double negation", None));
            }
            return Ok(inner.negated());
        }
        if head.starts_with('?') {
            return Err(ParseError::new(
                head_loc,
                "predicate cannot be a variable",
                Some(head.to_string()),
            ));
        }
        let mut args = Vec::new();
        while let Some(w) = self.peek_word() {
            let loc = self.loc();
            self.next();
            args.push(match w.strip_prefix('?') {
                Some("") => {
                    return Err(ParseError::new(loc, "empty variable name", Some(w.into())))
                }
                Some(v) => Term::var(v),
                None => Term::constant(w),
            });
        }
        self.expect(&TokenKind::RParen)?;
        Ok(Proposition::new(head, args))
    }

    pub fn propositions(&mut self) -> Result<Vec<Proposition>, ParseError> {
        let mut out = Vec::new();
        while self.peek_is(&TokenKind::LParen) {
            out.push(self.proposition()?);
        }
        Ok(out)
    }

    /// Skips to the next token for which `stop` holds (or the end).
    pub fn recover(&mut self, stop: impl Fn(&Token) -> bool) {
        while let Some(t) = self.peek() {
            if stop(t) {
                return;
            }
            self.pos += 1;
        }
    }
}

/// Parses a single proposition such as `(status aggressor hostile)`.
pub fn parse_proposition(text: &str) -> Result<Proposition, ParseError> {
    let toks = tokenize(text);
    let mut cur = Cursor::new(&toks, text);
    let p = cur.proposition()?;
    if !cur.at_eof() {
        return Err(cur.error("trailing input after proposition"));
    }
    Ok(p)
}

/// Writes a number so that it parses back to the same `f64`.
pub(crate) fn fmt_number(x: f64) -> String {
    format!("{x}")
}
