use std::fmt;

#[derive(Clone, Debug, PartialEq)]
pub enum TokenKind {
    LParen,
    RParen,
    LBrace,
    RBrace,
    /// `=>`
    Arrow,
    /// `=`
    Eq,
    /// `@`
    At,
    Word(String),
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokenKind::LParen => f.write_str("("),
            TokenKind::RParen => f.write_str(")"),
            TokenKind::LBrace => f.write_str("{"),
            TokenKind::RBrace => f.write_str("}"),
            TokenKind::Arrow => f.write_str("=>"),
            TokenKind::Eq => f.write_str("="),
            TokenKind::At => f.write_str("@"),
            TokenKind::Word(w) => f.write_str(w),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct Location {
    pub line: usize,
    pub column: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Token {
    pub kind: TokenKind,
    pub loc: Location,
}

impl Token {
    pub fn word(&self) -> Option<&str> {
        match &self.kind {
            TokenKind::Word(w) => Some(w),
            _ => None,
        }
    }
}

fn is_delimiter(c: char) -> bool {
    c.is_whitespace() || matches!(c, '(' | ')' | '{' | '}' | '=' | '@' | ';')
}

/// Splits source text into tokens; `;` starts a comment running to the end
/// of the line. Never fails: every character lands in some token.
pub fn tokenize(src: &str) -> Vec<Token> {
    let mut out = Vec::new();
    let mut line = 1;
    let mut column = 1;
    let mut chars = src.chars().peekable();
    while let Some(c) = chars.next() {
        let loc = Location { line, column };
        let advance = |ch: char, line: &mut usize, column: &mut usize| {
            if ch == '\n' {
                *line += 1;
                *column = 1;
            } else {
                *column += 1;
            }
        };
        advance(c, &mut line, &mut column);
        let kind = match c {
            c if c.is_whitespace() => continue,
            ';' => {
                while let Some(&n) = chars.peek() {
                    if n == '\n' {
                        break;
                    }
                    chars.next();
                    column += 1;
                }
                continue;
            }
            '(' => TokenKind::LParen,
            ')' => TokenKind::RParen,
            '{' => TokenKind::LBrace,
            '}' => TokenKind::RBrace,
            '@' => TokenKind::At,
            '=' => {
                if chars.peek() == Some(&'>') {
                    chars.next();
                    column += 1;
                    TokenKind::Arrow
                } else {
                    TokenKind::Eq
                }
            }
            _ => {
                let mut word = String::from(c);
                while let Some(&n) = chars.peek() {
                    if is_delimiter(n) {
                        break;
                    }
                    word.push(n);
                    chars.next();
                    column += 1;
                }
                TokenKind::Word(word)
            }
        };
        out.push(Token { kind, loc });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokens_and_locations() {
        let toks = tokenize("mass type {fighter}=0.6 ; note\n  (a ?x) => @2");
        let kinds: Vec<String> = toks.iter().map(|t| t.kind.to_string()).collect();
        assert_eq!(
            kinds,
            [
                "mass", "type", "{", "fighter", "}", "=", "0.6", "(", "a", "?x", ")", "=>", "@",
                "2"
            ]
        );
        assert_eq!(toks[7].loc, Location { line: 2, column: 3 });
        assert_eq!(
            toks[6].loc,
            Location {
                line: 1,
                column: 21
            }
        );
    }
}
