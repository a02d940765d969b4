//! Minimal S-expression reader shared by the protocol parser and the solver client.

use std::fmt;

/// 1-based source position.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Sexp {
    Atom(String, Pos),
    List(Vec<Sexp>, Pos),
}

impl Sexp {
    pub fn pos(&self) -> Pos {
        match self {
            Sexp::Atom(_, p) | Sexp::List(_, p) => *p,
        }
    }

    pub fn as_atom(&self) -> Option<&str> {
        match self {
            Sexp::Atom(s, _) => Some(s),
            Sexp::List(..) => None,
        }
    }

    pub fn as_list(&self) -> Option<&[Sexp]> {
        match self {
            Sexp::List(items, _) => Some(items),
            Sexp::Atom(..) => None,
        }
    }
}

impl fmt::Display for Sexp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sexp::Atom(s, _) => f.write_str(s),
            Sexp::List(items, _) => {
                f.write_str("(")?;
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" ")?;
                    }
                    write!(f, "{item}")?;
                }
                f.write_str(")")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SexpError {
    pub pos: Pos,
    pub message: String,
}

struct Reader<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: usize,
    col: usize,
}

impl<'a> Reader<'a> {
    fn pos(&self) -> Pos {
        Pos {
            line: self.line,
            col: self.col,
        }
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn skip_trivia(&mut self) {
        while let Some(&c) = self.chars.peek() {
            if c.is_whitespace() {
                self.bump();
            } else if c == ';' {
                while let Some(&c) = self.chars.peek() {
                    if c == '\n' {
                        break;
                    }
                    self.bump();
                }
            } else {
                break;
            }
        }
    }

    fn datum(&mut self) -> Result<Sexp, SexpError> {
        let start = self.pos();
        match self.chars.peek().copied() {
            None => Err(SexpError {
                pos: start,
                message: "unexpected end of input".into(),
            }),
            Some('(') => {
                self.bump();
                let mut items = Vec::new();
                loop {
                    self.skip_trivia();
                    match self.chars.peek() {
                        None => {
                            return Err(SexpError {
                                pos: start,
                                message: "unclosed parenthesis".into(),
                            })
                        }
                        Some(')') => {
                            self.bump();
                            return Ok(Sexp::List(items, start));
                        }
                        Some(_) => items.push(self.datum()?),
                    }
                }
            }
            Some(')') => Err(SexpError {
                pos: start,
                message: "unexpected `)`".into(),
            }),
            Some(q @ ('|' | '"')) => {
                let mut text = String::new();
                text.push(q);
                self.bump();
                loop {
                    match self.bump() {
                        None => {
                            return Err(SexpError {
                                pos: start,
                                message: "unterminated quoted token".into(),
                            })
                        }
                        Some(c) => {
                            text.push(c);
                            if c == q {
                                // SMT-LIB escapes a quote inside a string by doubling it.
                                if q == '"' && self.chars.peek() == Some(&'"') {
                                    text.push('"');
                                    self.bump();
                                    continue;
                                }
                                break;
                            }
                        }
                    }
                }
                Ok(Sexp::Atom(text, start))
            }
            Some(_) => {
                let mut text = String::new();
                while let Some(&c) = self.chars.peek() {
                    if c.is_whitespace() || c == '(' || c == ')' || c == ';' || c == '"' || c == '|' {
                        break;
                    }
                    text.push(c);
                    self.bump();
                }
                Ok(Sexp::Atom(text, start))
            }
        }
    }
}

/// Parses every top-level datum in `text`.
pub fn parse_all(text: &str) -> Result<Vec<Sexp>, SexpError> {
    let mut r = Reader {
        chars: text.chars().peekable(),
        line: 1,
        col: 1,
    };
    let mut out = Vec::new();
    loop {
        r.skip_trivia();
        if r.chars.peek().is_none() {
            return Ok(out);
        }
        out.push(r.datum()?);
    }
}

/// True when `text` holds at least one token and every opened list is closed.
/// Used to frame solver responses that span several lines.
pub fn is_complete(text: &str) -> bool {
    let mut depth = 0i64;
    let mut seen = false;
    let mut quote: Option<char> = None;
    let mut in_comment = false;
    for c in text.chars() {
        if in_comment {
            if c == '\n' {
                in_comment = false;
            }
            continue;
        }
        if let Some(q) = quote {
            if c == q {
                quote = None;
            }
            continue;
        }
        match c {
            ';' => in_comment = true,
            '"' | '|' => {
                quote = Some(c);
                seen = true;
            }
            '(' => {
                depth += 1;
                seen = true;
            }
            ')' => depth -= 1,
            c if !c.is_whitespace() => seen = true,
            _ => {}
        }
    }
    seen && depth <= 0 && quote.is_none()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_nested_lists_with_positions() {
        let xs = parse_all("(a (b c)) ; note\n  d").unwrap();
        assert_eq!(xs.len(), 2);
        assert_eq!(xs[0].to_string(), "(a (b c))");
        assert_eq!(xs[1].pos(), Pos { line: 2, col: 3 });
    }

    #[test]
    fn reports_unclosed_list() {
        let err = parse_all("\n (a b").unwrap_err();
        assert_eq!(err.pos, Pos { line: 2, col: 2 });
    }

    #[test]
    fn quoted_tokens_keep_parens() {
        let xs = parse_all("(error \"bad (x)\") |a(b)|").unwrap();
        assert_eq!(xs[0].as_list().unwrap()[1].as_atom(), Some("\"bad (x)\""));
        assert_eq!(xs[1].as_atom(), Some("|a(b)|"));
    }

    #[test]
    fn completeness_tracks_depth() {
        assert!(!is_complete("(model\n"));
        assert!(is_complete("(model\n)\n"));
        assert!(is_complete("sat\n"));
        assert!(!is_complete("   "));
        assert!(!is_complete("(error \"a )"));
    }
}
