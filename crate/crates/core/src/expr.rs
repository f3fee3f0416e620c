//! Expression language for naming Hamiltonians, systems, automorphisms and
//! reparameterizations in config files: identifiers, calls with positional
//! or named arguments, numeric lists, and `*` for composition.
//!
//! The parser is a hand-rolled recursive descent over a token stream with
//! line/column positions; it never panics on malformed input and caps the
//! nesting depth, so it is safe to expose to untrusted text.

use crate::error::ParseError;

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Ident(String),
    Number(f64),
    List(Vec<Expr>),
    Call {
        name: String,
        args: Vec<(Option<String>, Expr)>,
    },
    /// Left-to-right composition: `a * b` applies b first.
    Compose(Box<Expr>, Box<Expr>),
}

impl Expr {
    /// Convenience accessors for argument lists.
    pub fn as_number(&self) -> Option<f64> {
        match self {
            Expr::Number(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_list(&self) -> Option<Vec<f64>> {
        match self {
            Expr::List(items) => items.iter().map(|e| e.as_number()).collect(),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number(f64),
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Equals,
    Star,
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
    line: usize,
    col: usize,
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    col: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            src: src.as_bytes(),
            pos: 0,
            line: 1,
            col: 1,
        }
    }

    fn err(&self, message: impl Into<String>) -> ParseError {
        ParseError {
            line: self.line,
            col: self.col,
            message: message.into(),
        }
    }

    fn bump(&mut self) -> Option<u8> {
        let c = *self.src.get(self.pos)?;
        self.pos += 1;
        if c == b'\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn tokens(mut self) -> Result<Vec<Spanned>, ParseError> {
        let mut out = Vec::new();
        loop {
            while matches!(self.peek(), Some(b' ' | b'\t' | b'\r' | b'\n')) {
                self.bump();
            }
            let (line, col) = (self.line, self.col);
            let Some(c) = self.peek() else { break };
            let tok = match c {
                b'(' => {
                    self.bump();
                    Tok::LParen
                }
                b')' => {
                    self.bump();
                    Tok::RParen
                }
                b'[' => {
                    self.bump();
                    Tok::LBracket
                }
                b']' => {
                    self.bump();
                    Tok::RBracket
                }
                b',' => {
                    self.bump();
                    Tok::Comma
                }
                b'=' => {
                    self.bump();
                    Tok::Equals
                }
                b'*' => {
                    self.bump();
                    Tok::Star
                }
                b'A'..=b'Z' | b'a'..=b'z' | b'_' => {
                    let start = self.pos;
                    while matches!(
                        self.peek(),
                        Some(b'A'..=b'Z' | b'a'..=b'z' | b'0'..=b'9' | b'_')
                    ) {
                        self.bump();
                    }
                    let text = std::str::from_utf8(&self.src[start..self.pos])
                        .map_err(|_| self.err("invalid identifier bytes"))?;
                    Tok::Ident(text.to_string())
                }
                b'0'..=b'9' | b'-' | b'+' | b'.' => {
                    let start = self.pos;
                    self.bump();
                    while matches!(
                        self.peek(),
                        Some(b'0'..=b'9' | b'.' | b'e' | b'E' | b'-' | b'+')
                    ) {
                        // signs only directly after an exponent marker
                        if matches!(self.peek(), Some(b'-' | b'+'))
                            && !matches!(self.src.get(self.pos - 1), Some(b'e' | b'E'))
                        {
                            break;
                        }
                        self.bump();
                    }
                    let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
                    let value: f64 = text.parse().map_err(|_| {
                        ParseError {
                            line,
                            col,
                            message: format!("malformed number `{text}`"),
                        }
                    })?;
                    Tok::Number(value)
                }
                other => {
                    return Err(self.err(format!(
                        "unexpected character `{}`",
                        (other as char).escape_default()
                    )))
                }
            };
            out.push(Spanned { tok, line, col });
        }
        Ok(out)
    }
}

const MAX_DEPTH: usize = 64;

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
    end_line: usize,
    end_col: usize,
}

impl Parser {
    fn err_here(&self, message: impl Into<String>) -> ParseError {
        let (line, col) = self
            .toks
            .get(self.pos)
            .map(|s| (s.line, s.col))
            .unwrap_or((self.end_line, self.end_col));
        ParseError {
            line,
            col,
            message: message.into(),
        }
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|s| &s.tok)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|s| s.tok.clone());
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), ParseError> {
        match self.peek() {
            Some(t) if *t == want => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(self.err_here(format!("expected {what}"))),
        }
    }

    fn expr(&mut self, depth: usize) -> Result<Expr, ParseError> {
        if depth > MAX_DEPTH {
            return Err(self.err_here("expression nests too deeply"));
        }
        let mut lhs = self.term(depth)?;
        while matches!(self.peek(), Some(Tok::Star)) {
            self.bump();
            let rhs = self.term(depth)?;
            lhs = Expr::Compose(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self, depth: usize) -> Result<Expr, ParseError> {
        if depth > MAX_DEPTH {
            return Err(self.err_here("expression nests too deeply"));
        }
        match self.bump() {
            Some(Tok::Number(v)) => Ok(Expr::Number(v)),
            Some(Tok::LParen) => {
                let inner = self.expr(depth + 1)?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(inner)
            }
            Some(Tok::LBracket) => {
                let mut items = Vec::new();
                if matches!(self.peek(), Some(Tok::RBracket)) {
                    self.bump();
                    return Ok(Expr::List(items));
                }
                loop {
                    items.push(self.expr(depth + 1)?);
                    match self.bump() {
                        Some(Tok::Comma) => continue,
                        Some(Tok::RBracket) => break,
                        _ => return Err(self.err_here("expected `,` or `]` in list")),
                    }
                }
                Ok(Expr::List(items))
            }
            Some(Tok::Ident(name)) => {
                if matches!(self.peek(), Some(Tok::LParen)) {
                    self.bump();
                    let mut args = Vec::new();
                    if matches!(self.peek(), Some(Tok::RParen)) {
                        self.bump();
                        return Ok(Expr::Call { name, args });
                    }
                    loop {
                        // named argument?
                        let key = if let (Some(Tok::Ident(k)), Some(Tok::Equals)) = (
                            self.toks.get(self.pos).map(|s| &s.tok),
                            self.toks.get(self.pos + 1).map(|s| &s.tok),
                        ) {
                            let k = k.clone();
                            self.pos += 2;
                            Some(k)
                        } else {
                            None
                        };
                        let value = self.expr(depth + 1)?;
                        args.push((key, value));
                        match self.bump() {
                            Some(Tok::Comma) => continue,
                            Some(Tok::RParen) => break,
                            _ => return Err(self.err_here("expected `,` or `)` in call")),
                        }
                    }
                    Ok(Expr::Call { name, args })
                } else {
                    Ok(Expr::Ident(name))
                }
            }
            _ => Err(self.err_here("expected an expression")),
        }
    }
}

/// Parse one expression; trailing tokens are an error.
pub fn parse_expr(src: &str) -> Result<Expr, ParseError> {
    let lexer = Lexer::new(src);
    let end = {
        let mut line = 1;
        let mut col = 1;
        for c in src.chars() {
            if c == '\n' {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
        }
        (line, col)
    };
    let toks = lexer.tokens()?;
    let mut parser = Parser {
        toks,
        pos: 0,
        end_line: end.0,
        end_col: end.1,
    };
    let expr = parser.expr(0)?;
    if parser.pos != parser.toks.len() {
        return Err(parser.err_here("trailing input after expression"));
    }
    Ok(expr)
}

/// Arguments helper: positional and named lookups with decent errors.
pub struct Args<'a> {
    pub call: &'a str,
    pub args: &'a [(Option<String>, Expr)],
}

impl<'a> Args<'a> {
    pub fn named(&self, key: &str) -> Option<&Expr> {
        self.args
            .iter()
            .find(|(k, _)| k.as_deref() == Some(key))
            .map(|(_, v)| v)
    }

    pub fn positional(&self, idx: usize) -> Option<&Expr> {
        self.args
            .iter()
            .filter(|(k, _)| k.is_none())
            .nth(idx)
            .map(|(_, v)| v)
    }

    pub fn number(&self, key: &str, idx: usize) -> Result<f64, ParseError> {
        self.named(key)
            .or_else(|| self.positional(idx))
            .and_then(Expr::as_number)
            .ok_or_else(|| ParseError {
                line: 0,
                col: 0,
                message: format!("`{}` needs numeric argument `{key}`", self.call),
            })
    }

    pub fn number_or(&self, key: &str, idx: usize, default: f64) -> Result<f64, ParseError> {
        match self.named(key).or_else(|| self.positional(idx)) {
            None => Ok(default),
            Some(e) => e.as_number().ok_or_else(|| ParseError {
                line: 0,
                col: 0,
                message: format!("`{}` argument `{key}` must be a number", self.call),
            }),
        }
    }

    pub fn list(&self, key: &str, idx: usize) -> Result<Vec<f64>, ParseError> {
        self.named(key)
            .or_else(|| self.positional(idx))
            .and_then(Expr::as_list)
            .ok_or_else(|| ParseError {
                line: 0,
                col: 0,
                message: format!("`{}` needs list argument `{key}`", self.call),
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_the_reference_example() {
        let e = parse_expr("conj(inv(A) * B, scale(1.5))").unwrap();
        let Expr::Call { name, args } = e else {
            panic!("expected call")
        };
        assert_eq!(name, "conj");
        assert_eq!(args.len(), 2);
        assert!(matches!(args[0].1, Expr::Compose(_, _)));
        assert!(matches!(&args[1].1, Expr::Call { name, .. } if name == "scale"));
    }

    #[test]
    fn parses_named_arguments_and_lists() {
        let e = parse_expr("bump(amp=0.4, center=[0.3, 0.0, 0.1], radius=0.35)").unwrap();
        let Expr::Call { args, .. } = &e else {
            panic!()
        };
        let a = Args {
            call: "bump",
            args,
        };
        assert_eq!(a.number("amp", 0).unwrap(), 0.4);
        assert_eq!(a.list("center", 1).unwrap(), vec![0.3, 0.0, 0.1]);
    }

    #[test]
    fn reports_positions() {
        let err = parse_expr("conj(inv(A), ").unwrap_err();
        assert_eq!(err.line, 1);
        assert!(err.col >= 13, "{err:?}");
        let err = parse_expr("a *\n* b").unwrap_err();
        assert_eq!(err.line, 2);
    }

    #[test]
    fn rejects_deep_nesting_without_overflow() {
        let src = format!("{}{}{}", "inv(".repeat(5000), "A", ")".repeat(5000));
        let err = parse_expr(&src).unwrap_err();
        assert!(err.message.contains("deep"));
    }

    #[test]
    fn numbers_with_exponents() {
        assert_eq!(
            parse_expr("f(1e-5)").unwrap(),
            Expr::Call {
                name: "f".into(),
                args: vec![(None, Expr::Number(1e-5))]
            }
        );
        assert!(parse_expr("f(1e)").is_err());
        assert!(parse_expr("f(--3)").is_err());
    }

    #[test]
    fn composition_is_left_associative() {
        let e = parse_expr("a * b * c").unwrap();
        let Expr::Compose(lhs, _) = e else { panic!() };
        assert!(matches!(*lhs, Expr::Compose(_, _)));
    }

    #[test]
    fn trailing_tokens_rejected() {
        assert!(parse_expr("a b").is_err());
        assert!(parse_expr("").is_err());
        assert!(parse_expr("[1, 2,]").is_err());
    }
}
