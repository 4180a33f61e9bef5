//! Recursive-descent parser for scalar fields on TM.
//!
//! ```text
//! expr   := term (("+"|"-") term)* ;
//! term   := factor (("*"|"/") factor)* ;
//! factor := atom ("^" integer)? | "-" factor ;
//! atom   := number | "x" "[" index "]" | "y" "[" index "]"
//!         | ident "(" expr ("," expr)* ")" | "(" expr ")" ;
//! ```
//!
//! Indices are 1-based in source text. `dot(a, b)` with `a, b` in `{x, y}`
//! expands to the coordinate sum.

use thiserror::Error;

use super::arena::{Arena, Builtin, NodeId, ARENA};
use super::Var;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{kind} at byte {offset}")]
pub struct ParseError {
    pub offset: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseErrorKind {
    #[error("unexpected character {0:?}")]
    UnexpectedChar(char),
    #[error("unexpected end of input")]
    UnexpectedEnd,
    #[error("expected {0}")]
    Expected(&'static str),
    #[error("unknown function `{0}`")]
    UnknownFunction(String),
    #[error("`{name}` takes {expected} argument(s), got {got}")]
    Arity {
        name: String,
        expected: usize,
        got: usize,
    },
    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },
    #[error("invalid number literal")]
    BadNumber,
    #[error("dimension must be at least 1")]
    BadDimension,
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    dim: usize,
    arena: &'a mut Arena,
}

pub(crate) fn parse_node(source: &str, dim: usize) -> Result<NodeId, ParseError> {
    if dim == 0 || dim > 32 {
        return Err(ParseError {
            offset: 0,
            kind: ParseErrorKind::BadDimension,
        });
    }
    let mut arena = ARENA.write();
    let mut p = Parser {
        src: source.as_bytes(),
        pos: 0,
        dim,
        arena: &mut arena,
    };
    let id = p.expr()?;
    p.skip_ws();
    if p.pos < p.src.len() {
        return Err(p.unexpected());
    }
    Ok(id)
}

impl Parser<'_> {
    fn err(&self, kind: ParseErrorKind) -> ParseError {
        ParseError {
            offset: self.pos,
            kind,
        }
    }

    fn unexpected(&self) -> ParseError {
        match self.peek() {
            Some(c) => self.err(ParseErrorKind::UnexpectedChar(c as char)),
            None => self.err(ParseErrorKind::UnexpectedEnd),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: u8, what: &'static str) -> Result<(), ParseError> {
        if self.eat(c) {
            Ok(())
        } else {
            self.skip_ws();
            Err(match self.peek() {
                None => self.err(ParseErrorKind::UnexpectedEnd),
                Some(_) => self.err(ParseErrorKind::Expected(what)),
            })
        }
    }

    fn expr(&mut self) -> Result<NodeId, ParseError> {
        let mut acc = self.term()?;
        loop {
            if self.eat(b'+') {
                let t = self.term()?;
                acc = self.arena.add(acc, t);
            } else if self.eat(b'-') {
                let t = self.term()?;
                acc = self.arena.sub(acc, t);
            } else {
                return Ok(acc);
            }
        }
    }

    fn term(&mut self) -> Result<NodeId, ParseError> {
        let mut acc = self.factor()?;
        loop {
            if self.eat(b'*') {
                let f = self.factor()?;
                acc = self.arena.mul(acc, f);
            } else if self.eat(b'/') {
                let f = self.factor()?;
                acc = self.arena.div(acc, f);
            } else {
                return Ok(acc);
            }
        }
    }

    fn factor(&mut self) -> Result<NodeId, ParseError> {
        if self.eat(b'-') {
            let f = self.factor()?;
            return Ok(self.arena.neg(f));
        }
        let base = self.atom()?;
        if self.eat(b'^') {
            let n = self.integer()?;
            return Ok(self.arena.pow(base, n));
        }
        Ok(base)
    }

    fn integer(&mut self) -> Result<i32, ParseError> {
        self.skip_ws();
        let parenthesised = self.eat(b'(');
        self.skip_ws();
        let start = self.pos;
        if matches!(self.peek(), Some(b'-') | Some(b'+')) {
            self.pos += 1;
        }
        while matches!(self.peek(), Some(b'0'..=b'9')) {
            self.pos += 1;
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
        let n = text.parse::<i32>().map_err(|_| ParseError {
            offset: start,
            kind: ParseErrorKind::Expected("integer exponent"),
        })?;
        if parenthesised {
            self.expect(b')', "`)`")?;
        }
        Ok(n)
    }

    fn number(&mut self) -> Result<NodeId, ParseError> {
        let start = self.pos;
        let digits = |p: &mut Self| {
            while matches!(p.peek(), Some(b'0'..=b'9')) {
                p.pos += 1;
            }
        };
        digits(self);
        if self.peek() == Some(b'.') {
            self.pos += 1;
            digits(self);
        }
        if matches!(self.peek(), Some(b'e') | Some(b'E')) {
            let save = self.pos;
            self.pos += 1;
            if matches!(self.peek(), Some(b'-') | Some(b'+')) {
                self.pos += 1;
            }
            if matches!(self.peek(), Some(b'0'..=b'9')) {
                digits(self);
            } else {
                self.pos = save;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
        match text.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(self.arena.konst(v)),
            _ => Err(ParseError {
                offset: start,
                kind: ParseErrorKind::BadNumber,
            }),
        }
    }

    fn ident(&mut self) -> &str {
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_alphanumeric() || c == b'_') {
            self.pos += 1;
        }
        std::str::from_utf8(&self.src[start..self.pos]).unwrap_or("")
    }

    fn index(&mut self) -> Result<usize, ParseError> {
        self.expect(b'[', "`[`")?;
        self.skip_ws();
        let start = self.pos;
        while matches!(self.peek(), Some(b'0'..=b'9')) {
            self.pos += 1;
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
        let index: usize = text.parse().map_err(|_| ParseError {
            offset: start,
            kind: ParseErrorKind::Expected("index"),
        })?;
        if index == 0 || index > self.dim {
            return Err(ParseError {
                offset: start,
                kind: ParseErrorKind::IndexOutOfRange {
                    index,
                    dim: self.dim,
                },
            });
        }
        self.expect(b']', "`]`")?;
        Ok(index - 1)
    }

    fn atom(&mut self) -> Result<NodeId, ParseError> {
        self.skip_ws();
        match self.peek() {
            None => Err(self.err(ParseErrorKind::UnexpectedEnd)),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(b')', "`)`")?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                let name = self.ident().to_owned();
                match name.as_str() {
                    "x" => {
                        let i = self.index()?;
                        Ok(self.arena.var(Var::X(i)))
                    }
                    "y" => {
                        let i = self.index()?;
                        Ok(self.arena.var(Var::Y(i)))
                    }
                    "dot" => self.dot(),
                    _ => {
                        let Some(f) = Builtin::from_name(&name) else {
                            return Err(ParseError {
                                offset: start,
                                kind: ParseErrorKind::UnknownFunction(name),
                            });
                        };
                        self.expect(b'(', "`(`")?;
                        let mut args = vec![self.expr()?];
                        while self.eat(b',') {
                            args.push(self.expr()?);
                        }
                        self.expect(b')', "`)`")?;
                        if args.len() != 1 {
                            return Err(ParseError {
                                offset: start,
                                kind: ParseErrorKind::Arity {
                                    name,
                                    expected: 1,
                                    got: args.len(),
                                },
                            });
                        }
                        Ok(self.arena.func(f, args[0]))
                    }
                }
            }
            Some(_) => Err(self.unexpected()),
        }
    }

    fn dot_operand(&mut self) -> Result<fn(usize) -> Var, ParseError> {
        self.skip_ws();
        match self.ident() {
            "x" => Ok(Var::X),
            "y" => Ok(Var::Y),
            _ => Err(self.err(ParseErrorKind::Expected("`x` or `y` as dot() operand"))),
        }
    }

    fn dot(&mut self) -> Result<NodeId, ParseError> {
        self.expect(b'(', "`(`")?;
        let a = self.dot_operand()?;
        self.expect(b',', "`,`")?;
        let b = self.dot_operand()?;
        self.expect(b')', "`)`")?;
        let mut acc = super::arena::ZERO;
        for i in 0..self.dim {
            let u = self.arena.var(a(i));
            let v = self.arena.var(b(i));
            let t = self.arena.mul(u, v);
            acc = self.arena.add(acc, t);
        }
        Ok(acc)
    }
}
