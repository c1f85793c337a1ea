use num_bigint::BigInt;
use num_rational::BigRational;
use std::sync::Arc;
use thiserror::Error;

use super::{add, call, div, konst, mul, neg, pow, sub, Expr, Func, Node};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    Syntax(String),
    CoordinateOutOfRange { index: usize, n: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{} at byte {offset}", describe(.kind))]
pub struct ParseError {
    pub kind: ParseErrorKind,
    /// Byte offset into the source text.
    pub offset: usize,
}

fn describe(kind: &ParseErrorKind) -> String {
    match kind {
        ParseErrorKind::Syntax(msg) => format!("syntax error: {msg}"),
        ParseErrorKind::CoordinateOutOfRange { index, n } => {
            format!("coordinate x{index} out of range for dimension {n}")
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Number(BigRational),
    Ident(String),
    Op(char),
    End,
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn syntax(&self, offset: usize, msg: impl Into<String>) -> ParseError {
        ParseError {
            kind: ParseErrorKind::Syntax(msg.into()),
            offset,
        }
    }

    fn next(&mut self) -> Result<(Token, usize), ParseError> {
        let bytes = self.src.as_bytes();
        while self.pos < bytes.len() && bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        let Some(&c) = bytes.get(self.pos) else {
            return Ok((Token::End, start));
        };
        if c.is_ascii_digit() || c == b'.' {
            return self.number().map(|t| (t, start));
        }
        if c.is_ascii_alphabetic() {
            while self.pos < bytes.len() && bytes[self.pos].is_ascii_alphanumeric() {
                self.pos += 1;
            }
            return Ok((Token::Ident(self.src[start..self.pos].to_string()), start));
        }
        if b"+-*/^(),".contains(&c) {
            self.pos += 1;
            return Ok((Token::Op(c as char), start));
        }
        Err(self.syntax(start, format!("unexpected character {:?}", c as char)))
    }

    /// Decimal literal, read exactly: `12`, `0.25`, `.5`, `1e-3`.
    fn number(&mut self) -> Result<Token, ParseError> {
        let bytes = self.src.as_bytes();
        let start = self.pos;
        let mut digits = String::new();
        let mut frac_len: i64 = 0;
        let mut seen_dot = false;
        while let Some(&c) = bytes.get(self.pos) {
            if c.is_ascii_digit() {
                digits.push(c as char);
                if seen_dot {
                    frac_len += 1;
                }
            } else if c == b'.' && !seen_dot {
                seen_dot = true;
            } else {
                break;
            }
            self.pos += 1;
        }
        if digits.is_empty() {
            return Err(self.syntax(start, "malformed number"));
        }
        let mut exponent: i64 = 0;
        if matches!(bytes.get(self.pos), Some(b'e' | b'E')) {
            let save = self.pos;
            self.pos += 1;
            let mut sign = 1;
            match bytes.get(self.pos) {
                Some(b'-') => {
                    sign = -1;
                    self.pos += 1;
                }
                Some(b'+') => self.pos += 1,
                _ => {}
            }
            let exp_start = self.pos;
            while bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
                self.pos += 1;
            }
            if exp_start == self.pos {
                self.pos = save;
                return Err(self.syntax(save, "malformed exponent"));
            }
            exponent = sign
                * self.src[exp_start..self.pos]
                    .parse::<i64>()
                    .map_err(|_| self.syntax(exp_start, "exponent too large"))?;
        }
        let mantissa: BigInt = digits.parse().expect("digits only");
        let shift = exponent - frac_len;
        if shift.unsigned_abs() > 4000 {
            return Err(self.syntax(start, "exponent too large"));
        }
        let ten = BigInt::from(10);
        let scale = num_traits::pow(ten, shift.unsigned_abs() as usize);
        let value = if shift >= 0 {
            BigRational::from_integer(mantissa * scale)
        } else {
            BigRational::new(mantissa, scale)
        };
        Ok(Token::Number(value))
    }
}

struct Parser<'a> {
    lexer: Lexer<'a>,
    current: Token,
    offset: usize,
    n: usize,
}

pub(super) fn parse(text: &str, n: usize) -> Result<Expr, ParseError> {
    let mut lexer = Lexer { src: text, pos: 0 };
    let (current, offset) = lexer.next()?;
    let mut parser = Parser {
        lexer,
        current,
        offset,
        n,
    };
    let e = parser.sum()?;
    if parser.current != Token::End {
        return Err(parser.syntax("unexpected trailing input"));
    }
    Ok(e)
}

impl Parser<'_> {
    fn syntax(&self, msg: impl Into<String>) -> ParseError {
        ParseError {
            kind: ParseErrorKind::Syntax(msg.into()),
            offset: self.offset,
        }
    }

    fn bump(&mut self) -> Result<(), ParseError> {
        let (tok, off) = self.lexer.next()?;
        self.current = tok;
        self.offset = off;
        Ok(())
    }

    fn eat(&mut self, op: char) -> Result<bool, ParseError> {
        if self.current == Token::Op(op) {
            self.bump()?;
            Ok(true)
        } else {
            Ok(false)
        }
    }

    fn expect(&mut self, op: char) -> Result<(), ParseError> {
        if self.eat(op)? {
            Ok(())
        } else {
            Err(self.syntax(format!("expected `{op}`")))
        }
    }

    fn sum(&mut self) -> Result<Expr, ParseError> {
        let mut acc = self.product()?;
        loop {
            if self.eat('+')? {
                acc = add(acc, self.product()?);
            } else if self.eat('-')? {
                acc = sub(acc, self.product()?);
            } else {
                return Ok(acc);
            }
        }
    }

    fn product(&mut self) -> Result<Expr, ParseError> {
        let mut acc = self.unary()?;
        loop {
            if self.eat('*')? {
                acc = mul(acc, self.unary()?);
            } else if self.eat('/')? {
                acc = div(acc, self.unary()?);
            } else {
                return Ok(acc);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.eat('-')? {
            return Ok(neg(self.unary()?));
        }
        if self.eat('+')? {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if !self.eat('^')? {
            return Ok(base);
        }
        let parenthesized = self.eat('(')?;
        let negative = self.eat('-')?;
        let k = match &self.current {
            Token::Number(r) if r.is_integer() => {
                let k: i32 = r.numer().try_into().map_err(|_| self.syntax("exponent out of range"))?;
                k
            }
            _ => return Err(self.syntax("exponent must be an integer literal")),
        };
        self.bump()?;
        if parenthesized {
            self.expect(')')?;
        }
        Ok(pow(base, if negative { -k } else { k }))
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        match self.current.clone() {
            Token::Number(r) => {
                self.bump()?;
                Ok(konst(r))
            }
            Token::Op('(') => {
                self.bump()?;
                let e = self.sum()?;
                self.expect(')')?;
                Ok(e)
            }
            Token::Ident(name) => {
                let at = self.offset;
                if let Some(f) = Func::from_name(&name) {
                    self.bump()?;
                    self.expect('(')?;
                    let arg = self.sum()?;
                    self.expect(')')?;
                    return Ok(call(f, arg));
                }
                let index = name
                    .strip_prefix('x')
                    .filter(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit()))
                    .and_then(|d| d.parse::<usize>().ok())
                    .ok_or_else(|| ParseError {
                        kind: ParseErrorKind::Syntax(format!("unknown identifier `{name}`")),
                        offset: at,
                    })?;
                if index == 0 || index > self.n {
                    return Err(ParseError {
                        kind: ParseErrorKind::CoordinateOutOfRange { index, n: self.n },
                        offset: at,
                    });
                }
                self.bump()?;
                Ok(Arc::new(Node::Var(index - 1)))
            }
            Token::End => Err(self.syntax("unexpected end of input")),
            Token::Op(c) => Err(self.syntax(format!("unexpected `{c}`"))),
        }
    }
}
