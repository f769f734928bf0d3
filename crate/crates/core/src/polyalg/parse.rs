//! Recursive-descent reader for polynomial expressions with `+ - * / ^` and
//! parentheses. Division is only allowed by constants.

use std::sync::Arc;

use super::poly::Polynomial;
use super::space::VariableSpace;
use crate::error::{CoreError, Result};

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
}

fn err<T>(pos: usize, msg: impl Into<String>) -> Result<T> {
    Err(CoreError::Parse { pos, msg: msg.into() })
}

fn lex(text: &str) -> Result<Vec<(usize, Tok)>> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    i = j;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let s = &text[start..i];
            match s.parse::<f64>() {
                Ok(v) => out.push((start, Tok::Num(v))),
                Err(_) => return err(start, format!("bad number {s:?}")),
            }
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((start, Tok::Ident(text[start..i].to_string())));
        } else if "+-*/^()".contains(c) {
            out.push((i, Tok::Op(c)));
            i += 1;
        } else {
            return err(i, format!("unexpected character {c:?}"));
        }
    }
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    space: &'a Arc<VariableSpace>,
    len: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.1)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map(|t| t.0).unwrap_or(self.len)
    }

    fn expr(&mut self) -> Result<Polynomial> {
        let mut acc = self.term()?;
        while let Some(Tok::Op(c @ ('+' | '-'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.term()?;
            acc = if c == '+' { &acc + &rhs } else { &acc - &rhs };
        }
        Ok(acc)
    }

    fn term(&mut self) -> Result<Polynomial> {
        let mut acc = self.unary()?;
        while let Some(Tok::Op(c @ ('*' | '/'))) = self.peek().cloned() {
            let at = self.offset();
            self.pos += 1;
            let rhs = self.unary()?;
            if c == '*' {
                acc = &acc * &rhs;
            } else {
                if rhs.degree() > 0 || rhs.is_zero() {
                    return err(at, "division by a non-constant or zero expression");
                }
                acc = acc.scale(1.0 / rhs.constant_term());
            }
        }
        Ok(acc)
    }

    fn unary(&mut self) -> Result<Polynomial> {
        match self.peek() {
            Some(Tok::Op('-')) => {
                self.pos += 1;
                Ok(-self.unary()?)
            }
            Some(Tok::Op('+')) => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Polynomial> {
        let base = self.atom()?;
        if let Some(Tok::Op('^')) = self.peek() {
            self.pos += 1;
            let at = self.offset();
            match self.peek().cloned() {
                Some(Tok::Num(v)) if v >= 0.0 && v.fract() == 0.0 && v <= 255.0 => {
                    self.pos += 1;
                    return Ok(base.pow(v as u32));
                }
                _ => return err(at, "exponent must be a nonnegative integer"),
            }
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Polynomial> {
        let at = self.offset();
        match self.peek().cloned() {
            Some(Tok::Num(v)) => {
                self.pos += 1;
                Ok(Polynomial::constant(self.space, v))
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                match self.space.index(&name) {
                    Some(i) => Ok(Polynomial::var(self.space, i)),
                    None => err(at, format!("unknown variable {name:?}")),
                }
            }
            Some(Tok::Op('(')) => {
                self.pos += 1;
                let inner = self.expr()?;
                match self.peek() {
                    Some(Tok::Op(')')) => {
                        self.pos += 1;
                        Ok(inner)
                    }
                    _ => err(self.offset(), "expected ')'"),
                }
            }
            Some(t) => err(at, format!("unexpected token {t:?}")),
            None => err(at, "unexpected end of input"),
        }
    }
}

pub fn parse(space: &Arc<VariableSpace>, text: &str) -> Result<Polynomial> {
    let toks = lex(text)?;
    let mut p = Parser {
        toks,
        pos: 0,
        space,
        len: text.len(),
    };
    let out = p.expr()?;
    if p.pos != p.toks.len() {
        return err(p.offset(), "trailing input");
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_and_errors() {
        let s = VariableSpace::new(&[("x", 2)]).unwrap();
        let a = parse(&s, "-x1^2 + 2*(x2 - 1)/4").unwrap();
        let b = parse(&s, "0.5*x2 - 0.5 - x1*x1").unwrap();
        assert_eq!(a, b);
        assert!(matches!(parse(&s, "x1 + y"), Err(CoreError::Parse { pos: 5, .. })));
        assert!(parse(&s, "x1 / x2").is_err());
        assert!(parse(&s, "(x1").is_err());
        assert!(parse(&s, "x1^-1").is_err());
        assert!(parse(&s, "1e-3*x1").unwrap().coeff(&super::super::Monomial::var(2, 0)) == 1e-3);
    }
}
