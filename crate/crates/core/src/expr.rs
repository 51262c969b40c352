//! A small arithmetic expression language in one variable `r`.
//!
//! Grammar (whitespace ignored):
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := ('+' | '-') unary | power
//! power   := atom (('^' | '**') unary)?
//! atom    := number | 'r' | 'pi' | func '(' expr ')' | '(' expr ')'
//! func    := 'sqrt' | 'exp' | 'log' | 'ln' | 'abs'
//! ```
//!
//! Exponentiation is right-associative and binds tighter than unary minus,
//! so `-r^2` is `-(r^2)`.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{message} at offset {offset}")]
pub struct ExprError {
    /// Byte offset into the source string.
    pub offset: usize,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sqrt,
    Exp,
    Log,
    Abs,
}

impl Func {
    fn apply(self, x: f64) -> f64 {
        match self {
            Func::Sqrt => x.sqrt(),
            Func::Exp => x.exp(),
            Func::Log => x.ln(),
            Func::Abs => x.abs(),
        }
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sqrt => "sqrt",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Abs => "abs",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    Var,
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, Box<Node>),
    /// Power with a small integer exponent, evaluated with `powi`.
    PowI(Box<Node>, i32),
    Call(Func, Box<Node>),
}

impl Node {
    fn eval(&self, r: f64) -> f64 {
        match self {
            Node::Num(v) => *v,
            Node::Var => r,
            Node::Neg(a) => -a.eval(r),
            Node::Add(a, b) => a.eval(r) + b.eval(r),
            Node::Sub(a, b) => a.eval(r) - b.eval(r),
            Node::Mul(a, b) => a.eval(r) * b.eval(r),
            Node::Div(a, b) => a.eval(r) / b.eval(r),
            Node::Pow(a, b) => a.eval(r).powf(b.eval(r)),
            Node::PowI(a, n) => a.eval(r).powi(*n),
            Node::Call(f, a) => f.apply(a.eval(r)),
        }
    }

    fn write(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Num(v) => write!(out, "{v:?}"),
            Node::Var => write!(out, "r"),
            Node::Neg(a) => {
                write!(out, "(-")?;
                a.write(out)?;
                write!(out, ")")
            }
            Node::Add(a, b) => binary(out, a, "+", b),
            Node::Sub(a, b) => binary(out, a, "-", b),
            Node::Mul(a, b) => binary(out, a, "*", b),
            Node::Div(a, b) => binary(out, a, "/", b),
            Node::Pow(a, b) => binary(out, a, "^", b),
            Node::PowI(a, n) => {
                write!(out, "(")?;
                a.write(out)?;
                write!(out, "^{n})")
            }
            Node::Call(f, a) => {
                write!(out, "{}(", f.name())?;
                a.write(out)?;
                write!(out, ")")
            }
        }
    }
}

fn binary(out: &mut fmt::Formatter<'_>, a: &Node, op: &str, b: &Node) -> fmt::Result {
    write!(out, "(")?;
    a.write(out)?;
    write!(out, "{op}")?;
    b.write(out)?;
    write!(out, ")")
}

/// A parsed expression, evaluable at any `r`.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    source: String,
    root: Node,
}

impl Expr {
    pub fn parse(source: &str) -> Result<Self, ExprError> {
        let mut parser = Parser {
            src: source.as_bytes(),
            pos: 0,
        };
        let root = parser.expr()?;
        parser.skip_ws();
        if parser.pos < parser.src.len() {
            return Err(parser.error("unexpected trailing input"));
        }
        Ok(Expr {
            source: source.to_string(),
            root,
        })
    }

    #[inline]
    pub fn eval(&self, r: f64) -> f64 {
        self.root.eval(r)
    }

    /// The text this expression was parsed from.
    pub fn source(&self) -> &str {
        &self.source
    }
}

impl fmt::Display for Expr {
    /// Fully parenthesized canonical form.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.root.write(f)
    }
}

impl std::str::FromStr for Expr {
    type Err = ExprError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Expr::parse(s)
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, message: &str) -> ExprError {
        ExprError {
            offset: self.pos,
            message: message.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.term()?;
        loop {
            if self.eat(b'+') {
                lhs = Node::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat(b'-') {
                lhs = Node::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Some(b'*') if self.src.get(self.pos + 1) != Some(&b'*') => {
                    self.pos += 1;
                    lhs = Node::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Some(b'/') => {
                    self.pos += 1;
                    lhs = Node::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Node, ExprError> {
        if self.eat(b'-') {
            Ok(Node::Neg(Box::new(self.unary()?)))
        } else if self.eat(b'+') {
            self.unary()
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> Result<Node, ExprError> {
        let base = self.atom()?;
        let is_pow = match self.peek() {
            Some(b'^') => {
                self.pos += 1;
                true
            }
            Some(b'*') if self.src.get(self.pos + 1) == Some(&b'*') => {
                self.pos += 2;
                true
            }
            _ => false,
        };
        if !is_pow {
            return Ok(base);
        }
        let exponent = self.unary()?;
        Ok(match exponent {
            Node::Num(v) if v.fract() == 0.0 && v.abs() <= 64.0 => {
                Node::PowI(Box::new(base), v as i32)
            }
            Node::Neg(ref inner) => match **inner {
                Node::Num(v) if v.fract() == 0.0 && v.abs() <= 64.0 => {
                    Node::PowI(Box::new(base), -(v as i32))
                }
                _ => Node::Pow(Box::new(base), Box::new(exponent)),
            },
            _ => Node::Pow(Box::new(base), Box::new(exponent)),
        })
    }

    fn atom(&mut self) -> Result<Node, ExprError> {
        match self.peek() {
            None => Err(self.error("unexpected end of expression")),
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.error("expected ')'"));
                }
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while self.pos < self.src.len()
                    && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
                {
                    self.pos += 1;
                }
                let ident = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
                let func = match ident {
                    "r" => return Ok(Node::Var),
                    "pi" => return Ok(Node::Num(std::f64::consts::PI)),
                    "sqrt" => Func::Sqrt,
                    "exp" => Func::Exp,
                    "log" | "ln" => Func::Log,
                    "abs" => Func::Abs,
                    _ => {
                        self.pos = start;
                        return Err(self.error(&format!("unknown identifier '{ident}'")));
                    }
                };
                if !self.eat(b'(') {
                    return Err(self.error("expected '(' after function name"));
                }
                let arg = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.error("expected ')'"));
                }
                Ok(Node::Call(func, Box::new(arg)))
            }
            Some(_) => Err(self.error("unexpected character")),
        }
    }

    fn number(&mut self) -> Result<Node, ExprError> {
        let start = self.pos;
        let bytes = self.src;
        let mut i = self.pos;
        while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
            i += 1;
        }
        if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
            let mut j = i + 1;
            if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                j += 1;
            }
            if j < bytes.len() && bytes[j].is_ascii_digit() {
                while j < bytes.len() && bytes[j].is_ascii_digit() {
                    j += 1;
                }
                i = j;
            }
        }
        let text = std::str::from_utf8(&bytes[start..i]).unwrap_or("");
        match text.parse::<f64>() {
            Ok(v) => {
                self.pos = i;
                Ok(Node::Num(v))
            }
            Err(_) => Err(self.error(&format!("malformed number '{text}'"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval(src: &str, r: f64) -> f64 {
        Expr::parse(src).unwrap().eval(r)
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(eval("1 + 2 * 3", 0.0), 7.0);
        assert_eq!(eval("2 ^ 3 ^ 2", 0.0), 512.0);
        assert_eq!(eval("-r^2", 3.0), -9.0);
        assert_eq!(eval("(1 - r) * r", 0.25), 0.1875);
        assert_eq!(eval("r**2/4", 2.0), 1.0);
        assert_eq!(eval("8 / 2 / 2", 0.0), 2.0);
    }

    #[test]
    fn functions_and_constants() {
        assert!((eval("sqrt(r) * exp(0) + log(1)", 4.0) - 2.0).abs() < 1e-15);
        assert!((eval("abs(-r) + ln(exp(2))", 1.5) - 3.5).abs() < 1e-15);
        assert!((eval("pi", 0.0) - std::f64::consts::PI).abs() < 1e-15);
        assert_eq!(eval("r^(-0.5)", 4.0), 0.5);
        assert_eq!(eval("r^-2", 2.0), 0.25);
        assert_eq!(eval("1.5e-1 + 2E1", 0.0), 20.15);
    }

    #[test]
    fn errors_carry_offsets() {
        let err = Expr::parse("r * (1 - r").unwrap_err();
        assert_eq!(err.offset, 10);
        let err = Expr::parse("r + foo(r)").unwrap_err();
        assert_eq!(err.offset, 4);
        assert!(err.message.contains("foo"));
        assert!(Expr::parse("").is_err());
        assert!(Expr::parse("r r").is_err());
        assert!(Expr::parse("1..2").is_err());
    }

    #[test]
    fn display_reparses_to_same_values() {
        let e = Expr::parse("-r^2 + sqrt(r)/(1-r)^0.5 * 3").unwrap();
        let again = Expr::parse(&e.to_string()).unwrap();
        for &r in &[0.1, 0.3, 0.7] {
            assert_eq!(e.eval(r), again.eval(r));
        }
    }
}
