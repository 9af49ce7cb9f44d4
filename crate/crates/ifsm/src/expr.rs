//! Arithmetic expressions for potentials and densities.
//!
//! Grammar (documented in the README, fixture corpus under `tests/fixtures`):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor (('*' | '/') factor)*
//! factor := '-' factor | power
//! power  := atom ('^' factor)?          // right-associative
//! atom   := number | 'x' | 'y' | func '(' expr ')' | '(' expr ')'
//! func   := exp | ln | sin | cos | abs
//! ```
//!
//! `^` binds tighter than unary minus, which binds tighter than `*` `/`,
//! which bind tighter than `+` `-`. All binary operators are left-associative
//! except `^`.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Ln,
    Sin,
    Cos,
    Abs,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Abs => "abs",
        }
    }
}

/// Parsed arithmetic expression over the variables `x` and (in 2D) `y`.
#[derive(Debug, Clone, PartialEq)]
pub enum ExpressionAst {
    Const(f64),
    /// Variable by axis index: 0 = `x`, 1 = `y`.
    Var(usize),
    Neg(Box<ExpressionAst>),
    Bin(BinOp, Box<ExpressionAst>, Box<ExpressionAst>),
    Call(Func, Box<ExpressionAst>),
}

impl ExpressionAst {
    pub fn constant(c: f64) -> Self {
        ExpressionAst::Const(c)
    }

    /// Evaluates at a point. `p[1]` is ignored by 1D expressions.
    pub fn eval(&self, p: [f64; 2]) -> Result<f64> {
        let v = self.eval_raw(p)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::EvalDomain(format!(
                "`{self}` is not finite at ({}, {})",
                p[0], p[1]
            )))
        }
    }

    fn eval_raw(&self, p: [f64; 2]) -> Result<f64> {
        Ok(match self {
            ExpressionAst::Const(c) => *c,
            ExpressionAst::Var(axis) => p[*axis],
            ExpressionAst::Neg(e) => -e.eval_raw(p)?,
            ExpressionAst::Bin(op, a, b) => {
                let a = a.eval_raw(p)?;
                let b = b.eval_raw(p)?;
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b == 0.0 {
                            return Err(Error::EvalDomain(format!("division by zero in `{self}`")));
                        }
                        a / b
                    }
                    BinOp::Pow => a.powf(b),
                }
            }
            ExpressionAst::Call(f, e) => {
                let v = e.eval_raw(p)?;
                match f {
                    Func::Exp => v.exp(),
                    Func::Ln => {
                        if v <= 0.0 {
                            return Err(Error::EvalDomain(format!(
                                "ln of non-positive value {v} in `{self}`"
                            )));
                        }
                        v.ln()
                    }
                    Func::Sin => v.sin(),
                    Func::Cos => v.cos(),
                    Func::Abs => v.abs(),
                }
            }
        })
    }

    /// Highest axis index used, if any. `Some(1)` means the expression reads `y`.
    pub fn max_axis(&self) -> Option<usize> {
        match self {
            ExpressionAst::Const(_) => None,
            ExpressionAst::Var(a) => Some(*a),
            ExpressionAst::Neg(e) | ExpressionAst::Call(_, e) => e.max_axis(),
            ExpressionAst::Bin(_, a, b) => match (a.max_axis(), b.max_axis()) {
                (None, m) | (m, None) => m,
                (Some(a), Some(b)) => Some(a.max(b)),
            },
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            ExpressionAst::Bin(BinOp::Add | BinOp::Sub, ..) => 1,
            ExpressionAst::Bin(BinOp::Mul | BinOp::Div, ..) => 2,
            // a negative literal prints with a leading minus, so it binds
            // like unary minus when re-read
            ExpressionAst::Neg(_) => 3,
            ExpressionAst::Const(c) if c.is_sign_negative() => 3,
            ExpressionAst::Bin(BinOp::Pow, ..) => 4,
            _ => 5,
        }
    }
}

impl fmt::Display for ExpressionAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn paren(f: &mut fmt::Formatter<'_>, e: &ExpressionAst, wrap: bool) -> fmt::Result {
            if wrap {
                write!(f, "({e})")
            } else {
                write!(f, "{e}")
            }
        }
        match self {
            ExpressionAst::Const(c) => write!(f, "{c}"),
            ExpressionAst::Var(0) => write!(f, "x"),
            ExpressionAst::Var(_) => write!(f, "y"),
            ExpressionAst::Neg(e) => {
                write!(f, "-")?;
                paren(f, e, e.precedence() <= 2)
            }
            ExpressionAst::Bin(op, a, b) => {
                let prec = self.precedence();
                let (sym, right_needs) = match op {
                    BinOp::Add => ("+", b.precedence() < prec),
                    BinOp::Sub => ("-", b.precedence() <= prec),
                    BinOp::Mul => ("*", b.precedence() < prec),
                    BinOp::Div => ("/", b.precedence() <= prec),
                    BinOp::Pow => ("^", b.precedence() < prec),
                };
                let left_needs = match op {
                    BinOp::Pow => a.precedence() <= prec,
                    _ => a.precedence() < prec,
                };
                paren(f, a, left_needs)?;
                write!(f, " {sym} ")?;
                paren(f, b, right_needs)
            }
            ExpressionAst::Call(func, e) => write!(f, "{}({e})", func.name()),
        }
    }
}

/// Parses an expression with standard precedence.
pub fn parse_expression(text: &str) -> Result<ExpressionAst> {
    let tokens = tokenize(text)?;
    let mut p = Parser { tokens, pos: 0 };
    let ast = p.expr()?;
    match p.peek() {
        None => Ok(ast),
        Some(t) => Err(Error::SyntaxError {
            position: t.pos,
            message: format!("unexpected `{}`", t.kind.describe()),
        }),
    }
}

impl std::str::FromStr for ExpressionAst {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        parse_expression(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum TokKind {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

impl TokKind {
    fn describe(&self) -> String {
        match self {
            TokKind::Num(n) => format!("{n}"),
            TokKind::Ident(s) => s.clone(),
            TokKind::Plus => "+".into(),
            TokKind::Minus => "-".into(),
            TokKind::Star => "*".into(),
            TokKind::Slash => "/".into(),
            TokKind::Caret => "^".into(),
            TokKind::LParen => "(".into(),
            TokKind::RParen => ")".into(),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    kind: TokKind,
    pos: usize,
}

fn tokenize(text: &str) -> Result<Vec<Token>> {
    if text.trim().is_empty() {
        return Err(Error::SyntaxError {
            position: 0,
            message: "empty expression".into(),
        });
    }
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        let kind = match c {
            ' ' | '\t' | '\n' | '\r' => {
                i += 1;
                continue;
            }
            '+' => TokKind::Plus,
            '-' => TokKind::Minus,
            '*' => TokKind::Star,
            '/' => TokKind::Slash,
            '^' => TokKind::Caret,
            '(' => TokKind::LParen,
            ')' => TokKind::RParen,
            '0'..='9' | '.' => {
                let start = i;
                while i < bytes.len() && matches!(bytes[i] as char, '0'..='9' | '.') {
                    i += 1;
                }
                // scientific suffix: e / E with optional sign
                if i < bytes.len()
                    && matches!(bytes[i] as char, 'e' | 'E')
                    && i + 1 < bytes.len()
                    && matches!(bytes[i + 1] as char, '0'..='9' | '+' | '-')
                {
                    i += 2;
                    while i < bytes.len() && (bytes[i] as char).is_ascii_digit() {
                        i += 1;
                    }
                }
                let lit = &text[start..i];
                let n = lit.parse::<f64>().map_err(|_| Error::SyntaxError {
                    position: start,
                    message: format!("bad number literal `{lit}`"),
                })?;
                out.push(Token {
                    kind: TokKind::Num(n),
                    pos: start,
                });
                continue;
            }
            'a'..='z' | 'A'..='Z' | '_' => {
                let start = i;
                while i < bytes.len() && matches!(bytes[i] as char, 'a'..='z' | 'A'..='Z' | '0'..='9' | '_') {
                    i += 1;
                }
                out.push(Token {
                    kind: TokKind::Ident(text[start..i].to_string()),
                    pos: start,
                });
                continue;
            }
            other => {
                return Err(Error::SyntaxError {
                    position: i,
                    message: format!("unexpected character `{other}`"),
                })
            }
        };
        out.push(Token { kind, pos: i });
        i += 1;
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn bump(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn end_pos(&self) -> usize {
        self.tokens.last().map(|t| t.pos + 1).unwrap_or(0)
    }

    fn expr(&mut self) -> Result<ExpressionAst> {
        let mut lhs = self.term()?;
        while let Some(t) = self.peek() {
            let op = match t.kind {
                TokKind::Plus => BinOp::Add,
                TokKind::Minus => BinOp::Sub,
                _ => break,
            };
            self.bump();
            let rhs = self.term()?;
            lhs = ExpressionAst::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<ExpressionAst> {
        let mut lhs = self.factor()?;
        while let Some(t) = self.peek() {
            let op = match t.kind {
                TokKind::Star => BinOp::Mul,
                TokKind::Slash => BinOp::Div,
                _ => break,
            };
            self.bump();
            let rhs = self.factor()?;
            lhs = ExpressionAst::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<ExpressionAst> {
        if matches!(self.peek().map(|t| &t.kind), Some(TokKind::Minus)) {
            self.bump();
            return Ok(ExpressionAst::Neg(Box::new(self.factor()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<ExpressionAst> {
        let base = self.atom()?;
        if matches!(self.peek().map(|t| &t.kind), Some(TokKind::Caret)) {
            self.bump();
            let exponent = self.factor()?;
            return Ok(ExpressionAst::Bin(
                BinOp::Pow,
                Box::new(base),
                Box::new(exponent),
            ));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<ExpressionAst> {
        let Some(t) = self.bump() else {
            return Err(Error::SyntaxError {
                position: self.end_pos(),
                message: "unexpected end of input".into(),
            });
        };
        match t.kind {
            TokKind::Num(n) => Ok(ExpressionAst::Const(n)),
            TokKind::LParen => {
                let inner = self.expr()?;
                self.expect_rparen()?;
                Ok(inner)
            }
            TokKind::Ident(name) => match name.as_str() {
                "x" => Ok(ExpressionAst::Var(0)),
                "y" => Ok(ExpressionAst::Var(1)),
                "exp" | "ln" | "sin" | "cos" | "abs" => {
                    let func = match name.as_str() {
                        "exp" => Func::Exp,
                        "ln" => Func::Ln,
                        "sin" => Func::Sin,
                        "cos" => Func::Cos,
                        _ => Func::Abs,
                    };
                    match self.bump() {
                        Some(Token {
                            kind: TokKind::LParen,
                            ..
                        }) => {}
                        other => {
                            return Err(Error::SyntaxError {
                                position: other.map(|t| t.pos).unwrap_or(self.end_pos()),
                                message: format!("expected `(` after `{name}`"),
                            })
                        }
                    }
                    let arg = self.expr()?;
                    self.expect_rparen()?;
                    Ok(ExpressionAst::Call(func, Box::new(arg)))
                }
                _ => Err(Error::UnknownIdentifier {
                    name,
                    position: t.pos,
                }),
            },
            other => Err(Error::SyntaxError {
                position: t.pos,
                message: format!("unexpected `{}`", other.describe()),
            }),
        }
    }

    fn expect_rparen(&mut self) -> Result<()> {
        match self.bump() {
            Some(Token {
                kind: TokKind::RParen,
                ..
            }) => Ok(()),
            other => Err(Error::SyntaxError {
                position: other.map(|t| t.pos).unwrap_or(self.end_pos()),
                message: "expected `)`".into(),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(text: &str, x: f64) -> f64 {
        parse_expression(text).unwrap().eval([x, 0.0]).unwrap()
    }

    #[test]
    fn precedence() {
        assert_eq!(ev("2+3*4", 0.0), 14.0);
        assert_eq!(ev("x^2 - 1", 0.5), -0.75);
        assert_eq!(ev("2*3^2", 0.0), 18.0);
        assert_eq!(ev("-2^2", 0.0), -4.0); // ^ binds tighter than unary minus
        assert_eq!(ev("2^3^2", 0.0), 512.0); // right-associative
        assert_eq!(ev("8/4/2", 0.0), 1.0); // left-associative
        assert_eq!(ev("1-2-3", 0.0), -4.0);
        assert_eq!(ev("2^-1", 0.0), 0.5);
    }

    #[test]
    fn functions_and_constants() {
        assert!((ev("exp(x)", 1.0) - std::f64::consts::E).abs() < 1e-15);
        assert!((ev("ln(exp(1))", 0.0) - 1.0).abs() < 1e-15);
        assert_eq!(ev("abs(-3)", 0.0), 3.0);
        assert!((ev("sin(0) + cos(0)", 0.0) - 1.0).abs() < 1e-15);
        assert_eq!(ev("1e-4", 0.0), 1e-4);
        assert_eq!(ev("2.5E2", 0.0), 250.0);
    }

    #[test]
    fn two_variables() {
        let e = parse_expression("x*y + y^2").unwrap();
        assert_eq!(e.eval([2.0, 3.0]).unwrap(), 15.0);
        assert_eq!(e.max_axis(), Some(1));
    }

    #[test]
    fn syntax_error_positions() {
        match parse_expression("2 + * 3") {
            Err(Error::SyntaxError { position, .. }) => assert_eq!(position, 4),
            other => panic!("expected syntax error, got {other:?}"),
        }
        match parse_expression("2 + foo") {
            Err(Error::UnknownIdentifier { name, position }) => {
                assert_eq!(name, "foo");
                assert_eq!(position, 4);
            }
            other => panic!("expected unknown identifier, got {other:?}"),
        }
        assert!(parse_expression("").is_err());
        assert!(parse_expression("(1+2").is_err());
    }

    #[test]
    fn domain_errors() {
        assert!(parse_expression("ln(x)").unwrap().eval([0.0, 0.0]).is_err());
        assert!(parse_expression("1/x").unwrap().eval([0.0, 0.0]).is_err());
        assert!(parse_expression("exp(x)").unwrap().eval([1e4, 0.0]).is_err());
    }

    #[test]
    fn unparse_round_trip() {
        for text in [
            "2+3*4",
            "-x^2",
            "2^3^2",
            "1-2-3",
            "8/4/2",
            "exp(x*y) - ln(1 + x^2)",
            "-(x + 1) * abs(y - 2)",
        ] {
            let ast = parse_expression(text).unwrap();
            let printed = ast.to_string();
            let reparsed = parse_expression(&printed).unwrap();
            for p in [[0.3, 0.7], [1.5, -0.25], [2.0, 2.0]] {
                let a = ast.eval(p);
                let b = reparsed.eval(p);
                match (a, b) {
                    (Ok(a), Ok(b)) => assert!(
                        (a - b).abs() <= 1e-12 * a.abs().max(1.0),
                        "{text} vs {printed} at {p:?}: {a} vs {b}"
                    ),
                    (Err(_), Err(_)) => {}
                    other => panic!("{text} vs {printed} disagree at {p:?}: {other:?}"),
                }
            }
        }
    }
}
