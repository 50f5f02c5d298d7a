//! A small arithmetic expression grammar for user-defined coefficients.
//!
//! Custom drifts, bundle maps and test functions are entered as expressions
//! in the chart coordinates `x1, .., xn`:
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor (('*' | '/') factor)*
//! factor := '-' factor | power           -- so -x1^2 means -(x1^2)
//! power  := atom ('^' factor)?           -- right-associative
//! atom   := number | ident | ident '(' expr (',' expr)* ')' | '(' expr ')'
//! ```
//!
//! Functions: `exp`, `sin`, `cos`, and `pow(a, b)` as an alias for `a ^ b`.
//! Expressions differentiate symbolically, so systems defined this way get
//! analytic Jacobians rather than finite differences.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
#[allow(unused_imports)] // inherent f64 methods shadow the trait on std builds
use num_traits::Float;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    /// Coordinate `x{i+1}` (zero-based index).
    Var(usize),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Exp(Box<Expr>),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
    /// Internal only (produced by differentiation of general powers).
    Ln(Box<Expr>),
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr> {
        let tokens = tokenize(src)?;
        let mut p = Parser { tokens, pos: 0 };
        let e = p.expr()?;
        if p.pos != p.tokens.len() {
            return Err(Error::Config(format!(
                "trailing input in expression `{src}` at token {}",
                p.pos
            )));
        }
        Ok(e)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Var(i) => x[*i],
            Expr::Add(a, b) => a.eval(x) + b.eval(x),
            Expr::Sub(a, b) => a.eval(x) - b.eval(x),
            Expr::Mul(a, b) => a.eval(x) * b.eval(x),
            Expr::Div(a, b) => a.eval(x) / b.eval(x),
            Expr::Pow(a, b) => Float::powf(a.eval(x), b.eval(x)),
            Expr::Neg(a) => -a.eval(x),
            Expr::Exp(a) => Float::exp(a.eval(x)),
            Expr::Sin(a) => Float::sin(a.eval(x)),
            Expr::Cos(a) => Float::cos(a.eval(x)),
            Expr::Ln(a) => Float::ln(a.eval(x)),
        }
    }

    /// Largest coordinate index referenced, plus one.
    pub fn arity(&self) -> usize {
        match self {
            Expr::Const(_) => 0,
            Expr::Var(i) => i + 1,
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Div(a, b)
            | Expr::Pow(a, b) => a.arity().max(b.arity()),
            Expr::Neg(a) | Expr::Exp(a) | Expr::Sin(a) | Expr::Cos(a) | Expr::Ln(a) => a.arity(),
        }
    }

    /// Symbolic partial derivative with respect to coordinate `i`.
    pub fn diff(&self, i: usize) -> Expr {
        use Expr::*;
        match self {
            Const(_) => Const(0.0),
            Var(j) => Const(if *j == i { 1.0 } else { 0.0 }),
            Add(a, b) => simplify(Add(Box::new(a.diff(i)), Box::new(b.diff(i)))),
            Sub(a, b) => simplify(Sub(Box::new(a.diff(i)), Box::new(b.diff(i)))),
            Mul(a, b) => simplify(Add(
                Box::new(simplify(Mul(Box::new(a.diff(i)), b.clone()))),
                Box::new(simplify(Mul(a.clone(), Box::new(b.diff(i))))),
            )),
            Div(a, b) => {
                // (a/b)' = a'/b - a b'/b^2
                let num = Sub(
                    Box::new(simplify(Mul(Box::new(a.diff(i)), b.clone()))),
                    Box::new(simplify(Mul(a.clone(), Box::new(b.diff(i))))),
                );
                simplify(Div(
                    Box::new(simplify(num)),
                    Box::new(simplify(Mul(b.clone(), b.clone()))),
                ))
            }
            Pow(a, b) => match **b {
                Const(c) => {
                    // c * a^(c-1) * a'
                    let inner = simplify(Mul(
                        Box::new(Const(c)),
                        Box::new(simplify(Pow(a.clone(), Box::new(Const(c - 1.0))))),
                    ));
                    simplify(Mul(Box::new(inner), Box::new(a.diff(i))))
                }
                _ => {
                    // a^b * (b' ln a + b a'/a)
                    let t1 = Mul(Box::new(b.diff(i)), Box::new(Ln(a.clone())));
                    let t2 = Div(
                        Box::new(simplify(Mul(b.clone(), Box::new(a.diff(i))))),
                        a.clone(),
                    );
                    simplify(Mul(
                        Box::new(Pow(a.clone(), b.clone())),
                        Box::new(simplify(Add(Box::new(simplify(t1)), Box::new(simplify(t2))))),
                    ))
                }
            },
            Neg(a) => simplify(Neg(Box::new(a.diff(i)))),
            Exp(a) => simplify(Mul(Box::new(Exp(a.clone())), Box::new(a.diff(i)))),
            Sin(a) => simplify(Mul(Box::new(Cos(a.clone())), Box::new(a.diff(i)))),
            Cos(a) => simplify(Neg(Box::new(simplify(Mul(
                Box::new(Sin(a.clone())),
                Box::new(a.diff(i)),
            ))))),
            Ln(a) => simplify(Div(Box::new(a.diff(i)), a.clone())),
        }
    }
}

fn is_const(e: &Expr, v: f64) -> bool {
    matches!(e, Expr::Const(c) if *c == v)
}

fn simplify(e: Expr) -> Expr {
    use Expr::*;
    match e {
        Add(a, b) => match (*a, *b) {
            (Const(x), Const(y)) => Const(x + y),
            (lhs, rhs) if is_const(&lhs, 0.0) => rhs,
            (lhs, rhs) if is_const(&rhs, 0.0) => lhs,
            (lhs, rhs) => Add(Box::new(lhs), Box::new(rhs)),
        },
        Sub(a, b) => match (*a, *b) {
            (Const(x), Const(y)) => Const(x - y),
            (lhs, rhs) if is_const(&rhs, 0.0) => lhs,
            (lhs, rhs) => Sub(Box::new(lhs), Box::new(rhs)),
        },
        Mul(a, b) => match (*a, *b) {
            (Const(x), Const(y)) => Const(x * y),
            (lhs, rhs) if is_const(&lhs, 0.0) || is_const(&rhs, 0.0) => Const(0.0),
            (lhs, rhs) if is_const(&lhs, 1.0) => rhs,
            (lhs, rhs) if is_const(&rhs, 1.0) => lhs,
            (lhs, rhs) => Mul(Box::new(lhs), Box::new(rhs)),
        },
        Div(a, b) => match (*a, *b) {
            (Const(x), Const(y)) if y != 0.0 => Const(x / y),
            (lhs, _) if is_const(&lhs, 0.0) => Const(0.0),
            (lhs, rhs) if is_const(&rhs, 1.0) => lhs,
            (lhs, rhs) => Div(Box::new(lhs), Box::new(rhs)),
        },
        Pow(a, b) => match (*a, *b) {
            (Const(x), Const(y)) => Const(Float::powf(x, y)),
            (lhs, rhs) if is_const(&rhs, 1.0) => lhs,
            (_, rhs) if is_const(&rhs, 0.0) => Const(1.0),
            (lhs, rhs) => Pow(Box::new(lhs), Box::new(rhs)),
        },
        Neg(a) => match *a {
            Const(x) => Const(-x),
            inner => Neg(Box::new(inner)),
        },
        other => other,
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
}

fn tokenize(src: &str) -> Result<Vec<Token>> {
    let mut out = Vec::new();
    let bytes: Vec<char> = src.chars().collect();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        match c {
            ' ' | '\t' | '\n' | '\r' => i += 1,
            '+' => {
                out.push(Token::Plus);
                i += 1;
            }
            '-' | '−' => {
                out.push(Token::Minus);
                i += 1;
            }
            '*' => {
                out.push(Token::Star);
                i += 1;
            }
            '/' => {
                out.push(Token::Slash);
                i += 1;
            }
            '^' => {
                out.push(Token::Caret);
                i += 1;
            }
            '(' => {
                out.push(Token::LParen);
                i += 1;
            }
            ')' => {
                out.push(Token::RParen);
                i += 1;
            }
            ',' => {
                out.push(Token::Comma);
                i += 1;
            }
            '0'..='9' | '.' => {
                let start = i;
                while i < bytes.len()
                    && (bytes[i].is_ascii_digit()
                        || bytes[i] == '.'
                        || bytes[i] == 'e'
                        || bytes[i] == 'E'
                        || ((bytes[i] == '+' || bytes[i] == '-')
                            && i > start
                            && (bytes[i - 1] == 'e' || bytes[i - 1] == 'E')))
                {
                    i += 1;
                }
                let text: String = bytes[start..i].iter().collect();
                let v = text
                    .parse::<f64>()
                    .map_err(|_| Error::Config(format!("bad number literal `{text}`")))?;
                out.push(Token::Num(v));
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == '_') {
                    i += 1;
                }
                out.push(Token::Ident(bytes[start..i].iter().collect()));
            }
            other => {
                return Err(Error::Config(format!(
                    "unexpected character `{other}` in expression"
                )))
            }
        }
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

    fn expect(&mut self, t: Token) -> Result<()> {
        match self.bump() {
            Some(ref got) if *got == t => Ok(()),
            got => Err(Error::Config(format!("expected {t:?}, got {got:?}"))),
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(Token::Plus) => {
                    self.bump();
                    let rhs = self.term()?;
                    lhs = Expr::Add(Box::new(lhs), Box::new(rhs));
                }
                Some(Token::Minus) => {
                    self.bump();
                    let rhs = self.term()?;
                    lhs = Expr::Sub(Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.factor()?;
        loop {
            match self.peek() {
                Some(Token::Star) => {
                    self.bump();
                    let rhs = self.factor()?;
                    lhs = Expr::Mul(Box::new(lhs), Box::new(rhs));
                }
                Some(Token::Slash) => {
                    self.bump();
                    let rhs = self.factor()?;
                    lhs = Expr::Div(Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn factor(&mut self) -> Result<Expr> {
        if let Some(Token::Minus) = self.peek() {
            self.bump();
            let inner = self.factor()?;
            return Ok(Expr::Neg(Box::new(inner)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if let Some(Token::Caret) = self.peek() {
            self.bump();
            let exp = self.factor()?; // right-associative; exponent may be signed
            return Ok(Expr::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.bump() {
            Some(Token::Num(v)) => Ok(Expr::Const(v)),
            Some(Token::LParen) => {
                let e = self.expr()?;
                self.expect(Token::RParen)?;
                Ok(e)
            }
            Some(Token::Ident(name)) => {
                if let Some(Token::LParen) = self.peek() {
                    self.bump();
                    let mut args = alloc::vec![self.expr()?];
                    while let Some(Token::Comma) = self.peek() {
                        self.bump();
                        args.push(self.expr()?);
                    }
                    self.expect(Token::RParen)?;
                    self.apply(&name, args)
                } else {
                    self.variable(&name)
                }
            }
            other => Err(Error::Config(format!("unexpected token {other:?}"))),
        }
    }

    fn apply(&self, name: &str, mut args: Vec<Expr>) -> Result<Expr> {
        let unary = |args: &mut Vec<Expr>, name: &str| -> Result<Box<Expr>> {
            if args.len() != 1 {
                return Err(Error::Config(format!("{name} takes one argument")));
            }
            Ok(Box::new(args.pop().unwrap()))
        };
        match name {
            "exp" => Ok(Expr::Exp(unary(&mut args, name)?)),
            "sin" => Ok(Expr::Sin(unary(&mut args, name)?)),
            "cos" => Ok(Expr::Cos(unary(&mut args, name)?)),
            "pow" => {
                if args.len() != 2 {
                    return Err(Error::Config("pow takes two arguments".to_string()));
                }
                let b = args.pop().unwrap();
                let a = args.pop().unwrap();
                Ok(Expr::Pow(Box::new(a), Box::new(b)))
            }
            other => Err(Error::Config(format!("unknown function `{other}`"))),
        }
    }

    fn variable(&self, name: &str) -> Result<Expr> {
        if let Some(rest) = name.strip_prefix('x') {
            if let Ok(i) = rest.parse::<usize>() {
                if i >= 1 {
                    return Ok(Expr::Var(i - 1));
                }
            }
        }
        Err(Error::Config(format!(
            "unknown identifier `{name}` (coordinates are x1, x2, ...)"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(src: &str, x: &[f64]) -> f64 {
        Expr::parse(src).unwrap().eval(x)
    }

    #[test]
    fn arithmetic_and_precedence() {
        assert_eq!(ev("1 + 2 * 3", &[]), 7.0);
        assert_eq!(ev("(1 + 2) * 3", &[]), 9.0);
        assert_eq!(ev("2 ^ 3 ^ 2", &[]), 512.0); // right-assoc
        assert_eq!(ev("-x1 + 4 / 2", &[3.0]), -1.0);
        assert_eq!(ev("pow(x1, 2) + sin(0)", &[5.0]), 25.0);
    }

    #[test]
    fn functions() {
        let x = [0.3];
        assert!((ev("exp(x1)", &x) - x[0].exp()).abs() < 1e-15);
        assert!((ev("sin(x1) * cos(x1)", &x) - x[0].sin() * x[0].cos()).abs() < 1e-15);
    }

    #[test]
    fn unary_minus_binds_looser_than_power() {
        // -x^2 is -(x^2), and a signed exponent parses on the right.
        assert_eq!(ev("-x1 ^ 2", &[3.0]), -9.0);
        assert_eq!(ev("(-x1) ^ 2", &[3.0]), 9.0);
        assert_eq!(ev("2 ^ -2", &[]), 0.25);
        let x = [0.8];
        assert!((ev("exp(-x1 ^ 2 / 4)", &x) - (-x[0] * x[0] / 4.0).exp()).abs() < 1e-15);
    }

    #[test]
    fn symbolic_derivative_matches_finite_difference() {
        let cases = [
            "x1 ^ 2 + 3 * x2",
            "exp(-x1 * x1 / 4) + 0.1",
            "sin(x1) * cos(x2) / (1 + x1 ^ 2)",
            "pow(1 + x2 ^ 2, 3)",
            "x1 ^ x2",
        ];
        let x = [0.7, -0.4];
        let h = 1e-6;
        for src in cases {
            let e = Expr::parse(src).unwrap();
            for i in 0..2 {
                let d = e.diff(i).eval(&x);
                let mut xp = x;
                let mut xm = x;
                xp[i] += h;
                xm[i] -= h;
                let fd = (e.eval(&xp) - e.eval(&xm)) / (2.0 * h);
                assert!(
                    (d - fd).abs() < 1e-6 * (1.0 + fd.abs()),
                    "{src} d/dx{i}: sym {d} vs fd {fd}"
                );
            }
        }
    }

    #[test]
    fn rejects_garbage() {
        assert!(Expr::parse("x0").is_err());
        assert!(Expr::parse("foo(1)").is_err());
        assert!(Expr::parse("1 +").is_err());
        assert!(Expr::parse("(1").is_err());
    }
}
