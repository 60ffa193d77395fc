//! Scalar expression engine for time-dependent operator entries.
//!
//! Grammar: real literals, the time variable `t`, named real parameters, the
//! imaginary unit `i`, binary `+ - * / ^` (with `^` right-associative and
//! binding tighter than unary minus), unary minus, single-argument calls
//! `sin cos tan exp log sqrt arccos`, and parentheses. Evaluation is over
//! complex numbers; the inverse trigonometric and logarithmic functions take
//! their principal branches.

use crate::error::{Error, Result};
use crate::matrix::C64;
use std::collections::HashMap;
use std::fmt;

/// Parameter bindings for evaluation. All parameters are real.
pub type Bindings = HashMap<String, f64>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
    Arccos,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Arccos => "arccos",
        }
    }

    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "arccos" => Func::Arccos,
            _ => return None,
        })
    }

    fn apply(self, v: C64) -> C64 {
        match self {
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
            Func::Tan => v.tan(),
            Func::Exp => v.exp(),
            Func::Log => v.ln(),
            Func::Sqrt => v.sqrt(),
            Func::Arccos => v.acos(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Number(f64),
    ImaginaryUnit,
    Time,
    Param(String),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

impl Expr {
    /// Parses an expression; syntax errors carry a 1-based column into `src`.
    pub fn parse(src: &str) -> Result<Expr> {
        Parser::new(src)?.parse_full()
    }

    pub fn number(v: f64) -> Expr {
        Expr::Number(v)
    }

    pub fn param(name: impl Into<String>) -> Expr {
        Expr::Param(name.into())
    }

    fn is_zero(&self) -> bool {
        matches!(self, Expr::Number(v) if *v == 0.0)
    }

    fn is_one(&self) -> bool {
        matches!(self, Expr::Number(v) if *v == 1.0)
    }

    /// Smart constructors fold literal arithmetic so derivative trees stay
    /// small; they are not used by the parser, which preserves input shape.
    pub fn add(a: Expr, b: Expr) -> Expr {
        match (a, b) {
            (a, b) if a.is_zero() => b,
            (a, b) if b.is_zero() => a,
            (Expr::Number(x), Expr::Number(y)) => Expr::Number(x + y),
            (a, b) => Expr::Add(Box::new(a), Box::new(b)),
        }
    }

    pub fn sub(a: Expr, b: Expr) -> Expr {
        match (a, b) {
            (a, b) if b.is_zero() => a,
            (Expr::Number(x), Expr::Number(y)) => Expr::Number(x - y),
            (a, b) if a.is_zero() => Expr::neg(b),
            (a, b) => Expr::Sub(Box::new(a), Box::new(b)),
        }
    }

    pub fn mul(a: Expr, b: Expr) -> Expr {
        match (a, b) {
            (a, _) if a.is_zero() => Expr::Number(0.0),
            (_, b) if b.is_zero() => Expr::Number(0.0),
            (a, b) if a.is_one() => b,
            (a, b) if b.is_one() => a,
            (Expr::Number(x), Expr::Number(y)) => Expr::Number(x * y),
            (a, b) => Expr::Mul(Box::new(a), Box::new(b)),
        }
    }

    pub fn div(a: Expr, b: Expr) -> Expr {
        match (a, b) {
            (a, b) if b.is_one() => a,
            (a, b) => Expr::Div(Box::new(a), Box::new(b)),
        }
    }

    pub fn pow(a: Expr, b: Expr) -> Expr {
        if b.is_one() {
            return a;
        }
        Expr::Pow(Box::new(a), Box::new(b))
    }

    pub fn neg(a: Expr) -> Expr {
        match a {
            Expr::Number(x) => Expr::Number(-x),
            Expr::Neg(inner) => *inner,
            a => Expr::Neg(Box::new(a)),
        }
    }

    pub fn call(f: Func, a: Expr) -> Expr {
        Expr::Call(f, Box::new(a))
    }

    /// Evaluates at time `t` with real parameter bindings. Any non-finite
    /// intermediate (division by zero, log of zero, overflow) is an error.
    pub fn eval(&self, t: f64, params: &Bindings) -> Result<C64> {
        let v = match self {
            Expr::Number(x) => C64::new(*x, 0.0),
            Expr::ImaginaryUnit => C64::new(0.0, 1.0),
            Expr::Time => C64::new(t, 0.0),
            Expr::Param(name) => match params.get(name) {
                Some(x) => C64::new(*x, 0.0),
                None => return Err(Error::UnboundParameter(name.clone())),
            },
            Expr::Neg(a) => {
                // clear signed zeros so negated literals stay on the
                // principal side of the sqrt/log/arccos branch cuts
                let v = -a.eval(t, params)?;
                C64::new(v.re + 0.0, v.im + 0.0)
            }
            Expr::Add(a, b) => a.eval(t, params)? + b.eval(t, params)?,
            Expr::Sub(a, b) => a.eval(t, params)? - b.eval(t, params)?,
            Expr::Mul(a, b) => a.eval(t, params)? * b.eval(t, params)?,
            Expr::Div(a, b) => {
                let denom = b.eval(t, params)?;
                if denom.norm() == 0.0 {
                    return Err(Error::Evaluation("division by zero".into()));
                }
                a.eval(t, params)? / denom
            }
            Expr::Pow(a, b) => complex_pow(a.eval(t, params)?, b.eval(t, params)?),
            Expr::Call(f, a) => f.apply(a.eval(t, params)?),
        };
        if !v.re.is_finite() || !v.im.is_finite() {
            return Err(Error::Evaluation(format!(
                "non-finite value from `{self}` at t = {t}"
            )));
        }
        Ok(v)
    }

    /// Symbolic derivative with respect to `t`; parameters are constants.
    pub fn differentiate(&self) -> Expr {
        match self {
            Expr::Number(_) | Expr::ImaginaryUnit | Expr::Param(_) => Expr::Number(0.0),
            Expr::Time => Expr::Number(1.0),
            Expr::Neg(a) => Expr::neg(a.differentiate()),
            Expr::Add(a, b) => Expr::add(a.differentiate(), b.differentiate()),
            Expr::Sub(a, b) => Expr::sub(a.differentiate(), b.differentiate()),
            Expr::Mul(a, b) => Expr::add(
                Expr::mul(a.differentiate(), (**b).clone()),
                Expr::mul((**a).clone(), b.differentiate()),
            ),
            Expr::Div(a, b) => Expr::div(
                Expr::sub(
                    Expr::mul(a.differentiate(), (**b).clone()),
                    Expr::mul((**a).clone(), b.differentiate()),
                ),
                Expr::pow((**b).clone(), Expr::Number(2.0)),
            ),
            Expr::Pow(a, b) => {
                let da = a.differentiate();
                let db = b.differentiate();
                if db.is_zero() {
                    // d(u^c) = c u^(c-1) u'
                    Expr::mul(
                        Expr::mul(
                            (**b).clone(),
                            Expr::pow((**a).clone(), Expr::sub((**b).clone(), Expr::Number(1.0))),
                        ),
                        da,
                    )
                } else {
                    // d(u^v) = u^v (v' log u + v u' / u)
                    Expr::mul(
                        Expr::pow((**a).clone(), (**b).clone()),
                        Expr::add(
                            Expr::mul(db, Expr::call(Func::Log, (**a).clone())),
                            Expr::mul((**b).clone(), Expr::div(da, (**a).clone())),
                        ),
                    )
                }
            }
            Expr::Call(f, a) => {
                let da = a.differentiate();
                let u = (**a).clone();
                let outer = match f {
                    Func::Sin => Expr::call(Func::Cos, u),
                    Func::Cos => Expr::neg(Expr::call(Func::Sin, u)),
                    Func::Tan => Expr::div(
                        Expr::Number(1.0),
                        Expr::pow(Expr::call(Func::Cos, u), Expr::Number(2.0)),
                    ),
                    Func::Exp => Expr::call(Func::Exp, u),
                    Func::Log => Expr::div(Expr::Number(1.0), u),
                    Func::Sqrt => Expr::div(
                        Expr::Number(1.0),
                        Expr::mul(Expr::Number(2.0), Expr::call(Func::Sqrt, u)),
                    ),
                    Func::Arccos => Expr::neg(Expr::div(
                        Expr::Number(1.0),
                        Expr::call(
                            Func::Sqrt,
                            Expr::sub(Expr::Number(1.0), Expr::pow(u, Expr::Number(2.0))),
                        ),
                    )),
                };
                Expr::mul(outer, da)
            }
        }
    }

    pub fn depends_on_time(&self) -> bool {
        match self {
            Expr::Time => true,
            Expr::Number(_) | Expr::ImaginaryUnit | Expr::Param(_) => false,
            Expr::Neg(a) | Expr::Call(_, a) => a.depends_on_time(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b)
            | Expr::Pow(a, b) => a.depends_on_time() || b.depends_on_time(),
        }
    }
}

/// Integer exponents go through repeated multiplication so that `0^2 = 0` and
/// negative bases stay exact; everything else takes the principal branch.
fn complex_pow(base: C64, exp: C64) -> C64 {
    if exp.im == 0.0 && exp.re.fract() == 0.0 && exp.re.abs() <= 64.0 {
        let n = exp.re as i64;
        let mut acc = C64::new(1.0, 0.0);
        for _ in 0..n.unsigned_abs() {
            acc *= base;
        }
        if n < 0 {
            acc = C64::new(1.0, 0.0) / acc;
        }
        acc
    } else {
        base.powc(exp)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Number(v) => {
                if *v < 0.0 {
                    write!(f, "(-{})", -v)
                } else {
                    write!(f, "{v}")
                }
            }
            Expr::ImaginaryUnit => write!(f, "i"),
            Expr::Time => write!(f, "t"),
            Expr::Param(name) => write!(f, "{name}"),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Div(a, b) => write!(f, "({a} / {b})"),
            Expr::Pow(a, b) => write!(f, "({a} ^ {b})"),
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Token {
    Number(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

struct Parser {
    tokens: Vec<(Token, usize)>, // token with 1-based column
    pos: usize,
    end_col: usize,
}

impl Parser {
    fn new(src: &str) -> Result<Self> {
        let mut tokens = Vec::new();
        let chars: Vec<char> = src.chars().collect();
        let mut idx = 0;
        while idx < chars.len() {
            let col = idx + 1;
            let ch = chars[idx];
            match ch {
                ' ' | '\t' => {
                    idx += 1;
                }
                '+' => {
                    tokens.push((Token::Plus, col));
                    idx += 1;
                }
                '-' => {
                    tokens.push((Token::Minus, col));
                    idx += 1;
                }
                '*' => {
                    tokens.push((Token::Star, col));
                    idx += 1;
                }
                '/' => {
                    tokens.push((Token::Slash, col));
                    idx += 1;
                }
                '^' => {
                    tokens.push((Token::Caret, col));
                    idx += 1;
                }
                '(' => {
                    tokens.push((Token::LParen, col));
                    idx += 1;
                }
                ')' => {
                    tokens.push((Token::RParen, col));
                    idx += 1;
                }
                c if c.is_ascii_digit() || c == '.' => {
                    let start = idx;
                    while idx < chars.len() && chars[idx].is_ascii_digit() {
                        idx += 1;
                    }
                    if idx < chars.len() && chars[idx] == '.' {
                        idx += 1;
                        while idx < chars.len() && chars[idx].is_ascii_digit() {
                            idx += 1;
                        }
                    }
                    if idx < chars.len() && (chars[idx] == 'e' || chars[idx] == 'E') {
                        let mut probe = idx + 1;
                        if probe < chars.len() && (chars[probe] == '+' || chars[probe] == '-') {
                            probe += 1;
                        }
                        if probe < chars.len() && chars[probe].is_ascii_digit() {
                            idx = probe;
                            while idx < chars.len() && chars[idx].is_ascii_digit() {
                                idx += 1;
                            }
                        }
                    }
                    let text: String = chars[start..idx].iter().collect();
                    let value = text.parse::<f64>().map_err(|_| {
                        Error::syntax(1, col, format!("invalid numeric literal `{text}`"))
                    })?;
                    tokens.push((Token::Number(value), col));
                }
                c if c.is_ascii_alphabetic() || c == '_' => {
                    let start = idx;
                    while idx < chars.len()
                        && (chars[idx].is_ascii_alphanumeric() || chars[idx] == '_')
                    {
                        idx += 1;
                    }
                    let text: String = chars[start..idx].iter().collect();
                    tokens.push((Token::Ident(text), col));
                }
                other => {
                    return Err(Error::syntax(1, col, format!("unexpected character `{other}`")));
                }
            }
        }
        Ok(Self {
            tokens,
            pos: 0,
            end_col: chars.len() + 1,
        })
    }

    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|(t, _)| t)
    }

    fn col(&self) -> usize {
        self.tokens
            .get(self.pos)
            .map(|(_, c)| *c)
            .unwrap_or(self.end_col)
    }

    fn advance(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).map(|(t, _)| t.clone());
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn parse_full(&mut self) -> Result<Expr> {
        if self.tokens.is_empty() {
            return Err(Error::syntax(1, 1, "empty expression"));
        }
        let expr = self.parse_sum()?;
        if self.peek().is_some() {
            return Err(Error::syntax(
                1,
                self.col(),
                "unexpected trailing input".to_string(),
            ));
        }
        Ok(expr)
    }

    fn parse_sum(&mut self) -> Result<Expr> {
        let mut lhs = self.parse_term()?;
        loop {
            match self.peek() {
                Some(Token::Plus) => {
                    self.advance();
                    let rhs = self.parse_term()?;
                    lhs = Expr::Add(Box::new(lhs), Box::new(rhs));
                }
                Some(Token::Minus) => {
                    self.advance();
                    let rhs = self.parse_term()?;
                    lhs = Expr::Sub(Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn parse_term(&mut self) -> Result<Expr> {
        let mut lhs = self.parse_unary()?;
        loop {
            match self.peek() {
                Some(Token::Star) => {
                    self.advance();
                    let rhs = self.parse_unary()?;
                    lhs = Expr::Mul(Box::new(lhs), Box::new(rhs));
                }
                Some(Token::Slash) => {
                    self.advance();
                    let rhs = self.parse_unary()?;
                    lhs = Expr::Div(Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn parse_unary(&mut self) -> Result<Expr> {
        if matches!(self.peek(), Some(Token::Minus)) {
            self.advance();
            let inner = self.parse_unary()?;
            return Ok(Expr::Neg(Box::new(inner)));
        }
        self.parse_power()
    }

    fn parse_power(&mut self) -> Result<Expr> {
        let base = self.parse_atom()?;
        if matches!(self.peek(), Some(Token::Caret)) {
            self.advance();
            // right-associative; the exponent may start with a unary minus
            let exponent = self.parse_unary()?;
            return Ok(Expr::Pow(Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn parse_atom(&mut self) -> Result<Expr> {
        let col = self.col();
        match self.advance() {
            Some(Token::Number(v)) => Ok(Expr::Number(v)),
            Some(Token::Ident(name)) => {
                if let Some(func) = Func::from_name(&name) {
                    let open_col = self.col();
                    match self.advance() {
                        Some(Token::LParen) => {}
                        _ => {
                            return Err(Error::syntax(
                                1,
                                open_col,
                                format!("expected `(` after function `{name}`"),
                            ))
                        }
                    }
                    let arg = self.parse_sum()?;
                    let close_col = self.col();
                    match self.advance() {
                        Some(Token::RParen) => Ok(Expr::Call(func, Box::new(arg))),
                        _ => Err(Error::syntax(1, close_col, "expected `)`")),
                    }
                } else if name == "i" {
                    Ok(Expr::ImaginaryUnit)
                } else if name == "t" {
                    Ok(Expr::Time)
                } else {
                    Ok(Expr::Param(name))
                }
            }
            Some(Token::LParen) => {
                let inner = self.parse_sum()?;
                let close_col = self.col();
                match self.advance() {
                    Some(Token::RParen) => Ok(inner),
                    _ => Err(Error::syntax(1, close_col, "expected `)`")),
                }
            }
            Some(tok) => Err(Error::syntax(
                1,
                col,
                format!("unexpected token `{}`", token_text(&tok)),
            )),
            None => Err(Error::syntax(1, col, "unexpected end of expression")),
        }
    }
}

fn token_text(tok: &Token) -> String {
    match tok {
        Token::Number(v) => format!("{v}"),
        Token::Ident(s) => s.clone(),
        Token::Plus => "+".into(),
        Token::Minus => "-".into(),
        Token::Star => "*".into(),
        Token::Slash => "/".into(),
        Token::Caret => "^".into(),
        Token::LParen => "(".into(),
        Token::RParen => ")".into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval_str(src: &str, t: f64) -> C64 {
        Expr::parse(src).unwrap().eval(t, &Bindings::new()).unwrap()
    }

    #[test]
    fn literals_and_arithmetic() {
        assert_eq!(eval_str("1 + 2 * 3", 0.0), C64::new(7.0, 0.0));
        assert_eq!(eval_str("(1 + 2) * 3", 0.0), C64::new(9.0, 0.0));
        assert_eq!(eval_str("2 ^ 3 ^ 2", 0.0), C64::new(512.0, 0.0));
        assert_eq!(eval_str("-2 ^ 2", 0.0), C64::new(-4.0, 0.0));
        assert_eq!(eval_str("2 ^ -1", 0.0), C64::new(0.5, 0.0));
        assert_eq!(eval_str("1.5e2", 0.0), C64::new(150.0, 0.0));
    }

    #[test]
    fn imaginary_unit_and_time() {
        assert_eq!(eval_str("i * i", 0.0), C64::new(-1.0, 0.0));
        assert_eq!(eval_str("t + 1", 2.0), C64::new(3.0, 0.0));
        let v = eval_str("exp(i * t)", std::f64::consts::PI);
        assert!((v - C64::new(-1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn one_plus_small_sine_at_zero() {
        assert_eq!(eval_str("1 + 0.1*sin(t)", 0.0), C64::new(1.0, 0.0));
    }

    #[test]
    fn parameter_binding() {
        let expr = Expr::parse("r*exp(i*beta)").unwrap();
        let mut params = Bindings::new();
        params.insert("r".into(), 2.0);
        params.insert("beta".into(), 0.0);
        for t in [0.0, 1.3, -4.0] {
            assert_eq!(expr.eval(t, &params).unwrap(), C64::new(2.0, 0.0));
        }
    }

    #[test]
    fn unbound_parameter_is_reported() {
        let expr = Expr::parse("a + 1").unwrap();
        match expr.eval(0.0, &Bindings::new()) {
            Err(Error::UnboundParameter(name)) => assert_eq!(name, "a"),
            other => panic!("expected UnboundParameter, got {other:?}"),
        }
    }

    #[test]
    fn division_by_zero_is_an_error() {
        let expr = Expr::parse("1 / t").unwrap();
        assert!(matches!(
            expr.eval(0.0, &Bindings::new()),
            Err(Error::Evaluation(_))
        ));
        assert!(expr.eval(2.0, &Bindings::new()).is_ok());
    }

    #[test]
    fn log_of_zero_is_an_error() {
        let expr = Expr::parse("log(t)").unwrap();
        assert!(matches!(
            expr.eval(0.0, &Bindings::new()),
            Err(Error::Evaluation(_))
        ));
    }

    #[test]
    fn complex_branches_are_principal() {
        // sqrt(-1) = i, arccos(2) = i log(...) with positive imaginary part convention
        let v = eval_str("sqrt(-1)", 0.0);
        assert!((v - C64::new(0.0, 1.0)).norm() < 1e-15);
        let w = eval_str("arccos(2)", 0.0);
        assert!(w.re.abs() < 1e-15);
    }

    #[test]
    fn malformed_expression_reports_column() {
        match Expr::parse("1 + * 2") {
            Err(Error::Syntax { line, column, .. }) => {
                assert_eq!(line, 1);
                assert_eq!(column, 5);
            }
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn missing_close_paren_reports_end() {
        match Expr::parse("sin(t") {
            Err(Error::Syntax { column, .. }) => assert_eq!(column, 6),
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_function_names_are_rejected() {
        // `foo(` is an identifier followed by a parse error: identifiers are
        // parameters, so a following `(` is trailing input.
        assert!(Expr::parse("foo(1)").is_err());
    }

    #[test]
    fn zero_to_integer_power_is_zero() {
        assert_eq!(eval_str("t^2", 0.0), C64::new(0.0, 0.0));
        assert_eq!(eval_str("(-2)^3", 0.0), C64::new(-8.0, 0.0));
    }

    #[test]
    fn derivative_of_polynomial_is_exact() {
        let expr = Expr::parse("3*t^2 + 2*t + 7").unwrap();
        let d = expr.differentiate();
        for t in [-2.0, 0.0, 0.7, 3.1] {
            let v = d.eval(t, &Bindings::new()).unwrap();
            assert!((v - C64::new(6.0 * t + 2.0, 0.0)).norm() < 1e-13);
        }
    }

    #[test]
    fn derivative_chain_rule() {
        let expr = Expr::parse("sin(2*t)").unwrap();
        let d = expr.differentiate();
        for t in [0.0, 0.4, 1.9] {
            let v = d.eval(t, &Bindings::new()).unwrap();
            assert!((v - C64::new(2.0 * (2.0 * t).cos(), 0.0)).norm() < 1e-13);
        }
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let exprs = [
            "exp(i*0.3*t)",
            "sqrt(1 + t^2)",
            "tan(0.2*t) / (2 + cos(t))",
            "log(2 + sin(t))",
            "arccos(0.5*sin(t))",
            "t^(1 + 0.1*t)",
        ];
        let h = 1e-6;
        for src in exprs {
            let expr = Expr::parse(src).unwrap();
            let d = expr.differentiate();
            for t in [0.3, 1.1, 2.4] {
                let fd = (expr.eval(t + h, &Bindings::new()).unwrap()
                    - expr.eval(t - h, &Bindings::new()).unwrap())
                    / C64::new(2.0 * h, 0.0);
                let exact = d.eval(t, &Bindings::new()).unwrap();
                assert!(
                    (fd - exact).norm() < 1e-7,
                    "{src} at t={t}: fd={fd} exact={exact}"
                );
            }
        }
    }

    #[test]
    fn display_round_trips_through_parser() {
        let srcs = ["1 + 2*t", "sin(t)^2 - cos(t)/3", "-(t + i)*exp(t)"];
        for src in srcs {
            let expr = Expr::parse(src).unwrap();
            let printed = expr.to_string();
            let reparsed = Expr::parse(&printed).unwrap();
            for t in [0.0, 0.9] {
                let a = expr.eval(t, &Bindings::new()).unwrap();
                let b = reparsed.eval(t, &Bindings::new()).unwrap();
                assert!((a - b).norm() < 1e-15);
            }
        }
    }
}
