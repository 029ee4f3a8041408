//! The closed predicate language: comparisons, arithmetic on numeric
//! bindings, set membership, and boolean connectives.

use std::fmt;

use super::lexer::{lex, quote, Spanned, Tok};
use super::IrError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Or,
    And,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    fn precedence(self) -> u8 {
        match self {
            BinOp::Or => 1,
            BinOp::And => 2,
            BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => 4,
            BinOp::Add | BinOp::Sub => 5,
            BinOp::Mul | BinOp::Div => 6,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Or => "or",
            BinOp::And => "and",
            BinOp::Eq => "=",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
        }
    }

    pub fn is_comparison(self) -> bool {
        self.precedence() == 4
    }

    pub fn is_arithmetic(self) -> bool {
        self.precedence() >= 5
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Str(String),
    Bool(bool),
    Var(String),
    Not(Box<Expr>),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    In {
        expr: Box<Expr>,
        list: Vec<Expr>,
        negated: bool,
    },
}

const PREC_NOT: u8 = 3;
const PREC_IN: u8 = 4;
const PREC_NEG: u8 = 7;
const PREC_ATOM: u8 = 8;

impl Expr {
    fn precedence(&self) -> u8 {
        match self {
            Expr::Binary(op, ..) => op.precedence(),
            Expr::Not(_) => PREC_NOT,
            Expr::In { .. } => PREC_IN,
            Expr::Neg(_) => PREC_NEG,
            _ => PREC_ATOM,
        }
    }

    /// Variables referenced, in first-occurrence order.
    pub fn vars(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Expr::Var(v) => {
                if !out.contains(&v.as_str()) {
                    out.push(v);
                }
            }
            Expr::Not(e) | Expr::Neg(e) => e.collect_vars(out),
            Expr::Binary(_, a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Expr::In { expr, list, .. } => {
                expr.collect_vars(out);
                for e in list {
                    e.collect_vars(out);
                }
            }
            Expr::Num(_) | Expr::Str(_) | Expr::Bool(_) => {}
        }
    }

    pub fn parse(src: &str) -> Result<Expr, IrError> {
        let toks = lex(src)?;
        let mut p = ExprParser { toks: &toks, pos: 0 };
        let e = p.expr()?;
        if let Some(t) = toks.get(p.pos) {
            return Err(syntax(t, format!("unexpected {} after expression", t.tok.describe())));
        }
        Ok(e)
    }
}

fn fmt_num(n: f64) -> String {
    format!("{n}")
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let child = |f: &mut fmt::Formatter<'_>, e: &Expr, min: u8| -> fmt::Result {
            if e.precedence() < min {
                write!(f, "({e})")
            } else {
                write!(f, "{e}")
            }
        };
        match self {
            Expr::Num(n) => f.write_str(&fmt_num(*n)),
            Expr::Str(s) => f.write_str(&quote(s)),
            Expr::Bool(b) => write!(f, "{b}"),
            Expr::Var(v) => f.write_str(v),
            Expr::Not(e) => {
                f.write_str("not ")?;
                child(f, e, PREC_NOT)
            }
            Expr::Neg(e) => {
                f.write_str("-")?;
                child(f, e, PREC_ATOM)
            }
            Expr::Binary(op, a, b) => {
                let p = op.precedence();
                // Comparisons do not chain, so both sides need a tighter operand.
                let left_min = if op.is_comparison() { p + 1 } else { p };
                child(f, a, left_min)?;
                write!(f, " {} ", op.symbol())?;
                child(f, b, p + 1)
            }
            Expr::In {
                expr,
                list,
                negated,
            } => {
                child(f, expr, PREC_IN + 1)?;
                f.write_str(if *negated { " not in [" } else { " in [" })?;
                for (i, e) in list.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    child(f, e, PREC_IN + 1)?;
                }
                f.write_str("]")
            }
        }
    }
}

fn syntax(t: &Spanned, message: String) -> IrError {
    IrError::Syntax {
        line: t.line,
        col: t.col,
        message,
    }
}

/// Recursive-descent parser over a shared token stream. Stops at the first
/// token that cannot continue an expression.
pub(crate) struct ExprParser<'a> {
    pub toks: &'a [Spanned],
    pub pos: usize,
}

impl ExprParser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|s| &s.tok)
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(s)) if s == kw)
    }

    fn eof_err(&self) -> IrError {
        match self.toks.last() {
            Some(t) => syntax(t, "unexpected end of input in expression".into()),
            None => IrError::Syntax {
                line: 1,
                col: 1,
                message: "empty expression".into(),
            },
        }
    }

    pub fn expr(&mut self) -> Result<Expr, IrError> {
        self.or()
    }

    fn or(&mut self) -> Result<Expr, IrError> {
        let mut lhs = self.and()?;
        while self.is_kw("or") {
            self.pos += 1;
            let rhs = self.and()?;
            lhs = Expr::Binary(BinOp::Or, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<Expr, IrError> {
        let mut lhs = self.not()?;
        while self.is_kw("and") {
            self.pos += 1;
            let rhs = self.not()?;
            lhs = Expr::Binary(BinOp::And, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn not(&mut self) -> Result<Expr, IrError> {
        if self.is_kw("not") {
            self.pos += 1;
            return Ok(Expr::Not(Box::new(self.not()?)));
        }
        self.comparison()
    }

    fn comparison(&mut self) -> Result<Expr, IrError> {
        let lhs = self.additive()?;
        let op = match self.peek() {
            Some(Tok::Assign) | Some(Tok::EqEq) => BinOp::Eq,
            Some(Tok::Ne) => BinOp::Ne,
            Some(Tok::Lt) => BinOp::Lt,
            Some(Tok::Le) => BinOp::Le,
            Some(Tok::Gt) => BinOp::Gt,
            Some(Tok::Ge) => BinOp::Ge,
            Some(Tok::Ident(s)) if s == "in" => {
                self.pos += 1;
                return self.in_list(lhs, false);
            }
            Some(Tok::Ident(s))
                if s == "not"
                    && matches!(self.toks.get(self.pos + 1).map(|t| &t.tok), Some(Tok::Ident(k)) if k == "in") =>
            {
                self.pos += 2;
                return self.in_list(lhs, true);
            }
            _ => return Ok(lhs),
        };
        self.pos += 1;
        let rhs = self.additive()?;
        Ok(Expr::Binary(op, Box::new(lhs), Box::new(rhs)))
    }

    fn in_list(&mut self, lhs: Expr, negated: bool) -> Result<Expr, IrError> {
        self.expect(Tok::LBracket)?;
        let mut list = Vec::new();
        if self.peek() != Some(&Tok::RBracket) {
            loop {
                list.push(self.additive()?);
                if self.peek() == Some(&Tok::Comma) {
                    self.pos += 1;
                    if self.peek() == Some(&Tok::RBracket) {
                        break;
                    }
                } else {
                    break;
                }
            }
        }
        self.expect(Tok::RBracket)?;
        Ok(Expr::In {
            expr: Box::new(lhs),
            list,
            negated,
        })
    }

    fn expect(&mut self, want: Tok) -> Result<(), IrError> {
        match self.toks.get(self.pos) {
            Some(t) if t.tok == want => {
                self.pos += 1;
                Ok(())
            }
            Some(t) => Err(syntax(t, format!("expected {}, found {}", want.describe(), t.tok.describe()))),
            None => Err(self.eof_err()),
        }
    }

    fn additive(&mut self) -> Result<Expr, IrError> {
        let mut lhs = self.multiplicative()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Plus) => BinOp::Add,
                Some(Tok::Minus) => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.multiplicative()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn multiplicative(&mut self) -> Result<Expr, IrError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Star) => BinOp::Mul,
                Some(Tok::Slash) => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr, IrError> {
        if self.peek() == Some(&Tok::Minus) {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Expr, IrError> {
        let Some(t) = self.toks.get(self.pos) else {
            return Err(self.eof_err());
        };
        self.pos += 1;
        match &t.tok {
            Tok::Num(n) => n
                .parse::<f64>()
                .map(Expr::Num)
                .map_err(|_| syntax(t, format!("bad number `{n}`"))),
            Tok::Str(s) => Ok(Expr::Str(s.clone())),
            Tok::Ident(s) => match s.as_str() {
                "true" => Ok(Expr::Bool(true)),
                "false" => Ok(Expr::Bool(false)),
                "and" | "or" | "not" | "in" => {
                    Err(syntax(t, format!("unexpected keyword `{s}`")))
                }
                _ => Ok(Expr::Var(s.clone())),
            },
            Tok::LParen => {
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            other => Err(syntax(t, format!("unexpected {} in expression", other.describe()))),
        }
    }
}

// ---------------------------------------------------------------------------
// Evaluation

/// Runtime value. Variables carry their bound text plus a numeric view when
/// the text is a plain decimal.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Num(f64),
    Text { text: String, num: Option<f64> },
    Bool(bool),
}

impl Value {
    pub fn from_binding(text: &str) -> Value {
        Value::Text {
            text: text.to_string(),
            num: numeric_view(text),
        }
    }

    fn as_num(&self) -> Option<f64> {
        match self {
            Value::Num(n) => Some(*n),
            Value::Text { num, .. } => *num,
            Value::Bool(_) => None,
        }
    }

    fn describe(&self) -> String {
        match self {
            Value::Num(n) => fmt_num(*n),
            Value::Text { text, .. } => quote(text),
            Value::Bool(b) => b.to_string(),
        }
    }
}

/// Numeric view of a binding: the whole text must match `\d+\.?\d*`.
pub fn numeric_view(text: &str) -> Option<f64> {
    let bytes = text.as_bytes();
    let int_len = bytes.iter().take_while(|b| b.is_ascii_digit()).count();
    if int_len == 0 {
        return None;
    }
    let rest = &bytes[int_len..];
    let rest = rest.strip_prefix(b".").unwrap_or(rest);
    if !rest.iter().all(|b| b.is_ascii_digit()) {
        return None;
    }
    text.trim_end_matches('.').parse().ok()
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("unbound variable `{0}`")]
    UnboundVariable(String),
    #[error("type error: {0}")]
    TypeError(String),
}

/// Read access to bound variables.
pub trait Env {
    fn lookup(&self, name: &str) -> Option<&str>;
}

impl Env for [(String, String)] {
    fn lookup(&self, name: &str) -> Option<&str> {
        self.iter().rev().find(|(k, _)| k == name).map(|(_, v)| v.as_str())
    }
}

impl Env for Vec<(String, String)> {
    fn lookup(&self, name: &str) -> Option<&str> {
        self.as_slice().lookup(name)
    }
}

impl Env for std::collections::BTreeMap<String, String> {
    fn lookup(&self, name: &str) -> Option<&str> {
        self.get(name).map(String::as_str)
    }
}

impl Expr {
    /// Evaluates to a boolean; a non-boolean result is a type error.
    pub fn eval_bool(&self, env: &(impl Env + ?Sized)) -> Result<bool, EvalError> {
        match self.eval(env)? {
            Value::Bool(b) => Ok(b),
            other => Err(EvalError::TypeError(format!(
                "predicate `{self}` produced {} instead of a boolean",
                other.describe()
            ))),
        }
    }

    pub fn eval(&self, env: &(impl Env + ?Sized)) -> Result<Value, EvalError> {
        match self {
            Expr::Num(n) => Ok(Value::Num(*n)),
            Expr::Str(s) => Ok(Value::Text {
                text: s.clone(),
                num: None,
            }),
            Expr::Bool(b) => Ok(Value::Bool(*b)),
            Expr::Var(v) => env
                .lookup(v)
                .map(Value::from_binding)
                .ok_or_else(|| EvalError::UnboundVariable(v.clone())),
            Expr::Not(e) => match e.eval(env)? {
                Value::Bool(b) => Ok(Value::Bool(!b)),
                other => Err(type_err("not", &other)),
            },
            Expr::Neg(e) => match e.eval(env)?.as_num() {
                Some(n) => Ok(Value::Num(-n)),
                None => Err(EvalError::TypeError(format!("cannot negate `{e}`"))),
            },
            Expr::Binary(op @ (BinOp::And | BinOp::Or), a, b) => {
                let lhs = match a.eval(env)? {
                    Value::Bool(x) => x,
                    other => return Err(type_err(op.symbol(), &other)),
                };
                if (*op == BinOp::And && !lhs) || (*op == BinOp::Or && lhs) {
                    return Ok(Value::Bool(lhs));
                }
                match b.eval(env)? {
                    Value::Bool(y) => Ok(Value::Bool(y)),
                    other => Err(type_err(op.symbol(), &other)),
                }
            }
            Expr::Binary(op, a, b) => {
                let x = a.eval(env)?;
                let y = b.eval(env)?;
                binary(*op, &x, &y)
            }
            Expr::In {
                expr,
                list,
                negated,
            } => {
                let x = expr.eval(env)?;
                let mut found = false;
                for item in list {
                    let y = item.eval(env)?;
                    if values_equal(&x, &y)? {
                        found = true;
                        break;
                    }
                }
                Ok(Value::Bool(found != *negated))
            }
        }
    }
}

fn type_err(op: &str, v: &Value) -> EvalError {
    EvalError::TypeError(format!("`{op}` applied to {}", v.describe()))
}

/// Equality: numbers compare numerically (a variable qualifies through its
/// numeric view), texts compare as strings, booleans with booleans.
fn values_equal(x: &Value, y: &Value) -> Result<bool, EvalError> {
    match (x, y) {
        (Value::Bool(a), Value::Bool(b)) => Ok(a == b),
        (Value::Num(_), _) | (_, Value::Num(_)) => match (x.as_num(), y.as_num()) {
            (Some(a), Some(b)) => Ok(a == b),
            _ => Err(EvalError::TypeError(format!(
                "cannot compare {} with {} numerically",
                x.describe(),
                y.describe()
            ))),
        },
        (Value::Text { text: a, .. }, Value::Text { text: b, .. }) => Ok(a == b),
        _ => Err(EvalError::TypeError(format!(
            "cannot compare {} with {}",
            x.describe(),
            y.describe()
        ))),
    }
}

fn binary(op: BinOp, x: &Value, y: &Value) -> Result<Value, EvalError> {
    match op {
        BinOp::Eq => values_equal(x, y).map(Value::Bool),
        BinOp::Ne => values_equal(x, y).map(|b| Value::Bool(!b)),
        _ => {
            let (Some(a), Some(b)) = (x.as_num(), y.as_num()) else {
                return Err(EvalError::TypeError(format!(
                    "`{}` needs numbers, got {} and {}",
                    op.symbol(),
                    x.describe(),
                    y.describe()
                )));
            };
            Ok(match op {
                BinOp::Lt => Value::Bool(a < b),
                BinOp::Le => Value::Bool(a <= b),
                BinOp::Gt => Value::Bool(a > b),
                BinOp::Ge => Value::Bool(a >= b),
                BinOp::Add => Value::Num(a + b),
                BinOp::Sub => Value::Num(a - b),
                BinOp::Mul => Value::Num(a * b),
                BinOp::Div => Value::Num(a / b),
                BinOp::Or | BinOp::And | BinOp::Eq | BinOp::Ne => unreachable!(),
            })
        }
    }
}
