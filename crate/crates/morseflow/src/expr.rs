//! Scalar expressions in ambient coordinates `x1..xN`: parsing, evaluation
//! and exact symbolic differentiation.
//!
//! Grammar:
//! ```text
//! expr   := term (('+'|'-') term)*
//! term   := factor (('*'|'/') factor)*
//! factor := atom ('^' integer)?
//! atom   := number | 'x'integer | func '(' expr ')' | '(' expr ')'
//! func   := sin | cos | exp | sqrt
//! ```
//! Exponents are integer-only so differentiation stays closed-form.
//! Expressions are immutable after construction and safe to share across
//! threads.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExprError {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at offset {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("variable x{index} out of range (ambient dimension {n_vars})")]
    VariableOutOfRange { index: usize, n_vars: usize },
    #[error("domain error at node `{node}`: {message}")]
    Domain { node: String, message: String },
    #[error("point has length {got}, expected {expected}")]
    DimensionMismatch { got: usize, expected: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryFn {
    Sin,
    Cos,
    Exp,
    Sqrt,
}

impl UnaryFn {
    fn name(self) -> &'static str {
        match self {
            UnaryFn::Sin => "sin",
            UnaryFn::Cos => "cos",
            UnaryFn::Exp => "exp",
            UnaryFn::Sqrt => "sqrt",
        }
    }
}

/// Expression tree. Variables are zero-based internally; the surface
/// syntax `x1..xN` is one-based.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(usize),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    /// Integer power. Negative exponents are allowed and differentiate
    /// through the quotient rule implicitly.
    Pow(Box<Expr>, i32),
    Unary(UnaryFn, Box<Expr>),
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    n_vars: usize,
}

impl<'a> Parser<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn err(&self, message: impl Into<String>) -> ExprError {
        ExprError::Syntax {
            offset: self.pos,
            message: message.into(),
        }
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Some(b'-') => {
                    self.pos += 1;
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.factor()?;
        loop {
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.factor()?));
                }
                Some(b'/') => {
                    self.pos += 1;
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.factor()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn factor(&mut self) -> Result<Expr, ExprError> {
        let atom = self.atom()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            self.skip_ws();
            let neg = if self.src.get(self.pos) == Some(&b'-') {
                self.pos += 1;
                true
            } else {
                false
            };
            let start = self.pos;
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if start == self.pos {
                return Err(self.err("expected integer exponent after `^`"));
            }
            let digits = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
            let mut k: i32 = digits
                .parse()
                .map_err(|_| self.err("exponent out of range"))?;
            if neg {
                k = -k;
            }
            return Ok(Expr::Pow(Box::new(atom), k));
        }
        Ok(atom)
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err(self.err("expected `)`"));
                }
                self.pos += 1;
                Ok(inner)
            }
            Some(b'-') => {
                // unary minus as 0 - atom
                self.pos += 1;
                let inner = self.factor()?;
                Ok(Expr::Sub(Box::new(Expr::Const(0.0)), Box::new(inner)))
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.identifier(),
            _ => Err(self.err("expected number, variable, function or `(`")),
        }
    }

    fn number(&mut self) -> Result<Expr, ExprError> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_digit() || self.src[self.pos] == b'.')
        {
            self.pos += 1;
        }
        // exponent suffix like 1e-3
        if self.src.get(self.pos) == Some(&b'e') || self.src.get(self.pos) == Some(&b'E') {
            let mark = self.pos;
            self.pos += 1;
            if self.src.get(self.pos) == Some(&b'-') || self.src.get(self.pos) == Some(&b'+') {
                self.pos += 1;
            }
            if self.src.get(self.pos).is_some_and(|b| b.is_ascii_digit()) {
                while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
            } else {
                self.pos = mark;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        let value: f64 = text.parse().map_err(|_| ExprError::Syntax {
            offset: start,
            message: format!("malformed number `{text}`"),
        })?;
        Ok(Expr::Const(value))
    }

    fn identifier(&mut self) -> Result<Expr, ExprError> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
        {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        if let Some(rest) = name.strip_prefix('x') {
            if let Ok(index) = rest.parse::<usize>() {
                if index == 0 || index > self.n_vars {
                    return Err(ExprError::VariableOutOfRange {
                        index,
                        n_vars: self.n_vars,
                    });
                }
                return Ok(Expr::Var(index - 1));
            }
        }
        let func = match name {
            "sin" => UnaryFn::Sin,
            "cos" => UnaryFn::Cos,
            "exp" => UnaryFn::Exp,
            "sqrt" => UnaryFn::Sqrt,
            _ => {
                return Err(ExprError::UnknownIdentifier {
                    name: name.to_string(),
                    offset: start,
                })
            }
        };
        if self.peek() != Some(b'(') {
            return Err(self.err(format!("expected `(` after `{name}`")));
        }
        self.pos += 1;
        let arg = self.expr()?;
        if self.peek() != Some(b')') {
            return Err(self.err("expected `)`"));
        }
        self.pos += 1;
        Ok(Expr::Unary(func, Box::new(arg)))
    }
}

/// Parse `text` over variables `x1..x{n_vars}`.
pub fn parse(text: &str, n_vars: usize) -> Result<Expr, ExprError> {
    let mut p = Parser {
        src: text.as_bytes(),
        pos: 0,
        n_vars,
    };
    let e = p.expr()?;
    if p.peek().is_some() {
        return Err(p.err("trailing input"));
    }
    Ok(e)
}

impl Expr {
    pub fn evaluate(&self, point: &[f64]) -> Result<f64, ExprError> {
        match self {
            Expr::Const(c) => Ok(*c),
            Expr::Var(i) => point.get(*i).copied().ok_or(ExprError::DimensionMismatch {
                got: point.len(),
                expected: *i + 1,
            }),
            Expr::Add(a, b) => Ok(a.evaluate(point)? + b.evaluate(point)?),
            Expr::Sub(a, b) => Ok(a.evaluate(point)? - b.evaluate(point)?),
            Expr::Mul(a, b) => Ok(a.evaluate(point)? * b.evaluate(point)?),
            Expr::Div(a, b) => {
                let d = b.evaluate(point)?;
                if d == 0.0 {
                    return Err(ExprError::Domain {
                        node: self.to_string(),
                        message: "division by zero".into(),
                    });
                }
                Ok(a.evaluate(point)? / d)
            }
            Expr::Pow(a, k) => {
                let base = a.evaluate(point)?;
                if base == 0.0 && *k < 0 {
                    return Err(ExprError::Domain {
                        node: self.to_string(),
                        message: "zero raised to a negative power".into(),
                    });
                }
                Ok(base.powi(*k))
            }
            Expr::Unary(f, a) => {
                let v = a.evaluate(point)?;
                match f {
                    UnaryFn::Sin => Ok(v.sin()),
                    UnaryFn::Cos => Ok(v.cos()),
                    UnaryFn::Exp => Ok(v.exp()),
                    UnaryFn::Sqrt => {
                        if v < 0.0 {
                            Err(ExprError::Domain {
                                node: self.to_string(),
                                message: format!("sqrt of negative value {v}"),
                            })
                        } else {
                            Ok(v.sqrt())
                        }
                    }
                }
            }
        }
    }

    /// Exact derivative with respect to variable `var` (zero-based).
    /// Constant subtrees fold; no further simplification is attempted,
    /// correctness is value-level.
    pub fn differentiate(&self, var: usize) -> Expr {
        use Expr::*;
        let d = match self {
            Const(_) => Const(0.0),
            Var(i) => Const(if *i == var { 1.0 } else { 0.0 }),
            Add(a, b) => Add(
                Box::new(a.differentiate(var)),
                Box::new(b.differentiate(var)),
            ),
            Sub(a, b) => Sub(
                Box::new(a.differentiate(var)),
                Box::new(b.differentiate(var)),
            ),
            Mul(a, b) => Add(
                Box::new(Mul(Box::new(a.differentiate(var)), b.clone())),
                Box::new(Mul(a.clone(), Box::new(b.differentiate(var)))),
            ),
            Div(a, b) => Div(
                Box::new(Sub(
                    Box::new(Mul(Box::new(a.differentiate(var)), b.clone())),
                    Box::new(Mul(a.clone(), Box::new(b.differentiate(var)))),
                )),
                Box::new(Pow(b.clone(), 2)),
            ),
            Pow(a, k) => {
                if *k == 0 {
                    Const(0.0)
                } else {
                    // k * a^(k-1) * a'
                    Mul(
                        Box::new(Mul(
                            Box::new(Const(f64::from(*k))),
                            Box::new(Pow(a.clone(), k - 1)),
                        )),
                        Box::new(a.differentiate(var)),
                    )
                }
            }
            Unary(f, a) => {
                let outer = match f {
                    UnaryFn::Sin => Unary(UnaryFn::Cos, a.clone()),
                    UnaryFn::Cos => Sub(
                        Box::new(Const(0.0)),
                        Box::new(Unary(UnaryFn::Sin, a.clone())),
                    ),
                    UnaryFn::Exp => Unary(UnaryFn::Exp, a.clone()),
                    UnaryFn::Sqrt => Div(
                        Box::new(Const(0.5)),
                        Box::new(Unary(UnaryFn::Sqrt, a.clone())),
                    ),
                };
                Mul(Box::new(outer), Box::new(a.differentiate(var)))
            }
        };
        d.fold_constants()
    }

    fn fold_constants(self) -> Expr {
        use Expr::*;
        match self {
            Add(a, b) => match (a.fold_constants(), b.fold_constants()) {
                (Const(x), Const(y)) => Const(x + y),
                (Const(x), e) if x == 0.0 => e,
                (e, Const(y)) if y == 0.0 => e,
                (x, y) => Add(Box::new(x), Box::new(y)),
            },
            Sub(a, b) => match (a.fold_constants(), b.fold_constants()) {
                (Const(x), Const(y)) => Const(x - y),
                (e, Const(y)) if y == 0.0 => e,
                (x, y) => Sub(Box::new(x), Box::new(y)),
            },
            Mul(a, b) => match (a.fold_constants(), b.fold_constants()) {
                (Const(x), Const(y)) => Const(x * y),
                (Const(x), _) | (_, Const(x)) if x == 0.0 => Const(0.0),
                (Const(x), e) if x == 1.0 => e,
                (e, Const(y)) if y == 1.0 => e,
                (x, y) => Mul(Box::new(x), Box::new(y)),
            },
            Div(a, b) => match (a.fold_constants(), b.fold_constants()) {
                (Const(x), _) if x == 0.0 => Const(0.0),
                (e, Const(y)) if y == 1.0 => e,
                (x, y) => Div(Box::new(x), Box::new(y)),
            },
            Pow(a, k) => match (a.fold_constants(), k) {
                (_, 0) => Const(1.0),
                (e, 1) => e,
                (Const(x), k) => Const(x.powi(k)),
                (e, k) => Pow(Box::new(e), k),
            },
            Unary(f, a) => Unary(f, Box::new(a.fold_constants())),
            other => other,
        }
    }

    /// Largest variable index referenced, plus one.
    pub fn min_dimension(&self) -> usize {
        match self {
            Expr::Const(_) => 0,
            Expr::Var(i) => i + 1,
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.min_dimension().max(b.min_dimension())
            }
            Expr::Pow(a, _) => a.min_dimension(),
            Expr::Unary(_, a) => a.min_dimension(),
        }
    }

    /// Flatten into a stack program for repeated evaluation.
    pub fn compile(&self) -> Program {
        let mut code = Vec::new();
        self.emit(&mut code);
        let mut depth = 0usize;
        let mut max_depth = 0usize;
        for instr in &code {
            match instr {
                Instr::Const(_) | Instr::Var(_) => depth += 1,
                Instr::Add | Instr::Sub | Instr::Mul | Instr::Div => depth -= 1,
                Instr::Pow(_) | Instr::Fn(_) => {}
            }
            max_depth = max_depth.max(depth);
        }
        Program { code, max_depth }
    }

    fn emit(&self, code: &mut Vec<Instr>) {
        match self {
            Expr::Const(c) => code.push(Instr::Const(*c)),
            Expr::Var(i) => code.push(Instr::Var(*i)),
            Expr::Add(a, b) => {
                a.emit(code);
                b.emit(code);
                code.push(Instr::Add);
            }
            Expr::Sub(a, b) => {
                a.emit(code);
                b.emit(code);
                code.push(Instr::Sub);
            }
            Expr::Mul(a, b) => {
                a.emit(code);
                b.emit(code);
                code.push(Instr::Mul);
            }
            Expr::Div(a, b) => {
                a.emit(code);
                b.emit(code);
                code.push(Instr::Div);
            }
            Expr::Pow(a, k) => {
                a.emit(code);
                code.push(Instr::Pow(*k));
            }
            Expr::Unary(f, a) => {
                a.emit(code);
                code.push(Instr::Fn(*f));
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Var(i) => write!(f, "x{}", i + 1),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Div(a, b) => write!(f, "({a} / {b})"),
            Expr::Pow(a, k) => {
                // bases that don't reparse as a power atom need parens
                let atom = matches!(
                    a.as_ref(),
                    Expr::Var(_) | Expr::Unary(..) | Expr::Add(..) | Expr::Sub(..)
                        | Expr::Mul(..) | Expr::Div(..)
                ) || matches!(a.as_ref(), Expr::Const(c) if *c >= 0.0);
                let base = if atom {
                    format!("{a}")
                } else {
                    format!("({a})")
                };
                if *k < 0 {
                    write!(f, "({base}^({k}))")
                } else {
                    write!(f, "{base}^{k}")
                }
            }
            Expr::Unary(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Instr {
    Const(f64),
    Var(usize),
    Add,
    Sub,
    Mul,
    Div,
    Pow(i32),
    Fn(UnaryFn),
}

/// Flattened expression for the integrator hot path. Evaluation returns
/// NaN on domain violations instead of an error; callers in the numeric
/// core treat NaN as a step failure.
#[derive(Debug, Clone)]
pub struct Program {
    code: Vec<Instr>,
    max_depth: usize,
}

impl Program {
    pub fn eval(&self, point: &[f64]) -> f64 {
        let mut stack: Vec<f64> = Vec::with_capacity(self.max_depth);
        for instr in &self.code {
            match instr {
                Instr::Const(c) => stack.push(*c),
                Instr::Var(i) => stack.push(point[*i]),
                Instr::Add => {
                    let b = stack.pop().unwrap();
                    *stack.last_mut().unwrap() += b;
                }
                Instr::Sub => {
                    let b = stack.pop().unwrap();
                    *stack.last_mut().unwrap() -= b;
                }
                Instr::Mul => {
                    let b = stack.pop().unwrap();
                    *stack.last_mut().unwrap() *= b;
                }
                Instr::Div => {
                    let b = stack.pop().unwrap();
                    *stack.last_mut().unwrap() /= b;
                }
                Instr::Pow(k) => {
                    let a = stack.last_mut().unwrap();
                    *a = a.powi(*k);
                }
                Instr::Fn(f) => {
                    let a = stack.last_mut().unwrap();
                    *a = match f {
                        UnaryFn::Sin => a.sin(),
                        UnaryFn::Cos => a.cos(),
                        UnaryFn::Exp => a.exp(),
                        UnaryFn::Sqrt => a.sqrt(),
                    };
                }
            }
        }
        stack.pop().unwrap()
    }
}
