//! Symbolic expressions over the named variables of a control problem.
//!
//! Dynamics, costs, constraint rates, transformation groups and conservation
//! laws are all written as [`Expr`] trees. The module provides a parser for
//! the textual grammar, a printer whose output parses back to a value-equal
//! tree, evaluation against an [`Env`], exact partial derivatives,
//! simultaneous substitution and a light value-preserving simplifier.
//!
//! Equality of two expressions is decided numerically with
//! [`Expr::agrees_with`]; the simplifier is not a canonical form.

mod compile;
mod diff;
mod parse;
mod print;
mod simplify;

use std::collections::{BTreeMap, BTreeSet};
use std::ops;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use compile::{CompiledExpr, SlotLayout};

/// Unary functions, including negation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Func {
    Neg,
    Sin,
    Cos,
    Tan,
    Atan,
    Exp,
    Ln,
    Sqrt,
}

impl Func {
    pub const NAMED: [Func; 7] = [
        Func::Sin,
        Func::Cos,
        Func::Tan,
        Func::Atan,
        Func::Exp,
        Func::Ln,
        Func::Sqrt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Func::Neg => "-",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Atan => "atan",
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sqrt => "sqrt",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Func::NAMED.iter().copied().find(|f| f.name() == name)
    }

    pub(crate) fn apply(self, a: f64) -> std::result::Result<f64, &'static str> {
        let v = match self {
            Func::Neg => -a,
            Func::Sin => a.sin(),
            Func::Cos => a.cos(),
            Func::Tan => a.tan(),
            Func::Atan => a.atan(),
            Func::Exp => a.exp(),
            Func::Ln => {
                if a <= 0.0 {
                    return Err("logarithm of a non-positive argument");
                }
                a.ln()
            }
            Func::Sqrt => {
                if a < 0.0 {
                    return Err("square root of a negative argument");
                }
                a.sqrt()
            }
        };
        finite(v)
    }
}

/// Binary operators.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }
    }

    pub(crate) fn apply(self, a: f64, b: f64) -> std::result::Result<f64, &'static str> {
        let v = match self {
            BinOp::Add => a + b,
            BinOp::Sub => a - b,
            BinOp::Mul => a * b,
            BinOp::Div => {
                if b == 0.0 {
                    return Err("division by zero");
                }
                a / b
            }
            BinOp::Pow => {
                if b.fract() == 0.0 && b.abs() <= i32::MAX as f64 {
                    if a == 0.0 && b < 0.0 {
                        return Err("division by zero");
                    }
                    a.powi(b as i32)
                } else if a > 0.0 {
                    a.powf(b)
                } else {
                    return Err("non-integer power of a non-positive base");
                }
            }
        };
        finite(v)
    }
}

fn finite(v: f64) -> std::result::Result<f64, &'static str> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err("non-finite result")
    }
}

/// Expression tree.
///
/// `PartialEq` is structural (tree) equality.
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(String),
    Unary(Func, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
}

/// Variable bindings used by [`Expr::eval`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Env {
    values: BTreeMap<String, f64>,
}

impl Env {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: impl Into<String>, value: f64) -> Self {
        self.set(name, value);
        self
    }

    pub fn set(&mut self, name: impl Into<String>, value: f64) {
        self.values.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Result<f64> {
        self.values
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnboundVariable(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.values.contains_key(name)
    }

    /// Binds `prefix1..prefixN` to the entries of `values`.
    pub fn set_indexed(&mut self, prefix: &str, values: &[f64]) {
        for (i, v) in values.iter().enumerate() {
            self.set(format!("{prefix}{}", i + 1), *v);
        }
    }

    pub fn extend(&mut self, other: &Env) {
        for (k, v) in &other.values {
            self.values.insert(k.clone(), *v);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.values.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl<S: Into<String>> FromIterator<(S, f64)> for Env {
    fn from_iter<I: IntoIterator<Item = (S, f64)>>(iter: I) -> Self {
        let mut env = Env::new();
        for (k, v) in iter {
            env.set(k, v);
        }
        env
    }
}

impl Expr {
    pub fn num(v: f64) -> Expr {
        Expr::Const(v)
    }

    pub fn var(name: impl Into<String>) -> Expr {
        Expr::Var(name.into())
    }

    /// Variable `prefix{index}` with a one-based index, e.g. `indexed("x", 3)` is `x3`.
    pub fn indexed(prefix: &str, index: usize) -> Expr {
        Expr::Var(format!("{prefix}{index}"))
    }

    pub fn unary(f: Func, a: Expr) -> Expr {
        Expr::Unary(f, Box::new(a))
    }

    pub fn binary(op: BinOp, a: Expr, b: Expr) -> Expr {
        Expr::Binary(op, Box::new(a), Box::new(b))
    }

    pub fn pow(self, e: Expr) -> Expr {
        Expr::binary(BinOp::Pow, self, e)
    }

    pub fn sin(self) -> Expr {
        Expr::unary(Func::Sin, self)
    }

    pub fn cos(self) -> Expr {
        Expr::unary(Func::Cos, self)
    }

    pub fn tan(self) -> Expr {
        Expr::unary(Func::Tan, self)
    }

    pub fn atan(self) -> Expr {
        Expr::unary(Func::Atan, self)
    }

    pub fn exp(self) -> Expr {
        Expr::unary(Func::Exp, self)
    }

    pub fn ln(self) -> Expr {
        Expr::unary(Func::Ln, self)
    }

    pub fn sqrt(self) -> Expr {
        Expr::unary(Func::Sqrt, self)
    }

    /// Sum of the terms, `0` for an empty iterator.
    pub fn sum<I: IntoIterator<Item = Expr>>(terms: I) -> Expr {
        terms.into_iter().reduce(|acc, t| acc + t).unwrap_or(Expr::Const(0.0))
    }

    pub fn parse(source: &str) -> Result<Expr> {
        parse::parse(source)
    }

    pub fn as_const(&self) -> Option<f64> {
        match self {
            Expr::Const(v) => Some(*v),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_const() == Some(0.0)
    }

    /// Evaluates the expression. Unbound variables and domain violations
    /// are errors; the domain error names the offending subexpression.
    pub fn eval(&self, env: &Env) -> Result<f64> {
        self.eval_with(&|name| env.values.get(name).copied())
    }

    pub(crate) fn eval_with(&self, lookup: &dyn Fn(&str) -> Option<f64>) -> Result<f64> {
        match self {
            Expr::Const(v) => Ok(*v),
            Expr::Var(name) => lookup(name).ok_or_else(|| Error::UnboundVariable(name.clone())),
            Expr::Unary(f, a) => {
                let a = a.eval_with(lookup)?;
                f.apply(a).map_err(|m| self.domain_error(m))
            }
            Expr::Binary(op, a, b) => {
                let a = a.eval_with(lookup)?;
                let b = b.eval_with(lookup)?;
                op.apply(a, b).map_err(|m| self.domain_error(m))
            }
        }
    }

    fn domain_error(&self, message: &str) -> Error {
        Error::Domain {
            expr: self.to_string(),
            message: message.to_string(),
        }
    }

    /// Exact partial derivative with respect to `var`, simplified.
    pub fn diff(&self, var: &str) -> Expr {
        diff::diff(self, var).simplify()
    }

    /// Value-preserving light simplification; idempotent.
    pub fn simplify(&self) -> Expr {
        simplify::simplify(self)
    }

    /// Simultaneous substitution: inserted subtrees are not revisited.
    pub fn substitute(&self, bindings: &BTreeMap<String, Expr>) -> Expr {
        match self {
            Expr::Const(_) => self.clone(),
            Expr::Var(name) => bindings.get(name).cloned().unwrap_or_else(|| self.clone()),
            Expr::Unary(f, a) => Expr::unary(*f, a.substitute(bindings)),
            Expr::Binary(op, a, b) => Expr::binary(*op, a.substitute(bindings), b.substitute(bindings)),
        }
    }

    /// Substitutes a single variable.
    pub fn substitute_one(&self, name: &str, with: &Expr) -> Expr {
        let mut map = BTreeMap::new();
        map.insert(name.to_string(), with.clone());
        self.substitute(&map)
    }

    pub fn variables(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_variables(&mut out);
        out
    }

    fn collect_variables(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(name) => {
                out.insert(name.clone());
            }
            Expr::Unary(_, a) => a.collect_variables(out),
            Expr::Binary(_, a, b) => {
                a.collect_variables(out);
                b.collect_variables(out);
            }
        }
    }

    pub fn depends_on(&self, var: &str) -> bool {
        match self {
            Expr::Const(_) => false,
            Expr::Var(name) => name == var,
            Expr::Unary(_, a) => a.depends_on(var),
            Expr::Binary(_, a, b) => a.depends_on(var) || b.depends_on(var),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::Var(_) => 1,
            Expr::Unary(_, a) => 1 + a.depth(),
            Expr::Binary(_, a, b) => 1 + a.depth().max(b.depth()),
        }
    }

    /// Numerical equality: at every environment where both sides evaluate,
    /// `|a - b| <= rel_tol * (1 + max(|a|, |b|))`. At least one environment
    /// must be evaluable for the result to be `true`.
    pub fn agrees_with(&self, other: &Expr, envs: &[Env], rel_tol: f64) -> bool {
        let mut compared = 0;
        for env in envs {
            let (Ok(a), Ok(b)) = (self.eval(env), other.eval(env)) else {
                continue;
            };
            compared += 1;
            if (a - b).abs() > rel_tol * (1.0 + a.abs().max(b.abs())) {
                return false;
            }
        }
        compared > 0
    }
}

impl From<f64> for Expr {
    fn from(v: f64) -> Self {
        Expr::Const(v)
    }
}

impl std::str::FromStr for Expr {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Expr::parse(s)
    }
}

impl Serialize for Expr {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Expr {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Expr::parse(&s).map_err(serde::de::Error::custom)
    }
}

macro_rules! impl_binop {
    ($trait:ident, $method:ident, $op:expr) => {
        impl ops::$trait for Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                Expr::binary($op, self, rhs)
            }
        }
        impl ops::$trait<f64> for Expr {
            type Output = Expr;
            fn $method(self, rhs: f64) -> Expr {
                Expr::binary($op, self, Expr::Const(rhs))
            }
        }
        impl ops::$trait<Expr> for f64 {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                Expr::binary($op, Expr::Const(self), rhs)
            }
        }
    };
}

impl_binop!(Add, add, BinOp::Add);
impl_binop!(Sub, sub, BinOp::Sub);
impl_binop!(Mul, mul, BinOp::Mul);
impl_binop!(Div, div, BinOp::Div);

impl ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::unary(Func::Neg, self)
    }
}
