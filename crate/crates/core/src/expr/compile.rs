use std::collections::HashMap;
use std::sync::Arc;

use super::{BinOp, Env, Expr, Func};
use crate::error::{Error, Result};

/// Fixed assignment of variable names to positions in a value slice.
#[derive(Clone, Debug, Default)]
pub struct SlotLayout {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl SlotLayout {
    pub fn new<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut layout = SlotLayout::default();
        for n in names {
            layout.push(n);
        }
        layout
    }

    /// Appends a name and returns its slot; existing names keep their slot.
    pub fn push(&mut self, name: impl Into<String>) -> usize {
        let name = name.into();
        if let Some(&i) = self.index.get(&name) {
            return i;
        }
        let i = self.names.len();
        self.index.insert(name.clone(), i);
        self.names.push(name);
        i
    }

    pub fn slot(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn env(&self, values: &[f64]) -> Env {
        self.names.iter().cloned().zip(values.iter().copied()).collect()
    }
}

#[derive(Clone, Debug)]
enum Node {
    Const(f64),
    Slot(usize),
    Unary(Func, Box<Node>),
    Binary(BinOp, Box<Node>, Box<Node>),
}

/// An expression with variables resolved to slots, for hot loops.
///
/// Produces bit-identical results to [`Expr::eval`] with the equivalent
/// environment.
#[derive(Clone, Debug)]
pub struct CompiledExpr {
    root: Node,
    source: Expr,
    names: Arc<[String]>,
}

impl CompiledExpr {
    pub fn new(expr: &Expr, layout: &SlotLayout) -> Result<Self> {
        Ok(CompiledExpr {
            root: lower(expr, layout)?,
            source: expr.clone(),
            names: layout.names.clone().into(),
        })
    }

    pub fn source(&self) -> &Expr {
        &self.source
    }

    pub fn eval(&self, slots: &[f64]) -> Result<f64> {
        match run(&self.root, slots) {
            Some(v) => Ok(v),
            None => {
                // slow path for a precise message
                let env: Env = self.names.iter().cloned().zip(slots.iter().copied()).collect();
                match self.source.eval(&env) {
                    Err(e) => Err(e),
                    Ok(_) => Err(Error::Domain {
                        expr: self.source.to_string(),
                        message: "evaluation failed".into(),
                    }),
                }
            }
        }
    }
}

fn lower(e: &Expr, layout: &SlotLayout) -> Result<Node> {
    Ok(match e {
        Expr::Const(v) => Node::Const(*v),
        Expr::Var(name) => Node::Slot(layout.slot(name).ok_or_else(|| Error::UnboundVariable(name.clone()))?),
        Expr::Unary(f, a) => Node::Unary(*f, Box::new(lower(a, layout)?)),
        Expr::Binary(op, a, b) => Node::Binary(*op, Box::new(lower(a, layout)?), Box::new(lower(b, layout)?)),
    })
}

fn run(n: &Node, slots: &[f64]) -> Option<f64> {
    match n {
        Node::Const(v) => Some(*v),
        Node::Slot(i) => slots.get(*i).copied(),
        Node::Unary(f, a) => f.apply(run(a, slots)?).ok(),
        Node::Binary(op, a, b) => op.apply(run(a, slots)?, run(b, slots)?).ok(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_tree_evaluation() {
        let layout = SlotLayout::new(["x", "y"]);
        let e = Expr::parse("sin(x)*y^2 - exp(x/y)").unwrap();
        let c = CompiledExpr::new(&e, &layout).unwrap();
        let env = Env::new().with("x", 0.7).with("y", -1.3);
        assert_eq!(c.eval(&[0.7, -1.3]).unwrap().to_bits(), e.eval(&env).unwrap().to_bits());
    }

    #[test]
    fn unknown_name_fails_at_compile_time() {
        let layout = SlotLayout::new(["x"]);
        assert!(CompiledExpr::new(&Expr::parse("x + z").unwrap(), &layout).is_err());
    }

    #[test]
    fn domain_errors_carry_the_subexpression() {
        let layout = SlotLayout::new(["x"]);
        let c = CompiledExpr::new(&Expr::parse("1 + ln(x)").unwrap(), &layout).unwrap();
        match c.eval(&[-2.0]) {
            Err(Error::Domain { expr, .. }) => assert_eq!(expr, "ln(x)"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
