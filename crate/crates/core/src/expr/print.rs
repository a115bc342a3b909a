use std::fmt;

use super::{BinOp, Expr, Func};

// Binding strength of the printed form; a child weaker than its slot
// requires gets parenthesised.
const SUM: u8 = 1;
const PRODUCT: u8 = 2;
const FACTOR: u8 = 3;
const POWER: u8 = 4;
const ATOM: u8 = 5;

fn level(e: &Expr) -> u8 {
    match e {
        Expr::Const(v) if v.is_sign_negative() => FACTOR,
        Expr::Const(_) | Expr::Var(_) => ATOM,
        Expr::Unary(Func::Neg, _) => FACTOR,
        Expr::Unary(_, _) => ATOM,
        Expr::Binary(BinOp::Add | BinOp::Sub, _, _) => SUM,
        Expr::Binary(BinOp::Mul | BinOp::Div, _, _) => PRODUCT,
        Expr::Binary(BinOp::Pow, _, _) => POWER,
    }
}

fn child(f: &mut fmt::Formatter<'_>, e: &Expr, min: u8) -> fmt::Result {
    if level(e) < min {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(v) => write!(f, "{v}"),
            Expr::Var(name) => f.write_str(name),
            Expr::Unary(Func::Neg, a) => {
                f.write_str("-")?;
                child(f, a, FACTOR)
            }
            Expr::Unary(func, a) => write!(f, "{}({a})", func.name()),
            Expr::Binary(op, a, b) => {
                let (lhs, rhs, sep) = match op {
                    BinOp::Add => (SUM, PRODUCT, " + "),
                    BinOp::Sub => (SUM, PRODUCT, " - "),
                    BinOp::Mul => (PRODUCT, FACTOR, "*"),
                    BinOp::Div => (PRODUCT, FACTOR, "/"),
                    BinOp::Pow => (ATOM, FACTOR, "^"),
                };
                child(f, a, lhs)?;
                f.write_str(sep)?;
                child(f, b, rhs)
            }
        }
    }
}
