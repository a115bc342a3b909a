use super::{BinOp, Expr, Func};

/// Unsimplified partial derivative; callers simplify.
pub(super) fn diff(e: &Expr, var: &str) -> Expr {
    if !e.depends_on(var) {
        return Expr::Const(0.0);
    }
    match e {
        Expr::Const(_) => Expr::Const(0.0),
        Expr::Var(name) => Expr::Const(if name == var { 1.0 } else { 0.0 }),
        Expr::Unary(f, a) => {
            let da = diff(a, var);
            let a = (**a).clone();
            match f {
                Func::Neg => -da,
                Func::Sin => da * a.cos(),
                Func::Cos => -(da * a.sin()),
                Func::Tan => da / a.cos().pow(Expr::Const(2.0)),
                Func::Atan => da / (1.0 + a.pow(Expr::Const(2.0))),
                Func::Exp => da * a.exp(),
                Func::Ln => da / a,
                Func::Sqrt => da / (2.0 * a.sqrt()),
            }
        }
        Expr::Binary(op, a, b) => {
            let (da, db) = (diff(a, var), diff(b, var));
            let (a, b) = ((**a).clone(), (**b).clone());
            match op {
                BinOp::Add => da + db,
                BinOp::Sub => da - db,
                BinOp::Mul => da * b.clone() + a * db,
                BinOp::Div => (da * b.clone() - a * db) / b.pow(Expr::Const(2.0)),
                BinOp::Pow => {
                    if !b.depends_on(var) {
                        // d(a^c) = c a^(c-1) a'
                        b.clone() * a.pow(b - 1.0) * da
                    } else if !a.depends_on(var) {
                        e.clone() * a.ln() * db
                    } else {
                        e.clone() * (db * a.clone().ln() + b * da / a)
                    }
                }
            }
        }
    }
}
