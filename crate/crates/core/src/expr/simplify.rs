use super::{BinOp, Expr, Func};

const MAX_PASSES: usize = 64;

pub(super) fn simplify(e: &Expr) -> Expr {
    let mut cur = pass(e);
    for _ in 0..MAX_PASSES {
        let next = pass(&cur);
        if next == cur {
            break;
        }
        cur = next;
    }
    cur
}

fn is(e: &Expr, v: f64) -> bool {
    e.as_const() == Some(v)
}

/// One bottom-up rewrite pass.
fn pass(e: &Expr) -> Expr {
    match e {
        Expr::Const(_) | Expr::Var(_) => e.clone(),
        Expr::Unary(f, a) => unary(*f, pass(a)),
        Expr::Binary(op, a, b) => binary(*op, pass(a), pass(b)),
    }
}

fn unary(f: Func, a: Expr) -> Expr {
    if let Some(v) = a.as_const() {
        if let Ok(r) = f.apply(v) {
            return Expr::Const(r);
        }
    }
    match (f, a) {
        (Func::Neg, Expr::Unary(Func::Neg, inner)) => *inner,
        (f, a) => Expr::unary(f, a),
    }
}

fn binary(op: BinOp, a: Expr, b: Expr) -> Expr {
    if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
        if let Ok(r) = op.apply(x, y) {
            return Expr::Const(r);
        }
    }
    match op {
        BinOp::Add => add(a, b),
        BinOp::Sub => sub(a, b),
        BinOp::Mul => mul(a, b),
        BinOp::Div => div(a, b),
        BinOp::Pow => pow(a, b),
    }
}

fn add(a: Expr, b: Expr) -> Expr {
    if is(&a, 0.0) {
        return b;
    }
    if is(&b, 0.0) {
        return a;
    }
    match (a, b) {
        (a, Expr::Const(c)) if c < 0.0 => Expr::binary(BinOp::Sub, a, Expr::Const(-c)),
        (a, Expr::Unary(Func::Neg, y)) => Expr::binary(BinOp::Sub, a, *y),
        (Expr::Unary(Func::Neg, y), b) => Expr::binary(BinOp::Sub, b, *y),
        (a, b) => Expr::binary(BinOp::Add, a, b),
    }
}

fn sub(a: Expr, b: Expr) -> Expr {
    if is(&b, 0.0) {
        return a;
    }
    if is(&a, 0.0) {
        return Expr::unary(Func::Neg, b);
    }
    if a == b {
        return Expr::Const(0.0);
    }
    match (a, b) {
        (a, Expr::Const(c)) if c < 0.0 => Expr::binary(BinOp::Add, a, Expr::Const(-c)),
        (a, Expr::Unary(Func::Neg, y)) => Expr::binary(BinOp::Add, a, *y),
        (a, b) => Expr::binary(BinOp::Sub, a, b),
    }
}

fn mul(a: Expr, b: Expr) -> Expr {
    if is(&a, 0.0) || is(&b, 0.0) {
        return Expr::Const(0.0);
    }
    if is(&a, 1.0) {
        return b;
    }
    if is(&b, 1.0) {
        return a;
    }
    if is(&a, -1.0) {
        return Expr::unary(Func::Neg, b);
    }
    if is(&b, -1.0) {
        return Expr::unary(Func::Neg, a);
    }
    match (a, b) {
        (Expr::Unary(Func::Neg, x), b) => Expr::unary(Func::Neg, Expr::binary(BinOp::Mul, *x, b)),
        (a, Expr::Unary(Func::Neg, y)) => Expr::unary(Func::Neg, Expr::binary(BinOp::Mul, a, *y)),
        // constants to the front
        (a, Expr::Const(c)) if a.as_const().is_none() => Expr::binary(BinOp::Mul, Expr::Const(c), a),
        (Expr::Const(c1), Expr::Binary(BinOp::Mul, x, y)) if x.as_const().is_some_and(|c2| (c1 * c2).is_finite()) => {
            let c2 = x.as_const().unwrap_or(1.0);
            Expr::binary(BinOp::Mul, Expr::Const(c1 * c2), *y)
        }
        (a, Expr::Binary(BinOp::Mul, x, y)) if x.as_const().is_some() => {
            Expr::binary(BinOp::Mul, Expr::binary(BinOp::Mul, *x, a), *y)
        }
        (a, b) => Expr::binary(BinOp::Mul, a, b),
    }
}

fn div(a: Expr, b: Expr) -> Expr {
    if is(&a, 0.0) {
        return Expr::Const(0.0);
    }
    if is(&b, 1.0) {
        return a;
    }
    if is(&b, -1.0) {
        return Expr::unary(Func::Neg, a);
    }
    match (a, b) {
        (Expr::Unary(Func::Neg, x), b) => Expr::unary(Func::Neg, Expr::binary(BinOp::Div, *x, b)),
        (a, b) => Expr::binary(BinOp::Div, a, b),
    }
}

fn pow(a: Expr, b: Expr) -> Expr {
    if is(&b, 0.0) || is(&a, 1.0) {
        return Expr::Const(1.0);
    }
    if is(&b, 1.0) {
        return a;
    }
    if is(&a, 0.0) && b.as_const().is_some_and(|c| c > 0.0) {
        return Expr::Const(0.0);
    }
    Expr::binary(BinOp::Pow, a, b)
}
