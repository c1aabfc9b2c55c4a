use super::{BinaryOp, Expr, ExprError, UnaryOp};
use alloc::string::ToString;

use BinaryOp::{Add, Div, Mul, Pow, Sub};

fn bin(op: BinaryOp, a: Expr, b: Expr) -> Expr {
    Expr::binary(op, a, b)
}

impl Expr {
    /// Symbolic partial derivative with respect to `var`.
    ///
    /// The result is simplified only by constant folding and 0/1 identity
    /// elimination. `abs` is rejected wherever it occurs.
    pub fn diff(&self, var: &str) -> Result<Expr, ExprError> {
        Ok(match self {
            Expr::Const(_) => Expr::Const(0.0),
            Expr::Var(v) => Expr::Const(if v == var { 1.0 } else { 0.0 }),
            Expr::Unary(op, a) => {
                if *op == UnaryOp::Abs {
                    return Err(ExprError::NonSmooth {
                        at: self.to_string(),
                    });
                }
                let da = a.diff(var)?;
                let a = (**a).clone();
                match op {
                    UnaryOp::Neg => Expr::unary(UnaryOp::Neg, da),
                    UnaryOp::Exp => bin(Mul, Expr::unary(UnaryOp::Exp, a), da),
                    UnaryOp::Log => bin(Div, da, a),
                    UnaryOp::Sin => bin(Mul, Expr::unary(UnaryOp::Cos, a), da),
                    UnaryOp::Cos => Expr::unary(
                        UnaryOp::Neg,
                        bin(Mul, Expr::unary(UnaryOp::Sin, a), da),
                    ),
                    UnaryOp::Sqrt => bin(
                        Div,
                        da,
                        bin(Mul, Expr::Const(2.0), Expr::unary(UnaryOp::Sqrt, a)),
                    ),
                    UnaryOp::Abs => unreachable!(),
                }
            }
            Expr::Binary(op, a, b) => {
                let da = a.diff(var)?;
                let db = b.diff(var)?;
                let (a, b) = ((**a).clone(), (**b).clone());
                match op {
                    Add => bin(Add, da, db),
                    Sub => bin(Sub, da, db),
                    Mul => bin(Add, bin(Mul, da, b.clone()), bin(Mul, a, db)),
                    Div => bin(
                        Div,
                        bin(Sub, bin(Mul, da, b.clone()), bin(Mul, a, db)),
                        bin(Pow, b, Expr::Const(2.0)),
                    ),
                    Pow if !b.depends_on(var) => {
                        // b * a^(b-1) * a'
                        let lowered = bin(Sub, b.clone(), Expr::Const(1.0));
                        bin(Mul, bin(Mul, b, bin(Pow, a, lowered)), da)
                    }
                    Pow => {
                        // a^b * (b' log a + b a'/a)
                        let log_a = Expr::unary(UnaryOp::Log, a.clone());
                        let inner = bin(
                            Add,
                            bin(Mul, db, log_a),
                            bin(Mul, b.clone(), bin(Div, da, a.clone())),
                        );
                        bin(Mul, bin(Pow, a, b), inner)
                    }
                }
            }
        })
    }
}
