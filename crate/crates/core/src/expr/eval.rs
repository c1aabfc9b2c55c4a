use super::{BinaryOp, Expr, ExprError, UnaryOp};
use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};

/// A name-to-value binding used by [`Expr::eval`].
pub trait Env {
    fn lookup(&self, name: &str) -> Option<f64>;
}

impl Env for BTreeMap<String, f64> {
    fn lookup(&self, name: &str) -> Option<f64> {
        self.get(name).copied()
    }
}

impl Env for [(&str, f64)] {
    fn lookup(&self, name: &str) -> Option<f64> {
        self.iter().find(|(n, _)| *n == name).map(|(_, v)| *v)
    }
}

impl<const N: usize> Env for [(&str, f64); N] {
    fn lookup(&self, name: &str) -> Option<f64> {
        self.as_slice().lookup(name)
    }
}

impl<A: Env + ?Sized, B: Env + ?Sized> Env for (&A, &B) {
    fn lookup(&self, name: &str) -> Option<f64> {
        self.0.lookup(name).or_else(|| self.1.lookup(name))
    }
}

impl Expr {
    /// Evaluates in IEEE double precision.
    ///
    /// Logarithms and square roots of out-of-domain arguments, division by
    /// zero and non-finite powers are reported as [`ExprError::Domain`].
    pub fn eval<E: Env + ?Sized>(&self, env: &E) -> Result<f64, ExprError> {
        match self {
            Expr::Const(c) => Ok(*c),
            Expr::Var(name) => env.lookup(name).ok_or_else(|| ExprError::Unbound {
                name: name.clone(),
            }),
            Expr::Unary(op, a) => {
                let v = a.eval(env)?;
                let bad = match op {
                    UnaryOp::Log if v <= 0.0 => Some("logarithm of a non-positive number"),
                    UnaryOp::Sqrt if v < 0.0 => Some("square root of a negative number"),
                    _ => None,
                };
                if let Some(reason) = bad {
                    return Err(self.domain(reason));
                }
                Ok(op.apply(v))
            }
            Expr::Binary(op, a, b) => {
                let x = a.eval(env)?;
                let y = b.eval(env)?;
                if *op == BinaryOp::Div && y == 0.0 {
                    return Err(self.domain("division by zero"));
                }
                let v = op.apply(x, y);
                if *op == BinaryOp::Pow && !v.is_finite() && x.is_finite() && y.is_finite() {
                    return Err(self.domain("power is undefined"));
                }
                Ok(v)
            }
        }
    }

    fn domain(&self, reason: &'static str) -> ExprError {
        ExprError::Domain {
            reason,
            at: self.to_string(),
        }
    }
}

#[cfg(test)]
mod tests {
    use crate::expr::parse;
    use crate::expr::ExprError;

    #[test]
    fn arithmetic() {
        let e = parse("t+2*x0").unwrap();
        assert_eq!(e.eval(&[("t", 1.0), ("x0", 3.0)]).unwrap(), 7.0);
        assert_eq!(parse("exp(-t)").unwrap().eval(&[("t", 0.0)]).unwrap(), 1.0);
        assert_eq!(parse("pow(x0,3)").unwrap().eval(&[("x0", 2.0)]).unwrap(), 8.0);
    }

    #[test]
    fn unbound_variable() {
        let err = parse("t + y").unwrap().eval(&[("t", 1.0)]).unwrap_err();
        assert_eq!(err, ExprError::Unbound { name: "y".into() });
    }

    #[test]
    fn domain_errors_name_the_node() {
        let err = parse("1 + log(x0 - 1)").unwrap().eval(&[("x0", 1.0)]).unwrap_err();
        match err {
            ExprError::Domain { at, .. } => assert_eq!(at, "log((x0 - 1))"),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse("1/t").unwrap().eval(&[("t", 0.0)]),
            Err(ExprError::Domain { reason: "division by zero", .. })
        ));
        assert!(matches!(
            parse("pow(x0, 0.5)").unwrap().eval(&[("x0", -1.0)]),
            Err(ExprError::Domain { .. })
        ));
    }
}
