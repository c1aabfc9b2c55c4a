//! Scalar expressions used to describe dynamics, costs, control bounds and
//! candidate controls.
//!
//! Expressions are parsed from text ([`parse`]), evaluated against a name
//! binding ([`Expr::eval`]), differentiated symbolically ([`Expr::diff`]) and
//! compiled into slot-indexed form ([`Compiled`]) for the hot integration
//! loops. Printing an expression with `Display` yields text that parses back
//! to the same tree.

mod compile;
mod diff;
mod eval;
mod parse;

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

pub use compile::{Compiled, Slot};
pub use eval::Env;
pub use parse::parse;

/// One-argument primitives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
    Exp,
    Log,
    Sin,
    Cos,
    Sqrt,
    Abs,
}

impl UnaryOp {
    pub(crate) fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "exp" => Self::Exp,
            "log" => Self::Log,
            "sin" => Self::Sin,
            "cos" => Self::Cos,
            "sqrt" => Self::Sqrt,
            "abs" => Self::Abs,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Neg => "-",
            Self::Exp => "exp",
            Self::Log => "log",
            Self::Sin => "sin",
            Self::Cos => "cos",
            Self::Sqrt => "sqrt",
            Self::Abs => "abs",
        }
    }

    pub(crate) fn apply(self, a: f64) -> f64 {
        match self {
            Self::Neg => -a,
            Self::Exp => libm::exp(a),
            Self::Log => libm::log(a),
            Self::Sin => libm::sin(a),
            Self::Cos => libm::cos(a),
            Self::Sqrt => libm::sqrt(a),
            Self::Abs => a.abs(),
        }
    }
}

/// Two-argument primitives. `^` in source text is normalized to `Pow`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinaryOp {
    pub(crate) fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            Self::Add => a + b,
            Self::Sub => a - b,
            Self::Mul => a * b,
            Self::Div => a / b,
            Self::Pow => libm::pow(a, b),
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            Self::Add => "+",
            Self::Sub => "-",
            Self::Mul => "*",
            Self::Div => "/",
            Self::Pow => "^",
        }
    }
}

/// Expression tree.
///
/// Constants are always finite; the smart constructors refuse to fold an
/// operation whose result would be NaN or infinite.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(String),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
}

/// Errors from parsing, evaluating or differentiating expressions.
#[derive(Debug, Clone, PartialEq)]
pub enum ExprError {
    /// Malformed input. `offset` is a byte offset into the source.
    Syntax {
        offset: usize,
        expected: Vec<&'static str>,
        found: String,
    },
    UnknownFunction {
        name: String,
        offset: usize,
    },
    Arity {
        name: String,
        offset: usize,
        expected: usize,
        found: usize,
    },
    Unbound {
        name: String,
    },
    /// Evaluation left the domain of a primitive; `at` is the offending
    /// subexpression in printed form.
    Domain {
        reason: &'static str,
        at: String,
    },
    NonSmooth {
        at: String,
    },
}

impl fmt::Display for ExprError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Syntax {
                offset,
                expected,
                found,
            } => {
                write!(f, "syntax error at offset {offset}: expected ")?;
                for (i, e) in expected.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" or ")?;
                    }
                    f.write_str(e)?;
                }
                write!(f, ", found {found}")
            }
            Self::UnknownFunction { name, offset } => {
                write!(f, "unknown function `{name}` at offset {offset}")
            }
            Self::Arity {
                name,
                offset,
                expected,
                found,
            } => write!(
                f,
                "function `{name}` at offset {offset} takes {expected} argument(s), got {found}"
            ),
            Self::Unbound { name } => write!(f, "unbound variable `{name}`"),
            Self::Domain { reason, at } => write!(f, "domain error ({reason}) in `{at}`"),
            Self::NonSmooth { at } => {
                write!(f, "cannot differentiate non-smooth primitive in `{at}`")
            }
        }
    }
}

fn is_zero(e: &Expr) -> bool {
    matches!(e, Expr::Const(c) if *c == 0.0)
}

fn is_one(e: &Expr) -> bool {
    matches!(e, Expr::Const(c) if *c == 1.0)
}

fn fold(v: f64) -> Option<Expr> {
    v.is_finite().then_some(Expr::Const(v))
}

impl Expr {
    pub fn var(name: &str) -> Self {
        Self::Var(name.into())
    }

    pub fn unary(op: UnaryOp, a: Expr) -> Self {
        if let Expr::Const(c) = a {
            if let Some(k) = fold(op.apply(c)) {
                return k;
            }
        }
        if op == UnaryOp::Neg {
            if let Expr::Unary(UnaryOp::Neg, inner) = a {
                return *inner;
            }
        }
        Expr::Unary(op, Box::new(a))
    }

    /// Builds `a op b` with constant folding and 0/1 identity elimination.
    pub fn binary(op: BinaryOp, a: Expr, b: Expr) -> Self {
        if let (Expr::Const(x), Expr::Const(y)) = (&a, &b) {
            if let Some(k) = fold(op.apply(*x, *y)) {
                return k;
            }
        }
        match op {
            BinaryOp::Add if is_zero(&a) => b,
            BinaryOp::Add | BinaryOp::Sub if is_zero(&b) => a,
            BinaryOp::Sub if is_zero(&a) => Expr::unary(UnaryOp::Neg, b),
            BinaryOp::Mul if is_zero(&a) || is_zero(&b) => Expr::Const(0.0),
            BinaryOp::Mul if is_one(&a) => b,
            BinaryOp::Mul | BinaryOp::Div if is_one(&b) => a,
            BinaryOp::Div if is_zero(&a) => Expr::Const(0.0),
            BinaryOp::Pow if is_zero(&b) => Expr::Const(1.0),
            BinaryOp::Pow if is_one(&b) => a,
            _ => Expr::Binary(op, Box::new(a), Box::new(b)),
        }
    }

    /// Every distinct variable name, sorted.
    pub fn variables(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out.sort();
        out.dedup();
        out
    }

    fn collect_vars(&self, out: &mut Vec<String>) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(v) => out.push(v.clone()),
            Expr::Unary(_, a) => a.collect_vars(out),
            Expr::Binary(_, a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    pub fn depends_on(&self, name: &str) -> bool {
        match self {
            Expr::Const(_) => false,
            Expr::Var(v) => v == name,
            Expr::Unary(_, a) => a.depends_on(name),
            Expr::Binary(_, a, b) => a.depends_on(name) || b.depends_on(name),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            // Negative constants are parenthesized so the parser folds them
            // back into a single constant.
            Expr::Const(c) if c.is_sign_negative() => write!(f, "(-{})", -c),
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Var(v) => f.write_str(v),
            Expr::Unary(UnaryOp::Neg, a) => write!(f, "(-{a})"),
            Expr::Unary(op, a) => write!(f, "{}({a})", op.name()),
            Expr::Binary(BinaryOp::Pow, a, b) => write!(f, "pow({a}, {b})"),
            Expr::Binary(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    #[test]
    fn smart_constructors_fold() {
        let x = Expr::var("x0");
        assert_eq!(
            Expr::binary(BinaryOp::Mul, Expr::Const(1.0), x.clone()),
            x
        );
        assert_eq!(
            Expr::binary(BinaryOp::Add, Expr::Const(2.0), Expr::Const(3.0)),
            Expr::Const(5.0)
        );
        assert_eq!(
            Expr::binary(BinaryOp::Mul, x.clone(), Expr::Const(0.0)),
            Expr::Const(0.0)
        );
        // 1/0 stays symbolic
        assert!(matches!(
            Expr::binary(BinaryOp::Div, Expr::Const(1.0), Expr::Const(0.0)),
            Expr::Binary(..)
        ));
        assert_eq!(
            Expr::unary(UnaryOp::Neg, Expr::unary(UnaryOp::Neg, x.clone())),
            x
        );
    }

    #[test]
    fn display_normalizes_caret_to_pow() {
        let e = parse("x0^2 - -3").unwrap();
        assert_eq!(e.to_string(), "(pow(x0, 2) - (-3))");
    }

    #[test]
    fn variables_are_sorted_and_unique() {
        let e = parse("u0 + t*x0 + t").unwrap();
        assert_eq!(e.variables(), ["t", "u0", "x0"]);
    }
}
