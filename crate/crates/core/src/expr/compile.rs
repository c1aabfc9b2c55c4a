//! Slot-indexed expressions for repeated evaluation.
//!
//! Compilation resolves every variable once: names listed in the slot table
//! become slot references, everything else must be a parameter and is folded
//! into a constant. Evaluation then needs no lookups and no allocation.

use super::{BinaryOp, Env, Expr, ExprError, UnaryOp};
use alloc::boxed::Box;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    Time,
    State(usize),
    Control(usize),
}

impl Slot {
    /// Maps the canonical names `t`, `x<i>` and `u<j>` to slots.
    pub fn from_name(name: &str, state_dim: usize, control_dim: usize) -> Option<Self> {
        if name == "t" {
            return Some(Slot::Time);
        }
        let index = |prefix: char| -> Option<usize> {
            let rest = name.strip_prefix(prefix)?;
            if rest.is_empty() || (rest.len() > 1 && rest.starts_with('0')) {
                return None;
            }
            rest.parse().ok()
        };
        match (index('x'), index('u')) {
            (Some(i), _) if i < state_dim => Some(Slot::State(i)),
            (_, Some(j)) if j < control_dim => Some(Slot::Control(j)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
enum Node {
    Const(f64),
    Slot(Slot),
    Unary(UnaryOp, Box<Node>),
    Binary(BinaryOp, Box<Node>, Box<Node>),
}

/// An expression with variables resolved to slots.
#[derive(Debug, Clone)]
pub struct Compiled {
    root: Node,
}

impl Compiled {
    /// Compiles `expr`; `slots` decides which names are slots, `params`
    /// supplies values for every other name.
    pub fn new<F, P>(expr: &Expr, slots: F, params: &P) -> Result<Self, ExprError>
    where
        F: Fn(&str) -> Option<Slot>,
        P: Env + ?Sized,
    {
        Ok(Self {
            root: lower(expr, &slots, params)?,
        })
    }

    /// Evaluates with IEEE semantics; domain violations surface as NaN or
    /// infinities and are left to the caller.
    #[inline]
    pub fn eval(&self, t: f64, x: &[f64], u: &[f64]) -> f64 {
        eval_node(&self.root, t, x, u)
    }

    pub fn is_constant(&self) -> Option<f64> {
        match self.root {
            Node::Const(c) => Some(c),
            _ => None,
        }
    }
}

fn lower<F, P>(e: &Expr, slots: &F, params: &P) -> Result<Node, ExprError>
where
    F: Fn(&str) -> Option<Slot>,
    P: Env + ?Sized,
{
    Ok(match e {
        Expr::Const(c) => Node::Const(*c),
        Expr::Var(name) => match slots(name) {
            Some(s) => Node::Slot(s),
            None => Node::Const(params.lookup(name).ok_or_else(|| ExprError::Unbound {
                name: name.clone(),
            })?),
        },
        Expr::Unary(op, a) => match lower(a, slots, params)? {
            Node::Const(c) => Node::Const(op.apply(c)),
            n => Node::Unary(*op, n.into()),
        },
        Expr::Binary(op, a, b) => match (lower(a, slots, params)?, lower(b, slots, params)?) {
            (Node::Const(x), Node::Const(y)) => Node::Const(op.apply(x, y)),
            (x, y) => Node::Binary(*op, x.into(), y.into()),
        },
    })
}

fn eval_node(n: &Node, t: f64, x: &[f64], u: &[f64]) -> f64 {
    match n {
        Node::Const(c) => *c,
        Node::Slot(Slot::Time) => t,
        Node::Slot(Slot::State(i)) => x[*i],
        Node::Slot(Slot::Control(j)) => u[*j],
        Node::Unary(op, a) => op.apply(eval_node(a, t, x, u)),
        Node::Binary(BinaryOp::Pow, a, b) => {
            let base = eval_node(a, t, x, u);
            match **b {
                Node::Const(2.0) => base * base,
                Node::Const(3.0) => base * base * base,
                _ => libm::pow(base, eval_node(b, t, x, u)),
            }
        }
        Node::Binary(op, a, b) => op.apply(eval_node(a, t, x, u), eval_node(b, t, x, u)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;
    use alloc::collections::BTreeMap;

    fn slots(name: &str) -> Option<Slot> {
        Slot::from_name(name, 2, 1)
    }

    #[test]
    fn slot_names() {
        assert_eq!(slots("t"), Some(Slot::Time));
        assert_eq!(slots("x1"), Some(Slot::State(1)));
        assert_eq!(slots("x2"), None);
        assert_eq!(slots("u0"), Some(Slot::Control(0)));
        assert_eq!(slots("x01"), None);
        assert_eq!(slots("rho"), None);
    }

    #[test]
    fn compiled_matches_tree_evaluation() {
        let e = parse("exp(-rho*t)*(x0^3 + u0) - x1/2").unwrap();
        let mut params = BTreeMap::new();
        params.insert("rho".into(), 0.7);
        let c = Compiled::new(&e, slots, &params).unwrap();
        let env = [("rho", 0.7), ("t", 1.3), ("x0", -0.4), ("x1", 2.0), ("u0", 0.25)];
        let want = e.eval(&env).unwrap();
        let got = c.eval(1.3, &[-0.4, 2.0], &[0.25]);
        assert!((want - got).abs() <= 1e-15 * want.abs().max(1.0));
    }

    #[test]
    fn parameters_fold_to_constants() {
        let e = parse("2*rho + 1").unwrap();
        let c = Compiled::new(&e, slots, &[("rho", 3.0)]).unwrap();
        assert_eq!(c.is_constant(), Some(7.0));
        assert!(Compiled::new(&e, slots, &[("k", 3.0)]).is_err());
    }
}
