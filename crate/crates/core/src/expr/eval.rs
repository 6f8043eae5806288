use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

use super::{BinOp, Expr};

/// A reference with no binding at all. This is a wiring bug, unlike a
/// bound-but-missing value which is ordinary absent data.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unbound identifier {0:?}")]
pub struct EvalError(pub String);

/// Source of identifier values. The outer `Option` is "is it bound", the
/// inner one "is the value present".
pub trait Bindings {
    fn lookup(&self, id: &str) -> Option<Option<f64>>;
}

impl<F> Bindings for F
where
    F: Fn(&str) -> Option<Option<f64>>,
{
    fn lookup(&self, id: &str) -> Option<Option<f64>> {
        self(id)
    }
}

impl Bindings for HashMap<String, Option<f64>> {
    fn lookup(&self, id: &str) -> Option<Option<f64>> {
        self.get(id).copied()
    }
}

impl Bindings for BTreeMap<String, Option<f64>> {
    fn lookup(&self, id: &str) -> Option<Option<f64>> {
        self.get(id).copied()
    }
}

impl Bindings for HashMap<&str, Option<f64>> {
    fn lookup(&self, id: &str) -> Option<Option<f64>> {
        self.get(id).copied()
    }
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

/// Evaluates over reals. Missing operands, division by zero and overflow
/// all yield `Ok(None)`; the result is never NaN or infinite.
pub fn evaluate<B: Bindings + ?Sized>(e: &Expr, bindings: &B) -> Result<Option<f64>, EvalError> {
    Ok(match e {
        Expr::Number(n) => finite(*n),
        Expr::MetricRef(id) => bindings.lookup(id).ok_or_else(|| EvalError(id.clone()))?.and_then(finite),
        Expr::Neg(inner) => evaluate(inner.as_ref(), bindings)?.map(|v| -v),
        Expr::BinOp(op, l, r) => {
            // Both sides are evaluated so an unbound name is always reported.
            let (l, r) = (evaluate(l.as_ref(), bindings)?, evaluate(r.as_ref(), bindings)?);
            match (l, r) {
                (Some(a), Some(b)) => match op {
                    BinOp::Add => finite(a + b),
                    BinOp::Sub => finite(a - b),
                    BinOp::Mul => finite(a * b),
                    BinOp::Div if b == 0.0 => None,
                    BinOp::Div => finite(a / b),
                },
                _ => None,
            }
        }
    })
}
