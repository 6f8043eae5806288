//! Derived-metric expressions.
//!
//! The language is four-operator arithmetic over numbers and metric
//! identifiers, with parentheses and unary minus:
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | atom
//! atom   := number | ident | '(' expr ')'
//! ident  := [A-Za-z_][A-Za-z0-9_]*
//! ```
//!
//! `capacity` is a reserved identifier bound per place at evaluation time,
//! so a density metric is written `roaming / capacity`.

mod eval;
mod graph;
mod parser;

use std::fmt;

pub use eval::{evaluate, EvalError};
pub use graph::{resolve_metric_graph, GraphError};
pub use parser::{parse_expression, ParseError};

/// Identifier bound to the place's carrying capacity.
pub const CAPACITY: &str = "capacity";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
        }
    }

    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Number(f64),
    MetricRef(String),
    Neg(Box<Expr>),
    BinOp(BinOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn bin(op: BinOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::BinOp(op, Box::new(lhs), Box::new(rhs))
    }

    pub fn metric(id: &str) -> Expr {
        Expr::MetricRef(id.to_string())
    }

    /// Identifiers referenced by the expression, in first-occurrence order.
    pub fn references(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_refs(&mut out);
        out
    }

    fn collect_refs<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Expr::Number(_) => {}
            Expr::MetricRef(id) => {
                if !out.contains(&id.as_str()) {
                    out.push(id);
                }
            }
            Expr::Neg(e) => e.collect_refs(out),
            Expr::BinOp(_, l, r) => {
                l.collect_refs(out);
                r.collect_refs(out);
            }
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::BinOp(op, ..) => op.precedence(),
            Expr::Neg(_) => 3,
            Expr::Number(_) | Expr::MetricRef(_) => 4,
        }
    }
}

/// Canonical text with the minimum parentheses needed to re-parse to the
/// same tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Number(n) => write!(f, "{n}"),
            Expr::MetricRef(id) => f.write_str(id),
            Expr::Neg(inner) => {
                if inner.precedence() < 3 {
                    write!(f, "-({inner})")
                } else {
                    write!(f, "-{inner}")
                }
            }
            Expr::BinOp(op, l, r) => {
                let p = op.precedence();
                if l.precedence() < p {
                    write!(f, "({l})")?;
                } else {
                    write!(f, "{l}")?;
                }
                write!(f, " {} ", op.symbol())?;
                // Left associativity: an equal-precedence right child needs parens.
                if r.precedence() <= p {
                    write!(f, "({r})")
                } else {
                    write!(f, "{r}")
                }
            }
        }
    }
}
