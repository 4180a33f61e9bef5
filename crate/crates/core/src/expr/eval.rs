//! Numeric evaluation.
//!
//! A [`Program`] is a flattened, topologically ordered copy of the nodes
//! reachable from a set of roots. It is built once under the arena lock and
//! then evaluated lock-free as often as needed.

use std::collections::HashMap;

use thiserror::Error;

use super::arena::{Arena, Builtin, Node, NodeId, ARENA};
use super::display::render;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainErrorKind {
    DivisionByZero,
    NegativeSqrt,
    NonPositiveLog,
    NonFinite,
    /// A user-supplied domain predicate evaluated to a non-positive value.
    OutsideDomain,
}

impl std::fmt::Display for DomainErrorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DomainErrorKind::DivisionByZero => "division by zero",
            DomainErrorKind::NegativeSqrt => "square root of a negative number",
            DomainErrorKind::NonPositiveLog => "logarithm of a non-positive number",
            DomainErrorKind::NonFinite => "non-finite value",
            DomainErrorKind::OutsideDomain => "point outside the declared domain",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{kind} in `{subexpr}`")]
pub struct EvalError {
    pub kind: DomainErrorKind,
    /// The offending subexpression, rendered in source syntax.
    pub subexpr: String,
}

#[derive(Clone, Copy, Debug)]
enum Op {
    Const(f64),
    X(usize),
    Y(usize),
    Add(usize, usize),
    Mul(usize, usize),
    Neg(usize),
    Pow(usize, i32),
    Func(Builtin, usize),
}

#[derive(Clone, Debug)]
pub struct Program {
    ops: Vec<Op>,
    ids: Vec<NodeId>,
    roots: Vec<usize>,
}

impl Program {
    pub(crate) fn compile(roots: &[NodeId]) -> Self {
        let arena = ARENA.read();
        Self::compile_in(&arena, roots)
    }

    pub(crate) fn compile_in(arena: &Arena, roots: &[NodeId]) -> Self {
        let mut seen: HashMap<NodeId, usize> = HashMap::new();
        let mut stack: Vec<NodeId> = roots.to_vec();
        let mut reach: Vec<NodeId> = Vec::new();
        while let Some(id) = stack.pop() {
            if seen.insert(id, 0).is_some() {
                continue;
            }
            reach.push(id);
            match arena.node(id) {
                Node::Add(a, b) | Node::Mul(a, b) => {
                    stack.push(a);
                    stack.push(b);
                }
                Node::Neg(a) | Node::Pow(a, _) | Node::Func(_, a) => stack.push(a),
                _ => {}
            }
        }
        reach.sort_unstable();
        for (k, id) in reach.iter().enumerate() {
            seen.insert(*id, k);
        }
        let ops = reach
            .iter()
            .map(|&id| match arena.node(id) {
                Node::Const(bits) => Op::Const(f64::from_bits(bits)),
                Node::X(i) => Op::X(i as usize),
                Node::Y(i) => Op::Y(i as usize),
                Node::Add(a, b) => Op::Add(seen[&a], seen[&b]),
                Node::Mul(a, b) => Op::Mul(seen[&a], seen[&b]),
                Node::Neg(a) => Op::Neg(seen[&a]),
                Node::Pow(a, n) => Op::Pow(seen[&a], n),
                Node::Func(f, a) => Op::Func(f, seen[&a]),
            })
            .collect();
        Program {
            ops,
            roots: roots.iter().map(|r| seen[r]).collect(),
            ids: reach,
        }
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn num_roots(&self) -> usize {
        self.roots.len()
    }

    /// Evaluates all roots at `(x, y)`.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>, EvalError> {
        let mut vals = vec![0.0; self.ops.len()];
        for (k, op) in self.ops.iter().enumerate() {
            let v = match *op {
                Op::Const(c) => c,
                Op::X(i) => x[i],
                Op::Y(i) => y[i],
                Op::Add(a, b) => vals[a] + vals[b],
                Op::Mul(a, b) => vals[a] * vals[b],
                Op::Neg(a) => -vals[a],
                Op::Pow(a, n) => {
                    let base = vals[a];
                    if n < 0 && base == 0.0 {
                        return Err(self.error(k, DomainErrorKind::DivisionByZero));
                    }
                    base.powi(n)
                }
                Op::Func(f, a) => {
                    let u = vals[a];
                    match f {
                        Builtin::Sqrt if u < 0.0 => {
                            return Err(self.error(k, DomainErrorKind::NegativeSqrt))
                        }
                        Builtin::Sqrt => u.sqrt(),
                        Builtin::Log if u <= 0.0 => {
                            return Err(self.error(k, DomainErrorKind::NonPositiveLog))
                        }
                        Builtin::Log => u.ln(),
                        Builtin::Exp => u.exp(),
                        Builtin::Sin => u.sin(),
                        Builtin::Cos => u.cos(),
                    }
                }
            };
            if !v.is_finite() {
                return Err(self.error(k, DomainErrorKind::NonFinite));
            }
            vals[k] = v;
        }
        Ok(self.roots.iter().map(|&r| vals[r]).collect())
    }

    fn error(&self, k: usize, kind: DomainErrorKind) -> EvalError {
        let arena = ARENA.read();
        EvalError {
            kind,
            subexpr: render(&arena, self.ids[k]),
        }
    }
}
