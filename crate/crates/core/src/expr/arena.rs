//! Hash-consed expression storage.
//!
//! Every node lives in one process-wide arena. Structurally identical
//! subtrees share a single id, so equality of `NodeId`s is structural
//! equality of the (simplified) trees. Children are always inserted before
//! their parents, which makes ascending id order a topological order.

use std::collections::HashMap;

use once_cell::sync::Lazy;
use parking_lot::RwLock;

use super::Var;

pub(crate) type NodeId = u32;

pub(crate) const ZERO: NodeId = 0;
pub(crate) const ONE: NodeId = 1;

/// Elementary functions understood by the parser and the differentiator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Builtin {
    Sqrt,
    Exp,
    Log,
    Sin,
    Cos,
}

impl Builtin {
    pub fn name(self) -> &'static str {
        match self {
            Builtin::Sqrt => "sqrt",
            Builtin::Exp => "exp",
            Builtin::Log => "log",
            Builtin::Sin => "sin",
            Builtin::Cos => "cos",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "sqrt" => Builtin::Sqrt,
            "exp" => Builtin::Exp,
            "log" => Builtin::Log,
            "sin" => Builtin::Sin,
            "cos" => Builtin::Cos,
            _ => return None,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub(crate) enum Node {
    /// Bit pattern of a finite `f64`; `-0.0` is normalised to `0.0`.
    Const(u64),
    X(u16),
    Y(u16),
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Neg(NodeId),
    Pow(NodeId, i32),
    Func(Builtin, NodeId),
}

pub(crate) struct Arena {
    nodes: Vec<Node>,
    /// Bit `i` set: depends on x[i]; bit `32 + i`: depends on y[i].
    deps: Vec<u64>,
    index: HashMap<Node, NodeId>,
    derivs: HashMap<(NodeId, Var), NodeId>,
}

pub(crate) static ARENA: Lazy<RwLock<Arena>> = Lazy::new(|| RwLock::new(Arena::new()));

fn var_bit(v: Var) -> u64 {
    match v {
        Var::X(i) => 1u64 << i,
        Var::Y(i) => 1u64 << (32 + i),
    }
}

impl Arena {
    fn new() -> Self {
        let mut arena = Arena {
            nodes: Vec::new(),
            deps: Vec::new(),
            index: HashMap::new(),
            derivs: HashMap::new(),
        };
        let zero = arena.intern(Node::Const(0f64.to_bits()));
        let one = arena.intern(Node::Const(1f64.to_bits()));
        debug_assert_eq!((zero, one), (ZERO, ONE));
        arena
    }

    pub(crate) fn node(&self, id: NodeId) -> Node {
        self.nodes[id as usize]
    }

    pub(crate) fn deps(&self, id: NodeId) -> u64 {
        self.deps[id as usize]
    }

    fn intern(&mut self, node: Node) -> NodeId {
        if let Some(&id) = self.index.get(&node) {
            return id;
        }
        let deps = match node {
            Node::Const(_) => 0,
            Node::X(i) => 1u64 << i,
            Node::Y(i) => 1u64 << (32 + i as u64),
            Node::Add(a, b) | Node::Mul(a, b) => self.deps(a) | self.deps(b),
            Node::Neg(a) | Node::Pow(a, _) | Node::Func(_, a) => self.deps(a),
        };
        let id = NodeId::try_from(self.nodes.len()).expect("expression arena exhausted");
        self.nodes.push(node);
        self.deps.push(deps);
        self.index.insert(node, id);
        id
    }

    pub(crate) fn as_const(&self, id: NodeId) -> Option<f64> {
        match self.node(id) {
            Node::Const(bits) => Some(f64::from_bits(bits)),
            _ => None,
        }
    }

    pub(crate) fn konst(&mut self, c: f64) -> NodeId {
        debug_assert!(c.is_finite(), "non-finite constant {c}");
        let c = if c == 0.0 { 0.0 } else { c };
        self.intern(Node::Const(c.to_bits()))
    }

    pub(crate) fn var(&mut self, v: Var) -> NodeId {
        match v {
            Var::X(i) => self.intern(Node::X(i as u16)),
            Var::Y(i) => self.intern(Node::Y(i as u16)),
        }
    }

    /// Splits `c * base` into its numeric coefficient and the rest.
    fn split_coef(&self, id: NodeId) -> (f64, NodeId) {
        match self.node(id) {
            Node::Mul(a, b) => {
                if let Some(c) = self.as_const(a) {
                    (c, b)
                } else if let Some(c) = self.as_const(b) {
                    (c, a)
                } else {
                    (1.0, id)
                }
            }
            Node::Neg(a) => {
                let (c, base) = self.split_coef(a);
                (-c, base)
            }
            _ => (1.0, id),
        }
    }

    fn split_pow(&self, id: NodeId) -> (NodeId, i32) {
        match self.node(id) {
            Node::Pow(base, n) => (base, n),
            _ => (id, 1),
        }
    }

    pub(crate) fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        match (self.as_const(a), self.as_const(b)) {
            (Some(x), Some(y)) => return self.konst(x + y),
            (Some(0.0), None) => return b,
            (None, Some(0.0)) => return a,
            _ => {}
        }
        // c1 + (c2 + u)
        for (c, other) in [(a, b), (b, a)] {
            if let (Some(c1), Node::Add(p, q)) = (self.as_const(c), self.node(other)) {
                if let Some(c2) = self.as_const(p) {
                    let k = self.konst(c1 + c2);
                    return self.add(k, q);
                }
                if let Some(c2) = self.as_const(q) {
                    let k = self.konst(c1 + c2);
                    return self.add(k, p);
                }
            }
        }
        let (ca, ba) = self.split_coef(a);
        let (cb, bb) = self.split_coef(b);
        if ba == bb && self.as_const(ba).is_none() {
            let c = ca + cb;
            if c == 0.0 {
                return ZERO;
            }
            let k = self.konst(c);
            return self.mul(k, ba);
        }
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        self.intern(Node::Add(lo, hi))
    }

    pub(crate) fn neg(&mut self, a: NodeId) -> NodeId {
        if let Some(c) = self.as_const(a) {
            return self.konst(-c);
        }
        match self.node(a) {
            Node::Neg(inner) => inner,
            Node::Mul(p, q) => {
                if let Some(c) = self.as_const(p) {
                    let k = self.konst(-c);
                    self.mul(k, q)
                } else if let Some(c) = self.as_const(q) {
                    let k = self.konst(-c);
                    self.mul(k, p)
                } else {
                    self.intern(Node::Neg(a))
                }
            }
            _ => self.intern(Node::Neg(a)),
        }
    }

    pub(crate) fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let nb = self.neg(b);
        self.add(a, nb)
    }

    pub(crate) fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        match (self.as_const(a), self.as_const(b)) {
            (Some(x), Some(y)) => return self.konst(x * y),
            (Some(0.0), _) => return ZERO,
            (_, Some(0.0)) => return ZERO,
            (Some(1.0), None) => return b,
            (None, Some(1.0)) => return a,
            (Some(-1.0), None) => return self.neg(b),
            (None, Some(-1.0)) => return self.neg(a),
            _ => {}
        }
        if let Node::Neg(inner) = self.node(a) {
            let m = self.mul(inner, b);
            return self.neg(m);
        }
        if let Node::Neg(inner) = self.node(b) {
            let m = self.mul(a, inner);
            return self.neg(m);
        }
        // c1 * (c2 * u)
        for (c, other) in [(a, b), (b, a)] {
            if let (Some(c1), Node::Mul(p, q)) = (self.as_const(c), self.node(other)) {
                if let Some(c2) = self.as_const(p) {
                    let k = self.konst(c1 * c2);
                    return self.mul(k, q);
                }
                if let Some(c2) = self.as_const(q) {
                    let k = self.konst(c1 * c2);
                    return self.mul(k, p);
                }
            }
        }
        let (ba, ea) = self.split_pow(a);
        let (bb, eb) = self.split_pow(b);
        if ba == bb {
            if let Some(e) = ea.checked_add(eb) {
                return self.pow(ba, e);
            }
        }
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        self.intern(Node::Mul(lo, hi))
    }

    pub(crate) fn div(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let inv = self.pow(b, -1);
        self.mul(a, inv)
    }

    pub(crate) fn pow(&mut self, a: NodeId, n: i32) -> NodeId {
        if n == 0 {
            return ONE;
        }
        if n == 1 {
            return a;
        }
        if let Some(c) = self.as_const(a) {
            let v = c.powi(n);
            if v.is_finite() && (c != 0.0 || n > 0) {
                return self.konst(v);
            }
            return self.intern(Node::Pow(a, n));
        }
        match self.node(a) {
            Node::Pow(base, m) => {
                if let Some(e) = m.checked_mul(n) {
                    return self.pow(base, e);
                }
            }
            Node::Func(Builtin::Sqrt, inner) if n % 2 == 0 => return self.pow(inner, n / 2),
            Node::Neg(inner) => {
                let p = self.pow(inner, n);
                return if n % 2 == 0 { p } else { self.neg(p) };
            }
            _ => {}
        }
        self.intern(Node::Pow(a, n))
    }

    pub(crate) fn func(&mut self, f: Builtin, a: NodeId) -> NodeId {
        if let Some(c) = self.as_const(a) {
            let folded = match f {
                Builtin::Sqrt if c >= 0.0 => Some(c.sqrt()),
                Builtin::Exp => Some(c.exp()),
                Builtin::Log if c > 0.0 => Some(c.ln()),
                Builtin::Sin => Some(c.sin()),
                Builtin::Cos => Some(c.cos()),
                _ => None,
            };
            if let Some(v) = folded.filter(|v| v.is_finite()) {
                return self.konst(v);
            }
        }
        if let (Builtin::Log, Node::Func(Builtin::Exp, inner)) = (f, self.node(a)) {
            return inner;
        }
        self.intern(Node::Func(f, a))
    }

    /// Exact partial derivative, memoised per `(node, variable)`.
    pub(crate) fn derivative(&mut self, id: NodeId, v: Var) -> NodeId {
        if self.deps(id) & var_bit(v) == 0 {
            return ZERO;
        }
        if let Some(&d) = self.derivs.get(&(id, v)) {
            return d;
        }
        let d = match self.node(id) {
            Node::Const(_) => ZERO,
            Node::X(_) | Node::Y(_) => ONE,
            Node::Add(a, b) => {
                let da = self.derivative(a, v);
                let db = self.derivative(b, v);
                self.add(da, db)
            }
            Node::Mul(a, b) => {
                let da = self.derivative(a, v);
                let db = self.derivative(b, v);
                let l = self.mul(da, b);
                let r = self.mul(a, db);
                self.add(l, r)
            }
            Node::Neg(a) => {
                let da = self.derivative(a, v);
                self.neg(da)
            }
            Node::Pow(a, n) => {
                let da = self.derivative(a, v);
                let p = self.pow(a, n - 1);
                let k = self.konst(n as f64);
                let kp = self.mul(k, p);
                self.mul(kp, da)
            }
            Node::Func(f, a) => {
                let da = self.derivative(a, v);
                let outer = match f {
                    Builtin::Sqrt => {
                        let inv = self.pow(id, -1);
                        let half = self.konst(0.5);
                        self.mul(half, inv)
                    }
                    Builtin::Exp => id,
                    Builtin::Log => self.pow(a, -1),
                    Builtin::Sin => self.func(Builtin::Cos, a),
                    Builtin::Cos => {
                        let s = self.func(Builtin::Sin, a);
                        self.neg(s)
                    }
                };
                self.mul(outer, da)
            }
        };
        self.derivs.insert((id, v), d);
        d
    }

    /// Replaces every occurrence of a variable by another expression.
    pub(crate) fn substitute(
        &mut self,
        id: NodeId,
        map: &dyn Fn(Var) -> Option<NodeId>,
        memo: &mut HashMap<NodeId, NodeId>,
    ) -> NodeId {
        if let Some(&r) = memo.get(&id) {
            return r;
        }
        let r = match self.node(id) {
            Node::Const(_) => id,
            Node::X(i) => map(Var::X(i as usize)).unwrap_or(id),
            Node::Y(i) => map(Var::Y(i as usize)).unwrap_or(id),
            Node::Add(a, b) => {
                let (a, b) = (self.substitute(a, map, memo), self.substitute(b, map, memo));
                self.add(a, b)
            }
            Node::Mul(a, b) => {
                let (a, b) = (self.substitute(a, map, memo), self.substitute(b, map, memo));
                self.mul(a, b)
            }
            Node::Neg(a) => {
                let a = self.substitute(a, map, memo);
                self.neg(a)
            }
            Node::Pow(a, n) => {
                let a = self.substitute(a, map, memo);
                self.pow(a, n)
            }
            Node::Func(f, a) => {
                let a = self.substitute(a, map, memo);
                self.func(f, a)
            }
        };
        memo.insert(id, r);
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn like_terms_and_powers_merge() {
        let mut a = ARENA.write();
        let x = a.var(Var::X(0));
        let xx = a.add(x, x);
        let two = a.konst(2.0);
        let two_x = a.mul(two, x);
        assert_eq!(xx, two_x);
        let sq = a.mul(x, x);
        assert_eq!(sq, a.pow(x, 2));
        let inv = a.pow(x, -1);
        assert_eq!(a.mul(x, inv), ONE);
        assert_eq!(a.sub(x, x), ZERO);
    }

    #[test]
    fn sqrt_squared_collapses() {
        let mut a = ARENA.write();
        let y = a.var(Var::Y(1));
        let q = a.pow(y, 2);
        let one = a.konst(1.0);
        let inner = a.add(q, one);
        let s = a.func(Builtin::Sqrt, inner);
        assert_eq!(a.pow(s, 2), inner);
        assert_eq!(a.pow(s, 4), a.pow(inner, 2));
    }

    #[test]
    fn dependency_mask_short_circuits_derivatives() {
        let mut a = ARENA.write();
        let x = a.var(Var::X(2));
        let y = a.var(Var::Y(0));
        let e = a.mul(x, y);
        assert_eq!(a.deps(e), (1 << 2) | (1 << 32));
        assert_eq!(a.derivative(e, Var::Y(1)), ZERO);
        assert_eq!(a.derivative(e, Var::Y(0)), x);
    }
}
