//! Scalar fields on TM as exact, symbolically differentiable expressions.
//!
//! A [`FieldExpr`] is a handle into a shared hash-consed arena: copying it
//! is free, equal handles denote structurally equal trees, and derivatives
//! are memoised per `(node, variable)` so repeated differentiation in any
//! order never recomputes a subtree.

mod arena;
mod display;
mod eval;
mod parse;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::ops;

use serde::Serialize;

pub use arena::Builtin;
pub use eval::{DomainErrorKind, EvalError, Program};
pub use parse::{ParseError, ParseErrorKind};

use arena::{NodeId, ARENA};

use crate::point::TangentPoint;
use crate::tol::Tolerance;

/// A coordinate of TM. Indices are 0-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Var {
    X(usize),
    Y(usize),
}

impl Var {
    /// Position in the stacked `(x_1..x_n, y_1..y_n)` ordering.
    pub fn slot(self, dim: usize) -> usize {
        match self {
            Var::X(i) => i,
            Var::Y(i) => dim + i,
        }
    }

    pub fn from_slot(slot: usize, dim: usize) -> Var {
        if slot < dim {
            Var::X(slot)
        } else {
            Var::Y(slot - dim)
        }
    }

    pub fn index(self) -> usize {
        match self {
            Var::X(i) | Var::Y(i) => i,
        }
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::X(i) => write!(f, "x[{}]", i + 1),
            Var::Y(i) => write!(f, "y[{}]", i + 1),
        }
    }
}

/// Closed-form scalar field on TM of fixed dimension `n`.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct FieldExpr {
    id: NodeId,
    dim: usize,
}

impl FieldExpr {
    pub fn parse(source: &str, dim: usize) -> Result<Self, ParseError> {
        let id = parse::parse_node(source, dim)?;
        Ok(FieldExpr { id, dim })
    }

    pub fn constant(c: f64, dim: usize) -> Self {
        FieldExpr {
            id: ARENA.write().konst(c),
            dim,
        }
    }

    pub fn zero(dim: usize) -> Self {
        FieldExpr {
            id: arena::ZERO,
            dim,
        }
    }

    pub fn var(v: Var, dim: usize) -> Self {
        assert!(
            v.index() < dim,
            "variable {v} out of range for dimension {dim}"
        );
        FieldExpr {
            id: ARENA.write().var(v),
            dim,
        }
    }

    pub fn x(i: usize, dim: usize) -> Self {
        Self::var(Var::X(i), dim)
    }

    pub fn y(i: usize, dim: usize) -> Self {
        Self::var(Var::Y(i), dim)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_zero(&self) -> bool {
        self.id == arena::ZERO
    }

    pub fn as_constant(&self) -> Option<f64> {
        ARENA.read().as_const(self.id)
    }

    pub fn depends_on(&self, v: Var) -> bool {
        let bit = match v {
            Var::X(i) => 1u64 << i,
            Var::Y(i) => 1u64 << (32 + i),
        };
        ARENA.read().deps(self.id) & bit != 0
    }

    /// Exact partial derivative with respect to one coordinate.
    pub fn diff(&self, v: Var) -> Self {
        assert!(
            v.index() < self.dim,
            "variable {v} out of range for dimension {}",
            self.dim
        );
        FieldExpr {
            id: ARENA.write().derivative(self.id, v),
            dim: self.dim,
        }
    }

    /// Iterated partial derivative, applied left to right.
    pub fn diff_many(&self, vars: &[Var]) -> Self {
        vars.iter().fold(*self, |e, &v| e.diff(v))
    }

    pub fn pow(&self, n: i32) -> Self {
        self.lift(|a, id| a.pow(id, n))
    }

    pub fn apply(&self, f: Builtin) -> Self {
        self.lift(|a, id| a.func(f, id))
    }

    pub fn sqrt(&self) -> Self {
        self.apply(Builtin::Sqrt)
    }

    pub fn exp(&self) -> Self {
        self.apply(Builtin::Exp)
    }

    pub fn log(&self) -> Self {
        self.apply(Builtin::Log)
    }

    pub fn scale(&self, c: f64) -> Self {
        self.lift(|a, id| {
            let k = a.konst(c);
            a.mul(k, id)
        })
    }

    fn lift(&self, f: impl FnOnce(&mut arena::Arena, NodeId) -> NodeId) -> Self {
        let mut a = ARENA.write();
        FieldExpr {
            id: f(&mut a, self.id),
            dim: self.dim,
        }
    }

    fn combine(
        self,
        rhs: Self,
        f: impl FnOnce(&mut arena::Arena, NodeId, NodeId) -> NodeId,
    ) -> Self {
        assert_eq!(
            self.dim, rhs.dim,
            "dimension mismatch between field expressions"
        );
        let mut a = ARENA.write();
        FieldExpr {
            id: f(&mut a, self.id, rhs.id),
            dim: self.dim,
        }
    }

    pub fn sum<I: IntoIterator<Item = FieldExpr>>(terms: I, dim: usize) -> Self {
        terms
            .into_iter()
            .fold(FieldExpr::zero(dim), |acc, t| acc + t)
    }

    /// `sum_i coeffs[i] * y^i`.
    pub fn contract_y(coeffs: &[FieldExpr], dim: usize) -> Self {
        FieldExpr::sum(
            coeffs
                .iter()
                .enumerate()
                .map(|(i, c)| *c * FieldExpr::y(i, dim)),
            dim,
        )
    }

    /// Replaces coordinates by other expressions of the same dimension.
    pub fn substitute(&self, map: &HashMap<Var, FieldExpr>) -> Self {
        let ids: HashMap<Var, NodeId> = map.iter().map(|(v, e)| (*v, e.id)).collect();
        let lookup = |v: Var| ids.get(&v).copied();
        let mut memo = HashMap::new();
        self.lift(|a, id| a.substitute(id, &lookup, &mut memo))
    }

    pub fn eval(&self, p: &TangentPoint) -> Result<f64, EvalError> {
        self.eval_xy(p.x(), p.y())
    }

    pub fn eval_xy(&self, x: &[f64], y: &[f64]) -> Result<f64, EvalError> {
        debug_assert_eq!(x.len(), self.dim);
        Ok(Program::compile(&[self.id]).eval(x, y)?[0])
    }

    /// Number of distinct nodes reachable from this expression.
    pub fn size(&self) -> usize {
        Program::compile(&[self.id]).len()
    }

    /// Compiles several expressions into one shared evaluation program.
    pub fn compile(exprs: &[FieldExpr]) -> Program {
        let ids: Vec<NodeId> = exprs.iter().map(|e| e.id).collect();
        Program::compile(&ids)
    }

    pub fn eval_many(exprs: &[FieldExpr], p: &TangentPoint) -> Result<Vec<f64>, EvalError> {
        Self::compile(exprs).eval(p.x(), p.y())
    }

    /// All partial derivatives up to `order` at `p`.
    pub fn evaluate_jet(&self, p: &TangentPoint, order: usize) -> Result<JetValue, EvalError> {
        let n = self.dim;
        let mut keys: Vec<Vec<u16>> = vec![Vec::new()];
        let mut exprs: Vec<FieldExpr> = vec![*self];
        let mut frontier: Vec<(Vec<u16>, FieldExpr)> = vec![(Vec::new(), *self)];
        for _ in 0..order {
            let mut next = Vec::new();
            for (key, e) in &frontier {
                let start = key.last().copied().unwrap_or(0);
                for slot in start..(2 * n) as u16 {
                    let d = e.diff(Var::from_slot(slot as usize, n));
                    let mut k = key.clone();
                    k.push(slot);
                    keys.push(k.clone());
                    exprs.push(d);
                    next.push((k, d));
                }
            }
            frontier = next;
        }
        let values = Self::eval_many(&exprs, p)?;
        Ok(JetValue {
            point: p.clone(),
            order,
            entries: keys.into_iter().zip(values).collect(),
        })
    }

    /// Checks `e(x, t y) = t^k e(x, y)` and the Euler identity
    /// `y^i d e / d y^i = k e` on the given samples.
    pub fn check_homogeneity(
        &self,
        degree: i32,
        samples: &[TangentPoint],
        scales: &[f64],
        tol: Tolerance,
    ) -> Result<HomogeneityReport, EvalError> {
        assert!(
            !samples.is_empty(),
            "homogeneity check needs at least one sample"
        );
        let n = self.dim;
        let euler = FieldExpr::sum((0..n).map(|i| FieldExpr::y(i, n) * self.diff(Var::Y(i))), n);
        let prog = FieldExpr::compile(&[*self, euler]);
        let mut max_scaling_error = 0.0f64;
        let mut max_euler_error = 0.0f64;
        for p in samples {
            let base = prog.eval(p.x(), p.y())?;
            let (e, eu) = (base[0], base[1]);
            max_euler_error = max_euler_error.max(tol.rel_error(eu, degree as f64 * e));
            for &t in scales {
                assert!(t > 0.0, "homogeneity scales must be positive");
                let ty: Vec<f64> = p.y().iter().map(|v| v * t).collect();
                let scaled = prog.eval(p.x(), &ty)?[0];
                max_scaling_error =
                    max_scaling_error.max(tol.rel_error(scaled, t.powi(degree) * e));
            }
        }
        Ok(HomogeneityReport {
            degree,
            samples: samples.len(),
            max_scaling_error,
            max_euler_error,
            tolerance: tol,
            pass: max_scaling_error <= tol.rel && max_euler_error <= tol.rel,
        })
    }
}

/// Errors are relative, with the tolerance's absolute floor folded into the
/// denominator (see [`Tolerance::rel_error`]).
#[derive(Clone, Debug, Serialize)]
pub struct HomogeneityReport {
    pub degree: i32,
    pub samples: usize,
    pub max_scaling_error: f64,
    pub max_euler_error: f64,
    pub tolerance: Tolerance,
    pub pass: bool,
}

/// All mixed partials of a field up to a fixed order at one point.
#[derive(Clone, Debug)]
pub struct JetValue {
    pub point: TangentPoint,
    pub order: usize,
    entries: BTreeMap<Vec<u16>, f64>,
}

impl JetValue {
    /// Looks up a mixed partial; the order of `vars` is irrelevant.
    pub fn get(&self, vars: &[Var]) -> Option<f64> {
        let n = self.point.dim();
        let mut key: Vec<u16> = vars.iter().map(|v| v.slot(n) as u16).collect();
        key.sort_unstable();
        self.entries.get(&key).copied()
    }

    pub fn value(&self) -> f64 {
        self.entries[&Vec::new()]
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl fmt::Display for FieldExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let arena = ARENA.read();
        f.write_str(&display::render(&arena, self.id))
    }
}

impl fmt::Debug for FieldExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FieldExpr({self})")
    }
}

impl Serialize for FieldExpr {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl ops::Add for FieldExpr {
    type Output = FieldExpr;
    fn add(self, rhs: Self) -> Self {
        self.combine(rhs, |a, l, r| a.add(l, r))
    }
}

impl ops::Sub for FieldExpr {
    type Output = FieldExpr;
    fn sub(self, rhs: Self) -> Self {
        self.combine(rhs, |a, l, r| a.sub(l, r))
    }
}

impl ops::Mul for FieldExpr {
    type Output = FieldExpr;
    fn mul(self, rhs: Self) -> Self {
        self.combine(rhs, |a, l, r| a.mul(l, r))
    }
}

impl ops::Div for FieldExpr {
    type Output = FieldExpr;
    fn div(self, rhs: Self) -> Self {
        self.combine(rhs, |a, l, r| a.div(l, r))
    }
}

impl ops::Neg for FieldExpr {
    type Output = FieldExpr;
    fn neg(self) -> Self {
        self.lift(|a, id| a.neg(id))
    }
}

impl ops::Mul<FieldExpr> for f64 {
    type Output = FieldExpr;
    fn mul(self, rhs: FieldExpr) -> FieldExpr {
        rhs.scale(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(x: &[f64], y: &[f64]) -> TangentPoint {
        TangentPoint::new(x.to_vec(), y.to_vec()).unwrap()
    }

    #[test]
    fn parses_euclidean_norm() {
        let e = FieldExpr::parse("sqrt(dot(y,y))", 2).unwrap();
        assert_eq!(e.eval(&pt(&[0.0, 0.0], &[3.0, 4.0])).unwrap(), 5.0);
        let manual = FieldExpr::parse("sqrt(y[1]*y[1] + y[2]^2)", 2).unwrap();
        assert_eq!(e, manual);
    }

    #[test]
    fn parses_subtraction_tree() {
        let e = FieldExpr::parse("x[1]*y[2] - 3", 2).unwrap();
        assert_eq!(e.eval(&pt(&[2.0, 0.0], &[0.0, 5.0])).unwrap(), 7.0);
        assert_eq!(e.to_string(), "x[1]*y[2] - 3");
    }

    #[test]
    fn rejects_out_of_range_index() {
        let err = FieldExpr::parse("y[3]", 2).unwrap_err();
        assert_eq!(
            err.kind,
            ParseErrorKind::IndexOutOfRange { index: 3, dim: 2 }
        );
        assert_eq!(err.offset, 2);
        let err = FieldExpr::parse("x[0]", 2).unwrap_err();
        assert!(matches!(
            err.kind,
            ParseErrorKind::IndexOutOfRange { index: 0, .. }
        ));
    }

    #[test]
    fn reports_syntax_error_offsets() {
        let err = FieldExpr::parse("x[1] + * 2", 2).unwrap_err();
        assert_eq!(err.offset, 7);
        let err = FieldExpr::parse("sqrt(y[1]", 2).unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::UnexpectedEnd);
        let err = FieldExpr::parse("tan(y[1])", 2).unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::UnknownFunction("tan".into()));
        assert_eq!(err.offset, 0);
        assert!(FieldExpr::parse("y[1]^1.5", 2).is_err());
        assert!(FieldExpr::parse("sqrt(y[1], y[2])", 2).is_err());
    }

    #[test]
    fn simple_derivatives() {
        let e = FieldExpr::parse("x[1]*y[1]", 2).unwrap();
        assert_eq!(e.diff(Var::Y(0)), FieldExpr::parse("x[1]", 2).unwrap());
        let d = FieldExpr::parse("dot(y,y)", 2).unwrap().diff(Var::X(1));
        assert!(d.is_zero());
    }

    #[test]
    fn norm_derivative_matches_central_difference() {
        let e = FieldExpr::parse("sqrt(dot(y,y))", 2).unwrap();
        let h = 1e-6;
        let f = |a: f64| e.eval_xy(&[0.0, 0.0], &[a, 4.0]).unwrap();
        let fd = (f(3.0 + h) - f(3.0 - h)) / (2.0 * h);
        let exact = e
            .diff(Var::Y(0))
            .eval(&pt(&[0.0, 0.0], &[3.0, 4.0]))
            .unwrap();
        assert!((fd - 0.6).abs() < 1e-8);
        assert!((exact - 0.6).abs() < 1e-15);
    }

    #[test]
    fn domain_errors_name_the_subexpression() {
        let e = FieldExpr::parse("1/(1 - dot(x,x))", 2).unwrap();
        let err = e.eval(&pt(&[1.0, 0.0], &[1.0, 0.0])).unwrap_err();
        assert_eq!(err.kind, DomainErrorKind::DivisionByZero);
        assert!(err.subexpr.contains("x[1]"), "{}", err.subexpr);
        let e = FieldExpr::parse("sqrt(x[1])", 2).unwrap();
        let err = e.eval(&pt(&[-1.0, 0.0], &[1.0, 0.0])).unwrap_err();
        assert_eq!(err.kind, DomainErrorKind::NegativeSqrt);
        let e = FieldExpr::parse("log(x[1])", 2).unwrap();
        assert_eq!(
            e.eval(&pt(&[0.0, 0.0], &[1.0, 0.0])).unwrap_err().kind,
            DomainErrorKind::NonPositiveLog
        );
    }

    #[test]
    fn jet_order_zero_and_quadratic() {
        let e = FieldExpr::parse("dot(y,y)/2", 2).unwrap();
        let p = pt(&[0.2, -0.1], &[0.7, 1.3]);
        let j0 = e.evaluate_jet(&p, 0).unwrap();
        assert_eq!(j0.len(), 1);
        assert_eq!(j0.value(), e.eval(&p).unwrap());
        let j2 = e.evaluate_jet(&p, 2).unwrap();
        assert_eq!(j2.get(&[Var::Y(0), Var::Y(0)]), Some(1.0));
        assert_eq!(j2.get(&[Var::Y(0), Var::X(1)]), Some(0.0));
        assert_eq!(
            j2.get(&[Var::Y(0), Var::Y(1)]),
            j2.get(&[Var::Y(1), Var::Y(0)])
        );
        // 1 + 4 + 10 entries for 4 variables up to order 2
        assert_eq!(j2.len(), 15);
    }

    #[test]
    fn homogeneity_detects_degree() {
        let samples = vec![pt(&[0.1, 0.2], &[1.0, -0.5]), pt(&[-0.3, 0.0], &[0.2, 0.9])];
        let scales = [0.5, 2.0, 3.0];
        let tol = Tolerance::default();
        let f = FieldExpr::parse("sqrt(dot(y,y))", 2).unwrap();
        let r = f.check_homogeneity(1, &samples, &scales, tol).unwrap();
        assert!(r.pass);
        assert!(r.max_scaling_error < 1e-6 && r.max_euler_error < 1e-6);
        let q = FieldExpr::parse("dot(y,y)", 2).unwrap();
        assert!(!q.check_homogeneity(1, &samples, &scales, tol).unwrap().pass);
        assert!(q.check_homogeneity(2, &samples, &scales, tol).unwrap().pass);
    }

    #[test]
    fn display_round_trips_through_parser() {
        for src in [
            "sqrt((1 - dot(x,x))*dot(y,y) + dot(x,y)^2)/(1 - dot(x,x))",
            "-x[1]*y[2]^3 + exp(x[2])*cos(y[1]) - 2.5/y[2]",
            "log(1 + x[1]^2) - sin(-y[1])",
        ] {
            let e = FieldExpr::parse(src, 2).unwrap();
            let again = FieldExpr::parse(&e.to_string(), 2).unwrap();
            let p = pt(&[0.3, -0.2], &[0.9, 1.7]);
            let (a, b) = (e.eval(&p).unwrap(), again.eval(&p).unwrap());
            assert!((a - b).abs() <= 1e-14 * a.abs().max(1.0), "{src} -> {e}");
        }
    }

    #[test]
    fn substitution_scales_coordinates() {
        let e = FieldExpr::parse("dot(x,y)", 2).unwrap();
        let mut map = HashMap::new();
        map.insert(Var::X(0), FieldExpr::x(0, 2).scale(2.0));
        let s = e.substitute(&map);
        assert_eq!(s, FieldExpr::parse("2*x[1]*y[1] + x[2]*y[2]", 2).unwrap());
    }
}
