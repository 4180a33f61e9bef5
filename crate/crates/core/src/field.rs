//! Vector fields on TM with symbolic components.

use std::ops;

use crate::expr::{EvalError, FieldExpr, Var};
use crate::point::TangentPoint;

/// `X = a^i d/dx^i + b^i d/dy^i`, stored as the `2n` components
/// `(a^1..a^n, b^1..b^n)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct VectorField {
    comps: Vec<FieldExpr>,
    dim: usize,
}

impl VectorField {
    pub fn new(x_part: Vec<FieldExpr>, y_part: Vec<FieldExpr>) -> Self {
        assert_eq!(
            x_part.len(),
            y_part.len(),
            "horizontal and vertical parts differ in length"
        );
        let dim = x_part.len();
        assert!(
            x_part.iter().chain(&y_part).all(|c| c.dim() == dim),
            "component dimension mismatch"
        );
        let mut comps = x_part;
        comps.extend(y_part);
        VectorField { comps, dim }
    }

    pub fn zero(dim: usize) -> Self {
        VectorField {
            comps: vec![FieldExpr::zero(dim); 2 * dim],
            dim,
        }
    }

    /// The coordinate field `d/dx^i` or `d/dy^i`.
    pub fn coordinate(v: Var, dim: usize) -> Self {
        let mut f = Self::zero(dim);
        f.comps[v.slot(dim)] = FieldExpr::constant(1.0, dim);
        f
    }

    /// Liouville field `y^i d/dy^i`.
    pub fn liouville(dim: usize) -> Self {
        VectorField::new(
            vec![FieldExpr::zero(dim); dim],
            (0..dim).map(|i| FieldExpr::y(i, dim)).collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> &[FieldExpr] {
        &self.comps
    }

    pub fn x_part(&self) -> &[FieldExpr] {
        &self.comps[..self.dim]
    }

    pub fn y_part(&self) -> &[FieldExpr] {
        &self.comps[self.dim..]
    }

    /// Directional derivative `X(f)`.
    pub fn derive(&self, f: &FieldExpr) -> FieldExpr {
        let n = self.dim;
        let terms = self
            .comps
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.is_zero())
            .map(|(slot, c)| *c * f.diff(Var::from_slot(slot, n)));
        FieldExpr::sum(terms, n)
    }

    /// Lie bracket `[X, Y]^a = X(Y^a) - Y(X^a)`.
    pub fn bracket(&self, other: &VectorField) -> VectorField {
        assert_eq!(
            self.dim, other.dim,
            "bracket of fields of different dimension"
        );
        let comps = self
            .comps
            .iter()
            .zip(&other.comps)
            .map(|(mine, theirs)| self.derive(theirs) - other.derive(mine))
            .collect();
        VectorField {
            comps,
            dim: self.dim,
        }
    }

    /// Pointwise product `f X`.
    pub fn scaled(&self, f: FieldExpr) -> VectorField {
        VectorField {
            comps: self.comps.iter().map(|c| f * *c).collect(),
            dim: self.dim,
        }
    }

    /// `J X`: moves the horizontal components into the vertical slots.
    pub fn vertical_endomorphism(&self) -> VectorField {
        VectorField::new(
            vec![FieldExpr::zero(self.dim); self.dim],
            self.x_part().to_vec(),
        )
    }

    pub fn eval(&self, p: &TangentPoint) -> Result<Vec<f64>, EvalError> {
        FieldExpr::eval_many(&self.comps, p)
    }

    /// Evaluates several fields with one shared program.
    pub fn eval_all(fields: &[VectorField], p: &TangentPoint) -> Result<Vec<Vec<f64>>, EvalError> {
        let exprs: Vec<FieldExpr> = fields
            .iter()
            .flat_map(|f| f.comps.iter().copied())
            .collect();
        let flat = FieldExpr::eval_many(&exprs, p)?;
        Ok(flat
            .chunks(fields.first().map_or(1, |f| 2 * f.dim))
            .map(|c| c.to_vec())
            .collect())
    }

    /// `sum_k coeffs[k] * fields[k]` with constant coefficients.
    pub fn linear_combination(fields: &[VectorField], coeffs: &[f64]) -> VectorField {
        assert_eq!(fields.len(), coeffs.len());
        let dim = fields[0].dim;
        let comps = (0..2 * dim)
            .map(|a| {
                FieldExpr::sum(
                    fields
                        .iter()
                        .zip(coeffs)
                        .filter(|(_, c)| **c != 0.0)
                        .map(|(f, c)| f.comps[a].scale(*c)),
                    dim,
                )
            })
            .collect();
        VectorField { comps, dim }
    }
}

impl ops::Add for &VectorField {
    type Output = VectorField;
    fn add(self, rhs: &VectorField) -> VectorField {
        VectorField {
            comps: self
                .comps
                .iter()
                .zip(&rhs.comps)
                .map(|(a, b)| *a + *b)
                .collect(),
            dim: self.dim,
        }
    }
}

impl ops::Sub for &VectorField {
    type Output = VectorField;
    fn sub(self, rhs: &VectorField) -> VectorField {
        VectorField {
            comps: self
                .comps
                .iter()
                .zip(&rhs.comps)
                .map(|(a, b)| *a - *b)
                .collect(),
            dim: self.dim,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coordinate_fields_commute() {
        let a = VectorField::coordinate(Var::X(0), 2);
        let b = VectorField::coordinate(Var::X(1), 2);
        assert!(a.bracket(&b).components().iter().all(|c| c.is_zero()));
    }

    #[test]
    fn liouville_scales_homogeneous_functions() {
        let c = VectorField::liouville(2);
        let f = FieldExpr::parse("dot(y,y)*x[1]", 2).unwrap();
        let p = TangentPoint::new(vec![0.5, 0.1], vec![1.0, 2.0]).unwrap();
        let cf = c.derive(&f).eval(&p).unwrap();
        assert!((cf - 2.0 * f.eval(&p).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn bracket_is_exactly_antisymmetric() {
        let x = VectorField::new(
            vec![
                FieldExpr::parse("y[1]", 2).unwrap(),
                FieldExpr::parse("x[1]*y[2]", 2).unwrap(),
            ],
            vec![
                FieldExpr::parse("sin(x[2])", 2).unwrap(),
                FieldExpr::parse("y[1]^2", 2).unwrap(),
            ],
        );
        let y = VectorField::new(
            vec![
                FieldExpr::parse("exp(y[2])", 2).unwrap(),
                FieldExpr::zero(2),
            ],
            vec![
                FieldExpr::parse("x[1]*x[2]", 2).unwrap(),
                FieldExpr::parse("y[1]/y[2]", 2).unwrap(),
            ],
        );
        let p = TangentPoint::new(vec![0.3, -0.4], vec![0.8, 1.1]).unwrap();
        let xy = x.bracket(&y).eval(&p).unwrap();
        let yx = y.bracket(&x).eval(&p).unwrap();
        for (a, b) in xy.iter().zip(&yx) {
            assert_eq!(*a, -*b);
        }
    }
}
