//! Holonomy invariance of functions and the pointwise rank of the holonomy
//! distribution, generated by the horizontal frame and its iterated
//! brackets `[delta_i1, [delta_i2, ... [delta_ik-1, delta_ik]...]]`.

use serde::Serialize;

use crate::deform::{factor_jet, DeformedSpray, Invariance};
use crate::error::{Error, Result};
use crate::expr::{FieldExpr, Var};
use crate::field::VectorField;
use crate::geometry::{metric_tensor_of_energy, MetricTensor, Spray, RANK_TOL};
use crate::linalg;
use crate::point::TangentPoint;
use crate::spectral;

/// Pointwise surrogate for `d_h P = 0`.
#[derive(Clone, Debug, Serialize)]
pub struct InvarianceReport {
    pub samples: Vec<TangentPoint>,
    /// `max_i |delta_i P| / max(1, |P|)` over all samples.
    pub max_residual: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub note: &'static str,
}

pub fn is_holonomy_invariant(
    spray: &Spray,
    factor: &FieldExpr,
    samples: &[TangentPoint],
    tol: f64,
) -> Result<InvarianceReport> {
    let frame = spray.horizontal_frame();
    let mut exprs: Vec<FieldExpr> = frame.deltas.iter().map(|d| d.derive(factor)).collect();
    exprs.push(*factor);
    let prog = FieldExpr::compile(&exprs);
    let mut worst = 0.0f64;
    for p in samples {
        spray.check_point(p)?;
        let v = prog.eval(p.x(), p.y())?;
        let (last, deltas) = v.split_last().unwrap();
        worst = worst.max(linalg::max_abs(deltas.iter().copied()) / last.abs().max(1.0));
    }
    Ok(InvarianceReport {
        samples: samples.to_vec(),
        max_residual: worst,
        tolerance: tol,
        pass: worst <= tol,
        note: "delta_i(P) = 0 checked at the listed sample points only",
    })
}

pub fn lie_bracket(x: &VectorField, y: &VectorField) -> VectorField {
    x.bracket(y)
}

/// Values at a point of fields of the holonomy distribution, kept only when
/// they raise the numeric rank.
#[derive(Clone, Debug, Serialize)]
pub struct DistributionSpan {
    pub point: TangentPoint,
    pub vectors: Vec<Vec<f64>>,
    /// Bracket word that produced each vector, e.g. `[d1,[d1,d2]]`.
    pub generators_log: Vec<String>,
    pub rank: usize,
    pub tol: f64,
    /// Rank after each depth, starting with the generators alone.
    pub rank_by_depth: Vec<usize>,
    /// True when the depth limit was hit before the closure stabilised.
    pub lower_bound: bool,
    #[serde(skip)]
    pub fields: Vec<VectorField>,
}

impl DistributionSpan {
    pub fn full(&self) -> bool {
        self.rank == 2 * self.point.dim()
    }
}

/// Holonomy closure starting from the horizontal frame of `spray`.
pub fn holonomy_rank(
    spray: &Spray,
    p: &TangentPoint,
    max_depth: usize,
    tol: f64,
) -> Result<DistributionSpan> {
    let deltas = spray.horizontal_frame().deltas;
    let names: Vec<String> = (1..=deltas.len()).map(|i| format!("d{i}")).collect();
    spray.check_point(p)?;
    closure(&deltas, &names, p, max_depth, tol)
}

/// Bracket closure of arbitrary generators: breadth-first over left-normed
/// words `[g_i, W]`, inserting a value only when it raises the rank.
pub fn closure(
    generators: &[VectorField],
    names: &[String],
    p: &TangentPoint,
    max_depth: usize,
    tol: f64,
) -> Result<DistributionSpan> {
    assert!(max_depth >= 1, "holonomy closure needs depth at least 1");
    let n = p.dim();
    let mut span = DistributionSpan {
        point: p.clone(),
        vectors: Vec::new(),
        generators_log: Vec::new(),
        rank: 0,
        tol,
        rank_by_depth: Vec::new(),
        lower_bound: false,
        fields: Vec::new(),
    };
    let gen_vals = VectorField::eval_all(generators, p)?;
    let floor = 1e-9 * gen_vals.iter().map(|v| linalg::norm(v)).fold(1.0, f64::max);
    let insert =
        |span: &mut DistributionSpan, field: &VectorField, val: Vec<f64>, word: &str| -> bool {
            if span.rank == 2 * n || linalg::norm(&val) <= floor {
                return false;
            }
            let mut trial = span.vectors.clone();
            trial.push(val.clone());
            let r = linalg::span_rank(&trial, tol, floor);
            if r > span.rank {
                span.vectors.push(val);
                span.generators_log.push(word.to_owned());
                span.fields.push(field.clone());
                span.rank = r;
                true
            } else {
                false
            }
        };
    for ((g, v), name) in generators.iter().zip(gen_vals).zip(names) {
        insert(&mut span, g, v, name);
    }
    span.rank_by_depth.push(span.rank);
    let mut level: Vec<(VectorField, String)> = generators
        .iter()
        .cloned()
        .zip(names.iter().cloned())
        .collect();
    let mut stable = false;
    for _depth in 2..=max_depth {
        if span.full() {
            break;
        }
        let mut next = Vec::with_capacity(level.len() * generators.len());
        for (w, word) in &level {
            for (g, name) in generators.iter().zip(names) {
                if g == w {
                    continue;
                }
                next.push((g.bracket(w), format!("[{name},{word}]")));
            }
        }
        let fields: Vec<VectorField> = next.iter().map(|(f, _)| f.clone()).collect();
        let vals = VectorField::eval_all(&fields, p)?;
        let mut added = false;
        for ((f, word), v) in next.iter().zip(vals) {
            added |= insert(&mut span, f, v, word);
        }
        span.rank_by_depth.push(span.rank);
        if !added {
            stable = true;
            break;
        }
        level = next;
    }
    span.lower_bound = !span.full() && !stable;
    Ok(span)
}

#[derive(Clone, Debug, Serialize)]
pub struct CurvatureImageReport {
    pub point: TangentPoint,
    /// `max |W(P)| / max(1, |P|)` over `W = Phi(delta_j)` and `R(delta_j, delta_k)`.
    pub max_residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Checks that vertical vectors in the image of `Phi` and `R` kill `P`.
pub fn curvature_image_symmetry_test(
    spray: &Spray,
    factor: &FieldExpr,
    p: &TangentPoint,
    tol: f64,
) -> Result<CurvatureImageReport> {
    let n = p.dim();
    let jet = spray.jet(p)?;
    let phi = jet.jacobi();
    let r = jet.curvature();
    let pj = factor_jet(factor, p)?;
    let along = |w: &dyn Fn(usize) -> f64| -> f64 { (0..n).map(|i| w(i) * pj.grad[i]).sum() };
    let mut worst = 0.0f64;
    for j in 0..n {
        worst = worst.max(along(&|i| phi.matrix[(i, j)]).abs());
        for k in 0..n {
            worst = worst.max(along(&|i| r.r[i][j][k]).abs());
        }
    }
    let worst = worst / pj.value.abs().max(1.0);
    Ok(CurvatureImageReport {
        point: p.clone(),
        max_residual: worst,
        tolerance: tol,
        pass: worst <= tol,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EnergyVerdict {
    /// Full-rank holonomy distribution moves the candidate energy.
    NotMetrizableAtPoint,
    NotExcluded,
}

#[derive(Clone, Debug, Serialize)]
pub struct EnergyObstructionReport {
    pub point: TangentPoint,
    pub span_rank: usize,
    pub derivatives: Vec<f64>,
    /// `max |X(E)| / max(1, |E|)`.
    pub max_derivative: f64,
    pub tolerance: f64,
    pub verdict: EnergyVerdict,
}

/// Evaluates `X(E)` for every field of the span.
pub fn energy_obstruction_test(
    candidate: &FieldExpr,
    span: &DistributionSpan,
    tol: f64,
) -> Result<EnergyObstructionReport> {
    let p = &span.point;
    let mut exprs: Vec<FieldExpr> = span.fields.iter().map(|f| f.derive(candidate)).collect();
    exprs.push(*candidate);
    let vals = FieldExpr::eval_many(&exprs, p)?;
    let (e, derivatives) = vals.split_last().unwrap();
    let max_derivative = linalg::max_abs(derivatives.iter().copied()) / e.abs().max(1.0);
    let verdict = if span.full() && max_derivative > tol {
        EnergyVerdict::NotMetrizableAtPoint
    } else {
        EnergyVerdict::NotExcluded
    };
    Ok(EnergyObstructionReport {
        point: p.clone(),
        span_rank: span.rank,
        derivatives: derivatives.to_vec(),
        max_derivative,
        tolerance: tol,
        verdict,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct DegeneracyReport {
    pub energy: FieldExpr,
    pub metric: MetricTensor,
    pub pass: bool,
}

/// Metric tensor of `E~ = (a_i(x) y^i)^2 exp(theta(x))`, expected to have
/// rank exactly one.
pub fn linear_factor_degeneracy(
    a: &[FieldExpr],
    theta: &FieldExpr,
    p: &TangentPoint,
) -> Result<DegeneracyReport> {
    let n = a.len();
    if n < 2 {
        return Err(Error::Precondition(
            "linear factor degeneracy needs dimension at least 2".into(),
        ));
    }
    if p.dim() != n || theta.dim() != n || a.iter().any(|c| c.dim() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: p.dim(),
        });
    }
    if a.iter()
        .chain(std::iter::once(theta))
        .any(|c| (0..n).any(|i| c.depends_on(Var::Y(i))))
    {
        return Err(Error::InvalidParameter(
            "a_i and theta must depend on x only".into(),
        ));
    }
    let factor = FieldExpr::contract_y(a, n);
    let pv = factor.eval(p)?;
    if pv.abs() <= crate::deform::FACTOR_FLOOR {
        return Err(Error::VanishingFactor {
            point: p.to_string(),
            value: pv.abs(),
        });
    }
    let energy = factor.pow(2) * theta.exp();
    let metric = metric_tensor_of_energy(&energy, p)?;
    Ok(DegeneracyReport {
        energy,
        pass: metric.rank == 1,
        metric,
    })
}

/// Minimum distance of `lambda` from the bad set for the full-rank test.
pub const BAD_LAMBDA_MARGIN: f64 = 1e-3;

#[derive(Clone, Debug, Serialize)]
pub struct FullRankReport {
    pub lambda: f64,
    pub max_factor_hessian: f64,
    pub bad_lambdas: Vec<f64>,
    pub span: DistributionSpan,
    pub pass: bool,
}

/// Holonomy rank of the deformation of `spray` by a nonlinear invariant
/// factor with `lambda` outside the bad set; full rank is expected.
pub fn check_fullrank_proposition(
    spray: &Spray,
    factor: &FieldExpr,
    lambda: f64,
    p: &TangentPoint,
    max_depth: usize,
    probes: &[TangentPoint],
) -> Result<FullRankReport> {
    let pj = factor_jet(factor, p)?;
    let max_hessian = linalg::max_abs(pj.hessian.iter().flatten().copied());
    if max_hessian <= 1e-9 * pj.value.abs().max(1.0) {
        return Err(Error::LinearFactor { max_hessian });
    }
    let bad = spectral::bad_lambda_set(spray, factor, p)?;
    if let Some(nearest) = bad
        .values
        .iter()
        .copied()
        .min_by(|a, b| (a - lambda).abs().total_cmp(&(b - lambda).abs()))
    {
        if (nearest - lambda).abs() <= BAD_LAMBDA_MARGIN {
            return Err(Error::BadLambda {
                lambda,
                nearest,
                margin: BAD_LAMBDA_MARGIN,
            });
        }
    }
    let deformed = DeformedSpray::new(spray, *factor, lambda, probes, Invariance::Require)?;
    let span = holonomy_rank(deformed.spray(), p, max_depth, RANK_TOL)?;
    Ok(FullRankReport {
        lambda,
        max_factor_hessian: max_hessian,
        bad_lambdas: bad.values,
        pass: span.full(),
        span,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zoo::catalog_get;

    fn pt(x: &[f64], y: &[f64]) -> TangentPoint {
        TangentPoint::new(x.to_vec(), y.to_vec()).unwrap()
    }

    #[test]
    fn euclidean_rank_is_n() {
        let e = catalog_get("euclidean", 3, None).unwrap();
        let spray = e.finsler().geodesic_spray().unwrap();
        let span =
            holonomy_rank(&spray, &pt(&[0.1, 0.2, 0.0], &[1.0, 0.5, 0.2]), 6, RANK_TOL).unwrap();
        assert_eq!(span.rank, 3);
        assert!(!span.lower_bound);
    }

    #[test]
    fn liouville_spray_bracket() {
        let k = catalog_get("klein", 2, None).unwrap();
        let spray = k.finsler().geodesic_spray().unwrap();
        let s = spray.vector_field();
        let c = VectorField::liouville(2);
        let p = pt(&[0.1, -0.3], &[0.7, 0.2]);
        let lhs = lie_bracket(&c, &s).eval(&p).unwrap();
        let rhs = s.eval(&p).unwrap();
        for (a, b) in lhs.iter().zip(&rhs) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn klein_invariance_of_its_function() {
        let k = catalog_get("klein", 2, None).unwrap();
        let spray = k.finsler().geodesic_spray().unwrap();
        let rep = is_holonomy_invariant(&spray, &k.f, &k.probes, 1e-8).unwrap();
        assert!(rep.pass, "{}", rep.max_residual);
        let bad = FieldExpr::parse("x[1]*sqrt(dot(y,y))", 2).unwrap();
        assert!(
            !is_holonomy_invariant(&spray, &bad, &k.probes, 1e-8)
                .unwrap()
                .pass
        );
    }

    #[test]
    fn degeneracy_refuses_dimension_one() {
        let a = vec![FieldExpr::constant(1.0, 1)];
        let err =
            linear_factor_degeneracy(&a, &FieldExpr::zero(1), &pt(&[0.0], &[1.0])).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }

    #[test]
    fn degenerate_metric_formula() {
        let a = vec![FieldExpr::constant(1.0, 2), FieldExpr::zero(2)];
        let rep = linear_factor_degeneracy(&a, &FieldExpr::zero(2), &pt(&[0.3, 0.1], &[1.0, 2.0]))
            .unwrap();
        assert_eq!(rep.metric.matrix, vec![vec![2.0, 0.0], vec![0.0, 0.0]]);
        assert!(rep.pass);
    }
}
