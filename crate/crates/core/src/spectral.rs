//! Principal curvatures, the eigenvalue shift under holonomic deformation
//! and the pointwise necessary condition for metrizability.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::deform::{deformed_jacobi, factor_jet, DeformedSpray};
use crate::error::{Error, Result};
use crate::expr::FieldExpr;
use crate::geometry::{FinslerFunction, Spray};
use crate::linalg;
use crate::point::TangentPoint;

/// Imaginary parts above this fraction of the spectral radius mark a point
/// as unreliable.
pub const COMPLEX_TOL: f64 = 1e-7;

#[derive(Clone, Debug, Serialize)]
pub struct SpectralData {
    pub point: TangentPoint,
    /// All `n` real parts, sorted.
    pub eigenvalues: Vec<f64>,
    /// The `n - 1` principal curvatures, with the eigenvalue of `y` removed.
    pub kappas: Vec<f64>,
    /// Horizontal components of eigenvectors, one per principal curvature.
    pub eigenvectors: Vec<Vec<f64>>,
    /// `max |Phi X - kappa X|` over the unit eigenvectors.
    pub residual: f64,
    /// `|Phi y| / (|Phi| |y|)`.
    pub spray_residual: f64,
    /// Largest `|P_i X^i / P|` among eigenvectors with nonzero curvature
    /// before projection; zero when no factor was supplied.
    pub factor_defect: f64,
    pub max_imaginary: f64,
    pub complex_flag: bool,
}

/// Eigen-decomposition of the Jacobi endomorphism at `p`.
///
/// With a factor, every eigenvector is replaced by
/// `X - (P_i X^i / P) y`, its component in `H_P`.
pub fn principal_curvatures(
    spray: &Spray,
    p: &TangentPoint,
    factor: Option<&FieldExpr>,
) -> Result<SpectralData> {
    let phi = spray.jacobi_endomorphism(p)?.matrix;
    let fj = factor.map(|f| factor_jet(f, p)).transpose()?;
    spectral_data(&phi, p, fj.as_ref().map(|j| (j.value, j.grad.as_slice())))
}

fn spectral_data(
    phi: &DMatrix<f64>,
    p: &TangentPoint,
    factor: Option<(f64, &[f64])>,
) -> Result<SpectralData> {
    let n = p.dim();
    let y = DVector::from_column_slice(p.y());
    let ev = linalg::eigenvalues(phi);
    let radius = ev.iter().map(|e| e.re.hypot(e.im)).fold(0.0, f64::max);
    let max_imaginary = ev.iter().map(|e| e.im.abs()).fold(0.0, f64::max);
    let complex_flag = max_imaginary > COMPLEX_TOL * radius;
    let eigenvalues: Vec<f64> = ev.iter().map(|e| e.re).collect();
    let zero_at = (0..n)
        .min_by(|&a, &b| eigenvalues[a].abs().total_cmp(&eigenvalues[b].abs()))
        .unwrap();
    let kappas: Vec<f64> = (0..n)
        .filter(|&k| k != zero_at)
        .map(|k| eigenvalues[k])
        .collect();

    let gap = 1e-6 * radius.max(1e-300);
    let clusters = linalg::cluster_sorted(&eigenvalues, gap);
    let mut eigenvectors = Vec::new();
    let mut residual = 0.0f64;
    let mut factor_defect = 0.0f64;
    let yhat = &y / y.norm();
    let mut first = 0;
    for (value, mult) in clusters {
        let holds_zero = (first..first + mult).contains(&zero_at);
        first += mult;
        let shifted = phi - DMatrix::identity(n, n) * value;
        let basis = linalg::approximate_null_space(&shifted, mult);
        let mut picked: Vec<DVector<f64>> = Vec::new();
        let want = if holds_zero { mult - 1 } else { mult };
        for c in 0..basis.ncols() {
            if picked.len() == want {
                break;
            }
            let mut v = basis.column(c).into_owned();
            if holds_zero {
                let c = yhat.dot(&v);
                v -= &yhat * c;
            }
            for q in &picked {
                let c = q.dot(&v);
                v -= q * c;
            }
            let nv = v.norm();
            if nv > 1e-8 {
                picked.push(v / nv);
            }
        }
        for v in picked {
            residual = residual.max((phi * &v - &v * value).norm());
            let v = match factor {
                Some((pv, grad)) => {
                    let c = grad.iter().zip(v.iter()).map(|(a, b)| a * b).sum::<f64>() / pv;
                    if value.abs() > gap {
                        factor_defect = factor_defect.max(c.abs());
                    }
                    &v - &y * c
                }
                None => v,
            };
            eigenvectors.push(v.iter().copied().collect());
        }
    }
    let spray_residual = (phi * &y).norm() / (phi.norm() * y.norm()).max(f64::MIN_POSITIVE);
    Ok(SpectralData {
        point: p.clone(),
        eigenvalues,
        kappas,
        eigenvectors,
        residual,
        spray_residual,
        factor_defect,
        max_imaginary,
        complex_flag,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct FlagConstancyReport {
    pub points: Vec<TangentPoint>,
    /// `kappa_alpha / F^2` per point.
    pub ratios: Vec<Vec<f64>>,
    pub spread: f64,
    /// Mean ratio; the common flag curvature when the check passes.
    pub kappa: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub complex_points: usize,
}

pub fn flag_constancy_check(
    f: &FinslerFunction,
    spray: &Spray,
    points: &[TangentPoint],
    tol: f64,
) -> Result<FlagConstancyReport> {
    if points.len() < 2 {
        return Err(Error::Precondition(
            "flag constancy needs at least two points".into(),
        ));
    }
    let mut ratios = Vec::with_capacity(points.len());
    let mut complex_points = 0;
    for p in points {
        let sd = principal_curvatures(spray, p, None)?;
        complex_points += usize::from(sd.complex_flag);
        let f2 = f.expr().eval(p)?.powi(2);
        ratios.push(sd.kappas.iter().map(|k| k / f2).collect::<Vec<f64>>());
    }
    let flat = ratios.iter().flatten().copied();
    let (lo, hi) = flat
        .clone()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| {
            (l.min(v), h.max(v))
        });
    let count = ratios.iter().map(Vec::len).sum::<usize>().max(1);
    let kappa = flat.sum::<f64>() / count as f64;
    let spread = if hi >= lo { hi - lo } else { 0.0 };
    Ok(FlagConstancyReport {
        points: points.to_vec(),
        ratios,
        spread,
        kappa,
        tolerance: tol,
        pass: spread <= tol,
        complex_points,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct EigenShiftReport {
    pub point: TangentPoint,
    pub lambda: f64,
    pub observed: Vec<f64>,
    /// `{0} U {kappa_alpha + lambda^2 P^2}`, sorted.
    pub predicted: Vec<f64>,
    /// Largest `|a - b| / max(|a|, |b|, max |predicted|, 1e-3)`.
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub pass: bool,
}

pub fn eigen_shift_check(
    d: &DeformedSpray,
    p: &TangentPoint,
    tol: f64,
) -> Result<EigenShiftReport> {
    let base = principal_curvatures(d.base(), p, None)?;
    let pv = factor_jet(&d.factor(), p)?.value;
    let shift = d.lambda() * d.lambda() * pv * pv;
    let mut predicted: Vec<f64> = base.kappas.iter().map(|k| k + shift).collect();
    predicted.push(0.0);
    predicted.sort_by(f64::total_cmp);
    let dj = deformed_jacobi(d, p)?;
    let observed: Vec<f64> = linalg::eigenvalues(&dj.direct.matrix)
        .iter()
        .map(|e| e.re)
        .collect();
    let scale = linalg::max_abs(predicted.iter().copied()).max(1e-3);
    let max_rel_error = observed
        .iter()
        .zip(&predicted)
        .map(|(a, b)| (a - b).abs() / a.abs().max(b.abs()).max(scale))
        .fold(0.0, f64::max);
    Ok(EigenShiftReport {
        point: p.clone(),
        lambda: d.lambda(),
        observed,
        predicted,
        max_rel_error,
        tolerance: tol,
        pass: max_rel_error <= tol,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MetrizabilityVerdict {
    MetrizabilityNotExcluded,
    NotMetrizable,
}

#[derive(Clone, Debug, Serialize)]
pub struct NecessaryConditionReport {
    pub point: TangentPoint,
    pub factor_value: f64,
    pub kappas: Vec<f64>,
    /// `P~^2 + kappa_alpha`.
    pub values: Vec<f64>,
    pub tolerance: f64,
    pub verdict: MetrizabilityVerdict,
    /// All principal curvatures are non-negative, which rules out every
    /// nontrivial invariant factor.
    pub nonnegative_curvature: bool,
}

pub fn necessary_condition_check(
    spray: &Spray,
    ptilde: &FieldExpr,
    p: &TangentPoint,
    tol: f64,
) -> Result<NecessaryConditionReport> {
    let pv = factor_jet(ptilde, p)?.value;
    let sd = principal_curvatures(spray, p, None)?;
    let p2 = pv * pv;
    let values: Vec<f64> = sd.kappas.iter().map(|k| p2 + k).collect();
    let satisfied = sd
        .kappas
        .iter()
        .zip(&values)
        .any(|(k, v)| v.abs() <= tol * p2.max(k.abs()));
    let scale = sd.eigenvalues.iter().fold(p2, |m, v| m.max(v.abs()));
    Ok(NecessaryConditionReport {
        point: p.clone(),
        factor_value: pv,
        nonnegative_curvature: sd.kappas.iter().all(|k| *k >= -tol * scale),
        kappas: sd.kappas,
        values,
        tolerance: tol,
        verdict: if satisfied {
            MetrizabilityVerdict::MetrizabilityNotExcluded
        } else {
            MetrizabilityVerdict::NotMetrizable
        },
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct BadLambdaSet {
    pub point: TangentPoint,
    /// Sorted, duplicates merged.
    pub values: Vec<f64>,
    /// `0` is in the set because some principal curvature vanishes; it
    /// corresponds to the undeformed spray.
    pub contains_trivial_zero: bool,
    pub kappas: Vec<f64>,
    pub factor_value: f64,
}

/// `{ +-sqrt(-kappa) / |P| : kappa < 0 }`, plus `0` (flagged trivial) when a
/// principal curvature vanishes.
pub fn bad_lambda_set(spray: &Spray, factor: &FieldExpr, p: &TangentPoint) -> Result<BadLambdaSet> {
    let pv = factor_jet(factor, p)?.value;
    let sd = principal_curvatures(spray, p, None)?;
    let scale = linalg::max_abs(sd.eigenvalues.iter().copied()).max(pv * pv);
    let zero_floor = 1e-9 * scale.max(1.0);
    let mut values = Vec::new();
    let mut trivial = false;
    for &k in &sd.kappas {
        if k.abs() <= zero_floor {
            trivial = true;
            values.push(0.0);
        } else if k < 0.0 {
            let r = (-k).sqrt() / pv.abs();
            values.push(-r);
            values.push(r);
        }
    }
    values.sort_by(f64::total_cmp);
    values.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0));
    Ok(BadLambdaSet {
        point: p.clone(),
        values,
        contains_trivial_zero: trivial,
        kappas: sd.kappas,
        factor_value: pv,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(x: &[f64], y: &[f64]) -> TangentPoint {
        TangentPoint::new(x.to_vec(), y.to_vec()).unwrap()
    }

    #[test]
    fn explicit_matrix_spectrum() {
        // Euclidean base deformed by P: Phi~ = P^2 I - P (P_j y^i)
        let p = pt(&[0.0, 0.0, 0.0], &[1.0, 2.0, -1.0]);
        let (pv, grad) = (1.5, [0.2, 0.4, -0.5]);
        let y = p.y();
        let m = DMatrix::from_fn(3, 3, |i, j| {
            pv * pv * f64::from(i == j) - pv * grad[j] * y[i]
        });
        // P_i y^i = P makes y an eigenvector with eigenvalue 0
        let pdot: f64 = grad.iter().zip(y).map(|(a, b)| a * b).sum();
        assert!((pdot - pv).abs() < 1e-15);
        let sd = spectral_data(&m, &p, None).unwrap();
        for k in &sd.kappas {
            assert!((k - pv * pv).abs() < 1e-12);
        }
        assert!(sd.residual < 1e-12);
        assert_eq!(sd.eigenvectors.len(), 2);
    }
}
