//! Holonomic projective deformations `S~ = S - 2 lambda P C`.
//!
//! A deformation by a holonomy invariant, 1-homogeneous factor `P` has
//! coefficients `G~^i = G^i + lambda P y^i`. This module computes its
//! Jacobi endomorphism, both directly and from the closed form
//! `Phi~ = Phi + lambda^2 (P^2 J - P d_J P (x) C)`, the deformed projectors,
//! the frame `h_i = delta_i - (P_i / P) S`, `v_i = d/dy^i - (P_i / P) C`
//! and the geodesic trace comparison between `S` and `S~`.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::{FieldExpr, Var};
use crate::field::VectorField;
use crate::geometry::{FinslerFunction, Geodesic, SemibasicEndo, Spray, RANK_TOL};
use crate::holonomy::{self, InvarianceReport};
use crate::linalg;
use crate::point::TangentPoint;
use crate::sampling::DEFAULT_SEED;
use crate::tol::Tolerance;

/// `|P|` below this at a probe point counts as a zero of the factor.
pub const FACTOR_FLOOR: f64 = 1e-12;

/// Default tolerance of the pointwise invariance test `d_h P = 0`.
pub const INVARIANCE_TOL: f64 = 1e-8;

/// Whether [`DeformedSpray::new`] runs the invariance test.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Invariance {
    Require,
    /// Skip the refusal; the measured report is still recorded.
    Override,
}

#[derive(Clone, Debug)]
pub struct DeformedSpray {
    base: Spray,
    factor: FieldExpr,
    lambda: f64,
    deformed: Spray,
    invariance: InvarianceReport,
}

impl DeformedSpray {
    /// Deforms `base` by `lambda * factor`, checking homogeneity, non-vanishing
    /// and invariance of the factor on `probes`.
    pub fn new(
        base: &Spray,
        factor: FieldExpr,
        lambda: f64,
        probes: &[TangentPoint],
        invariance: Invariance,
    ) -> Result<Self> {
        let n = base.dim();
        if factor.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: factor.dim(),
            });
        }
        if !lambda.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "lambda must be finite, got {lambda}"
            )));
        }
        check_factor(&factor, probes)?;
        let report = holonomy::is_holonomy_invariant(base, &factor, probes, INVARIANCE_TOL)?;
        if invariance == Invariance::Require && !report.pass {
            return Err(Error::NonInvariantFactor {
                residual: report.max_residual,
            });
        }
        let coeffs = base
            .coefficients()
            .iter()
            .enumerate()
            .map(|(i, g)| {
                if lambda == 0.0 {
                    *g
                } else {
                    *g + (factor * FieldExpr::y(i, n)).scale(lambda)
                }
            })
            .collect();
        let mut deformed = Spray::from_coefficients(coeffs);
        if let Some(d) = base.domain() {
            deformed = deformed.with_domain(d);
        }
        Ok(DeformedSpray {
            base: base.clone(),
            factor,
            lambda,
            deformed,
            invariance: report,
        })
    }

    pub fn base(&self) -> &Spray {
        &self.base
    }

    pub fn spray(&self) -> &Spray {
        &self.deformed
    }

    pub fn factor(&self) -> FieldExpr {
        self.factor
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn invariance(&self) -> &InvarianceReport {
        &self.invariance
    }

    fn require_invariant(&self) -> Result<()> {
        if self.invariance.pass {
            Ok(())
        } else {
            Err(Error::NonInvariantFactor {
                residual: self.invariance.max_residual,
            })
        }
    }
}

/// Deformation of the geodesic spray of `f` with probe points drawn from
/// its catalog radius.
pub fn deform_spray(f: &FinslerFunction, factor: FieldExpr, lambda: f64) -> Result<DeformedSpray> {
    let spray = f.geodesic_spray()?;
    DeformedSpray::new(
        &spray,
        factor,
        lambda,
        &f.probes(10, DEFAULT_SEED),
        Invariance::Require,
    )
}

/// 1-homogeneity and non-vanishing of a projective factor on `probes`.
pub fn check_factor(factor: &FieldExpr, probes: &[TangentPoint]) -> Result<()> {
    if probes.is_empty() {
        return Ok(());
    }
    let report = factor.check_homogeneity(1, probes, &[0.5, 2.0, 3.7], Tolerance::default())?;
    if !report.pass {
        return Err(Error::NotHomogeneous {
            degree: 1,
            error: report.max_scaling_error.max(report.max_euler_error),
        });
    }
    for p in probes {
        let v = factor.eval(p)?;
        if v.abs() <= FACTOR_FLOOR {
            return Err(Error::VanishingFactor {
                point: p.to_string(),
                value: v.abs(),
            });
        }
    }
    Ok(())
}

/// `P`, `P_i = dP/dy^i` and `P_ij` at a point.
#[derive(Clone, Debug, Serialize)]
pub struct FactorJet {
    pub value: f64,
    pub grad: Vec<f64>,
    pub hessian: Vec<Vec<f64>>,
}

pub fn factor_jet(factor: &FieldExpr, p: &TangentPoint) -> Result<FactorJet> {
    let n = factor.dim();
    let mut exprs = vec![*factor];
    for i in 0..n {
        let pi = factor.diff(Var::Y(i));
        exprs.push(pi);
        exprs.extend((0..n).map(|j| pi.diff(Var::Y(j))));
    }
    let vals = FieldExpr::eval_many(&exprs, p)?;
    let value = vals[0];
    if value.abs() <= FACTOR_FLOOR {
        return Err(Error::VanishingFactor {
            point: p.to_string(),
            value: value.abs(),
        });
    }
    let grad = (0..n).map(|i| vals[1 + i * (n + 1)]).collect();
    let hessian = (0..n)
        .map(|i| (0..n).map(|j| vals[2 + i * (n + 1) + j]).collect())
        .collect();
    Ok(FactorJet {
        value,
        grad,
        hessian,
    })
}

/// Jacobi endomorphism of the deformed spray, computed directly and from
/// the closed form.
#[derive(Clone, Debug, Serialize)]
pub struct DeformedJacobi {
    pub direct: SemibasicEndo,
    pub closed_form: SemibasicEndo,
    /// `max |direct - closed| / max(1, max |direct|)`.
    pub discrepancy: f64,
}

pub fn deformed_jacobi(d: &DeformedSpray, p: &TangentPoint) -> Result<DeformedJacobi> {
    d.require_invariant()?;
    let direct = d.spray().jacobi_endomorphism(p)?;
    let phi = d.base().jacobi_endomorphism(p)?;
    let pj = factor_jet(&d.factor, p)?;
    let n = p.dim();
    let l2 = d.lambda * d.lambda;
    let y = p.y();
    let closed = DMatrix::from_fn(n, n, |i, j| {
        let shift = pj.value * pj.value * f64::from(i == j) - pj.value * pj.grad[j] * y[i];
        phi.matrix[(i, j)] + l2 * shift
    });
    let discrepancy = (&direct.matrix - &closed).abs().max() / direct.max_abs().max(1.0);
    Ok(DeformedJacobi {
        direct,
        closed_form: SemibasicEndo { matrix: closed },
        discrepancy,
    })
}

/// Residuals of `S(P) = 0` and `d/dy^j S(P) = 0` at a point, relative to
/// `max(1, |P|)`.
pub fn spray_derivative_of_factor(
    spray: &Spray,
    factor: &FieldExpr,
    p: &TangentPoint,
) -> Result<(f64, f64)> {
    let n = p.dim();
    let sp = spray.vector_field().derive(factor);
    let mut exprs = vec![sp, *factor];
    exprs.extend((0..n).map(|j| sp.diff(Var::Y(j))));
    spray.check_point(p)?;
    let v = FieldExpr::eval_many(&exprs, p)?;
    let scale = v[1].abs().max(1.0);
    Ok((
        v[0].abs() / scale,
        linalg::max_abs(v[2..].iter().copied()) / scale,
    ))
}

/// Horizontal and vertical projectors of the deformed connection on
/// `(d/dx, d/dy)` coordinates.
#[derive(Clone, Debug)]
pub struct DeformedProjectors {
    pub h: DMatrix<f64>,
    pub v: DMatrix<f64>,
}

impl DeformedProjectors {
    /// `(max |h^2 - h|, max |v^2 - v|, max |h v|)`.
    pub fn algebra_residuals(&self) -> (f64, f64, f64) {
        let hh = (&self.h * &self.h - &self.h).abs().max();
        let vv = (&self.v * &self.v - &self.v).abs().max();
        let hv = (&self.h * &self.v).abs().max();
        (hh, vv, hv)
    }
}

/// `h~ = h - lambda (P J + d_J P (x) C)` and `v~ = Id - h~`.
pub fn deformed_projectors(d: &DeformedSpray, p: &TangentPoint) -> Result<DeformedProjectors> {
    d.require_invariant()?;
    let n = p.dim();
    let h = d.base().jet(p)?.horizontal_projector();
    let pj = factor_jet(&d.factor, p)?;
    let y = p.y();
    let correction = DMatrix::from_fn(2 * n, 2 * n, |r, c| {
        if r >= n && c < n {
            pj.value * f64::from(r - n == c) + y[r - n] * pj.grad[c]
        } else {
            0.0
        }
    });
    let h_tilde = h - correction * d.lambda;
    let v_tilde = DMatrix::identity(2 * n, 2 * n) - &h_tilde;
    Ok(DeformedProjectors {
        h: h_tilde,
        v: v_tilde,
    })
}

/// `h = (Id + Gamma) / 2` with `Gamma(Y) = [JY, S] - J[Y, S]` evaluated on
/// coordinate fields of the given spray.
pub fn projector_from_connection(spray: &Spray, p: &TangentPoint) -> Result<DMatrix<f64>> {
    spray.check_point(p)?;
    let n = spray.dim();
    let s = spray.vector_field();
    let mut cols = Vec::with_capacity(2 * n);
    for slot in 0..2 * n {
        let y = VectorField::coordinate(Var::from_slot(slot, n), n);
        let jy = y.vertical_endomorphism();
        let gamma = &jy.bracket(&s) - &y.bracket(&s).vertical_endomorphism();
        cols.push(gamma);
    }
    let vals = VectorField::eval_all(&cols, p)?;
    Ok(DMatrix::from_fn(2 * n, 2 * n, |r, c| {
        0.5 * (f64::from(r == c) + vals[c][r])
    }))
}

/// Symbolic frame fields `h_i = delta_i - (P_i / P) S` and
/// `v_i = d/dy^i - (P_i / P) C`.
pub fn frame_fields(spray: &Spray, factor: &FieldExpr) -> (Vec<VectorField>, Vec<VectorField>) {
    let n = spray.dim();
    let frame = spray.horizontal_frame();
    let ratios: Vec<FieldExpr> = (0..n).map(|i| factor.diff(Var::Y(i)) / *factor).collect();
    let h = (0..n)
        .map(|i| &frame.deltas[i] - &frame.spray.scaled(ratios[i]))
        .collect();
    let v = (0..n)
        .map(|i| &VectorField::coordinate(Var::Y(i), n) - &frame.liouville.scaled(ratios[i]))
        .collect();
    (h, v)
}

/// Values of the adapted frame at a point.
#[derive(Clone, Debug, Serialize)]
pub struct AdaptedFrame {
    pub point: TangentPoint,
    pub h: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub spray: Vec<f64>,
    pub liouville: Vec<f64>,
    pub rank_h: usize,
    pub rank_v: usize,
}

impl AdaptedFrame {
    /// `(|y^i h_i|, |y^i v_i|)` as max-norms.
    pub fn euler_residuals(&self) -> (f64, f64) {
        let y = self.point.y();
        let comb = |vs: &[Vec<f64>]| {
            let m = vs[0].len();
            linalg::max_abs((0..m).map(|a| (0..y.len()).map(|i| y[i] * vs[i][a]).sum::<f64>()))
        };
        (comb(&self.h), comb(&self.v))
    }
}

pub fn adapted_frames(spray: &Spray, factor: &FieldExpr, p: &TangentPoint) -> Result<AdaptedFrame> {
    spray.check_point(p)?;
    factor_jet(factor, p)?;
    let (h, v) = frame_fields(spray, factor);
    let frame = spray.horizontal_frame();
    let mut fields = h.clone();
    fields.extend(v.iter().cloned());
    fields.push(frame.spray);
    fields.push(frame.liouville);
    let mut vals = VectorField::eval_all(&fields, p)?;
    let n = spray.dim();
    let liouville = vals.pop().unwrap();
    let s = vals.pop().unwrap();
    let v_vals = vals.split_off(n);
    let rank_h = linalg::span_rank(&vals, RANK_TOL, 1e-300);
    let rank_v = linalg::span_rank(&v_vals, RANK_TOL, 1e-300);
    Ok(AdaptedFrame {
        point: p.clone(),
        h: vals,
        v: v_vals,
        spray: s,
        liouville,
        rank_h,
        rank_v,
    })
}

/// One claim of the frame lemma, aggregated over all tested points.
#[derive(Clone, Debug, Serialize)]
pub struct SubCheck {
    pub name: &'static str,
    pub max_residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct FrameLemmaReport {
    pub points: Vec<TangentPoint>,
    pub checks: Vec<SubCheck>,
    pub pass: bool,
}

const MEMBER_FLOOR: f64 = 1e-12;

/// Runs the frame sub-checks:
/// (a) `v_P` kills `delta_i` and `C`;
/// (b) `[v_i, v_j] = (P_i/P) v_j - (P_j/P) v_i`, hence lies in `V_P`;
/// (c) `h_i(P) = v_i(P) = 0`;
/// (d) `H_P`, `V_P` have rank `n - 1` and `S`, `C` lie outside them;
/// (e) `v[h_i, v_j]` lies in `V_P`.
pub fn verify_frame_lemma(
    spray: &Spray,
    factor: &FieldExpr,
    points: &[TangentPoint],
    tol: f64,
) -> Result<FrameLemmaReport> {
    let n = spray.dim();
    check_factor(factor, points).map_err(|e| Error::Precondition(format!("factor: {e}")))?;
    let inv = holonomy::is_holonomy_invariant(spray, factor, points, INVARIANCE_TOL)?;
    if !inv.pass {
        return Err(Error::Precondition(format!(
            "factor is not holonomy invariant (residual {:.3e})",
            inv.max_residual
        )));
    }
    let (h, v) = frame_fields(spray, factor);
    let frame = spray.horizontal_frame();
    let ratios: Vec<FieldExpr> = (0..n).map(|i| factor.diff(Var::Y(i)) / *factor).collect();

    let mut vv_brackets = Vec::new();
    let mut vv_expected = Vec::new();
    let mut hv_brackets = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i < j {
                vv_brackets.push(v[i].bracket(&v[j]));
                vv_expected.push(&v[j].scaled(ratios[i]) - &v[i].scaled(ratios[j]));
            }
            hv_brackets.push(h[i].bracket(&v[j]));
        }
    }
    let derivs: Vec<FieldExpr> = h
        .iter()
        .chain(&v)
        .map(|f| f.derive(factor))
        .chain(std::iter::once(*factor))
        .collect();
    let dfactor: Vec<FieldExpr> = (0..2 * n)
        .map(|s| factor.diff(Var::from_slot(s, n)))
        .collect();

    let mut worst = [0.0f64; 8];
    let mut member_fail = [false; 3];
    for p in points {
        spray.check_point(p)?;
        let jet = spray.jet(p)?;
        let vmat = DMatrix::identity(2 * n, 2 * n) - jet.horizontal_projector();
        let pv = factor.eval(p)?;
        let dp = FieldExpr::eval_many(&dfactor, p)?;
        // v_P = v - C (x) (dP o v) / P
        let dp_v: Vec<f64> = (0..2 * n)
            .map(|c| (0..2 * n).map(|r| dp[r] * vmat[(r, c)]).sum())
            .collect();
        let s_val = frame.spray.eval(p)?;
        let c_val = frame.liouville.eval(p)?;
        let v_p = |w: &[f64]| -> Vec<f64> {
            let coef: f64 = dp_v.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / pv;
            (0..2 * n)
                .map(|r| (0..2 * n).map(|c| vmat[(r, c)] * w[c]).sum::<f64>() - coef * c_val[r])
                .collect()
        };
        let mut kernel_res = linalg::max_abs(v_p(&c_val)) / linalg::norm(&c_val).max(1.0);
        for d in &frame.deltas {
            let dv = d.eval(p)?;
            kernel_res = kernel_res.max(linalg::max_abs(v_p(&dv)) / linalg::norm(&dv).max(1.0));
        }
        worst[0] = worst[0].max(kernel_res);

        let hv: Vec<Vec<f64>> = VectorField::eval_all(&h, p)?;
        let vv: Vec<Vec<f64>> = VectorField::eval_all(&v, p)?;
        let got = VectorField::eval_all(&vv_brackets, p)?;
        let want = VectorField::eval_all(&vv_expected, p)?;
        for (g, w) in got.iter().zip(&want) {
            let diff = linalg::max_abs(g.iter().zip(w).map(|(a, b)| a - b));
            worst[1] = worst[1].max(diff / linalg::max_abs(g.iter().copied()).max(1.0));
            member_fail[0] |= !linalg::in_span(&vv, g, RANK_TOL, MEMBER_FLOOR);
        }

        let dv = FieldExpr::eval_many(&derivs, p)?;
        let scale = dv[2 * n].abs().max(1.0);
        worst[2] = worst[2].max(linalg::max_abs(dv[..n].iter().copied()) / scale);
        worst[3] = worst[3].max(linalg::max_abs(dv[n..2 * n].iter().copied()) / scale);

        let rank_h = linalg::span_rank(&hv, RANK_TOL, MEMBER_FLOOR);
        let rank_v = linalg::span_rank(&vv, RANK_TOL, MEMBER_FLOOR);
        let with = |base: &[Vec<f64>], extra: &[f64]| {
            let mut all = base.to_vec();
            all.push(extra.to_vec());
            linalg::span_rank(&all, RANK_TOL, MEMBER_FLOOR)
        };
        let rank_err = |r: usize, want: usize| (r as f64 - want as f64).abs();
        worst[4] = worst[4]
            .max(rank_err(rank_h, n - 1))
            .max(rank_err(rank_v, n - 1));
        worst[5] = worst[5]
            .max(rank_err(with(&vv, &c_val), n))
            .max(rank_err(with(&hv, &s_val), n));

        for b in VectorField::eval_all(&hv_brackets, p)? {
            let w: Vec<f64> = (0..2 * n)
                .map(|r| (0..2 * n).map(|c| vmat[(r, c)] * b[c]).sum())
                .collect();
            member_fail[1] |= !linalg::in_span(&vv, &w, RANK_TOL, MEMBER_FLOOR);
            worst[6] = worst[6]
                .max(linalg::distance_to_span(&vv, &w, RANK_TOL) / linalg::norm(&w).max(1.0));
        }
        // J h_i = v_i as expressions
        for (hi, vi) in h.iter().zip(&v) {
            member_fail[2] |= hi.vertical_endomorphism() != *vi;
        }
    }
    let check = |name, r: f64, t: f64, extra_ok: bool| SubCheck {
        name,
        max_residual: r,
        tolerance: t,
        pass: r <= t && extra_ok,
    };
    let checks = vec![
        check("a_vertical_projector_kernel", worst[0], tol, true),
        check(
            "b_vertical_bracket_identity",
            worst[1],
            tol,
            !member_fail[0],
        ),
        check("c_h_derivative_of_factor", worst[2], tol, true),
        check("c_v_derivative_of_factor", worst[3], tol, true),
        check("d_subdistribution_rank", worst[4], 0.0, true),
        check("d_spray_and_liouville_transversal", worst[5], 0.0, true),
        check(
            "e_vertical_part_of_h_v_bracket",
            worst[6],
            tol,
            !member_fail[1],
        ),
        check(
            "j_maps_h_frame_to_v_frame",
            f64::from(u8::from(member_fail[2])),
            0.0,
            true,
        ),
    ];
    let pass = checks.iter().all(|c| c.pass);
    Ok(FrameLemmaReport {
        points: points.to_vec(),
        checks,
        pass,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ProjectiveEquivalenceReport {
    pub start: TangentPoint,
    pub t_end: f64,
    pub steps: usize,
    /// Smaller of the two one-sided distances: how far the shorter trace
    /// strays from the longer one.
    pub distance: f64,
    /// Larger of the two one-sided distances.
    pub hausdorff: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Number of arc-length nodes used to compare two traces.
pub const RESAMPLE_NODES: usize = 200;

/// Integrates both sprays from `start` and compares their traces as point
/// sets.
pub fn projective_equivalence_check(
    base: &Spray,
    deformed: &Spray,
    start: &TangentPoint,
    t_end: f64,
    steps: usize,
    tol: f64,
) -> Result<ProjectiveEquivalenceReport> {
    let a = base.integrate_geodesic(start, t_end, steps)?;
    let b = deformed.integrate_geodesic(start, t_end, steps)?;
    let (distance, hausdorff) = trace_distance(&a, &b);
    Ok(ProjectiveEquivalenceReport {
        start: start.clone(),
        t_end,
        steps,
        distance,
        hausdorff,
        tolerance: tol,
        pass: distance <= tol,
    })
}

/// `(min, max)` of the two directed point-to-polyline distances after
/// resampling both traces by arc length.
pub fn trace_distance(a: &Geodesic, b: &Geodesic) -> (f64, f64) {
    let ra = resample(&a.xs, RESAMPLE_NODES);
    let rb = resample(&b.xs, RESAMPLE_NODES);
    let ab = directed_distance(&ra, &rb);
    let ba = directed_distance(&rb, &ra);
    (ab.min(ba), ab.max(ba))
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(u, v)| (u - v) * (u - v))
        .sum::<f64>()
        .sqrt()
}

/// `nodes` points equally spaced in arc length along the polyline.
pub fn resample(path: &[Vec<f64>], nodes: usize) -> Vec<Vec<f64>> {
    assert!(nodes >= 2 && !path.is_empty());
    let mut cum = vec![0.0];
    for w in path.windows(2) {
        cum.push(cum.last().unwrap() + dist(&w[0], &w[1]));
    }
    let total = *cum.last().unwrap();
    if total == 0.0 {
        return vec![path[0].clone(); nodes];
    }
    let mut out = Vec::with_capacity(nodes);
    let mut seg = 0;
    for k in 0..nodes {
        let s = total * k as f64 / (nodes - 1) as f64;
        while seg + 2 < cum.len() && cum[seg + 1] < s {
            seg += 1;
        }
        let len = cum[seg + 1] - cum[seg];
        let t = if len > 0.0 {
            ((s - cum[seg]) / len).clamp(0.0, 1.0)
        } else {
            0.0
        };
        out.push(
            path[seg]
                .iter()
                .zip(&path[seg + 1])
                .map(|(u, v)| u + t * (v - u))
                .collect(),
        );
    }
    out
}

/// `max_{p in a} min_{segments of b} |p - segment|`.
fn directed_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .map(|p| {
            b.windows(2)
                .map(|w| point_segment(p, &w[0], &w[1]))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

fn point_segment(p: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let ab: Vec<f64> = a.iter().zip(b).map(|(u, v)| v - u).collect();
    let ap: Vec<f64> = a.iter().zip(p).map(|(u, v)| v - u).collect();
    let len2: f64 = ab.iter().map(|v| v * v).sum();
    let t = if len2 > 0.0 {
        (ab.iter().zip(&ap).map(|(u, v)| u * v).sum::<f64>() / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let proj: Vec<f64> = a.iter().zip(&ab).map(|(u, v)| u + t * v).collect();
    dist(p, &proj)
}
