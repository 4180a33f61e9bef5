//! Geodesic spray of a Finsler function and the quantities it induces:
//! nonlinear connection, curvature, Jacobi endomorphism, horizontal frame
//! and geodesics.
//!
//! Coordinates follow the usual conventions on TM: a spray is
//! `S = y^i d/dx^i - 2 G^i d/dy^i`, the connection coefficients are
//! `G^i_j = dG^i/dy^j`, the horizontal frame is
//! `delta_i = d/dx^i - G^j_i d/dy^j`, and the curvature is
//! `R^i_jk = delta_k G^i_j - delta_j G^i_k`.

use std::sync::Arc;

use nalgebra::DMatrix;
use once_cell::sync::OnceCell;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::{FieldExpr, Program, Var};
use crate::field::VectorField;
use crate::linalg;
use crate::point::TangentPoint;
use crate::sampling::ProbeSampler;
use crate::tol::Tolerance;

/// Relative singular-value cut-off for every numeric rank decision.
pub const RANK_TOL: f64 = 1e-7;

/// A candidate Finsler function together with the open set it lives on.
#[derive(Clone, Debug)]
pub struct FinslerFunction {
    f: FieldExpr,
    domain: Option<FieldExpr>,
    probe_radius: f64,
}

impl FinslerFunction {
    pub fn new(f: FieldExpr) -> Self {
        FinslerFunction {
            f,
            domain: None,
            probe_radius: 0.5,
        }
    }

    /// Restricts to the set where `domain > 0`.
    pub fn with_domain(mut self, domain: FieldExpr) -> Self {
        assert_eq!(
            domain.dim(),
            self.f.dim(),
            "domain predicate dimension mismatch"
        );
        self.domain = Some(domain);
        self
    }

    /// Radius of the base-point ball used for internal probe points.
    pub fn with_probe_radius(mut self, r: f64) -> Self {
        self.probe_radius = r;
        self
    }

    pub fn expr(&self) -> FieldExpr {
        self.f
    }

    pub fn domain(&self) -> Option<FieldExpr> {
        self.domain
    }

    pub fn dim(&self) -> usize {
        self.f.dim()
    }

    pub fn probe_radius(&self) -> f64 {
        self.probe_radius
    }

    pub fn check_point(&self, p: &TangentPoint) -> Result<()> {
        check_point(self.dim(), self.domain.as_ref(), p)
    }

    /// Seeded points inside the domain, used by load-time checks.
    pub fn probes(&self, count: usize, seed: u64) -> Vec<TangentPoint> {
        ProbeSampler::with_radius(self.probe_radius)
            .seed(seed)
            .sample(self.dim(), count, self.domain.as_ref())
    }

    /// Checks 1-homogeneity in `y` at seeded probes.
    pub fn check_homogeneity(&self) -> Result<()> {
        let report = self.f.check_homogeneity(
            1,
            &self.probes(10, crate::sampling::DEFAULT_SEED),
            &[0.5, 2.0, 3.7],
            Tolerance::default(),
        )?;
        if report.pass {
            Ok(())
        } else {
            Err(Error::NotHomogeneous {
                degree: 1,
                error: report.max_scaling_error.max(report.max_euler_error),
            })
        }
    }

    /// `E = F^2 / 2`, after verifying that `F` is 1-homogeneous.
    pub fn energy(&self) -> Result<FieldExpr> {
        self.check_homogeneity()?;
        Ok(self.energy_unchecked())
    }

    fn energy_unchecked(&self) -> FieldExpr {
        self.f.pow(2).scale(0.5)
    }

    /// `g_ij = 1/2 d^2 F^2 / dy^i dy^j` at `p`.
    pub fn metric_tensor(&self, p: &TangentPoint) -> Result<MetricTensor> {
        self.check_point(p)?;
        metric_tensor_of_energy(&self.energy_unchecked(), p)
    }

    /// Geodesic spray determined by the Euler-Lagrange equation of the
    /// energy, `G^i = 1/2 g^il (y^k d^2E/dy^l dx^k - dE/dx^l)`.
    pub fn geodesic_spray(&self) -> Result<Spray> {
        let e = self.energy()?;
        let n = self.dim();
        let g: Vec<Vec<FieldExpr>> = (0..n)
            .map(|i| (0..n).map(|j| e.diff(Var::Y(i)).diff(Var::Y(j))).collect())
            .collect();
        let rhs: Vec<FieldExpr> = (0..n)
            .map(|l| {
                let ey = e.diff(Var::Y(l));
                let mixed =
                    FieldExpr::sum((0..n).map(|k| FieldExpr::y(k, n) * ey.diff(Var::X(k))), n);
                mixed - e.diff(Var::X(l))
            })
            .collect();
        let (det, adj) = symbolic_adjugate(&g);
        let half_over_det = FieldExpr::constant(0.5, n) / det;
        let coeffs = (0..n)
            .map(|i| {
                let s = FieldExpr::sum((0..n).map(|l| adj[i][l] * rhs[l]), n);
                half_over_det * s
            })
            .collect();
        Ok(Spray::from_coefficients(coeffs).with_domain_opt(self.domain))
    }

    /// Euler-Lagrange residual of a spray against this function:
    /// `max_l |y^k E_{y^l x^k} - E_{x^l} - 2 g_li G^i|`, divided by the
    /// largest term or 1, whichever is bigger.
    pub fn euler_lagrange_residual(&self, spray: &Spray, p: &TangentPoint) -> Result<f64> {
        self.check_point(p)?;
        let n = self.dim();
        let e = self.energy_unchecked();
        let jet = e.evaluate_jet(p, 2)?;
        let gvals = FieldExpr::eval_many(spray.coefficients(), p)?;
        let mut worst = 0.0f64;
        for l in 0..n {
            let mixed: f64 = (0..n)
                .map(|k| p.y()[k] * jet.get(&[Var::Y(l), Var::X(k)]).unwrap())
                .sum();
            let ex = jet.get(&[Var::X(l)]).unwrap();
            let gl: f64 = (0..n)
                .map(|i| 2.0 * jet.get(&[Var::Y(l), Var::Y(i)]).unwrap() * gvals[i])
                .sum();
            let residual = mixed - ex - gl;
            let scale = mixed.abs().max(ex.abs()).max(gl.abs()).max(1.0);
            worst = worst.max(residual.abs() / scale);
        }
        Ok(worst)
    }
}

pub(crate) fn check_point(dim: usize, domain: Option<&FieldExpr>, p: &TangentPoint) -> Result<()> {
    if p.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: p.dim(),
        });
    }
    if let Some(d) = domain {
        let v = d.eval(p)?;
        if v <= 0.0 {
            return Err(Error::OutsideDomain {
                point: p.to_string(),
                value: v,
            });
        }
    }
    Ok(())
}

/// Determinant and adjugate of a small symbolic matrix by cofactor expansion.
pub fn symbolic_adjugate(m: &[Vec<FieldExpr>]) -> (FieldExpr, Vec<Vec<FieldExpr>>) {
    let n = m.len();
    let dim = m[0][0].dim();
    if n == 1 {
        return (m[0][0], vec![vec![FieldExpr::constant(1.0, dim)]]);
    }
    let minor = |skip_r: usize, skip_c: usize| -> Vec<Vec<FieldExpr>> {
        (0..n)
            .filter(|&r| r != skip_r)
            .map(|r| (0..n).filter(|&c| c != skip_c).map(|c| m[r][c]).collect())
            .collect()
    };
    let mut adj = vec![vec![FieldExpr::zero(dim); n]; n];
    for r in 0..n {
        for c in 0..n {
            let cof = symbolic_det(&minor(r, c));
            // adj = transpose of the cofactor matrix
            adj[c][r] = if (r + c) % 2 == 0 { cof } else { -cof };
        }
    }
    let det = FieldExpr::sum((0..n).map(|c| m[0][c] * adj[c][0]), dim);
    (det, adj)
}

fn symbolic_det(m: &[Vec<FieldExpr>]) -> FieldExpr {
    let n = m.len();
    match n {
        1 => m[0][0],
        2 => m[0][0] * m[1][1] - m[0][1] * m[1][0],
        _ => {
            let dim = m[0][0].dim();
            FieldExpr::sum(
                (0..n).map(|c| {
                    let sub: Vec<Vec<FieldExpr>> = (1..n)
                        .map(|r| (0..n).filter(|&k| k != c).map(|k| m[r][k]).collect())
                        .collect();
                    let t = m[0][c] * symbolic_det(&sub);
                    if c % 2 == 0 {
                        t
                    } else {
                        -t
                    }
                }),
                dim,
            )
        }
    }
}

/// Hessian of an energy-like function in the fibre directions.
#[derive(Clone, Debug, Serialize)]
pub struct MetricTensor {
    pub matrix: Vec<Vec<f64>>,
    pub rank: usize,
    pub regular: bool,
}

impl MetricTensor {
    pub fn as_matrix(&self) -> DMatrix<f64> {
        linalg::from_rows(&self.matrix)
    }
}

/// `g_ij = d^2 E / dy^i dy^j` at `p`.
pub fn metric_tensor_of_energy(e: &FieldExpr, p: &TangentPoint) -> Result<MetricTensor> {
    let n = e.dim();
    let exprs: Vec<FieldExpr> = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| e.diff(Var::Y(i)).diff(Var::Y(j)))
        .collect();
    let vals = FieldExpr::eval_many(&exprs, p)?;
    let mut matrix = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            // symmetrise exactly; the two orders are the same tree anyway
            matrix[i][j] = 0.5 * (vals[i * n + j] + vals[j * n + i]);
        }
    }
    let rank = linalg::numeric_rank(&linalg::from_rows(&matrix), RANK_TOL);
    Ok(MetricTensor {
        matrix,
        rank,
        regular: rank == n,
    })
}

/// A spray given by its coefficients `G^i` as field expressions.
#[derive(Clone, Debug)]
pub struct Spray {
    coeffs: Vec<FieldExpr>,
    domain: Option<FieldExpr>,
    jet_program: Arc<OnceCell<Program>>,
}

impl Spray {
    pub fn from_coefficients(coeffs: Vec<FieldExpr>) -> Self {
        let n = coeffs.len();
        assert!(
            n > 0 && coeffs.iter().all(|c| c.dim() == n),
            "spray coefficient dimension mismatch"
        );
        Spray {
            coeffs,
            domain: None,
            jet_program: Arc::new(OnceCell::new()),
        }
    }

    pub fn with_domain(self, domain: FieldExpr) -> Self {
        self.with_domain_opt(Some(domain))
    }

    fn with_domain_opt(mut self, domain: Option<FieldExpr>) -> Self {
        self.domain = domain;
        self
    }

    pub fn dim(&self) -> usize {
        self.coeffs.len()
    }

    pub fn coefficients(&self) -> &[FieldExpr] {
        &self.coeffs
    }

    pub fn domain(&self) -> Option<FieldExpr> {
        self.domain
    }

    pub fn check_point(&self, p: &TangentPoint) -> Result<()> {
        check_point(self.dim(), self.domain.as_ref(), p)
    }

    /// `G^i_j = dG^i / dy^j`.
    pub fn connection(&self) -> Vec<Vec<FieldExpr>> {
        let n = self.dim();
        self.coeffs
            .iter()
            .map(|g| (0..n).map(|j| g.diff(Var::Y(j))).collect())
            .collect()
    }

    /// The spray as a vector field, `S = y^i d/dx^i - 2 G^i d/dy^i`.
    pub fn vector_field(&self) -> VectorField {
        let n = self.dim();
        VectorField::new(
            (0..n).map(|i| FieldExpr::y(i, n)).collect(),
            self.coeffs.iter().map(|g| g.scale(-2.0)).collect(),
        )
    }

    /// `delta_i`, `S = y^i delta_i` and the Liouville field.
    pub fn horizontal_frame(&self) -> HorizontalFrame {
        let n = self.dim();
        let conn = self.connection();
        let deltas = (0..n)
            .map(|i| {
                let mut x_part = vec![FieldExpr::zero(n); n];
                x_part[i] = FieldExpr::constant(1.0, n);
                VectorField::new(x_part, (0..n).map(|j| -conn[j][i]).collect())
            })
            .collect();
        HorizontalFrame {
            deltas,
            spray: self.vector_field(),
            liouville: VectorField::liouville(n),
        }
    }

    fn jet_program(&self) -> &Program {
        self.jet_program.get_or_init(|| {
            let n = self.dim();
            let mut exprs = Vec::new();
            for g in &self.coeffs {
                exprs.push(*g);
                for j in 0..n {
                    let gj = g.diff(Var::Y(j));
                    exprs.push(gj);
                    exprs.push(g.diff(Var::X(j)));
                    for k in 0..n {
                        exprs.push(gj.diff(Var::Y(k)));
                        exprs.push(gj.diff(Var::X(k)));
                    }
                }
            }
            FieldExpr::compile(&exprs)
        })
    }

    /// Coefficients and their derivatives at `p`.
    pub fn jet(&self, p: &TangentPoint) -> Result<SprayJet> {
        self.check_point(p)?;
        let n = self.dim();
        let vals = self.jet_program().eval(p.x(), p.y())?;
        let mut it = vals.into_iter();
        let mut next = || it.next().expect("jet program layout");
        let mut jet = SprayJet {
            point: p.clone(),
            g: vec![0.0; n],
            gy: vec![vec![0.0; n]; n],
            gx: vec![vec![0.0; n]; n],
            gyy: vec![vec![vec![0.0; n]; n]; n],
            gxy: vec![vec![vec![0.0; n]; n]; n],
        };
        for i in 0..n {
            jet.g[i] = next();
            for j in 0..n {
                jet.gy[i][j] = next();
                jet.gx[i][j] = next();
                for k in 0..n {
                    jet.gyy[i][j][k] = next();
                    jet.gxy[i][j][k] = next();
                }
            }
        }
        Ok(jet)
    }

    pub fn connection_and_curvature(&self, p: &TangentPoint) -> Result<(SprayJet, CurvatureValue)> {
        let jet = self.jet(p)?;
        let r = jet.curvature();
        Ok((jet, r))
    }

    /// Jacobi endomorphism
    /// `R^i_j = 2 dG^i/dx^j - S(G^i_j) - G^i_k G^k_j`.
    pub fn jacobi_endomorphism(&self, p: &TangentPoint) -> Result<SemibasicEndo> {
        Ok(self.jet(p)?.jacobi())
    }

    /// Fixed-step classical Runge-Kutta on `x' = y, y' = -2 G(x, y)`.
    pub fn integrate_geodesic(
        &self,
        start: &TangentPoint,
        t_end: f64,
        steps: usize,
    ) -> Result<Geodesic, GeodesicError> {
        let n = self.dim();
        self.check_point(start).map_err(|e| GeodesicError {
            error: e,
            partial: Geodesic::default(),
        })?;
        assert!(steps > 0, "geodesic integration needs at least one step");
        let prog = FieldExpr::compile(&self.coeffs);
        let domain = self.domain.map(|d| FieldExpr::compile(&[d]));
        let h = t_end / steps as f64;
        let accel = |x: &[f64], y: &[f64]| -> Option<Vec<f64>> {
            if let Some(d) = &domain {
                match d.eval(x, y) {
                    Ok(v) if v[0] > 0.0 => {}
                    _ => return None,
                }
            }
            prog.eval(x, y)
                .ok()
                .map(|g| g.into_iter().map(|v| -2.0 * v).collect())
        };
        let mut path = Geodesic {
            times: vec![0.0],
            xs: vec![start.x().to_vec()],
            ys: vec![start.y().to_vec()],
        };
        let axpy = |a: &[f64], s: f64, b: &[f64]| -> Vec<f64> {
            a.iter().zip(b).map(|(u, v)| u + s * v).collect()
        };
        for step in 0..steps {
            let x = path.xs.last().unwrap().clone();
            let y = path.ys.last().unwrap().clone();
            let exit = |path: Geodesic| GeodesicError {
                error: Error::DomainExit { index: step + 1 },
                partial: path,
            };
            let Some(a1) = accel(&x, &y) else {
                return Err(exit(path));
            };
            let (x2, y2) = (axpy(&x, 0.5 * h, &y), axpy(&y, 0.5 * h, &a1));
            let Some(a2) = accel(&x2, &y2) else {
                return Err(exit(path));
            };
            let (x3, y3) = (axpy(&x, 0.5 * h, &y2), axpy(&y, 0.5 * h, &a2));
            let Some(a3) = accel(&x3, &y3) else {
                return Err(exit(path));
            };
            let (x4, y4) = (axpy(&x, h, &y3), axpy(&y, h, &a3));
            let Some(a4) = accel(&x4, &y4) else {
                return Err(exit(path));
            };
            let xn: Vec<f64> = (0..n)
                .map(|i| x[i] + h / 6.0 * (y[i] + 2.0 * y2[i] + 2.0 * y3[i] + y4[i]))
                .collect();
            let yn: Vec<f64> = (0..n)
                .map(|i| y[i] + h / 6.0 * (a1[i] + 2.0 * a2[i] + 2.0 * a3[i] + a4[i]))
                .collect();
            if let Some(d) = &domain {
                if !matches!(d.eval(&xn, &yn), Ok(v) if v[0] > 0.0) {
                    return Err(exit(path));
                }
            }
            path.times.push((step + 1) as f64 * h);
            path.xs.push(xn);
            path.ys.push(yn);
        }
        Ok(path)
    }
}

/// `delta_1..delta_n`, the spray `S` and the Liouville field `C`.
#[derive(Clone, Debug)]
pub struct HorizontalFrame {
    pub deltas: Vec<VectorField>,
    pub spray: VectorField,
    pub liouville: VectorField,
}

/// Spray coefficients and the derivatives needed for curvature at a point.
#[derive(Clone, Debug, Serialize)]
pub struct SprayJet {
    pub point: TangentPoint,
    /// `G^i`
    pub g: Vec<f64>,
    /// `gy[i][j] = G^i_j = dG^i/dy^j`
    pub gy: Vec<Vec<f64>>,
    /// `gx[i][j] = dG^i/dx^j`
    pub gx: Vec<Vec<f64>>,
    /// `gyy[i][j][k] = G^i_jk`
    pub gyy: Vec<Vec<Vec<f64>>>,
    /// `gxy[i][j][k] = d G^i_j / dx^k`
    pub gxy: Vec<Vec<Vec<f64>>>,
}

impl SprayJet {
    pub fn dim(&self) -> usize {
        self.g.len()
    }

    /// `delta_k (G^i_j)`.
    fn delta_of_connection(&self, i: usize, j: usize, k: usize) -> f64 {
        let n = self.dim();
        self.gxy[i][j][k]
            - (0..n)
                .map(|m| self.gy[m][k] * self.gyy[i][j][m])
                .sum::<f64>()
    }

    pub fn curvature(&self) -> CurvatureValue {
        let n = self.dim();
        let mut r = vec![vec![vec![0.0; n]; n]; n];
        for (i, ri) in r.iter_mut().enumerate() {
            for j in 0..n {
                for k in (j + 1)..n {
                    let v = self.delta_of_connection(i, j, k) - self.delta_of_connection(i, k, j);
                    ri[j][k] = v;
                    ri[k][j] = -v;
                }
            }
        }
        CurvatureValue { r }
    }

    pub fn jacobi(&self) -> SemibasicEndo {
        let n = self.dim();
        let y = self.point.y();
        let m = DMatrix::from_fn(n, n, |i, j| {
            let s_gij: f64 = (0..n)
                .map(|k| y[k] * self.gxy[i][j][k] - 2.0 * self.g[k] * self.gyy[i][j][k])
                .sum();
            let quad: f64 = (0..n).map(|k| self.gy[i][k] * self.gy[k][j]).sum();
            2.0 * self.gx[i][j] - s_gij - quad
        });
        SemibasicEndo { matrix: m }
    }

    /// Residuals of `G^i_j y^j = 2 G^i` and `G^i_jk y^k = G^i_j`, relative
    /// to the size of the entries involved.
    pub fn homogeneity_residuals(&self) -> (f64, f64) {
        let n = self.dim();
        let y = self.point.y();
        let scale_g = linalg::max_abs(self.g.iter().copied()).max(f64::MIN_POSITIVE);
        let scale_gy = linalg::max_abs(self.gy.iter().flatten().copied()).max(f64::MIN_POSITIVE);
        let mut first = 0.0f64;
        let mut second = 0.0f64;
        let ynorm = linalg::norm(y);
        for i in 0..n {
            let e: f64 = (0..n).map(|j| self.gy[i][j] * y[j]).sum::<f64>() - 2.0 * self.g[i];
            first = first.max(e.abs() / (scale_gy * ynorm).max(scale_g));
            for j in 0..n {
                let e: f64 = (0..n).map(|k| self.gyy[i][j][k] * y[k]).sum::<f64>() - self.gy[i][j];
                let scale_gyy = linalg::max_abs(self.gyy[i].iter().flatten().copied());
                second = second.max(e.abs() / (scale_gyy * ynorm).max(scale_gy));
            }
        }
        (first, second)
    }

    /// Horizontal projector `h = delta_i (x) dx^i` on `(d/dx, d/dy)`.
    pub fn horizontal_projector(&self) -> DMatrix<f64> {
        let n = self.dim();
        DMatrix::from_fn(2 * n, 2 * n, |r, c| match (r < n, c < n) {
            (true, true) => f64::from(r == c),
            (false, true) => -self.gy[r - n][c],
            _ => 0.0,
        })
    }
}

/// `R^i_jk`, stored exactly antisymmetric in `(j, k)`.
#[derive(Clone, Debug, Serialize)]
pub struct CurvatureValue {
    pub r: Vec<Vec<Vec<f64>>>,
}

impl CurvatureValue {
    /// `i_S R`: `(y^k R^i_kj)`.
    pub fn contract_spray(&self, y: &[f64]) -> DMatrix<f64> {
        let n = y.len();
        DMatrix::from_fn(n, n, |i, j| (0..n).map(|k| y[k] * self.r[i][k][j]).sum())
    }

    pub fn max_abs(&self) -> f64 {
        linalg::max_abs(self.r.iter().flatten().flatten().copied())
    }
}

/// Matrix `M^i_j` of a semibasic (1,1)-tensor `M^i_j dx^j (x) d/dy^i`.
#[derive(Clone, Debug, PartialEq)]
pub struct SemibasicEndo {
    pub matrix: DMatrix<f64>,
}

impl SemibasicEndo {
    /// Action on a horizontal vector with components `v`, returning the
    /// vertical components.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let n = self.matrix.nrows();
        (0..n)
            .map(|i| (0..n).map(|j| self.matrix[(i, j)] * v[j]).sum())
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        linalg::max_abs(self.matrix.iter().copied())
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        linalg::rows(&self.matrix)
    }
}

impl Serialize for SemibasicEndo {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.rows().serialize(s)
    }
}

/// Sampled geodesic `t -> (x(t), x'(t))`.
#[derive(Clone, Debug, Default, Serialize)]
pub struct Geodesic {
    pub times: Vec<f64>,
    pub xs: Vec<Vec<f64>>,
    pub ys: Vec<Vec<f64>>,
}

impl Geodesic {
    pub fn end(&self) -> &[f64] {
        self.xs.last().map(|v| v.as_slice()).unwrap_or(&[])
    }
}

/// Integration failure together with the path computed so far.
#[derive(Clone, Debug)]
pub struct GeodesicError {
    pub error: Error,
    pub partial: Geodesic,
}

impl std::fmt::Display for GeodesicError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} ({} samples computed)",
            self.error,
            self.partial.xs.len()
        )
    }
}

impl std::error::Error for GeodesicError {}

impl From<GeodesicError> for Error {
    fn from(e: GeodesicError) -> Self {
        e.error
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn euclid(n: usize) -> FinslerFunction {
        FinslerFunction::new(FieldExpr::parse("sqrt(dot(y,y))", n).unwrap())
    }

    fn klein(n: usize) -> FinslerFunction {
        let f = FieldExpr::parse(
            "sqrt(((1 - dot(x,x))*dot(y,y) + dot(x,y)^2)/(1 - dot(x,x))^2)",
            n,
        )
        .unwrap();
        FinslerFunction::new(f).with_domain(FieldExpr::parse("1 - dot(x,x)", n).unwrap())
    }

    fn pt(x: &[f64], y: &[f64]) -> TangentPoint {
        TangentPoint::new(x.to_vec(), y.to_vec()).unwrap()
    }

    #[test]
    fn euclidean_energy_and_metric() {
        let e = euclid(2).energy().unwrap();
        assert_eq!(e, FieldExpr::parse("dot(y,y)/2", 2).unwrap());
        let g = euclid(2)
            .metric_tensor(&pt(&[0.1, 0.2], &[1.0, 3.0]))
            .unwrap();
        assert_eq!(g.matrix, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert!(g.regular);
    }

    #[test]
    fn energy_rejects_quadratic_input() {
        let q = FinslerFunction::new(FieldExpr::parse("dot(y,y)", 2).unwrap());
        assert!(matches!(q.energy(), Err(Error::NotHomogeneous { .. })));
    }

    #[test]
    fn klein_metric_is_identity_at_origin() {
        let g = klein(2)
            .metric_tensor(&pt(&[0.0, 0.0], &[0.3, -1.2]))
            .unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((g.matrix[i][j] - want).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn klein_spray_matches_closed_form() {
        let spray = klein(2).geodesic_spray().unwrap();
        let p = pt(&[0.3, -0.2], &[0.7, 1.1]);
        let g = FieldExpr::eval_many(spray.coefficients(), &p).unwrap();
        let xy = 0.3 * 0.7 - 0.2 * 1.1;
        let factor = xy / (1.0 - 0.09 - 0.04);
        assert!((g[0] - factor * 0.7).abs() < 1e-12);
        assert!((g[1] - factor * 1.1).abs() < 1e-12);
    }

    #[test]
    fn euclidean_spray_is_flat() {
        let spray = euclid(3).geodesic_spray().unwrap();
        assert!(spray.coefficients().iter().all(|g| g.is_zero()));
        let p = pt(&[0.1, 0.2, 0.3], &[1.0, 0.0, 2.0]);
        let (_, r) = spray.connection_and_curvature(&p).unwrap();
        assert_eq!(r.max_abs(), 0.0);
        assert_eq!(spray.jacobi_endomorphism(&p).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn klein_jacobi_eigenvalue_at_origin() {
        let spray = klein(2).geodesic_spray().unwrap();
        let phi = spray
            .jacobi_endomorphism(&pt(&[0.0, 0.0], &[1.0, 0.0]))
            .unwrap();
        // Phi = -(I - y y^T) at x = 0, |y| = 1
        assert!((phi.matrix[(1, 1)] + 1.0).abs() < 1e-12);
        assert!(phi.matrix[(0, 0)].abs() < 1e-12);
    }

    #[test]
    fn outside_domain_is_refused() {
        let k = klein(2);
        assert!(matches!(
            k.metric_tensor(&pt(&[1.0, 0.0], &[1.0, 0.0])),
            Err(Error::OutsideDomain { .. })
        ));
        // without the predicate the bare expression still refuses |x| = 1
        let bare = FinslerFunction::new(k.expr());
        assert!(matches!(
            bare.metric_tensor(&pt(&[0.6, 0.8], &[1.0, 0.0])),
            Err(Error::Eval(_))
        ));
    }

    #[test]
    fn euclidean_geodesic_is_straight() {
        let spray = euclid(2).geodesic_spray().unwrap();
        let path = spray
            .integrate_geodesic(&pt(&[0.0, 0.0], &[1.0, 0.0]), 1.0, 10)
            .unwrap();
        assert_eq!(path.xs.len(), 11);
        assert!((path.end()[0] - 1.0).abs() < 1e-14 && path.end()[1] == 0.0);
    }

    #[test]
    fn geodesic_reports_domain_exit() {
        // a spray whose coefficients blow up at x[1] = 0.5
        let g = FieldExpr::parse("y[1]^2/(0.5 - x[1])", 2).unwrap();
        let spray = Spray::from_coefficients(vec![FieldExpr::zero(2), g])
            .with_domain(FieldExpr::parse("0.5 - x[1]", 2).unwrap());
        let err = spray
            .integrate_geodesic(&pt(&[0.0, 0.0], &[1.0, 0.0]), 2.0, 100)
            .unwrap_err();
        match err.error {
            Error::DomainExit { index } => {
                assert!(index > 20 && index <= 26, "{index}");
                assert_eq!(err.partial.xs.len(), index);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn adjugate_inverts() {
        let m: Vec<Vec<FieldExpr>> = [["2", "x[1]", "0"], ["1", "3", "y[1]"], ["0", "1", "4"]]
            .iter()
            .map(|r| r.iter().map(|s| FieldExpr::parse(s, 2).unwrap()).collect())
            .collect();
        let (det, adj) = symbolic_adjugate(&m);
        let p = pt(&[0.5, 0.0], &[2.0, 1.0]);
        let d = det.eval(&p).unwrap();
        let num = [[2.0, 0.5, 0.0], [1.0, 3.0, 2.0], [0.0, 1.0, 4.0]];
        for i in 0..3 {
            for j in 0..3 {
                let v: f64 = (0..3)
                    .map(|k| num[i][k] * adj[k][j].eval(&p).unwrap())
                    .sum();
                let want = if i == j { d } else { 0.0 };
                assert!((v - want).abs() < 1e-12);
            }
        }
    }
}
