//! Built-in metrics and the reproduction of the two worked deformation
//! examples on the Klein metric and its curvature-scaled family.

use serde::Serialize;

use crate::deform::{self, DeformedSpray, Invariance};
use crate::error::{Error, Result};
use crate::expr::FieldExpr;
use crate::geometry::{FinslerFunction, RANK_TOL};
use crate::holonomy;
use crate::linalg;
use crate::point::TangentPoint;
use crate::sampling::{ProbeSampler, DEFAULT_SEED};
use crate::spectral;

/// Number of default probe points per catalog entry.
pub const PROBE_COUNT: usize = 10;

#[derive(Clone, Debug, Serialize)]
pub struct CatalogEntry {
    pub name: String,
    pub dim: usize,
    pub f: FieldExpr,
    pub domain: Option<FieldExpr>,
    /// Radius of the base-point ball on which the metric is defined.
    pub domain_radius: f64,
    /// Constant flag curvature, when known.
    pub flag_curvature: Option<f64>,
    pub mu: Option<f64>,
    pub probes: Vec<TangentPoint>,
}

impl CatalogEntry {
    pub fn finsler(&self) -> FinslerFunction {
        let f = FinslerFunction::new(self.f).with_probe_radius(0.7 * self.domain_radius);
        match self.domain {
            Some(d) => f.with_domain(d),
            None => f,
        }
    }

    /// Probes drawn with a different seed.
    pub fn probes_with_seed(&self, count: usize, seed: u64) -> Vec<TangentPoint> {
        ProbeSampler::with_radius(0.7 * self.domain_radius)
            .seed(seed)
            .sample(self.dim, count, self.domain.as_ref())
    }
}

pub const CATALOG: [&str; 3] = ["euclidean", "klein", "mu_family"];

fn mu_family_source(mu: f64) -> (String, String) {
    let m = format!("{mu:?}");
    (
        format!("sqrt(((1 - {m}*dot(x,x))*dot(y,y) + {m}*dot(x,y)^2)/(1 - {m}*dot(x,x))^2)"),
        format!("1 - {m}*dot(x,x)"),
    )
}

/// Looks up a catalog metric of dimension `dim`; `mu` is required by
/// `mu_family` and ignored otherwise.
pub fn catalog_get(name: &str, dim: usize, mu: Option<f64>) -> Result<CatalogEntry> {
    if dim == 0 || dim > 32 {
        return Err(Error::InvalidParameter(format!(
            "dimension {dim} is out of range"
        )));
    }
    let (f_src, domain_src, radius, kappa, mu) = match name {
        "euclidean" => ("sqrt(dot(y,y))".to_owned(), None, 1.0, Some(0.0), None),
        "klein" => {
            let (f, d) = mu_family_source(1.0);
            (f, Some(d), 1.0, Some(-1.0), None)
        }
        "mu_family" => {
            let mu =
                mu.ok_or_else(|| Error::InvalidParameter("mu_family needs a value for mu".into()))?;
            if !(mu.is_finite() && mu > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "mu must be positive, got {mu}"
                )));
            }
            let (f, d) = mu_family_source(mu);
            (f, Some(d), 1.0 / mu.sqrt(), Some(-mu), Some(mu))
        }
        other => return Err(Error::UnknownMetric(other.to_owned())),
    };
    let f = FieldExpr::parse(&f_src, dim)?;
    let domain = domain_src.map(|d| FieldExpr::parse(&d, dim)).transpose()?;
    let probes = ProbeSampler::with_radius(0.7 * radius)
        .seed(DEFAULT_SEED)
        .sample(dim, PROBE_COUNT, domain.as_ref());
    Ok(CatalogEntry {
        name: name.to_owned(),
        dim,
        f,
        domain,
        domain_radius: radius,
        flag_curvature: kappa,
        mu,
        probes,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Confirmed,
    Refuted,
    Inconclusive,
}

#[derive(Clone, Debug, Serialize)]
pub struct Claim {
    pub id: &'static str,
    pub statement: String,
    pub verdict: Verdict,
    pub measured: f64,
    pub threshold: f64,
    pub note: String,
}

/// Quantities measured by the example pipeline; they depend only on the
/// metric, the factor and the probes.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Measurements {
    /// Max relative deviation of `G^i` from `mu <x,y> / (1 - mu |x|^2) y^i`.
    pub derived_spray_deviation: f64,
    /// Max relative deviation of `G^i` from the stated closed form.
    pub stated_spray_deviation: f64,
    pub flag_curvature: f64,
    pub flag_spread: f64,
    pub factor_invariance_residual: f64,
    /// `max |P~^2 + kappa_alpha| / P~^2`.
    pub necessary_condition_residual: f64,
    /// Max relative deviation of `G~^i` from `(P~ + mu <x,y>/(1 - mu |x|^2)) y^i`.
    pub deformed_spray_deviation: f64,
    pub phi_tilde_max: f64,
    pub closed_form_discrepancy: f64,
    pub holonomy_rank: usize,
    pub holonomy_lower_bound: bool,
    pub holonomy_point: TangentPoint,
    pub projective_distance: f64,
    /// Max distance of deformed geodesics from the straight line through
    /// the start along the initial velocity.
    pub deformed_straightness: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExampleReport {
    pub example: u8,
    pub dim: usize,
    pub mu: f64,
    pub probes: Vec<TangentPoint>,
    pub measurements: Measurements,
    pub claims: Vec<Claim>,
    /// Internal inconsistencies among the stated claims, found by
    /// comparing them with each other and with the measurements.
    pub tensions: Vec<String>,
    pub restrictions: Vec<String>,
}

/// Closed-form tolerance for "confirmed".
pub const CLOSED_FORM_TOL: f64 = 1e-5;
/// Absolute tolerance for flatness norms.
pub const FLATNESS_TOL: f64 = 1e-6;

const GEODESIC_TIME: f64 = 1.0;
const GEODESIC_STEPS: usize = 200;
const GEODESIC_STARTS: usize = 5;

fn max_rel_deviation(a: &[FieldExpr], b: &[FieldExpr], probes: &[TangentPoint]) -> Result<f64> {
    let mut worst = 0.0f64;
    for p in probes {
        let va = FieldExpr::eval_many(a, p)?;
        let vb = FieldExpr::eval_many(b, p)?;
        let scale = linalg::max_abs(vb.iter().copied()).max(1e-300);
        worst = worst.max(linalg::max_abs(va.iter().zip(&vb).map(|(u, v)| u - v)) / scale);
    }
    Ok(worst)
}

fn radial(coef: &str, dim: usize) -> Result<Vec<FieldExpr>> {
    (1..=dim)
        .map(|i| FieldExpr::parse(&format!("({coef})*y[{i}]"), dim).map_err(Error::from))
        .collect()
}

/// Runs the measurement pipeline shared by both examples on the metric
/// `mu_family(mu)` with factor `sqrt(mu) F` and `lambda = 1`.
pub fn measure(
    entry: &CatalogEntry,
    mu: f64,
    probes: &[TangentPoint],
    stated_spray: &[FieldExpr],
) -> Result<Measurements> {
    let n = entry.dim;
    let f = entry.finsler();
    let spray = f.geodesic_spray()?;
    let m = format!("{mu:?}");
    let derived = radial(&format!("{m}*dot(x,y)/(1 - {m}*dot(x,x))"), n)?;
    let derived_spray_deviation = max_rel_deviation(spray.coefficients(), &derived, probes)?;
    let stated_spray_deviation = max_rel_deviation(spray.coefficients(), stated_spray, probes)?;

    let flag = spectral::flag_constancy_check(&f, &spray, probes, CLOSED_FORM_TOL)?;
    let ptilde = f.expr().scale(mu.sqrt());
    let inv = holonomy::is_holonomy_invariant(&spray, &ptilde, probes, deform::INVARIANCE_TOL)?;

    let mut necessary = 0.0f64;
    for p in probes {
        let rep = spectral::necessary_condition_check(&spray, &ptilde, p, CLOSED_FORM_TOL)?;
        let p2 = rep.factor_value.powi(2);
        necessary = necessary.max(rep.values.iter().map(|v| v.abs() / p2).fold(0.0, f64::max));
    }

    let d = DeformedSpray::new(&spray, ptilde, 1.0, probes, Invariance::Override)?;
    let expected: Vec<FieldExpr> = derived
        .iter()
        .enumerate()
        .map(|(i, g)| *g + ptilde * FieldExpr::y(i, n))
        .collect();
    let deformed_spray_deviation = max_rel_deviation(d.spray().coefficients(), &expected, probes)?;

    let mut phi_tilde_max = 0.0f64;
    let mut closed_form_discrepancy = 0.0f64;
    if inv.pass {
        for p in probes {
            let dj = deform::deformed_jacobi(&d, p)?;
            phi_tilde_max = phi_tilde_max.max(dj.direct.max_abs());
            closed_form_discrepancy = closed_form_discrepancy.max(dj.discrepancy);
        }
    } else {
        for p in probes {
            phi_tilde_max = phi_tilde_max.max(d.spray().jacobi_endomorphism(p)?.max_abs());
        }
        closed_form_discrepancy = f64::NAN;
    }

    let hp = probes[0].clone();
    let span = holonomy::holonomy_rank(d.spray(), &hp, 2 * n, RANK_TOL)?;

    let mut projective_distance = 0.0f64;
    let mut deformed_straightness = 0.0f64;
    for start in probes.iter().take(GEODESIC_STARTS) {
        let rep = deform::projective_equivalence_check(
            &spray,
            d.spray(),
            start,
            GEODESIC_TIME,
            GEODESIC_STEPS,
            CLOSED_FORM_TOL,
        )?;
        projective_distance = projective_distance.max(rep.distance);
        let path = d
            .spray()
            .integrate_geodesic(start, GEODESIC_TIME, GEODESIC_STEPS)?;
        deformed_straightness = deformed_straightness.max(line_deviation(start, &path.xs));
    }

    Ok(Measurements {
        derived_spray_deviation,
        stated_spray_deviation,
        flag_curvature: flag.kappa,
        flag_spread: flag.spread,
        factor_invariance_residual: inv.max_residual,
        necessary_condition_residual: necessary,
        deformed_spray_deviation,
        phi_tilde_max,
        closed_form_discrepancy,
        holonomy_rank: span.rank,
        holonomy_lower_bound: span.lower_bound,
        holonomy_point: hp,
        projective_distance,
        deformed_straightness,
    })
}

/// Distance of points from the line `x0 + t y0`.
fn line_deviation(start: &TangentPoint, xs: &[Vec<f64>]) -> f64 {
    let x0 = start.x();
    let u: Vec<f64> = start
        .y()
        .iter()
        .map(|v| v / linalg::norm(start.y()))
        .collect();
    xs.iter()
        .map(|x| {
            let d: Vec<f64> = x.iter().zip(x0).map(|(a, b)| a - b).collect();
            let t: f64 = d.iter().zip(&u).map(|(a, b)| a * b).sum();
            linalg::norm(
                &d.iter()
                    .zip(&u)
                    .map(|(a, b)| a - t * b)
                    .collect::<Vec<f64>>(),
            )
        })
        .fold(0.0, f64::max)
}

fn below(measured: f64, threshold: f64) -> Verdict {
    if measured <= threshold {
        Verdict::Confirmed
    } else {
        Verdict::Refuted
    }
}

fn claim(
    id: &'static str,
    statement: impl Into<String>,
    verdict: Verdict,
    measured: f64,
    threshold: f64,
    note: impl Into<String>,
) -> Claim {
    Claim {
        id,
        statement: statement.into(),
        verdict,
        measured,
        threshold,
        note: note.into(),
    }
}

/// Reproduces example 1 (Klein metric, `P~ = F`) or example 2 (`mu_family`,
/// `P~ = sqrt(mu) F`). `probes` defaults to the catalog probes.
pub fn reproduce_example(
    which: u8,
    dim: usize,
    mu: Option<f64>,
    probes: Option<Vec<TangentPoint>>,
) -> Result<ExampleReport> {
    let (entry, mu) = match which {
        1 => (catalog_get("klein", dim, None)?, 1.0),
        2 => {
            let mu =
                mu.ok_or_else(|| Error::InvalidParameter("example 2 needs a value for mu".into()))?;
            (catalog_get("mu_family", dim, Some(mu))?, mu)
        }
        other => {
            return Err(Error::InvalidParameter(format!(
                "unknown example {other}; expected 1 or 2"
            )))
        }
    };
    let probes = probes.unwrap_or_else(|| entry.probes.clone());
    if probes.len() < 2 {
        return Err(Error::Precondition(
            "example reproduction needs at least two probes".into(),
        ));
    }
    let f = entry.finsler();
    for p in &probes {
        f.check_point(p)?;
    }
    let n = dim;
    let m = format!("{mu:?}");
    let stated = match which {
        1 => radial("dot(x,y)/(1 - dot(x,x))", n)?,
        _ => radial(&format!("-{m}*dot(x,y)/(1 - dot(x,x))"), n)?,
    };
    let ms = measure(&entry, mu, &probes, &stated)?;
    let full = 2 * n;
    let kappa_dev = (ms.flag_curvature + mu).abs() / mu;
    let kappa_verdict = if ms.flag_spread <= CLOSED_FORM_TOL && kappa_dev <= CLOSED_FORM_TOL {
        Verdict::Confirmed
    } else {
        Verdict::Refuted
    };
    let rank_note = format!(
        "holonomy rank {} of {} at {} (depth limit {}{})",
        ms.holonomy_rank,
        full,
        ms.holonomy_point,
        full,
        if ms.holonomy_lower_bound {
            ", lower bound"
        } else {
            ""
        }
    );
    let mut claims = Vec::new();
    let mut tensions = Vec::new();
    let mut restrictions = Vec::new();
    match which {
        1 => {
            claims.push(claim(
                "spray_formula",
                "G^i = <x,y>/(1-|x|^2) y^i",
                below(ms.stated_spray_deviation, CLOSED_FORM_TOL),
                ms.stated_spray_deviation,
                CLOSED_FORM_TOL,
                "max relative deviation over probes",
            ));
            claims.push(claim(
                "constant_flag_curvature",
                "constant flag curvature kappa = -1",
                kappa_verdict,
                ms.flag_curvature,
                CLOSED_FORM_TOL,
                format!("measured kappa_alpha/F^2, spread {:.3e}", ms.flag_spread),
            ));
            claims.push(claim(
                "factor_invariant",
                "F is holonomy invariant",
                below(ms.factor_invariance_residual, deform::INVARIANCE_TOL),
                ms.factor_invariance_residual,
                deform::INVARIANCE_TOL,
                "max |delta_i F| / max(1, F) at the probes",
            ));
            claims.push(claim(
                "necessary_condition",
                "P~^2 + kappa_alpha = 0 with kappa_alpha = -F^2",
                below(ms.necessary_condition_residual, CLOSED_FORM_TOL),
                ms.necessary_condition_residual,
                CLOSED_FORM_TOL,
                "max |P~^2 + kappa_alpha| / P~^2",
            ));
            claims.push(claim(
                "deformed_spray_formula",
                "G~^i = (F + <x,y>/(1-|x|^2)) y^i",
                below(ms.deformed_spray_deviation, CLOSED_FORM_TOL),
                ms.deformed_spray_deviation,
                CLOSED_FORM_TOL,
                "max relative deviation over probes",
            ));
            claims.push(claim(
                "deformed_projectively_flat",
                "the deformed spray is projectively flat",
                below(ms.deformed_straightness, CLOSED_FORM_TOL),
                ms.deformed_straightness,
                CLOSED_FORM_TOL,
                format!(
                    "max distance of deformed geodesics from straight lines; trace distance to undeformed geodesics {:.3e}",
                    ms.projective_distance
                ),
            ));
            claims.push(claim(
                "r_flat",
                "the deformed spray is R-flat",
                below(ms.phi_tilde_max, FLATNESS_TOL),
                ms.phi_tilde_max,
                FLATNESS_TOL,
                format!(
                    "max |Phi~| over probes; closed form discrepancy {:.3e}",
                    ms.closed_form_discrepancy
                ),
            ));
            claims.push(claim(
                "locally_metrizable",
                "the deformed spray is locally Finsler metrizable",
                Verdict::Inconclusive,
                ms.holonomy_rank as f64,
                full as f64,
                format!("{rank_note}; the full-rank obstruction does not apply, and metrizability itself is not computed"),
            ));
        }
        _ => {
            claims.push(claim(
                "spray_formula",
                "G^i = -mu <x,y>/(1-|x|^2) y^i",
                below(ms.stated_spray_deviation, CLOSED_FORM_TOL),
                ms.stated_spray_deviation,
                CLOSED_FORM_TOL,
                format!(
                    "the spray derived from F is mu <x,y>/(1-mu|x|^2) y^i (max deviation {:.3e})",
                    ms.derived_spray_deviation
                ),
            ));
            claims.push(claim(
                "constant_flag_curvature",
                format!("constant flag curvature kappa = -{m}"),
                kappa_verdict,
                ms.flag_curvature,
                CLOSED_FORM_TOL,
                format!("measured kappa_alpha/F^2, spread {:.3e}", ms.flag_spread),
            ));
            claims.push(claim(
                "factor_invariant",
                "sqrt(mu) F is holonomy invariant",
                below(ms.factor_invariance_residual, deform::INVARIANCE_TOL),
                ms.factor_invariance_residual,
                deform::INVARIANCE_TOL,
                "max |delta_i P~| / max(1, P~) at the probes",
            ));
            claims.push(claim(
                "necessary_condition",
                "P~^2 + kappa_alpha = 0 with kappa_alpha = -mu F^2",
                below(ms.necessary_condition_residual, CLOSED_FORM_TOL),
                ms.necessary_condition_residual,
                CLOSED_FORM_TOL,
                "max |P~^2 + kappa_alpha| / P~^2",
            ));
            let not_flat = if ms.phi_tilde_max > FLATNESS_TOL {
                Verdict::Confirmed
            } else {
                Verdict::Refuted
            };
            claims.push(claim(
                "not_r_flat",
                "the deformed spray is not R-flat",
                not_flat,
                ms.phi_tilde_max,
                FLATNESS_TOL,
                format!(
                    "max |Phi~| over probes; closed form discrepancy {:.3e}",
                    ms.closed_form_discrepancy
                ),
            ));
            let hol_verdict = if ms.holonomy_rank == full {
                Verdict::Confirmed
            } else if ms.holonomy_lower_bound {
                Verdict::Inconclusive
            } else {
                Verdict::Refuted
            };
            claims.push(claim(
                "full_holonomy",
                "the holonomy distribution of the deformed spray is the full tangent space",
                hol_verdict,
                ms.holonomy_rank as f64,
                full as f64,
                rank_note.clone(),
            ));
            let metrizable_note = if ms.holonomy_rank == full {
                "full holonomy forces every invariant energy to be constant".to_owned()
            } else {
                format!("{rank_note}; the full-rank argument offered for this claim does not apply, and metrizability itself is not computed")
            };
            claims.push(claim(
                "not_metrizable",
                "the deformed spray is not Finsler metrizable",
                if ms.holonomy_rank == full {
                    Verdict::Confirmed
                } else {
                    Verdict::Inconclusive
                },
                ms.holonomy_rank as f64,
                full as f64,
                metrizable_note,
            ));
            claims.push(claim(
                "projective_deformation",
                "the deformed spray has the same geodesic traces",
                below(ms.projective_distance, CLOSED_FORM_TOL),
                ms.projective_distance,
                CLOSED_FORM_TOL,
                format!("{GEODESIC_STARTS} starts, one-sided trace distance after arc-length resampling"),
            ));
            tensions.push(format!(
                "stated claims kappa = -{m} and P~ = sqrt(mu) F give kappa_alpha + P~^2 = 0 for every alpha; by the closed form of the deformed Jacobi endomorphism this forces Phi~ = 0, contradicting the stated claim that the deformed spray is not R-flat (measured max |Phi~| = {:.3e})",
                ms.phi_tilde_max
            ));
            tensions.push(
                "the stated condition for non-flatness reads 'unless mu != -1', a double negative, and refers to mu = -1 although sqrt(mu) requires mu > 0".to_owned(),
            );
            tensions.push(format!(
                "the stated spray G^i = -mu <x,y>/(1-|x|^2) y^i differs from the spray of F in sign and in the denominator 1 - mu|x|^2 (measured deviation {:.3e})",
                ms.stated_spray_deviation
            ));
            restrictions.push("mu is restricted to mu > 0 so that sqrt(mu) F is real".to_owned());
        }
    }
    restrictions.push(format!(
        "all verdicts are pointwise: {} probe points, holonomy rank at the first one",
        probes.len()
    ));
    Ok(ExampleReport {
        example: which,
        dim: n,
        mu,
        probes,
        measurements: ms,
        claims,
        tensions,
        restrictions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mu_one_is_klein() {
        let k = catalog_get("klein", 2, None).unwrap();
        let m = catalog_get("mu_family", 2, Some(1.0)).unwrap();
        assert_eq!(k.f, m.f);
        assert_eq!(k.domain, m.domain);
        assert_eq!(k.probes, m.probes);
    }

    #[test]
    fn catalog_errors() {
        assert!(matches!(
            catalog_get("funk", 2, None),
            Err(Error::UnknownMetric(_))
        ));
        assert!(matches!(
            catalog_get("mu_family", 2, Some(-1.0)),
            Err(Error::InvalidParameter(_))
        ));
        assert!(matches!(
            catalog_get("mu_family", 2, None),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn probes_stay_inside_shrunk_ball() {
        let m = catalog_get("mu_family", 3, Some(2.0)).unwrap();
        for p in &m.probes {
            assert!(linalg::norm(p.x()) <= 0.7 / 2f64.sqrt() + 1e-15);
        }
    }
}
