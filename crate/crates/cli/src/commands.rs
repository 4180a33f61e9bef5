//! Subcommand implementations. Each returns an [`Outcome`]; errors mean the
//! input could not be analysed at all.

use std::path::{Path, PathBuf};

use finsler_deform::deform::{
    deformed_jacobi, deformed_projectors, projector_from_connection, spray_derivative_of_factor,
    DeformedSpray, Invariance, INVARIANCE_TOL,
};
use finsler_deform::geometry::RANK_TOL;
use finsler_deform::holonomy::{energy_obstruction_test, holonomy_rank, is_holonomy_invariant};
use finsler_deform::spectral::{
    bad_lambda_set, eigen_shift_check, flag_constancy_check, necessary_condition_check,
    principal_curvatures,
};
use finsler_deform::{linalg, zoo, FieldExpr, FinslerFunction, Spray, TangentPoint};
use serde_json::json;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::metric_file::{MetricFile, MetricFileError};
use crate::report::{summary, AnalysisReport, ReportBuilder};
use crate::{Common, Factor, Source};

const PROBE_COUNT: usize = 10;
const RESIDUAL_TOL: f64 = 1e-8;
const HOMOGENEITY_TOL: f64 = 1e-9;
const FLAG_TOL: f64 = 1e-6;
const SHIFT_TOL: f64 = 1e-6;
const PROJECTOR_TOL: f64 = 1e-9;
const CLOSED_FORM_TOL: f64 = 1e-7;
const FLAT_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Core(#[from] finsler_deform::Error),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    MetricFile {
        path: PathBuf,
        source: MetricFileError,
    },
}

pub struct Outcome {
    pub summary: String,
    pub json_path: Option<PathBuf>,
    pub report: AnalysisReport,
}

struct Loaded {
    finsler: FinslerFunction,
    factor: Option<String>,
    probes: Vec<TangentPoint>,
    canonical: String,
}

fn parse_point(text: &str) -> Result<TangentPoint, CliError> {
    text.parse()
        .map_err(|e| CliError::Input(format!("invalid point {text:?}: {e}")))
}

fn load(source: &Source, dim: usize, seed: u64) -> Result<Loaded, CliError> {
    if let Some(name) = &source.choice.catalog {
        let entry = zoo::catalog_get(name, dim, source.mu)?;
        let canonical = format!("catalog={name}\ndim={dim}\nmu={:?}\n", entry.mu);
        return Ok(Loaded {
            finsler: entry.finsler(),
            factor: None,
            probes: entry.probes_with_seed(PROBE_COUNT, seed),
            canonical,
        });
    }
    let path = source
        .choice
        .metric
        .as_ref()
        .expect("clap requires a source");
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
        path: path.clone(),
        source: e,
    })?;
    let file = MetricFile::parse(&text).map_err(|e| CliError::MetricFile {
        path: path.clone(),
        source: e,
    })?;
    if file.dim != dim {
        return Err(CliError::Input(format!(
            "{} defines a metric of dimension {} but the point has dimension {dim}",
            path.display(),
            file.dim
        )));
    }
    let f = FieldExpr::parse(&file.f, dim).map_err(finsler_deform::Error::from)?;
    let mut finsler = FinslerFunction::new(f);
    if let Some(d) = &file.domain {
        finsler =
            finsler.with_domain(FieldExpr::parse(d, dim).map_err(finsler_deform::Error::from)?);
    }
    finsler.check_homogeneity()?;
    Ok(Loaded {
        probes: finsler.probes(PROBE_COUNT, seed),
        finsler,
        factor: file.factor,
        canonical: text,
    })
}

fn digest(parts: &[&str]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p.as_bytes());
        h.update(b"\n");
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn outcome(builder: ReportBuilder, highlights: &[String], json: Option<&Path>) -> Outcome {
    let report = builder.finish();
    Outcome {
        summary: summary(&report, highlights),
        json_path: json.map(Path::to_path_buf),
        report,
    }
}

fn fmt_list(v: &[f64]) -> String {
    let items: Vec<String> = v.iter().map(|x| format!("{x:.6e}")).collect();
    format!("[{}]", items.join(", "))
}

pub fn analyze(source: &Source, common: &Common) -> Result<Outcome, CliError> {
    let p = parse_point(&common.point)?;
    let m = load(source, p.dim(), common.seed)?;
    m.finsler.check_point(&p)?;
    let tol = common.tol.unwrap_or(RESIDUAL_TOL);
    let digest = digest(&[
        "analyze",
        &m.canonical,
        &p.to_string(),
        &format!("{:?}", common.tol),
    ]);
    let mut b = ReportBuilder::new("analyze", digest, common.seed);
    b.probes(&m.probes);
    let mut highlights = Vec::new();

    let g = b.timed("metric_tensor", || m.finsler.metric_tensor(&p))?;
    b.check("metric_regular", g.regular, g.rank as f64, p.dim() as f64);

    let spray = b.time("spray_derivation", || m.finsler.geodesic_spray())?;
    let coeffs =
        FieldExpr::eval_many(spray.coefficients(), &p).map_err(finsler_deform::Error::from)?;
    let el = m.finsler.euler_lagrange_residual(&spray, &p)?;
    let jet = spray.jet(&p)?;
    let (h1, h2) = jet.homogeneity_residuals();
    b.section(
        "spray",
        &json!({
            "coefficients": coeffs,
            "expressions": spray.coefficients().iter().map(|e| e.to_string()).collect::<Vec<_>>(),
            "euler_lagrange_residual": el,
            "homogeneity_residuals": [h1, h2],
        }),
    );
    b.check_below("euler_lagrange", el, tol);
    b.check_below("spray_homogeneity", h1.max(h2), HOMOGENEITY_TOL);

    let r = jet.curvature();
    let phi = jet.jacobi();
    let y = p.y();
    let phi_scale = phi.max_abs().max(1.0);
    let phi_y = linalg::max_abs(phi.apply(y)) / (phi_scale * linalg::norm(y));
    let is_r = r.contract_spray(y);
    let phi_vs_r = (&phi.matrix - &is_r).abs().max() / phi_scale;
    b.section(
        "curvature",
        &json!({
            "riemann": r.r,
            "jacobi_endomorphism": phi.rows(),
            "phi_y_residual": phi_y,
            "phi_minus_contracted_riemann": phi_vs_r,
        }),
    );
    b.check_below("jacobi_annihilates_spray", phi_y, tol);
    b.check_below("jacobi_equals_contracted_riemann", phi_vs_r, tol);

    let sd = b.timed("principal_curvatures", || {
        principal_curvatures(&spray, &p, None)
    })?;
    b.check(
        "real_spectrum",
        !sd.complex_flag,
        sd.max_imaginary,
        finsler_deform::spectral::COMPLEX_TOL,
    );
    let f2 = m
        .finsler
        .expr()
        .eval(&p)
        .map_err(finsler_deform::Error::from)?
        .powi(2);
    let ratios: Vec<f64> = sd.kappas.iter().map(|k| k / f2).collect();
    highlights.push(format!(
        "principal curvatures {} (kappa/F^2 = {})",
        fmt_list(&sd.kappas),
        fmt_list(&ratios)
    ));

    let mut points = m.probes.clone();
    points.push(p.clone());
    let flag = b.timed("flag_constancy", || {
        flag_constancy_check(&m.finsler, &spray, &points, FLAG_TOL)
    })?;
    highlights.push(if flag.pass {
        format!(
            "constant flag curvature {:.6e} (spread {:.1e})",
            flag.kappa, flag.spread
        )
    } else {
        format!(
            "flag curvature is not constant (spread {:.3e})",
            flag.spread
        )
    });

    let energy = m.finsler.energy()?;
    let inv = b.timed("energy_invariance", || {
        is_holonomy_invariant(&spray, &energy, &points, tol)
    })?;
    b.check_below("energy_horizontally_constant", inv.max_residual, tol);

    Ok(outcome(b, &highlights, common.json.as_deref()))
}

fn resolve_factor(m: &Loaded, factor: &Factor) -> Result<(FieldExpr, String), CliError> {
    let text = factor
        .factor
        .clone()
        .or_else(|| m.factor.clone())
        .ok_or_else(|| CliError::Input("a factor is required (--factor EXPR, or `F`)".into()))?;
    let expr = if text.trim() == "F" {
        m.finsler.expr()
    } else {
        FieldExpr::parse(&text, m.finsler.dim()).map_err(finsler_deform::Error::from)?
    };
    Ok((expr, text))
}

fn lambda_of(factor: &Factor) -> Result<f64, CliError> {
    match factor.lambda {
        Some(l) if l.is_finite() => Ok(l),
        Some(l) => Err(CliError::Input(format!("lambda must be finite, got {l}"))),
        None => Err(CliError::Input("--lambda is required".into())),
    }
}

/// Runs the invariance test and, when it passes, builds the deformation.
fn deform_checked(
    b: &mut ReportBuilder,
    spray: &Spray,
    factor: FieldExpr,
    lambda: f64,
    points: &[TangentPoint],
) -> Result<Option<DeformedSpray>, CliError> {
    let inv = b.timed("invariance", || {
        is_holonomy_invariant(spray, &factor, points, INVARIANCE_TOL)
    })?;
    if !b.check_below("factor_invariance", inv.max_residual, INVARIANCE_TOL) {
        return Ok(None);
    }
    Ok(Some(DeformedSpray::new(
        spray,
        factor,
        lambda,
        points,
        Invariance::Require,
    )?))
}

pub fn deform(source: &Source, factor: &Factor, common: &Common) -> Result<Outcome, CliError> {
    let p = parse_point(&common.point)?;
    let m = load(source, p.dim(), common.seed)?;
    m.finsler.check_point(&p)?;
    let (pexpr, ptext) = resolve_factor(&m, factor)?;
    let lambda = lambda_of(factor)?;
    let tol = |default: f64| common.tol.unwrap_or(default);
    let digest = digest(&[
        "deform",
        &m.canonical,
        &p.to_string(),
        &ptext,
        &format!("{lambda:?}"),
        &format!("{:?}", common.tol),
    ]);
    let mut b = ReportBuilder::new("deform", digest, common.seed);
    b.probes(&m.probes);
    let mut highlights = Vec::new();

    let spray = b.time("spray_derivation", || m.finsler.geodesic_spray())?;
    let mut points = m.probes.clone();
    points.push(p.clone());
    let Some(d) = deform_checked(&mut b, &spray, pexpr, lambda, &points)? else {
        highlights.push("deformation refused: the factor is not holonomy invariant".into());
        return Ok(outcome(b, &highlights, common.json.as_deref()));
    };

    let base_vals =
        FieldExpr::eval_many(spray.coefficients(), &p).map_err(finsler_deform::Error::from)?;
    let vals =
        FieldExpr::eval_many(d.spray().coefficients(), &p).map_err(finsler_deform::Error::from)?;
    let identity = lambda == 0.0 && d.spray().coefficients() == spray.coefficients();
    b.section(
        "deformation",
        &json!({
            "factor": pexpr.to_string(),
            "lambda": lambda,
            "base_coefficients": base_vals,
            "coefficients": vals,
            "expressions": d.spray().coefficients().iter().map(|e| e.to_string()).collect::<Vec<_>>(),
            "identity": identity,
        }),
    );
    if identity {
        highlights.push("lambda = 0: the deformed spray is the original one".into());
    }

    let dj = b.timed("deformed_jacobi", || deformed_jacobi(&d, &p))?;
    b.check_below("jacobi_closed_form", dj.discrepancy, tol(CLOSED_FORM_TOL));
    let phi_max = dj.direct.max_abs();
    let r_flat = phi_max <= FLAT_TOL;
    b.section(
        "r_flatness",
        &json!({ "phi_max": phi_max, "r_flat": r_flat, "tolerance": FLAT_TOL }),
    );
    highlights.push(format!(
        "deformed Jacobi endomorphism {} (max |Phi~| = {phi_max:.3e})",
        if r_flat { "vanishes" } else { "is nonzero" }
    ));

    let shift = b.timed("eigen_shift", || eigen_shift_check(&d, &p, tol(SHIFT_TOL)))?;
    b.check_below("eigenvalue_shift", shift.max_rel_error, tol(SHIFT_TOL));

    let proj = b.time("projectors", || deformed_projectors(&d, &p))?;
    let gamma = b.time("projectors", || projector_from_connection(d.spray(), &p))?;
    let (hh, vv, hv) = proj.algebra_residuals();
    let route = (&gamma - &proj.h).abs().max();
    b.section(
        "projectors",
        &json!({
            "h": linalg::rows(&proj.h),
            "v": linalg::rows(&proj.v),
            "idempotency": [hh, vv],
            "hv": hv,
            "connection_route_discrepancy": route,
        }),
    );
    b.check_below("projector_idempotent", hh.max(vv), tol(PROJECTOR_TOL));
    b.check_below("projector_complementary", hv, tol(PROJECTOR_TOL));
    b.check_below("projector_matches_connection", route, tol(RESIDUAL_TOL));

    let (sp, dsp) = spray_derivative_of_factor(&spray, &pexpr, &p)?;
    b.section(
        "factor_along_spray",
        &json!({ "s_of_p": sp, "vertical_derivative": dsp }),
    );
    b.check_below("spray_preserves_factor", sp.max(dsp), tol(RESIDUAL_TOL));

    let bad = b.timed("bad_lambda_set", || bad_lambda_set(&spray, &pexpr, &p))?;
    if bad.values.iter().any(|v| {
        (v - lambda).abs() <= 1e-9 * v.abs().max(1.0) && !(*v == 0.0 && bad.contains_trivial_zero)
    }) {
        highlights.push(format!(
            "lambda = {lambda} lies in the bad set {}",
            fmt_list(&bad.values)
        ));
    }

    if lambda != 0.0 {
        let ptilde = pexpr.scale(lambda);
        let nc = b.timed("necessary_condition", || {
            necessary_condition_check(&spray, &ptilde, &p, tol(SHIFT_TOL))
        })?;
        highlights.push(format!(
            "necessary metrizability condition: {:?}",
            nc.verdict
        ));
    }
    b.timed("principal_curvatures_deformed", || {
        principal_curvatures(d.spray(), &p, Some(&pexpr))
    })?;

    Ok(outcome(b, &highlights, common.json.as_deref()))
}

pub fn holonomy(
    source: &Source,
    factor: &Factor,
    depth: Option<usize>,
    common: &Common,
) -> Result<Outcome, CliError> {
    let p = parse_point(&common.point)?;
    let n = p.dim();
    let m = load(source, n, common.seed)?;
    m.finsler.check_point(&p)?;
    let depth = depth.unwrap_or(2 * n);
    if depth == 0 {
        return Err(CliError::Input("--depth must be at least 1".into()));
    }
    let tol = common.tol.unwrap_or(RANK_TOL);
    let deformed = factor.factor.is_some() || factor.lambda.is_some();
    let (ptext, lambda) = if deformed {
        let (_, t) = resolve_factor(&m, factor)?;
        (t, Some(lambda_of(factor)?))
    } else {
        (String::new(), None)
    };
    let digest = digest(&[
        "holonomy",
        &m.canonical,
        &p.to_string(),
        &ptext,
        &format!("{lambda:?}"),
        &depth.to_string(),
        &format!("{:?}", common.tol),
    ]);
    let mut b = ReportBuilder::new("holonomy", digest, common.seed);
    b.probes(&m.probes);
    let mut highlights = Vec::new();

    let base = b.time("spray_derivation", || m.finsler.geodesic_spray())?;
    let spray = if let Some(lambda) = lambda {
        let (pexpr, _) = resolve_factor(&m, factor)?;
        let mut points = m.probes.clone();
        points.push(p.clone());
        let Some(d) = deform_checked(&mut b, &base, pexpr, lambda, &points)? else {
            highlights.push("deformation refused: the factor is not holonomy invariant".into());
            return Ok(outcome(b, &highlights, common.json.as_deref()));
        };
        d.spray().clone()
    } else {
        base
    };

    let span = b.timed("holonomy_rank", || holonomy_rank(&spray, &p, depth, tol))?;
    highlights.push(format!(
        "holonomy distribution rank {}{} of {} (by depth {:?})",
        if span.lower_bound { ">= " } else { "" },
        span.rank,
        2 * n,
        span.rank_by_depth
    ));
    let energy = m.finsler.energy()?;
    let obstruction = b.timed("energy_obstruction", || {
        energy_obstruction_test(&energy, &span, tol)
    })?;
    highlights.push(format!("energy F^2/2: {:?}", obstruction.verdict));

    Ok(outcome(b, &highlights, common.json.as_deref()))
}

pub fn verify_example(
    which: u8,
    mu: Option<f64>,
    dim: usize,
    seed: u64,
    json: Option<&Path>,
) -> Result<Outcome, CliError> {
    let digest = digest(&[
        "verify-example",
        &which.to_string(),
        &format!("{mu:?}"),
        &dim.to_string(),
    ]);
    let mut b = ReportBuilder::new("verify-example", digest, seed);
    let probes = if seed == finsler_deform::sampling::DEFAULT_SEED {
        None
    } else {
        let entry = match which {
            1 => zoo::catalog_get("klein", dim, None)?,
            _ => zoo::catalog_get("mu_family", dim, mu)?,
        };
        Some(entry.probes_with_seed(zoo::PROBE_COUNT, seed))
    };
    let report = b.timed("example", || zoo::reproduce_example(which, dim, mu, probes))?;
    b.probes(&report.probes);
    let mut highlights: Vec<String> = report
        .claims
        .iter()
        .map(|c| {
            format!(
                "{}: {:?} (measured {:.3e}, threshold {:.1e})",
                c.id, c.verdict, c.measured, c.threshold
            )
        })
        .collect();
    highlights.extend(report.tensions.iter().map(|t| format!("tension: {t}")));
    Ok(outcome(b, &highlights, json))
}
