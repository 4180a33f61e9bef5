use std::sync::OnceLock;

use finsler_deform::deform::{DeformedSpray, Invariance};
use finsler_deform::holonomy::{
    check_fullrank_proposition, closure, holonomy_rank, is_holonomy_invariant,
};
use finsler_deform::sampling::ProbeSampler;
use finsler_deform::spectral::eigen_shift_check;
use finsler_deform::zoo::{catalog_get, CatalogEntry};
use finsler_deform::{linalg, Error, FieldExpr, Spray, TangentPoint, Var, VectorField};
use proptest::prelude::*;

fn klein() -> &'static (CatalogEntry, Spray) {
    static K: OnceLock<(CatalogEntry, Spray)> = OnceLock::new();
    K.get_or_init(|| {
        let k = catalog_get("klein", 2, None).unwrap();
        let s = k.finsler().geodesic_spray().unwrap();
        (k, s)
    })
}

/// Catalog metrics in dimension 2 with their sprays.
fn catalog() -> &'static [(CatalogEntry, Spray)] {
    static C: OnceLock<Vec<(CatalogEntry, Spray)>> = OnceLock::new();
    C.get_or_init(|| {
        [
            ("euclidean", None),
            ("klein", None),
            ("mu_family", Some(2.0)),
            ("mu_family", Some(0.5)),
        ]
        .into_iter()
        .map(|(name, mu)| {
            let e = catalog_get(name, 2, mu).unwrap();
            let s = e.finsler().geodesic_spray().unwrap();
            (e, s)
        })
        .collect()
    })
}

fn probe(entry: &CatalogEntry, seed: u64) -> TangentPoint {
    entry.probes_with_seed(1, seed).remove(0)
}

fn expr_source() -> impl Strategy<Value = String> {
    let leaf = prop_oneof![
        (1..=2usize).prop_map(|i| format!("x[{i}]")),
        (1..=2usize).prop_map(|i| format!("y[{i}]")),
        (-3.0..3.0f64).prop_map(|c| format!("{c:.3}")),
    ];
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a} + {b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a} - {b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a} * {b})")),
            inner.clone().prop_map(|a| format!("sin({a})")),
            inner.clone().prop_map(|a| format!("cos({a})")),
            inner.clone().prop_map(|a| format!("exp(sin({a}))")),
            inner.clone().prop_map(|a| format!("sqrt(1 + ({a})^2)")),
            inner.prop_map(|a| format!("({a})/(2 + cos({a}))")),
        ]
    })
}

fn shifted(p: &TangentPoint, v: Var, h: f64) -> TangentPoint {
    let (mut x, mut y) = (p.x().to_vec(), p.y().to_vec());
    match v {
        Var::X(i) => x[i] += h,
        Var::Y(i) => y[i] += h,
    }
    TangentPoint::new(x, y).unwrap()
}

fn central_difference(e: &FieldExpr, p: &TangentPoint, v: Var) -> f64 {
    let h = 1e-5;
    (e.eval(&shifted(p, v, h)).unwrap() - e.eval(&shifted(p, v, -h)).unwrap()) / (2.0 * h)
}

const VARS: [Var; 4] = [Var::X(0), Var::X(1), Var::Y(0), Var::Y(1)];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn symbolic_derivatives_match_finite_differences(
        src in expr_source(),
        x in prop::array::uniform2(-1.0..1.0f64),
        y in prop::array::uniform2(-1.0..1.0f64),
    ) {
        prop_assume!(y.iter().any(|v| v.abs() > 1e-3));
        let e = FieldExpr::parse(&src, 2).unwrap();
        let p = TangentPoint::new(x.to_vec(), y.to_vec()).unwrap();
        for v in VARS {
            let d = e.diff(v);
            let exact = d.eval(&p).unwrap();
            let fd = central_difference(&e, &p, v);
            prop_assert!((exact - fd).abs() <= 1e-5 * exact.abs().max(1.0), "{src} d/{v}: {exact} vs {fd}");
            for w in VARS {
                let exact2 = d.diff(w).eval(&p).unwrap();
                let fd2 = central_difference(&d, &p, w);
                prop_assert!((exact2 - fd2).abs() <= 1e-5 * exact2.abs().max(1.0), "{src} d/{v}d/{w}");
            }
        }
    }

    #[test]
    fn euler_homogeneity_identities(which in 0..4usize, seed in any::<u64>()) {
        let (entry, spray) = &catalog()[which];
        let p = probe(entry, seed);
        let f = entry.f.eval(&p).unwrap();
        let euler: f64 = (0..2).map(|i| entry.f.diff(Var::Y(i)).eval(&p).unwrap() * p.y()[i]).sum();
        prop_assert!((euler - f).abs() <= 1e-12 * f.max(1.0));
        let g = entry.finsler().metric_tensor(&p).unwrap().as_matrix();
        let y = nalgebra::DVector::from_column_slice(p.y());
        prop_assert!(((y.transpose() * &g * &y)[0] - f * f).abs() <= 1e-10 * (f * f).max(1.0));
        let (first, second) = spray.jet(&p).unwrap().homogeneity_residuals();
        prop_assert!(first < 1e-9 && second < 1e-9, "{first} {second}");
    }

    #[test]
    fn jacobi_endomorphism_identities(which in 0..4usize, seed in any::<u64>()) {
        let (entry, spray) = &catalog()[which];
        let p = probe(entry, seed);
        let jet = spray.jet(&p).unwrap();
        let phi = jet.jacobi();
        let scale = phi.max_abs().max(1.0);
        prop_assert!(linalg::max_abs(phi.apply(p.y())) <= 1e-10 * scale * linalg::norm(p.y()).max(1.0));
        let contracted = jet.curvature().contract_spray(p.y());
        prop_assert!((&phi.matrix - contracted).abs().max() <= 1e-10 * scale);
    }

    #[test]
    fn bracket_is_antisymmetric_and_satisfies_jacobi(
        seed in any::<u64>(),
        coeffs in prop::collection::vec(-2.0..2.0f64, 9),
    ) {
        let (entry, spray) = klein();
        let p = probe(entry, seed);
        let frame = spray.horizontal_frame();
        let basis = [
            frame.deltas[0].clone(),
            frame.deltas[1].clone(),
            VectorField::liouville(2),
        ];
        let field = |c: &[f64]| {
            let mut f = VectorField::linear_combination(&basis, c);
            f = &f + &spray.vector_field().scaled(FieldExpr::x(0, 2));
            f
        };
        let (a, b, c) = (field(&coeffs[0..3]), field(&coeffs[3..6]), field(&coeffs[6..9]));
        let anti = (&a.bracket(&b) + &b.bracket(&a)).eval(&p).unwrap();
        prop_assert!(linalg::max_abs(anti) <= 1e-9);
        let cyc = &(&a.bracket(&b.bracket(&c)) + &b.bracket(&c.bracket(&a))) + &c.bracket(&a.bracket(&b));
        let size = linalg::max_abs(a.bracket(&b.bracket(&c)).eval(&p).unwrap()).max(1.0);
        prop_assert!(linalg::max_abs(cyc.eval(&p).unwrap()) <= 1e-7 * size);
    }

    #[test]
    fn bracket_of_horizontal_frame_is_curvature(which in 0..4usize, seed in any::<u64>()) {
        let (entry, spray) = &catalog()[which];
        let p = probe(entry, seed);
        let deltas = spray.horizontal_frame().deltas;
        let r = spray.jet(&p).unwrap().curvature();
        let scale = r.max_abs().max(1.0);
        for j in 0..2 {
            for k in 0..2 {
                let b = deltas[j].bracket(&deltas[k]).eval(&p).unwrap();
                prop_assert!(b[0].abs().max(b[1].abs()) <= 1e-12 * scale);
                for i in 0..2 {
                    prop_assert!((b[2 + i] - r.r[i][j][k]).abs() <= 1e-10 * scale);
                }
            }
        }
    }

    #[test]
    fn energy_is_horizontally_constant(which in 0..4usize, seed in any::<u64>()) {
        let (entry, spray) = &catalog()[which];
        let energy = entry.finsler().energy().unwrap();
        let report = is_holonomy_invariant(spray, &energy, &[probe(entry, seed)], 1e-10).unwrap();
        prop_assert!(report.pass, "{}", report.max_residual);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn holonomy_rank_ignores_choice_of_generators(
        seed in any::<u64>(),
        lambda in prop_oneof![Just(0.0), Just(2.0), Just(-0.5)],
        m in prop::array::uniform4(-2.0..2.0f64),
    ) {
        prop_assume!((m[0] * m[3] - m[1] * m[2]).abs() > 0.2);
        let (entry, spray) = klein();
        let p = probe(entry, seed);
        let d = DeformedSpray::new(spray, entry.f, lambda, &entry.probes, Invariance::Require).unwrap();
        let deltas = d.spray().horizontal_frame().deltas;
        let names = vec!["g1".to_owned(), "g2".to_owned()];
        let mixed = vec![
            VectorField::linear_combination(&deltas, &m[0..2]),
            VectorField::linear_combination(&deltas, &m[2..4]),
        ];
        let plain = closure(&deltas, &names, &p, 4, 1e-7).unwrap();
        let other = closure(&mixed, &names, &p, 4, 1e-7).unwrap();
        prop_assert_eq!(plain.rank, other.rank);
    }

    #[test]
    fn holonomy_rank_grows_with_depth(seed in any::<u64>(), lambda in -3.0..3.0f64) {
        let (entry, spray) = klein();
        let p = probe(entry, seed);
        let d = DeformedSpray::new(spray, entry.f, lambda, &entry.probes, Invariance::Require).unwrap();
        let mut last = 0;
        for depth in 1..=4 {
            let span = holonomy_rank(d.spray(), &p, depth, 1e-7).unwrap();
            prop_assert!(span.rank >= last);
            prop_assert!(span.rank_by_depth.windows(2).all(|w| w[0] <= w[1]));
            last = span.rank;
        }
    }

    #[test]
    fn eigenvalues_shift_by_lambda_squared_p_squared(
        seed in any::<u64>(),
        lambda in prop_oneof![Just(0.0), Just(0.5), Just(-0.5), Just(2.0), Just(-2.0)],
    ) {
        let (entry, spray) = klein();
        let p = probe(entry, seed);
        let d = DeformedSpray::new(spray, entry.f, lambda, &entry.probes, Invariance::Require).unwrap();
        let r = eigen_shift_check(&d, &p, 1e-6).unwrap();
        prop_assert!(r.pass, "{:?} vs {:?}", r.observed, r.predicted);
    }

    #[test]
    fn bad_lambdas_are_excluded(seed in any::<u64>(), lambda in -3.0..3.0f64) {
        let (entry, spray) = klein();
        let p = probe(entry, seed);
        let f = entry.f.eval(&p).unwrap();
        let factor = entry.f.scale(1.0 / f);
        // kappa = -F^2 and P(p) = 1, so the bad set at p is {-F, F}
        let near = [-f, f].into_iter().any(|b| (b - lambda).abs() <= 0.05);
        prop_assume!(!near);
        let r = check_fullrank_proposition(spray, &factor, lambda, &p, 4, &entry.probes).unwrap();
        prop_assert!(r.pass, "rank {} at lambda {lambda}", r.span.rank);
        let refused = check_fullrank_proposition(spray, &factor, f + 1e-4, &p, 4, &entry.probes);
        let is_bad_lambda = matches!(refused, Err(Error::BadLambda { .. }));
        prop_assert!(is_bad_lambda);
    }

    #[test]
    fn klein_geodesics_are_straight(seed in any::<u64>()) {
        let (entry, spray) = klein();
        let start = probe(entry, seed);
        let g = spray.integrate_geodesic(&start, 0.5, 200).unwrap();
        let (x0, y0) = (start.x(), start.y());
        let u: Vec<f64> = y0.iter().map(|v| v / linalg::norm(y0)).collect();
        for x in &g.xs {
            let d = [x[0] - x0[0], x[1] - x0[1]];
            let off = (d[0] * u[1] - d[1] * u[0]).abs();
            prop_assert!(off < 1e-8, "{off}");
        }
    }

    #[test]
    fn geodesic_integration_is_fourth_order(seed in any::<u64>()) {
        let (entry, spray) = klein();
        let start = probe(entry, seed);
        let end = |steps| spray.integrate_geodesic(&start, 0.5, steps).unwrap().end().to_vec();
        let (a, b, c) = (end(40), end(80), end(160));
        let e1 = linalg::norm(&a.iter().zip(&b).map(|(p, q)| p - q).collect::<Vec<_>>());
        let e2 = linalg::norm(&b.iter().zip(&c).map(|(p, q)| p - q).collect::<Vec<_>>());
        prop_assume!(e2 > 1e-13);
        prop_assert!(e1 / e2 >= 8.0, "ratio {}", e1 / e2);
    }
}

#[test]
fn probe_sampler_respects_radius() {
    let pts = ProbeSampler::with_radius(0.3).seed(7).sample(3, 50, None);
    assert!(pts.iter().all(|p| linalg::norm(p.x()) <= 0.3));
}

#[test]
fn frame_lemma_holds_on_catalog() {
    for (entry, spray) in catalog() {
        let r = finsler_deform::deform::verify_frame_lemma(spray, &entry.f, &entry.probes, 1e-7)
            .unwrap();
        let failed: Vec<_> = r
            .checks
            .iter()
            .filter(|c| !c.pass)
            .map(|c| (c.name, c.max_residual))
            .collect();
        assert!(r.pass, "{}: {failed:?}", entry.name);
    }
}
