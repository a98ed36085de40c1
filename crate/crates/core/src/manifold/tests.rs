use nalgebra::{DMatrix, DVector};

use super::*;
use crate::ode::Path;

fn v(x: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(x)
}

#[test]
fn metric_examples() {
    let p = perturbed_flat(3, 0.0, 1).unwrap();
    assert_eq!(p.metric_at(&[0.3, -0.2, 0.5]).unwrap(), DMatrix::identity(3, 3));

    let fiber = perturbed_flat(2, 0.1, 7).unwrap();
    let w = wp1(&fiber).unwrap();
    let g = w.metric_at(&[0.0, 0.2, -0.4]).unwrap();
    let g1 = fiber.metric_at(&[0.2, -0.4]).unwrap();
    assert_eq!(g[(0, 0)], 1.0);
    assert_eq!(g[(0, 1)], 0.0);
    assert!((g.view((1, 1), (2, 2)) - &g1).abs().max() < 1e-15);

    let h = space_form(2, -1.0).unwrap();
    let g = h.metric_at(&[1.0, 0.0]).unwrap();
    assert!((g - DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 1.0])).abs().max() < 1e-15);

    assert!(matches!(h.metric_at(&[5.0, 0.0]), Err(Error::Domain { .. })));
}

#[test]
fn pullback_of_ambient_form_matches_chart_metric() {
    for c in [-1.0, -0.5, 1.0, 2.0] {
        let chart = SpaceFormChart::new(3, c).unwrap();
        let y = [0.3, -0.1, 0.2];
        let jac = chart.embed_jacobian(&y);
        let j = crate::lorentz::BilinearForm::new(3, c).unwrap().matrix();
        let pull = jac.transpose() * j * &jac;
        let g = space_form(3, c).unwrap().metric_at(&y).unwrap();
        assert!((pull - g).abs().max() < 1e-14, "c = {c}");
        let x = chart.embed(&y);
        let on = c * (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]) + x[3] * x[3];
        assert!((on - 1.0).abs() < 1e-14);
        assert!((chart.chart_of(&x) - v(&y)).norm() < 1e-14);
    }
}

#[test]
fn flat_christoffel_and_curvature_vanish() {
    let f = flat(3).unwrap();
    let x = [0.1, 0.2, 0.3];
    assert_eq!(f.christoffel(&x).unwrap().max_abs_diff(&Christoffel::zeros(3)), 0.0);
    let r = f.riemann(&x).unwrap();
    assert_eq!(r.operator(&v(&[1.0, 0.0, 0.0]), &v(&[0.0, 1.0, 0.0])).abs().max(), 0.0);
}

#[test]
fn wp1_christoffel_closed_form() {
    let fiber = perturbed_flat(2, 0.1, 7).unwrap();
    let w = wp1(&fiber).unwrap();
    let x = [0.3, 0.2, -0.4];
    let gamma = w.christoffel(&x).unwrap();
    let gamma_fd = w.christoffel_with(&x, DerivMode::FiniteDifference).unwrap();
    let g1 = fiber.metric_at(&x[1..]).unwrap();
    let gamma1 = fiber.christoffel_with(&x[1..], DerivMode::FiniteDifference).unwrap();
    let e2s = (-2.0 * x[0]).exp();
    let mut worst = 0.0_f64;
    for a in 0..2 {
        for b in 0..2 {
            // Γ^s_ab = -f f' g1_ab = e^{-2s} g1_ab
            worst = worst.max((gamma.get(0, a + 1, b + 1) - e2s * g1[(a, b)]).abs());
            // Γ^a_sb = (f'/f) δ = -δ
            let d = if a == b { -1.0 } else { 0.0 };
            worst = worst.max((gamma.get(a + 1, 0, b + 1) - d).abs());
            for c in 0..2 {
                worst = worst.max((gamma.get(a + 1, b + 1, c + 1) - gamma1.get(a, b, c)).abs());
            }
        }
        worst = worst.max(gamma.get(a + 1, 0, 0).abs());
    }
    worst = worst.max(gamma.get(0, 0, 0).abs());
    assert!(worst < 1e-6, "closed-form mismatch {worst}");
    assert!(gamma.max_abs_diff(&gamma_fd) < 1e-6);
}

#[test]
fn analytic_and_fd_christoffel_agree_on_space_forms() {
    for c in [-1.0, 1.0] {
        let s = space_form(2, c).unwrap();
        for x in [[0.3, -0.2], [0.9, 0.4], [-1.1, 0.05]] {
            let a = s.christoffel(&x).unwrap();
            let f = s.christoffel_with(&x, DerivMode::FiniteDifference).unwrap();
            assert!(a.max_abs_diff(&f) < 1e-6);
        }
    }
}

#[test]
fn space_form_curvature_is_c_times_b() {
    for (n, c) in [(2, -1.0), (3, -1.0), (3, 1.0), (2, -0.5), (4, 2.0)] {
        let s = space_form(n, c).unwrap();
        let x: Vec<f64> = (0..n).map(|i| 0.2 * (i as f64 + 1.0) - 0.3).collect();
        let r = s.riemann(&x).unwrap();
        let g = s.metric_at(&x).unwrap();
        let mut worst = 0.0_f64;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let (ei, ej, ek) = (unit(n, i), unit(n, j), unit(n, k));
                    let lhs = r.apply(&ei, &ej, &ek);
                    let rhs = b_operator(&g, &ei, &ej, &ek) * c;
                    worst = worst.max((lhs - rhs).amax());
                }
            }
        }
        assert!(worst < 1e-5, "n={n} c={c}: {worst}");
        assert!(r.symmetry_residual() < 1e-10);
    }
}

fn unit(n: usize, i: usize) -> DVector<f64> {
    let mut e = DVector::zeros(n);
    e[i] = 1.0;
    e
}

#[test]
fn wp1_with_flat_fiber_has_curvature_minus_one() {
    let w = wp1(&flat(1).unwrap()).unwrap();
    for x in [[0.0, 0.0], [0.5, -1.0], [-0.7, 1.3]] {
        let k = w.sectional_curvature(&x, &unit(2, 0), &unit(2, 1)).unwrap();
        assert!((k + 1.0).abs() < 1e-12, "{k}");
    }
}

#[test]
fn curvature_symmetries_on_builtins() {
    let fiber = perturbed_flat(2, 0.1, 7).unwrap();
    let specs = vec![
        perturbed_flat(3, 0.15, 11).unwrap(),
        wp1(&fiber).unwrap(),
        lw2(Some(&flat(1).unwrap()), &fiber, 0.1, 2.0).unwrap(),
        lw3(2, &fiber).unwrap(),
    ];
    for s in &specs {
        let x = s.domain().center() * 0.5 + DVector::from_element(s.dim(), 0.1);
        let x = if matches!(s.name(), "lw2") { { let mut y = x.clone(); y[0] = 0.8; y } } else { x };
        let r = s.riemann(x.as_slice()).unwrap();
        assert!(r.symmetry_residual() < 1e-10, "{}: {}", s.name(), r.symmetry_residual());
        let rf = s.riemann_with(x.as_slice(), DerivMode::FiniteDifference).unwrap();
        let n = s.dim();
        let mut worst = 0.0_f64;
        for l in 0..n {
            for k in 0..n {
                for i in 0..n {
                    for j in 0..n {
                        worst = worst.max((r.get(l, k, i, j) - rf.get(l, k, i, j)).abs());
                    }
                }
            }
        }
        assert!(worst < 1e-4, "{}: analytic vs fd riemann {worst}", s.name());
    }
}

#[test]
fn geodesics_flat_and_hyperbolic() {
    let f = flat(2).unwrap();
    let x0 = v(&[0.1, -0.2]);
    let v0 = v(&[0.6, 0.8]);
    let geo = geodesic(&f, &x0, &v0, 1.0, 1e-3).unwrap();
    let (x1, _) = geo.end();
    assert!((x1 - (&x0 + &v0)).norm() < 1e-13);

    let h = space_form(2, -1.0).unwrap();
    let chart = SpaceFormChart::new(2, -1.0).unwrap();
    let x0 = v(&[0.2, 0.1]);
    let g0 = h.metric_at(x0.as_slice()).unwrap();
    let raw = v(&[0.3, -0.7]);
    let u = &raw / g_inner(&g0, &raw, &raw).sqrt();
    let geo = geodesic(&h, &x0, &u, 1.0, 1e-3).unwrap();
    for (t, (x, vel)) in geo.t.iter().zip(geo.x.iter().zip(&geo.v)).step_by(100) {
        let a = chart.embed(x0.as_slice());
        let b = chart.embed(x.as_slice());
        let cosh_d = -(a[0] * b[0] + a[1] * b[1] - a[2] * b[2]);
        assert!((cosh_d - t.cosh()).abs() < 1e-6, "t={t}");
        let g = h.metric_at(x.as_slice()).unwrap();
        assert!((g_inner(&g, vel, vel) - 1.0).abs() < 1e-6);
    }
}

#[test]
fn base_curves_of_warped_products_are_geodesics() {
    let w = lw2(Some(&flat(1).unwrap()), &perturbed_flat(2, 0.1, 7).unwrap(), 0.1, 2.0).unwrap();
    for s in [0.3, 0.9, 1.5] {
        let x = [s, 0.4, 0.1, -0.2];
        let acc = w.christoffel(&x).unwrap().contract(&unit(4, 0), &unit(4, 0));
        assert!(acc.amax() < 1e-8);
    }
    let geo = geodesic(&w, &v(&[0.5, 0.4, 0.1, -0.2]), &unit(4, 0), 1.0, 1e-3).unwrap();
    let (x1, _) = geo.end();
    assert!((x1 - v(&[1.5, 0.4, 0.1, -0.2])).norm() < 1e-10);
}

#[test]
fn lc_transport_properties() {
    let f = flat(2).unwrap();
    let path = Path::polyline(&[v(&[0.0, 0.0]), v(&[0.5, 0.2]), v(&[-0.3, 0.4])]).unwrap();
    let (x, _) = lc_transport(&f, &path, &v(&[1.0, 2.0]), 1e-3).unwrap();
    assert!((x - v(&[1.0, 2.0])).norm() < 1e-14);

    let p = perturbed_flat(3, 0.15, 5).unwrap();
    let x0 = v(&[0.1, 0.0, -0.1]);
    let u = v(&[0.4, -0.3, 0.5]);
    let path = Path::geodesic(&x0, &u, 1.0);
    let (xt, _) = lc_transport(&p, &path, &u, 1e-3).unwrap();
    let geo = geodesic(&p, &x0, &u, 1.0, 1e-3).unwrap();
    let (xend, vend) = geo.end();
    assert!((&xt - vend).norm() < 1e-9);

    let a = v(&[0.3, 0.1, -0.5]);
    let b = v(&[-0.2, 0.7, 0.1]);
    let (at, _) = lc_transport(&p, &path, &a, 1e-3).unwrap();
    let (bt, _) = lc_transport(&p, &path, &b, 1e-3).unwrap();
    let g0 = p.metric_at(x0.as_slice()).unwrap();
    let g1 = p.metric_at(xend.as_slice()).unwrap();
    assert!((g_inner(&g0, &a, &b) - g_inner(&g1, &at, &bt)).abs() < 1e-6);
}

#[test]
fn rectangle_transport_defect_is_curvature() {
    let s = space_form(2, 1.0).unwrap();
    let x = v(&[0.2, -0.1]);
    let r = s.riemann(x.as_slice()).unwrap();
    let expected = -r.operator(&unit(2, 0), &unit(2, 1));
    let mut errs = Vec::new();
    for eps in [0.2, 0.1, 0.05] {
        let path = Path::polyline(&[
            x.clone(),
            &x + unit(2, 0) * eps,
            &x + (unit(2, 0) + unit(2, 1)) * eps,
            &x + unit(2, 1) * eps,
            x.clone(),
        ])
        .unwrap();
        let mut defect = DMatrix::zeros(2, 2);
        for j in 0..2 {
            let (xt, _) = lc_transport(&s, &path, &unit(2, j), 1e-3).unwrap();
            defect.set_column(j, &(xt - unit(2, j)));
        }
        errs.push((defect / (eps * eps) - &expected).abs().max());
    }
    let order1 = (errs[0] / errs[1]).log2();
    let order2 = (errs[1] / errs[2]).log2();
    assert!(errs[2] < 0.05, "{errs:?}");
    assert!(order1 > 0.8 && order2 > 0.8, "{errs:?}");
}

#[test]
fn jacobi_field_on_hyperbolic_factor() {
    let fiber = perturbed_flat(2, 0.1, 7).unwrap();
    let w = lw3(2, &fiber).unwrap();
    let x = v(&[0.0, 0.0, 0.1, 0.2]);
    let u = unit(4, 0);
    let e = unit(4, 1);
    assert_eq!(
        jacobi_check(&w, &x, &u, &e, 0.0, 1e-3).unwrap(),
        JacobiOutcome::Residual { t: 0.0, residual: 0.0, jacobi_norm: 0.0 }
    );
    match jacobi_check(&w, &x, &u, &e, 0.5, 1e-3).unwrap() {
        JacobiOutcome::Residual { residual, jacobi_norm, .. } => {
            assert!(residual < 1e-5, "{residual}");
            assert!((jacobi_norm - 0.5f64.sinh()).abs() < 1e-5);
        }
        other => panic!("{other:?}"),
    }
    assert!(jacobi_check(&w, &x, &u, &(&u + &e), 0.5, 1e-3).is_err());

    let k1 = wp2_polar(1, &fiber, 0.1, 2.0).unwrap();
    assert!(matches!(
        jacobi_check(&k1, &v(&[0.5, 0.0, 0.0]), &unit(3, 0), &unit(3, 1), 0.5, 1e-3).unwrap(),
        JacobiOutcome::NotApplicable { .. }
    ));
}
