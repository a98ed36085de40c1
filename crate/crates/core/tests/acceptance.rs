//! End-to-end acceptance criteria. Runs without the libtest harness so that
//! every criterion prints exactly one PASS/FAIL line.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use common::*;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use rollhol::connection::{curvature_vs_holonomy, transport_ext, ExtendedVector, LOOP_LOG_SIGN};
use rollhol::decomposition::*;
use rollhol::holonomy::{
    classify, loop_family, loop_transport, orthonormal_frame, sample_points, Loop, Sampling, Verdict,
};
use rollhol::linalg::max_abs;
use rollhol::manifold::{flat, geodesic, perturbed_flat, space_form, ManifoldSpec};
use rollhol::ode::Path;
use rollhol::rolling::{
    expected_transport, roll_along, rolling_loop_element, RollOptions, RollingState, ROLLING_CONVENTION,
};
use rollhol::Result;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { pass, detail })
}

const STEP: f64 = 1e-3;

/// Manifolds with base points from which unit geodesics along the frame
/// directions stay inside the chart for `t = 1`.
fn transport_cases() -> Vec<(ManifoldSpec, DVector<f64>)> {
    vec![
        (space_form(2, 1.0).unwrap(), dv(&[0.1, -0.1])),
        (space_form(3, -1.0).unwrap(), dv(&[0.0, 0.1, 0.0])),
        (wp1_case().0, dv(&[-0.3, -0.3, -0.3])),
        (lw2_case().0, dv(&[0.9, 0.0, 0.0, 0.0])),
        (perturbed_flat(3, 0.1, 7).unwrap(), dv(&[-0.3, -0.3, -0.3])),
    ]
}

fn unit_directions(spec: &ManifoldSpec, x: &DVector<f64>) -> Result<Vec<DVector<f64>>> {
    let n = spec.dim();
    let e = orthonormal_frame(spec, x.as_slice())?;
    let mut dirs: Vec<DVector<f64>> = (0..n).map(|i| e.view((0, i), (n, 1)).column(0).into_owned()).collect();
    dirs.push(dirs.iter().fold(DVector::zeros(n), |a, d| a + d) / (n as f64).sqrt());
    Ok(dirs)
}

/// Transports `v0` along the unit geodesic `t -> exp(t u)` for `t in [0, 1]`;
/// returns the end value and the independently integrated end velocity.
fn along_unit_geodesic(spec: &ManifoldSpec, x: &DVector<f64>, u: &DVector<f64>, v0: &ExtendedVector) -> Result<(ExtendedVector, DVector<f64>)> {
    let geo = geodesic(spec, x, u, 1.0, STEP)?;
    let (end, truncated) = transport_ext(spec, -1.0, &Path::geodesic(x, u, 1.0), v0, STEP)?;
    if geo.truncated || truncated {
        let end = geo.end().0;
        return Err(rollhol::Error::Domain { point: end.iter().copied().collect() });
    }
    Ok((end, geo.end().1.clone()))
}

fn closed_form_transport() -> Result<Outcome> {
    let mut worst = 0.0_f64;
    for (spec, x) in transport_cases() {
        for u in unit_directions(&spec, &x)? {
            let (end, vel) = along_unit_geodesic(&spec, &x, &u, &ExtendedVector::unit_scalar(x.clone()))?;
            let t = 1.0_f64;
            worst = worst.max((&end.x + &vel * t.sinh()).amax()).max((end.r - t.cosh()).abs());
        }
    }
    outcome(worst <= 1e-6, format!("max error {worst:.2e} at t = 1 on 5 manifolds (tol 1e-6)"))
}

fn scalar_ode() -> Result<Outcome> {
    let mut worst = 0.0_f64;
    for (spec, x) in transport_cases() {
        for u in unit_directions(&spec, &x)? {
            for (a, r0) in [(0.7, 0.4), (1.3, -0.2)] {
                let v0 = ExtendedVector::new(x.clone(), &u * a, r0)?;
                let (end, _) = along_unit_geodesic(&spec, &x, &u, &v0)?;
                let t = 1.0_f64;
                worst = worst.max((end.r - (r0 * t.cosh() - a * t.sinh())).abs());
            }
        }
    }
    outcome(worst <= 1e-6, format!("max |r - (r0 cosh t - |X0| sinh t)| = {worst:.2e} (tol 1e-6)"))
}

fn self_rolling_is_flat() -> Result<Outcome> {
    let s = Sampling::default();
    let mut worst = 0.0_f64;
    let mut loops = 0;
    let mut dims = Vec::new();
    for n in [2, 3] {
        let spec = space_form(n, -1.0)?;
        let base = DVector::zeros(n);
        let family = loop_family(&spec, &base, &s)?;
        loops += family.len();
        for lp in &family {
            let p = loop_transport(&spec, -1.0, lp)?;
            worst = worst.max(max_abs(&(p - DMatrix::identity(n + 1, n + 1))));
        }
        dims.push(classify(&spec, -1.0, &base, &s)?.algebra_dim);
    }
    let pass = worst <= 1e-6 && dims.iter().all(|d| *d == 0) && loops >= 80;
    outcome(pass, format!("H^2, H^3: {loops} loops, max |P - I| = {worst:.2e} (tol 1e-6), algebra dims {dims:?}"))
}

fn irreducible_dimensions() -> Result<Outcome> {
    let cases = [
        ("S^2", space_form(2, 1.0)?, 3),
        ("S^3", space_form(3, 1.0)?, 6),
        ("perturbed_flat(3)", perturbed_flat(3, 0.1, 7)?, 6),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, spec, want) in cases {
        let rep = classify(&spec, -1.0, &DVector::zeros(spec.dim()), &Sampling::default())?;
        let ok = rep.algebra_dim == want && rep.diagnostics.stable && rep.verdict == Verdict::IrreducibleControllable;
        pass &= ok;
        parts.push(format!("{name}: {} (want {want}, doubling dims {:?})", rep.algebra_dim, rep.diagnostics.dims));
    }
    outcome(pass, parts.join("; "))
}

fn converse_verdicts() -> Result<Outcome> {
    let (w, wb) = wp1_case();
    let rep = report(&w, &wb);
    let line_err = match (&rep.verdict, &rep.null_direction) {
        (Verdict::ReducibleLightlike, Some(l)) => (l - dv(&[1.0, 0.0, 0.0])).amax(),
        _ => f64::INFINITY,
    };
    let (l2, b2) = lw2_case();
    let (l3, b3) = lw3_case();
    let v2 = report(&l2, &b2).verdict;
    let v3 = report(&l3, &b3).verdict;
    let pass = line_err <= 1e-5 && v2 == Verdict::ReducibleTransversal && v3 == Verdict::ReducibleTransversal;
    outcome(pass, format!("WP1 lightlike, |(L,1) - (d_s,1)| = {line_err:.2e} (tol 1e-5); LW2 {v2:?}; LW3 {v3:?}"))
}

fn twenty_points(spec: &ManifoldSpec, base: &DVector<f64>) -> Result<Vec<DVector<f64>>> {
    let s = Sampling { points: 20, radius: 0.3, eps: 0.0, seed: 11, ..Sampling::default() };
    sample_points(spec, base, &s)
}

fn structure_identities() -> Result<Outcome> {
    let (spec, base) = lw2_case();
    let bundle = ParallelSubbundle::from_report(&spec, &report(&spec, &base), BUNDLE_STEP)?;
    let split = split_unit_section(&bundle)?;
    let pts = twenty_points(&spec, &base)?;
    let curvature = curvature_annihilation_check(&spec, &split, &pts)?;
    let d1 = DistributionField::d1(&split, &base)?;
    let d2 = DistributionField::d2(&split, &base)?;
    let nu1 = normal_field(&bundle, NormalKind::Split(1));
    let nu2 = normal_field(&bundle, NormalKind::Split(2));
    let per_point: Vec<(f64, f64)> = pts
        .par_iter()
        .map(|p| -> Result<(f64, f64)> {
            let mut umbilic = 0.0_f64;
            let mut spherical = 0.0_f64;
            for (d, nu) in [(&d1, &nu1), (&d2, &nu2)] {
                umbilic = umbilic.max(second_fundamental_form(&spec, d, p)?.umbilic_residual(&nu(p)?));
                spherical = spherical.max(spherical_check(&spec, d, nu, p, 1e-4)?.residual);
            }
            Ok((umbilic, spherical))
        })
        .collect::<Result<_>>()?;
    let (mut umbilic, mut spherical) = per_point.iter().fold((0.0_f64, 0.0_f64), |a, b| (a.0.max(b.0), a.1.max(b.1)));

    let (w, wb) = wp1_case();
    let line = ParallelSubbundle::null_line_from_report(&w, &report(&w, &wb), BUNDLE_STEP)?;
    let wpts = twenty_points(&w, &wb)?;
    let nabla_l = lightlike_structure(&line, &wpts)?.nabla_l_residual;
    let l = normal_field(&line, NormalKind::Null);
    let dl = DistributionField::orthogonal_to(&w, &wb, l.clone())?;
    let wp: Vec<(f64, f64)> = wpts
        .par_iter()
        .map(|p| -> Result<(f64, f64)> {
            let u = second_fundamental_form(&w, &dl, p)?.umbilic_residual(&l(p)?);
            Ok((u, spherical_check(&w, &dl, &l, p, 1e-4)?.residual))
        })
        .collect::<Result<_>>()?;
    for (u, s) in wp {
        umbilic = umbilic.max(u);
        spherical = spherical.max(s);
    }
    let worst = curvature.max(nabla_l).max(umbilic).max(spherical);
    outcome(
        worst <= 1e-4,
        format!(
            "20 points each: curvature {curvature:.1e} (LW2), nabla L {nabla_l:.1e} (WP1), umbilic {umbilic:.1e}, spherical {spherical:.1e} (tol 1e-4)"
        ),
    )
}

fn warp_recovery() -> Result<Outcome> {
    let (w, wb) = wp1_case();
    let line = ParallelSubbundle::null_line_from_report(&w, &report(&w, &wb), BUNDLE_STEP)?;
    let f = recover_warp(&line, NormalKind::Null, &dv(&[1.0, 0.0, 0.0]), 0.8, STEP)?;
    let e_wp1 = f.relative_error(|t: f64| (-t).exp());

    let (p, pb) = wp2_case();
    let bundle = ParallelSubbundle::from_report(&p, &report(&p, &pb), BUNDLE_STEP)?;
    let f = recover_warp(&bundle, NormalKind::Split(1), &dv(&[1.0, 0.0, 0.0]), 0.8, STEP)?;
    let e_wp2 = f.relative_error(|t: f64| (1.0 + t).cosh() / 1f64.cosh());

    let (l3, b3) = lw3_case();
    let bundle = ParallelSubbundle::from_report(&l3, &report(&l3, &b3), BUNDLE_STEP)?;
    let f = recover_warp(&bundle, NormalKind::Split(1), &dv(&[1.0, 0.0, 0.0, 0.0]), 0.8, STEP)?;
    let e_lw3 = f.relative_error(|t: f64| t.cosh());

    let (l2, b2) = lw2_case();
    let bundle = ParallelSubbundle::from_report(&l2, &report(&l2, &b2), BUNDLE_STEP)?;
    let u = dv(&[1.0, 0.0, 0.0, 0.0]);
    let f1 = recover_warp(&bundle, NormalKind::Split(1), &u, 0.8, STEP)?;
    let f2 = recover_warp(&bundle, NormalKind::Split(2), &u, 0.8, STEP)?;
    let pair = hyperbolic_pair_residual(&f1, &f2)?;
    let pass = e_wp1.max(e_wp2).max(e_lw3) <= 1e-4 && pair <= 1e-4;
    outcome(
        pass,
        format!("relative errors: WP1 e^-s {e_wp1:.1e}, WP2 cosh {e_wp2:.1e}, LW3 cosh {e_lw3:.1e}; LW2 |f1^2 - f2^2 - 1| {pair:.1e} (tol 1e-4)"),
    )
}

fn curvature_holonomy() -> Result<Outcome> {
    let eps = [0.2, 0.1, 0.05];
    let mut worst_order = f64::INFINITY;
    let mut sign_ok = true;
    let mut parts = Vec::new();
    for (name, spec, x) in [
        ("flat", flat(2)?, dv(&[0.0, 0.0])),
        ("flat(3)", flat(3)?, dv(&[0.0, 0.0, 0.0])),
        ("S^2", space_form(2, 1.0)?, dv(&[0.1, -0.2])),
    ] {
        let n = spec.dim();
        for i in 0..n {
            for j in (i + 1)..n {
                let conv = curvature_vs_holonomy(&spec, -1.0, &x, (i, j), &eps, STEP)?;
                let order = conv.orders.iter().copied().fold(f64::INFINITY, f64::min);
                worst_order = worst_order.min(order);
                sign_ok &= conv.sign == LOOP_LOG_SIGN;
                parts.push(format!("{name} ({i},{j}) order {order:.2}"));
            }
        }
    }
    outcome(worst_order >= 2.7 && sign_ok, format!("{} (min 2.7)", parts.join(", ")))
}

fn rolling_correspondence() -> Result<Outcome> {
    let rect = |x: &[f64], plane, eps| Loop::rectangle(&dv(x), plane, eps, STEP);
    let cases: Vec<(ManifoldSpec, Vec<Loop>)> = vec![
        (
            space_form(2, 1.0)?,
            vec![
                rect(&[0.1, -0.2], (0, 1), 0.2),
                rect(&[0.1, -0.2], (0, 1), 0.1),
                rect(&[0.0, 0.0], (0, 1), 0.15),
                rect(&[-0.3, 0.2], (0, 1), 0.05),
                rect(&[0.3, 0.3], (0, 1), 0.12),
                rect(&[-0.2, -0.3], (0, 1), 0.18),
                rect(&[0.4, -0.1], (0, 1), 0.08),
            ],
        ),
        (
            perturbed_flat(2, 0.1, 7)?,
            vec![
                rect(&[0.0, 0.0], (0, 1), 0.2),
                rect(&[0.1, 0.1], (0, 1), 0.1),
                rect(&[-0.2, 0.1], (0, 1), 0.15),
                rect(&[0.2, -0.3], (0, 1), 0.07),
                rect(&[-0.1, -0.1], (0, 1), 0.05),
                rect(&[0.3, 0.2], (0, 1), 0.12),
                rect(&[-0.3, 0.0], (0, 1), 0.18),
            ],
        ),
        (
            wp1_case().0,
            vec![
                rect(&[0.0, 0.0, 0.0], (0, 1), 0.15),
                rect(&[0.0, 0.0, 0.0], (0, 2), 0.15),
                rect(&[0.0, 0.0, 0.0], (1, 2), 0.15),
                rect(&[0.1, -0.1, 0.2], (0, 1), 0.1),
                rect(&[-0.2, 0.1, 0.0], (1, 2), 0.2),
                rect(&[0.2, 0.2, -0.2], (0, 2), 0.05),
            ],
        ),
    ];
    let mut worst = 0.0_f64;
    let mut count = 0;
    for (spec, loops) in &cases {
        for lp in loops {
            let q0 = RollingState::initial(spec, -1.0, &DVector::from_vec(lp.base()))?;
            let b = rolling_loop_element(spec, &q0, lp)?;
            let p = loop_transport(spec, -1.0, lp)?;
            let cand = expected_transport(spec, &q0, &b, ROLLING_CONVENTION)?;
            worst = worst.max(max_abs(&(p - cand)));
            count += 1;
        }
    }
    outcome(worst <= 1e-5 && count == 20, format!("{count} loops on S^2, perturbed_flat(2), WP1 under {ROLLING_CONVENTION:?}: max deviation {worst:.2e} (tol 1e-5)"))
}

fn roll_unit_geodesic(spec: &ManifoldSpec, step: f64) -> Result<(RollingState, rollhol::rolling::Drift)> {
    let x0 = DVector::zeros(spec.dim());
    let g = spec.metric_at(x0.as_slice())?;
    let raw = DVector::from_fn(spec.dim(), |i, _| 0.6 + 0.2 * i as f64);
    let u = &raw / (raw.transpose() * &g * &raw)[(0, 0)].sqrt();
    let q0 = RollingState::initial(spec, -1.0, &x0)?;
    let opts = RollOptions { step, project: false, trace_every: 0, enforce: false };
    let out = roll_along(spec, &q0, &Path::geodesic(&x0, &u, 1.0), opts)?;
    Ok((out.state, out.drift))
}

fn state_distance(a: &RollingState, b: &RollingState) -> f64 {
    (&a.x - &b.x).amax().max((&a.xhat - &b.xhat).amax()).max((&a.frame - &b.frame).amax())
}

fn constraint_budget() -> Result<Outcome> {
    let mut worst = 0.0_f64;
    let mut orientation_ok = true;
    let mut ratios = Vec::new();
    for spec in [perturbed_flat(2, 0.1, 7)?, perturbed_flat(3, 0.1, 3)?, space_form(2, 1.0)?] {
        let (reference, drift) = roll_unit_geodesic(&spec, STEP)?;
        worst = worst.max(drift.on_manifold).max(drift.tangency).max(drift.isometry);
        worst = worst.max((drift.orientation - 1.0).abs());
        orientation_ok &= drift.orientation > 0.0;
        let (coarse, _) = roll_unit_geodesic(&spec, 0.1)?;
        let (half, _) = roll_unit_geodesic(&spec, 0.05)?;
        ratios.push(state_distance(&coarse, &reference) / state_distance(&half, &reference));
    }
    let ratio_ok = ratios.iter().all(|r| (12.0..=20.0).contains(r));
    outcome(
        worst <= 1e-6 && orientation_ok && ratio_ok,
        format!(
            "unprojected drift {worst:.1e} at step 1e-3 (tol 1e-6); error ratio under halving 0.1 -> 0.05: {:?} (want 12..20)",
            ratios.iter().map(|r| (r * 10.0).round() / 10.0).collect::<Vec<_>>()
        ),
    )
}

type Criterion = (&'static str, fn() -> Result<Outcome>);

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("closed-form transport of (0,1)", closed_form_transport),
        ("scalar transport ODE", scalar_ode),
        ("self-rolling of hyperbolic space is flat", self_rolling_is_flat),
        ("irreducible holonomy dimensions", irreducible_dimensions),
        ("converse classification", converse_verdicts),
        ("structure identity residuals", structure_identities),
        ("warp recovery", warp_recovery),
        ("curvature vs loop holonomy", curvature_holonomy),
        ("rolling/connection correspondence", rolling_correspondence),
        ("simulator constraint budget", constraint_budget),
    ];
    let results: Vec<(Result<Outcome>, f64)> = criteria
        .par_iter()
        .map(|(_, f)| {
            let t = Instant::now();
            (f(), t.elapsed().as_secs_f64())
        })
        .collect();
    let mut failed = 0;
    for (k, ((name, _), (res, secs))) in criteria.iter().zip(results).enumerate() {
        let (pass, detail) = match res {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed += 1;
        }
        println!("{} criterion {:>2} {name}: {detail} [{secs:.1}s]", if pass { "PASS" } else { "FAIL" }, k + 1);
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE }
}
