use nalgebra::DVector;
use rollhol::holonomy::Loop;
use rollhol::manifold::{perturbed_flat, space_form, SpaceFormChart};
use rollhol::ode::Path;
use rollhol::rolling::*;

fn dv(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

#[test]
fn hyperbolic_plane_rolls_on_itself_by_its_embedding() {
    let h2 = space_form(2, -1.0).unwrap();
    let chart = SpaceFormChart::new(2, -1.0).unwrap();
    let x = dv(&[0.1, -0.2]);
    let q = RollingState::embedded(&chart, -1.0, &x).unwrap();
    assert!(q.drift(&h2).unwrap().within(1.0));
    let p = Path::polyline(&[x.clone(), dv(&[0.6, 0.3]), dv(&[-0.2, 0.5])]).unwrap();
    let out = roll_along(&h2, &q, &p, RollOptions::default()).unwrap();
    let e = RollingState::embedded(&chart, -1.0, &out.state.x).unwrap();
    assert!((out.state.xhat - e.xhat).amax() < 1e-6);
    assert!((out.state.frame - e.frame).amax() < 1e-6);
}

#[test]
fn sphere_loops_correspond_under_the_inverse_convention() {
    let s2 = space_form(2, 1.0).unwrap();
    let x = dv(&[0.1, -0.2]);
    let q0 = RollingState::initial(&s2, -1.0, &x).unwrap();
    for eps in [0.2, 0.1] {
        let c = holonomy_correspondence(&s2, &q0, &Loop::rectangle(&x, (0, 1), eps, 1e-3)).unwrap();
        assert_eq!(c.best, ROLLING_CONVENTION);
        assert!(c.best_deviation < 1e-5, "{:?}", c.deviations);
        let worst = c.deviations.iter().map(|d| d.1).fold(0.0, f64::max);
        assert!(worst > 1e-3, "conventions must be distinguishable: {:?}", c.deviations);
    }
}

#[test]
fn projected_rolling_keeps_invariants_along_a_geodesic() {
    let pf = perturbed_flat(2, 0.1, 7).unwrap();
    let q = RollingState::initial(&pf, -1.0, &DVector::zeros(2)).unwrap();
    let p = Path::geodesic(&DVector::zeros(2), &dv(&[0.6, 0.8]), 1.0);
    let out = roll_along(&pf, &q, &p, RollOptions::default()).unwrap();
    assert!(!out.truncated);
    assert!(out.drift.on_manifold <= ON_MANIFOLD_TOL);
    assert!(out.drift.tangency <= TANGENCY_TOL);
    assert!(out.drift.isometry <= ISOMETRY_TOL);
}

#[test]
fn rolling_requires_path_to_start_at_the_state() {
    let pf = perturbed_flat(2, 0.1, 7).unwrap();
    let q = RollingState::initial(&pf, -1.0, &DVector::zeros(2)).unwrap();
    let p = Path::polyline(&[dv(&[0.1, 0.0]), dv(&[0.2, 0.0])]).unwrap();
    assert!(roll_along(&pf, &q, &p, RollOptions::default()).is_err());
}
