mod common;

use std::sync::OnceLock;

use common::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rollhol::connection::{fiber_metric, transport_matrix};
use rollhol::decomposition::{split_unit_section, ParallelSubbundle, SplitSection, BUNDLE_STEP};
use rollhol::holonomy::{group_residual, loop_transport, Loop};
use rollhol::linalg::{expm, max_abs};
use rollhol::lorentz::{lie_closure, AlgebraElement, BilinearForm};
use rollhol::manifold::{perturbed_flat, ManifoldSpec};
use rollhol::ode::Path;
use rollhol::rolling::{mu_action, roll_along, GroupElement, RollOptions, RollingState};

fn curvature() -> impl Strategy<Value = f64> {
    prop_oneof![Just(-1.0), Just(-0.5), Just(0.7), Just(2.0)]
}

fn segment(n: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (prop::collection::vec(-0.3..0.3f64, n), prop::collection::vec(-0.3..0.3f64, n))
}

fn small_element(form: BilinearForm) -> impl Strategy<Value = AlgebraElement> {
    let dim = form.algebra_dim();
    prop::collection::vec(-0.5..0.5f64, dim).prop_map(move |coef| {
        let basis = form.algebra_basis();
        let mat = basis.iter().zip(&coef).fold(DMatrix::zeros(form.size(), form.size()), |acc, (b, k)| acc + &b.mat * *k);
        AlgebraElement::project(&mat, form)
    })
}

fn surface(seed: u64) -> ManifoldSpec {
    perturbed_flat(2, 0.15, seed).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn transport_carries_fiber_metric_between_fibers(seed in 0u64..50, c in curvature(), (a, b) in segment(2)) {
        let spec = surface(seed);
        let path = Path::polyline(&[dv(&a), dv(&b)]).unwrap();
        let res = transport_matrix(&spec, c, &path, 1e-3).unwrap();
        prop_assume!(!res.truncated);
        let h0 = fiber_metric(&spec, c, &a).unwrap();
        let h1 = fiber_metric(&spec, c, &b).unwrap();
        let m = &res.block;
        prop_assert!(max_abs(&(m.transpose() * h1 * m - h0)) < 1e-8);
    }

    #[test]
    fn reversed_path_undoes_transport(seed in 0u64..50, c in curvature(), (a, b) in segment(2)) {
        let spec = surface(seed);
        let fwd = Path::polyline(&[dv(&a), dv(&b)]).unwrap();
        let back = fwd.reversed(&spec, 1e-3).unwrap();
        let m = transport_matrix(&spec, c, &fwd, 1e-3).unwrap().block;
        let r = transport_matrix(&spec, c, &back, 1e-3).unwrap().block;
        prop_assert!(max_abs(&(r * m - DMatrix::identity(3, 3))) < 1e-9);
    }

    #[test]
    fn loop_transport_lies_in_the_group(seed in 0u64..50, c in curvature(), eps in 0.02..0.3f64) {
        let spec = surface(seed);
        let lp = Loop::rectangle(&dv(&[-0.1, 0.05]), (0, 1), eps, 1e-3);
        let p = loop_transport(&spec, c, &lp).unwrap();
        prop_assert!(group_residual(&p, &BilinearForm::new(2, c).unwrap()) < 1e-8);
    }

    #[test]
    fn rolling_is_equivariant_under_mu(seed in 0u64..50, c in curvature(), (_, b) in segment(2), k in small_element(BilinearForm::new(2, -1.0).unwrap())) {
        let spec = surface(seed);
        let form = BilinearForm::new(2, c).unwrap();
        let k = AlgebraElement::project(&k.mat, form);
        let g = GroupElement::new(expm(&k.mat), c, 1e-9).unwrap();
        let x0 = DVector::zeros(2);
        let q = RollingState::initial(&spec, c, &x0).unwrap();
        let path = Path::polyline(&[x0.clone(), dv(&b)]).unwrap();
        let opts = RollOptions { enforce: false, ..RollOptions::default() };
        let moved_then_rolled = roll_along(&spec, &mu_action(&g, &q).unwrap(), &path, opts).unwrap().state;
        let rolled_then_moved = mu_action(&g, &roll_along(&spec, &q, &path, opts).unwrap().state).unwrap();
        prop_assert!((&moved_then_rolled.xhat - &rolled_then_moved.xhat).amax() < 1e-9);
        prop_assert!((&moved_then_rolled.frame - &rolled_then_moved.frame).amax() < 1e-9);
    }

    #[test]
    fn lie_closure_never_exceeds_the_algebra(n in 2usize..5, c in curvature(), count in 1usize..4, raw in prop::collection::vec(-1.0..1.0f64, 40)) {
        let form = BilinearForm::new(n, c).unwrap();
        let basis = form.algebra_basis();
        let gens: Vec<AlgebraElement> = (0..count)
            .map(|g| {
                let mat = basis.iter().enumerate().fold(DMatrix::zeros(n + 1, n + 1), |acc, (i, b)| acc + &b.mat * raw[(g * 13 + i) % raw.len()]);
                AlgebraElement::project(&mat, form)
            })
            .collect();
        let cl = lie_closure(&gens, 1e-8).unwrap();
        prop_assert!(cl.dim <= form.algebra_dim());
        prop_assert_eq!(cl.dim, cl.basis.len());
        if count == 1 {
            prop_assert!(cl.dim <= 1);
        }
    }
}

fn lw2_split() -> &'static SplitSection {
    static SPLIT: OnceLock<SplitSection> = OnceLock::new();
    SPLIT.get_or_init(|| {
        let (spec, base) = lw2_case();
        let bundle = ParallelSubbundle::from_report(&spec, &report(&spec, &base), BUNDLE_STEP).unwrap();
        split_unit_section(&bundle).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn split_of_the_unit_scalar_is_h_orthogonal(s in 0.6..1.5f64, t in -0.3..0.3f64, y in -0.3..0.3f64, z in -0.3..0.3f64) {
        let split = lw2_split();
        let (spec, _) = lw2_case();
        let p = dv(&[s, t, y, z]);
        let v = split.at(&p).unwrap();
        let g = spec.metric_at(p.as_slice()).unwrap();
        prop_assert!(v.sum_residual() < 1e-10);
        prop_assert!(v.cross_h(&g, -1.0).abs() < 1e-7);
        prop_assert!((v.h_norm_sq2(&g, -1.0) + v.w2).abs() < 1e-7);
        prop_assert!(v.w1 > 0.0 && v.w2 < 0.0);
    }
}
