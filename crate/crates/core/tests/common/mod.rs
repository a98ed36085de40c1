#![allow(dead_code)]

use nalgebra::DVector;
use rollhol::holonomy::{classify, HolonomyReport, Sampling};
use rollhol::manifold::{flat, lw2, lw3, perturbed_flat, wp1, wp2_polar, ManifoldSpec};

pub fn dv(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

pub fn fiber2() -> ManifoldSpec {
    perturbed_flat(2, 0.1, 7).unwrap()
}

/// `(s, y, z)` with `ds^2 + e^{-2s} g_fiber`.
pub fn wp1_case() -> (ManifoldSpec, DVector<f64>) {
    (wp1(&fiber2()).unwrap(), dv(&[0.0, 0.0, 0.0]))
}

/// `ds^2 + sinh^2 s dt^2 + cosh^2 s g_fiber` on `s in (0.1, 2)`.
pub fn lw2_case() -> (ManifoldSpec, DVector<f64>) {
    (lw2(Some(&flat(1).unwrap()), &fiber2(), 0.1, 2.0).unwrap(), dv(&[1.0, 0.0, 0.0, 0.0]))
}

/// Hyperbolic plane in polar form with a `cosh`-warped fiber; `N1` at the origin.
pub fn lw3_case() -> (ManifoldSpec, DVector<f64>) {
    (lw3(2, &fiber2()).unwrap(), dv(&[0.0; 4]))
}

pub fn wp2_case() -> (ManifoldSpec, DVector<f64>) {
    (wp2_polar(1, &fiber2(), 0.1, 2.0).unwrap(), dv(&[1.0, 0.0, 0.0]))
}

pub fn report(spec: &ManifoldSpec, base: &DVector<f64>) -> HolonomyReport {
    classify(spec, -1.0, base, &Sampling::default()).unwrap()
}
