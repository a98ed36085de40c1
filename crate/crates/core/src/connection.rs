//! The rolling connection on `TM ⊕ R`:
//!
//! `∇^c_X (Y, s) = (∇_X Y + s X, X(s) - c g(Y, X))`,
//!
//! its fiber metric `h_c = g ⊕ 1/c`, parallel transport and curvature.
//! Extended vectors are written in the coordinate frame `(∂_1, .., ∂_n)`
//! followed by the unit scalar direction.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{require_nonzero_c, Error, Result};
use crate::linalg;
use crate::manifold::{g_inner, Christoffel, DerivMode, ManifoldSpec, FD_STEP_FIRST};
use crate::ode::{integrate_along, AuxSystem, Path};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExtendedVector {
    #[serde(serialize_with = "crate::serial::vector")]
    pub base: DVector<f64>,
    #[serde(serialize_with = "crate::serial::vector")]
    pub x: DVector<f64>,
    pub r: f64,
}

impl ExtendedVector {
    pub fn new(base: DVector<f64>, x: DVector<f64>, r: f64) -> Result<Self> {
        if base.len() != x.len() {
            return Err(Error::arg("extended vector and base point differ in dimension"));
        }
        Ok(Self { base, x, r })
    }

    /// The section `(0, 1)` at `base`.
    pub fn unit_scalar(base: DVector<f64>) -> Self {
        let n = base.len();
        Self { base, x: DVector::zeros(n), r: 1.0 }
    }

    /// Stacked components `(X, r)`.
    pub fn stacked(&self) -> DVector<f64> {
        let n = self.x.len();
        let mut v = DVector::zeros(n + 1);
        v.rows_mut(0, n).copy_from(&self.x);
        v[n] = self.r;
        v
    }

    pub fn from_stacked(base: DVector<f64>, v: &DVector<f64>) -> Result<Self> {
        let n = base.len();
        if v.len() != n + 1 {
            return Err(Error::arg("stacked extended vector has the wrong length"));
        }
        Ok(Self { base, x: v.rows(0, n).into_owned(), r: v[n] })
    }

    /// `h_c(v, v) = |X|_g^2 + r^2 / c`.
    pub fn h_norm_sq(&self, spec: &ManifoldSpec, c: f64) -> Result<f64> {
        let h = fiber_metric(spec, c, self.base.as_slice())?;
        let v = self.stacked();
        Ok(g_inner(&h, &v, &v))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExtendedEndomorphism {
    #[serde(serialize_with = "crate::serial::vector")]
    pub base: DVector<f64>,
    #[serde(serialize_with = "crate::serial::matrix")]
    pub mat: DMatrix<f64>,
}

impl ExtendedEndomorphism {
    /// `max |M^T H + H M|` for the fiber metric `H` at the base point.
    pub fn antisymmetry_residual(&self, spec: &ManifoldSpec, c: f64) -> Result<f64> {
        let h = fiber_metric(spec, c, self.base.as_slice())?;
        Ok(linalg::max_abs(&(self.mat.transpose() * &h + &h * &self.mat)))
    }

    pub fn apply(&self, v: &ExtendedVector) -> Result<ExtendedVector> {
        ExtendedVector::from_stacked(self.base.clone(), &(&self.mat * v.stacked()))
    }
}

/// Matrix of `h_c = g ⊕ 1/c` in the extended coordinate frame.
pub fn fiber_metric(spec: &ManifoldSpec, c: f64, x: &[f64]) -> Result<DMatrix<f64>> {
    require_nonzero_c(c)?;
    let g = spec.metric_at(x)?;
    Ok(extend_metric(&g, c))
}

fn extend_metric(g: &DMatrix<f64>, c: f64) -> DMatrix<f64> {
    let n = g.nrows();
    let mut h = DMatrix::zeros(n + 1, n + 1);
    h.view_mut((0, 0), (n, n)).copy_from(g);
    h[(n, n)] = 1.0 / c;
    h
}

pub fn h_inner(spec: &ManifoldSpec, c: f64, v: &ExtendedVector, w: &ExtendedVector) -> Result<f64> {
    if v.base != w.base {
        return Err(Error::arg("extended vectors live at different points"));
    }
    let h = fiber_metric(spec, c, v.base.as_slice())?;
    Ok(g_inner(&h, &v.stacked(), &w.stacked()))
}

/// Connection matrix `ω(u)` with `∇^c_u v = u(v) + ω(u) v` in the extended
/// coordinate frame: `ω[k][j] = Γ^k_{ij} u^i`, `ω[k][n] = u^k`,
/// `ω[n][j] = -c g_{ij} u^i`.
pub fn connection_matrix(g: &DMatrix<f64>, gamma: &Christoffel, c: f64, u: &DVector<f64>) -> DMatrix<f64> {
    let n = g.nrows();
    let mut w = DMatrix::zeros(n + 1, n + 1);
    w.view_mut((0, 0), (n, n)).copy_from(&gamma.along(u));
    w.view_mut((0, n), (n, 1)).copy_from(u);
    let gu = g * u;
    for j in 0..n {
        w[(n, j)] = -c * gu[j];
    }
    w
}

/// First-order data of an extended section at a point: its value `(Y, s)`
/// and the directional derivatives `(X(Y), X(s))` along the chosen `X`.
#[derive(Clone, Debug)]
pub struct SectionJet {
    pub y: DVector<f64>,
    pub s: f64,
    pub dy: DVector<f64>,
    pub ds: f64,
}

impl SectionJet {
    /// Central-difference jet of a section given as a chart function.
    pub fn from_fn<F>(section: F, x: &DVector<f64>, dir: &DVector<f64>) -> Self
    where
        F: Fn(&DVector<f64>) -> (DVector<f64>, f64),
    {
        let h = FD_STEP_FIRST;
        let (y, s) = section(x);
        let (yp, sp) = section(&(x + dir * h));
        let (ym, sm) = section(&(x - dir * h));
        Self { y, s, dy: (yp - ym) / (2.0 * h), ds: (sp - sm) / (2.0 * h) }
    }
}

/// `∇^c_X (Y, s)` at `x`.
pub fn nabla_c(spec: &ManifoldSpec, c: f64, x: &DVector<f64>, dir: &DVector<f64>, section: &SectionJet) -> Result<ExtendedVector> {
    require_nonzero_c(c)?;
    let n = spec.dim();
    if dir.len() != n || section.y.len() != n || section.dy.len() != n {
        return Err(Error::arg("nabla_c: dimension mismatch"));
    }
    let (g, gamma) = spec.connection_data(x.as_slice(), DerivMode::Auto)?;
    let y = &section.dy + gamma.contract(dir, &section.y) + dir * section.s;
    let r = section.ds - c * g_inner(&g, &section.y, dir);
    ExtendedVector::new(x.clone(), y, r)
}

/// Transport of an `(n+1) x m` block of extended vectors: `V' = -ω(x') V`.
struct ExtTransport {
    c: f64,
    cols: usize,
}

impl AuxSystem for ExtTransport {
    fn rhs(&self, spec: &ManifoldSpec, x: &DVector<f64>, xdot: &DVector<f64>, aux: &DVector<f64>) -> Result<DVector<f64>> {
        let n = spec.dim();
        let (g, gamma) = spec.connection_data(x.as_slice(), DerivMode::Auto)?;
        let w = connection_matrix(&g, &gamma, self.c, xdot);
        let v = DMatrix::from_column_slice(n + 1, self.cols, aux.as_slice());
        let out = -w * v;
        Ok(DVector::from_column_slice(out.as_slice()))
    }
}

#[derive(Clone, Debug)]
pub struct TransportResult {
    pub end: DVector<f64>,
    /// Transported block, columns in the extended coordinate frame at `end`.
    pub block: DMatrix<f64>,
    pub truncated: bool,
}

/// Transports the columns of `block` (extended coordinate components at
/// the path start) along `path`.
pub fn transport_block(spec: &ManifoldSpec, c: f64, path: &Path, block: &DMatrix<f64>, step: f64) -> Result<TransportResult> {
    require_nonzero_c(c)?;
    let n = spec.dim();
    if block.nrows() != n + 1 {
        return Err(Error::arg("transported block must have n + 1 rows"));
    }
    let aux0 = DVector::from_column_slice(block.as_slice());
    let sys = ExtTransport { c, cols: block.ncols() };
    let run = integrate_along(spec, path, step, aux0, &sys, None)?;
    Ok(TransportResult {
        end: run.x,
        block: DMatrix::from_column_slice(n + 1, block.ncols(), run.aux.as_slice()),
        truncated: run.truncated,
    })
}

/// Transport operator `P` in extended coordinate frames: `v(end) = P v(start)`.
pub fn transport_matrix(spec: &ManifoldSpec, c: f64, path: &Path, step: f64) -> Result<TransportResult> {
    let n = spec.dim();
    transport_block(spec, c, path, &DMatrix::identity(n + 1, n + 1), step)
}

/// Parallel transport of one extended vector; the flag reports truncation.
pub fn transport_ext(spec: &ManifoldSpec, c: f64, path: &Path, v0: &ExtendedVector, step: f64) -> Result<(ExtendedVector, bool)> {
    if v0.base.as_slice() != path.start.as_slice() {
        return Err(Error::arg("transported vector is not based at the path start"));
    }
    let res = transport_block(spec, c, path, &DMatrix::from_column_slice(v0.x.len() + 1, 1, v0.stacked().as_slice()), step)?;
    let v = ExtendedVector::from_stacked(res.end, &res.block.column(0).into_owned())?;
    Ok((v, res.truncated))
}

/// Samples `(t, x, v)` of a transported extended vector at every step.
pub fn transport_trace(spec: &ManifoldSpec, c: f64, path: &Path, v0: &ExtendedVector, step: f64) -> Result<Vec<(f64, DVector<f64>, DVector<f64>)>> {
    require_nonzero_c(c)?;
    let mut out = Vec::new();
    let sys = ExtTransport { c, cols: 1 };
    let mut obs = |s: crate::ode::Sample<'_>| out.push((s.t, s.x.clone(), s.aux.clone()));
    integrate_along(spec, path, step, v0.stacked(), &sys, Some(&mut obs))?;
    Ok(out)
}

/// Block matrix of `(Z, u) -> ((R(X,Y) - c B(X,Y)) Z, 0)`.
fn curvature_block(g: &DMatrix<f64>, r_xy: &DMatrix<f64>, c: f64, x: &DVector<f64>, y: &DVector<f64>) -> DMatrix<f64> {
    let n = g.nrows();
    // B(X,Y) = X (gY)^T - Y (gX)^T
    let b = x * (g * y).transpose() - y * (g * x).transpose();
    let mut m = DMatrix::zeros(n + 1, n + 1);
    m.view_mut((0, 0), (n, n)).copy_from(&(r_xy - b * c));
    m
}

/// Curvature `R^{∇^c}(X, Y)` at `x`.
pub fn rolling_curvature(spec: &ManifoldSpec, c: f64, x: &DVector<f64>, u: &DVector<f64>, v: &DVector<f64>) -> Result<ExtendedEndomorphism> {
    require_nonzero_c(c)?;
    if u.len() != spec.dim() || v.len() != spec.dim() {
        return Err(Error::arg("rolling_curvature: dimension mismatch"));
    }
    let g = spec.metric_at(x.as_slice())?;
    let r = spec.riemann(x.as_slice())?;
    Ok(ExtendedEndomorphism {
        base: x.clone(),
        mat: curvature_block(&g, &r.operator(u, v), c, u, v),
    })
}

/// Curvature on the coordinate pair `(∂_i, ∂_j)` from the connection
/// matrices: `∂_i ω_j - ∂_j ω_i + [ω_i, ω_j]`, derivatives by central
/// differences. Independent of the Riemann tensor code path.
pub fn curvature_from_connection(spec: &ManifoldSpec, c: f64, x: &DVector<f64>, i: usize, j: usize) -> Result<DMatrix<f64>> {
    require_nonzero_c(c)?;
    let n = spec.dim();
    let e = |k: usize| {
        let mut v = DVector::zeros(n);
        v[k] = 1.0;
        v
    };
    let omega = |p: &DVector<f64>, k: usize| -> Result<DMatrix<f64>> {
        let (g, gamma) = spec.connection_data(p.as_slice(), DerivMode::Auto)?;
        Ok(connection_matrix(&g, &gamma, c, &e(k)))
    };
    let h = 1e-4;
    let d = |a: usize, b: usize| -> Result<DMatrix<f64>> {
        Ok((omega(&(x + e(a) * h), b)? - omega(&(x - e(a) * h), b)?) / (2.0 * h))
    };
    let wi = omega(x, i)?;
    let wj = omega(x, j)?;
    Ok(d(i, j)? - d(j, i)? + &wi * &wj - &wj * &wi)
}

/// Closed chart rectangle `x, x + ε e_i, x + ε (e_i + e_j), x + ε e_j, x`.
pub fn rectangle_path(x: &DVector<f64>, i: usize, j: usize, eps: f64) -> Result<Path> {
    let n = x.len();
    if i >= n || j >= n || i == j {
        return Err(Error::arg(format!("invalid coordinate plane ({i}, {j}) in dimension {n}")));
    }
    let mut ei = DVector::zeros(n);
    ei[i] = eps;
    let mut ej = DVector::zeros(n);
    ej[j] = eps;
    Path::polyline(&[x.clone(), x + &ei, x + &ei + &ej, x + &ej, x.clone()])
}

/// Sign `σ` in `log(P_loop) / ε² -> σ R^{∇^c}(∂_i, ∂_j)` for the rectangle
/// of [`rectangle_path`], as measured by [`curvature_vs_holonomy`].
pub const LOOP_LOG_SIGN: f64 = -1.0;

#[derive(Clone, Debug, Serialize)]
pub struct HolonomyConvergence {
    pub plane: (usize, usize),
    pub eps: Vec<f64>,
    /// `max |log P / ε² - σ R|` per ε.
    pub normalized_errors: Vec<f64>,
    /// `max |log P - σ ε² R|` per ε.
    pub absolute_errors: Vec<f64>,
    /// `log2` ratios of successive absolute errors, scaled by `ε` ratios.
    pub orders: Vec<f64>,
    /// Sign that fits the smallest loop better.
    pub sign: f64,
    pub convention: String,
    /// `|curvature (0, 1)|`, zero when the limit annihilates the scalar direction.
    pub scalar_column_norm: f64,
    pub curvature_norm: f64,
}

/// Compares logs of ε-rectangle loop transports with the rolling curvature.
pub fn curvature_vs_holonomy(
    spec: &ManifoldSpec,
    c: f64,
    x: &DVector<f64>,
    plane: (usize, usize),
    eps: &[f64],
    step: f64,
) -> Result<HolonomyConvergence> {
    require_nonzero_c(c)?;
    if eps.is_empty() || eps.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::arg("curvature_vs_holonomy needs positive ε values"));
    }
    let n = spec.dim();
    let (i, j) = plane;
    let mut ei = DVector::zeros(n);
    ei[i] = 1.0;
    let mut ej = DVector::zeros(n);
    ej[j] = 1.0;
    let curv = rolling_curvature(spec, c, x, &ei, &ej)?.mat;
    let mut logs = Vec::new();
    for &e in eps {
        let path = rectangle_path(x, i, j, e)?;
        let res = transport_matrix(spec, c, &path, step.min(e / 20.0))?;
        if res.truncated {
            return Err(Error::Domain { point: x.iter().copied().collect() });
        }
        logs.push(linalg::logm(&res.block)?);
    }
    let smallest = eps.len() - 1;
    let fit = |s: f64| linalg::max_abs(&(&logs[smallest] / (eps[smallest] * eps[smallest]) - &curv * s));
    let sign = if fit(1.0) < fit(-1.0) { 1.0 } else { -1.0 };
    let mut normalized = Vec::new();
    let mut absolute = Vec::new();
    for (l, &e) in logs.iter().zip(eps) {
        let err = linalg::max_abs(&(l - &curv * (sign * e * e)));
        absolute.push(err);
        normalized.push(err / (e * e));
    }
    let orders = absolute
        .windows(2)
        .zip(eps.windows(2))
        .map(|(a, e)| (a[0] / a[1]).ln() / (e[0] / e[1]).ln())
        .collect();
    Ok(HolonomyConvergence {
        plane,
        eps: eps.to_vec(),
        normalized_errors: normalized,
        absolute_errors: absolute,
        orders,
        sign,
        convention: format!("log(P_rect)/eps^2 -> {}R(e_i, e_j)", if sign > 0.0 { "+" } else { "-" }),
        scalar_column_norm: curv.column(n).norm(),
        curvature_norm: linalg::max_abs(&curv),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{flat, geodesic, perturbed_flat, space_form};

    fn unit(n: usize, i: usize) -> DVector<f64> {
        let mut e = DVector::zeros(n);
        e[i] = 1.0;
        e
    }

    #[test]
    fn constant_unit_scalar_section() {
        for c in [-1.0, 0.5] {
            let s = perturbed_flat(3, 0.1, 3).unwrap();
            let x = DVector::from_vec(vec![0.1, 0.2, -0.3]);
            let dir = DVector::from_vec(vec![0.4, -1.0, 0.2]);
            let jet = SectionJet { y: DVector::zeros(3), s: 1.0, dy: DVector::zeros(3), ds: 0.0 };
            let out = nabla_c(&s, c, &x, &dir, &jet).unwrap();
            assert!((out.x - &dir).norm() < 1e-15);
            assert_eq!(out.r, 0.0);
        }
    }

    #[test]
    fn zero_c_is_rejected() {
        let s = flat(2).unwrap();
        let x = DVector::zeros(2);
        assert!(matches!(fiber_metric(&s, 0.0, x.as_slice()), Err(Error::EuclideanCase)));
        assert!(matches!(rolling_curvature(&s, 0.0, &x, &unit(2, 0), &unit(2, 1)), Err(Error::EuclideanCase)));
    }

    #[test]
    fn closed_form_section_is_parallel_along_geodesics() {
        let s = perturbed_flat(2, 0.15, 9).unwrap();
        let x0 = DVector::from_vec(vec![0.1, -0.1]);
        let g0 = s.metric_at(x0.as_slice()).unwrap();
        let raw = DVector::from_vec(vec![0.7, 0.3]);
        let u = &raw / g_inner(&g0, &raw, &raw).sqrt();
        let geo = geodesic(&s, &x0, &u, 0.8, 1e-3).unwrap();
        let k = 400;
        let h = geo.t[k + 1] - geo.t[k];
        let t = geo.t[k];
        let section = |idx: usize| (-&geo.v[idx] * geo.t[idx].sinh(), geo.t[idx].cosh());
        let (yp, sp) = section(k + 1);
        let (ym, sm) = section(k - 1);
        let (y, sv) = section(k);
        let jet = SectionJet { y, s: sv, dy: (yp - ym) / (2.0 * h), ds: (sp - sm) / (2.0 * h) };
        let out = nabla_c(&s, -1.0, &geo.x[k], &geo.v[k], &jet).unwrap();
        assert!(out.x.norm() < 1e-6 && out.r.abs() < 1e-6, "{out:?} at t={t}");
    }

    #[test]
    fn curvature_matches_connection_route() {
        let fiber = perturbed_flat(2, 0.1, 7).unwrap();
        let specs = [perturbed_flat(3, 0.15, 4).unwrap(), crate::manifold::wp1(&fiber).unwrap(), space_form(3, 1.0).unwrap()];
        for s in &specs {
            let x = DVector::from_vec(vec![0.1, -0.2, 0.15]);
            for c in [-1.0, 0.7] {
                for (i, j) in [(0, 1), (0, 2), (1, 2)] {
                    let a = rolling_curvature(s, c, &x, &unit(3, i), &unit(3, j)).unwrap();
                    let b = curvature_from_connection(s, c, &x, i, j).unwrap();
                    assert!(linalg::max_abs(&(&a.mat - &b)) < 1e-6, "{} c={c} ({i},{j})", s.name());
                    assert!(a.antisymmetry_residual(s, c).unwrap() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn curvature_examples() {
        let x = DVector::from_vec(vec![0.2, -0.3]);
        let (e0, e1) = (unit(2, 0), unit(2, 1));
        let f = flat(2).unwrap();
        let m = rolling_curvature(&f, -1.0, &x, &e0, &e1).unwrap().mat;
        // B(e0, e1) e1 = e0, B(e0, e1) e0 = -e1
        let expected = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(linalg::max_abs(&(m - expected)) < 1e-15);

        let h = space_form(2, -1.0).unwrap();
        assert!(linalg::max_abs(&rolling_curvature(&h, -1.0, &x, &e0, &e1).unwrap().mat) < 1e-7);

        let sph = space_form(2, 1.0).unwrap();
        let g = sph.metric_at(x.as_slice()).unwrap();
        let m = rolling_curvature(&sph, -1.0, &x, &e0, &e1).unwrap();
        for k in 0..2 {
            let z = unit(2, k);
            let out = m.apply(&ExtendedVector::new(x.clone(), z.clone(), 0.7).unwrap()).unwrap();
            let twice_b = (&e0 * g_inner(&g, &e1, &z) - &e1 * g_inner(&g, &e0, &z)) * 2.0;
            assert!((out.x - twice_b).amax() < 1e-6 && out.r == 0.0);
        }
    }

    #[test]
    fn transport_preserves_fiber_metric_and_reverses() {
        let s = perturbed_flat(3, 0.15, 2).unwrap();
        let path = Path::polyline(&[
            DVector::from_vec(vec![0.0, 0.0, 0.0]),
            DVector::from_vec(vec![0.5, 0.1, -0.2]),
            DVector::from_vec(vec![0.2, 0.6, 0.3]),
        ])
        .unwrap();
        for c in [-1.0, 1.0, -0.4] {
            let res = transport_matrix(&s, c, &path, 1e-3).unwrap();
            let h0 = fiber_metric(&s, c, &path.start).unwrap();
            let h1 = fiber_metric(&s, c, res.end.as_slice()).unwrap();
            let p = &res.block;
            assert!(linalg::max_abs(&(p.transpose() * h1 * p - h0)) < 1e-8);
            let back = transport_matrix(&s, c, &path.reversed(&s, 1e-3).unwrap(), 1e-3).unwrap();
            assert!(linalg::max_abs(&(&back.block * p - DMatrix::identity(4, 4))) < 1e-9);
        }
        let v0 = ExtendedVector::new(DVector::from_vec(vec![0.1, 0.1, 0.1]), DVector::from_vec(vec![1.0, 2.0, 3.0]), 0.5).unwrap();
        let (v1, trunc) = transport_ext(&s, -1.0, &Path::constant(&[0.1, 0.1, 0.1]), &v0, 1e-3).unwrap();
        assert!(!trunc);
        assert_eq!(v1, v0);
    }

    #[test]
    fn flat_rectangle_error_is_first_order_after_normalization() {
        let f = flat(2).unwrap();
        let x = DVector::zeros(2);
        let rep = curvature_vs_holonomy(&f, -1.0, &x, (0, 1), &[0.1, 0.05], 1e-3).unwrap();
        assert_eq!(rep.sign, LOOP_LOG_SIGN);
        let ratio = rep.normalized_errors[0] / rep.normalized_errors[1];
        assert!((ratio - 2.0).abs() < 0.2, "{ratio}");
        assert_eq!(rep.scalar_column_norm, 0.0);
    }

    #[test]
    fn hyperbolic_self_rolling_loops_are_trivial() {
        let h = space_form(2, -1.0).unwrap();
        let x = DVector::from_vec(vec![0.3, -0.2]);
        for eps in [0.2, 0.1] {
            let res = transport_matrix(&h, -1.0, &rectangle_path(&x, 0, 1, eps).unwrap(), 1e-3).unwrap();
            assert!(linalg::max_abs(&(res.block - DMatrix::identity(3, 3))) < 1e-8);
        }
    }
}
