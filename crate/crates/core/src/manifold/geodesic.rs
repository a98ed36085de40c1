//! Geodesics, Levi-Civita transport and the Jacobi-field check.

use nalgebra::DVector;
use serde::Serialize;

use super::{g_inner, Kind, ManifoldSpec};
use crate::error::{Error, Result};
use crate::ode::{integrate_along, AuxSystem, NoAux, Path, Sample};

#[derive(Clone, Debug)]
pub struct Geodesic {
    pub t: Vec<f64>,
    pub x: Vec<DVector<f64>>,
    pub v: Vec<DVector<f64>>,
    pub truncated: bool,
}

impl Geodesic {
    pub fn end(&self) -> (&DVector<f64>, &DVector<f64>) {
        (self.x.last().unwrap(), self.v.last().unwrap())
    }
}

/// RK4 solution of `x'' + Γ(x', x') = 0`, sampled at every step.
pub fn geodesic(spec: &ManifoldSpec, x0: &DVector<f64>, v0: &DVector<f64>, duration: f64, step: f64) -> Result<Geodesic> {
    let path = Path::geodesic(x0, v0, duration);
    let mut out = Geodesic {
        t: Vec::new(),
        x: Vec::new(),
        v: Vec::new(),
        truncated: false,
    };
    let mut obs = |s: Sample<'_>| {
        out.t.push(s.t);
        out.x.push(s.x.clone());
        out.v.push(if s.t == 0.0 { v0.clone() } else { s.xdot.clone() });
    };
    let run = integrate_along(spec, &path, step, DVector::zeros(0), &NoAux, Some(&mut obs))?;
    out.truncated = run.truncated;
    Ok(out)
}

/// `X' + Γ(x', X) = 0`.
pub struct LcTransport;

impl AuxSystem for LcTransport {
    fn rhs(&self, spec: &ManifoldSpec, x: &DVector<f64>, xdot: &DVector<f64>, aux: &DVector<f64>) -> Result<DVector<f64>> {
        let gamma = spec.christoffel(x.as_slice())?;
        Ok(-gamma.contract(xdot, aux))
    }
}

/// Levi-Civita parallel transport of `x0` along `path`; returns the final
/// vector and whether the path was truncated at the domain boundary.
pub fn lc_transport(spec: &ManifoldSpec, path: &Path, x0: &DVector<f64>, step: f64) -> Result<(DVector<f64>, bool)> {
    if x0.len() != spec.dim() {
        return Err(Error::arg("transported vector dimension mismatch"));
    }
    let run = integrate_along(spec, path, step, x0.clone(), &LcTransport, None)?;
    Ok((run.aux, run.truncated))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum JacobiOutcome {
    NotApplicable { reason: String },
    Residual { t: f64, residual: f64, jacobi_norm: f64 },
}

/// Rank of the hyperbolic factor of a warped product over a space form or an interval.
fn hyperbolic_rank(kind: &Kind) -> Option<usize> {
    match kind {
        Kind::WarpedProduct { base, warp, .. } if warp == "cosh_dist" || warp == "cosh" => match &**base {
            Kind::SpaceForm { n, .. } => Some(*n),
            Kind::Flat { n: 1 } => Some(1),
            Kind::WarpedProduct { base: inner, fiber, warp } if warp == "sinh" => match (&**inner, &**fiber) {
                (Kind::Flat { n: 1 }, Kind::Flat { n }) | (Kind::Flat { n: 1 }, Kind::SpaceForm { n, .. }) => Some(n + 1),
                _ => None,
            },
            _ => None,
        },
        _ => None,
    }
}

/// Compares the Jacobi field of the variation `σ -> exp_x(t(u + σX))` with
/// `sinh(t) P_0^t X`, `P` the Levi-Civita transport along `γ_u`.
pub fn jacobi_check(
    spec: &ManifoldSpec,
    x: &DVector<f64>,
    u: &DVector<f64>,
    v: &DVector<f64>,
    t: f64,
    step: f64,
) -> Result<JacobiOutcome> {
    if let Some(k) = hyperbolic_rank(spec.kind()) {
        if k < 2 {
            return Ok(JacobiOutcome::NotApplicable {
                reason: format!("hyperbolic factor has rank {k}; no X orthogonal to u inside it"),
            });
        }
    }
    let g = spec.metric_at(x.as_slice())?;
    if u.len() != spec.dim() || v.len() != spec.dim() {
        return Err(Error::arg("jacobi_check vectors have the wrong dimension"));
    }
    let uu = g_inner(&g, u, u);
    if (uu - 1.0).abs() > 1e-8 {
        return Err(Error::arg(format!("u must be unit, |u|^2 = {uu}")));
    }
    let vv = g_inner(&g, v, v).sqrt();
    if vv == 0.0 || g_inner(&g, u, v).abs() > 1e-8 * vv {
        return Err(Error::arg("X must be nonzero and orthogonal to u"));
    }
    if t == 0.0 {
        return Ok(JacobiOutcome::Residual { t, residual: 0.0, jacobi_norm: 0.0 });
    }
    let delta = 1e-4;
    let end = |sigma: f64| -> Result<DVector<f64>> {
        let path = Path::geodesic(x, &(u + v * sigma), t);
        let run = integrate_along(spec, &path, step, DVector::zeros(0), &NoAux, None)?;
        if run.truncated {
            return Err(Error::Domain { point: run.x.iter().copied().collect() });
        }
        Ok(run.x)
    };
    let jac = (end(delta)? - end(-delta)?) / (2.0 * delta);
    let (px, truncated) = lc_transport(spec, &Path::geodesic(x, u, t), v, step)?;
    if truncated {
        return Err(Error::Domain { point: x.iter().copied().collect() });
    }
    let gamma_end = end(0.0)?;
    let g_end = spec.metric_at(gamma_end.as_slice())?;
    let diff = &jac - px * t.sinh();
    Ok(JacobiOutcome::Residual {
        t,
        residual: g_inner(&g_end, &diff, &diff).sqrt(),
        jacobi_norm: g_inner(&g_end, &jac, &jac).sqrt(),
    })
}

/// Initial velocity `v` with `exp_x(v) = y`, by Newton iteration on the
/// endpoint map with a central-difference Jacobian.
pub fn shoot(spec: &ManifoldSpec, x: &DVector<f64>, y: &DVector<f64>, step: f64) -> Result<DVector<f64>> {
    let n = spec.dim();
    if x.len() != n || y.len() != n {
        return Err(Error::arg("shoot: dimension mismatch"));
    }
    let end = |v: &DVector<f64>| -> Result<DVector<f64>> {
        let run = integrate_along(spec, &Path::geodesic(x, v, 1.0), step, DVector::zeros(0), &NoAux, None)?;
        if run.truncated {
            return Err(Error::Domain { point: run.x.iter().copied().collect() });
        }
        Ok(run.x)
    };
    let mut v = y - x;
    let scale = v.norm().max(1e-300);
    for _ in 0..30 {
        let r = end(&v)? - y;
        if r.norm() <= 1e-12 * scale.max(1.0) {
            return Ok(v);
        }
        let h = 1e-6 * scale.max(1e-3);
        let mut jac = nalgebra::DMatrix::zeros(n, n);
        for k in 0..n {
            let mut dv = DVector::zeros(n);
            dv[k] = h;
            jac.set_column(k, &((end(&(&v + &dv))? - end(&(&v - &dv))?) / (2.0 * h)));
        }
        let dv = jac
            .lu()
            .solve(&r)
            .ok_or_else(|| Error::numeric("shoot: singular endpoint Jacobian (conjugate point?)"))?;
        v -= dv;
    }
    Err(Error::numeric("geodesic shooting did not converge"))
}
