//! Rolling `(M, g)` against the space form `F^n_c` without slipping or
//! twisting.
//!
//! The target is kept in its ambient model `c |x'|^2 + x_{n+1}^2 = 1` in
//! `R^{n+1}` with the form `J = diag(1, .., 1, 1/c)`, whose Levi-Civita
//! connection on tangent fields is `D_V W + c <V, W> x̂`. A state stores the
//! contact point `x̂` and the images `a_i = A ∂_i` of the chart frame.
//!
//! Along `u = x'` the state obeys
//!
//! ```text
//! x̂' = u^j a_j
//! a_i' = Γ^k_{ji} u^j a_k - c g_{ij} u^j x̂
//! ```
//!
//! and the frame is projected back onto `T_{x̂} F^n_c` after every step.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{require_nonzero_c, Error, Result};
use crate::holonomy::{loop_transport, orthonormal_frame, Loop};
use crate::linalg;
use crate::lorentz::BilinearForm;
use crate::manifold::{DerivMode, ManifoldSpec, SpaceFormChart};
use crate::ode::{integrate_along, AuxSystem, Path, Sample};

/// Tolerances of the state invariants.
pub const ON_MANIFOLD_TOL: f64 = 1e-8;
pub const TANGENCY_TOL: f64 = 1e-8;
pub const ISOMETRY_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RollingState {
    #[serde(serialize_with = "crate::serial::vector")]
    pub x: DVector<f64>,
    #[serde(serialize_with = "crate::serial::vector")]
    pub xhat: DVector<f64>,
    /// Columns `a_1, .., a_n` in `R^{n+1}`.
    #[serde(serialize_with = "crate::serial::columns")]
    pub frame: DMatrix<f64>,
    pub c: f64,
}

/// Invariant violations of a state.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Drift {
    /// `|c |x̂'|^2 + x̂_{n+1}^2 - 1|`.
    pub on_manifold: f64,
    /// `max_i |<a_i, x̂>|`.
    pub tangency: f64,
    /// `max |<a_i, a_j> - g_ij|`.
    pub isometry: f64,
    /// `det[a_1 .. a_n, x̂] / sqrt(det g)`; `+1` for an o-isometry.
    pub orientation: f64,
    /// `x̂_{n+1} + c/|c|`, nonnegative on the admissible sheet.
    pub sheet: f64,
}

impl Drift {
    fn worst(self, other: Drift) -> Drift {
        Drift {
            on_manifold: self.on_manifold.max(other.on_manifold),
            tangency: self.tangency.max(other.tangency),
            isometry: self.isometry.max(other.isometry),
            orientation: self.orientation.min(other.orientation),
            sheet: self.sheet.min(other.sheet),
        }
    }

    /// True when all invariants hold within `factor` times their tolerances.
    pub fn within(&self, factor: f64) -> bool {
        self.on_manifold <= factor * ON_MANIFOLD_TOL
            && self.tangency <= factor * TANGENCY_TOL
            && self.isometry <= factor * ISOMETRY_TOL
            && self.orientation > 0.0
            && self.sheet >= -factor * ON_MANIFOLD_TOL
    }
}

fn form_matrix(n: usize, c: f64) -> Result<DMatrix<f64>> {
    Ok(BilinearForm::new(n, c)?.matrix())
}

/// `[a_1 .. a_n | x̂]`.
fn full_frame(frame: &DMatrix<f64>, xhat: &DVector<f64>) -> DMatrix<f64> {
    let n = frame.ncols();
    let mut f = DMatrix::zeros(n + 1, n + 1);
    f.view_mut((0, 0), (n + 1, n)).copy_from(frame);
    f.set_column(n, xhat);
    f
}

impl RollingState {
    pub fn new(x: DVector<f64>, xhat: DVector<f64>, frame: DMatrix<f64>, c: f64) -> Result<Self> {
        require_nonzero_c(c)?;
        let n = x.len();
        if xhat.len() != n + 1 || frame.nrows() != n + 1 || frame.ncols() != n {
            return Err(Error::arg("rolling state has inconsistent dimensions"));
        }
        Ok(Self { x, xhat, frame, c })
    }

    /// State at `x` touching `e_{n+1}`, with a g-orthonormal frame at `x`
    /// sent to `e_1, .., e_n`.
    pub fn initial(spec: &ManifoldSpec, c: f64, x: &DVector<f64>) -> Result<Self> {
        require_nonzero_c(c)?;
        let n = spec.dim();
        let e = orthonormal_frame(spec, x.as_slice())?;
        // a = Ê L^T, with L^T the inverse of the tangent block of E
        let lt = e
            .view((0, 0), (n, n))
            .into_owned()
            .try_inverse()
            .ok_or_else(|| Error::numeric("singular orthonormal frame"))?;
        let mut frame = DMatrix::zeros(n + 1, n);
        frame.view_mut((0, 0), (n, n)).copy_from(&lt);
        let mut xhat = DVector::zeros(n + 1);
        xhat[n] = 1.0;
        Self::new(x.clone(), xhat, frame, c)
    }

    /// State given by the differential of the chart embedding of a space
    /// form into its ambient model.
    pub fn embedded(chart: &SpaceFormChart, c: f64, x: &DVector<f64>) -> Result<Self> {
        let xhat = chart.embed(x.as_slice());
        let frame = chart.embed_jacobian(x.as_slice());
        Self::new(x.clone(), xhat, frame, c)
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn drift(&self, spec: &ManifoldSpec) -> Result<Drift> {
        let n = self.dim();
        let c = self.c;
        let j = form_matrix(n, c)?;
        let g = spec.metric_at(self.x.as_slice())?;
        let xh = &self.xhat;
        let on = (c * xh.rows(0, n).norm_squared() + xh[n] * xh[n] - 1.0).abs();
        let tan = (self.frame.transpose() * &j * xh).amax();
        let iso = linalg::max_abs(&(self.frame.transpose() * &j * &self.frame - &g));
        let orientation = full_frame(&self.frame, xh).determinant() / g.determinant().sqrt();
        Ok(Drift {
            on_manifold: on,
            tangency: tan,
            isometry: iso,
            orientation,
            sheet: xh[n] + c.signum(),
        })
    }

    fn pack(&self) -> DVector<f64> {
        let n = self.dim();
        let mut v = DVector::zeros((n + 1) * (n + 1));
        v.rows_mut(0, n + 1).copy_from(&self.xhat);
        v.rows_mut(n + 1, (n + 1) * n).copy_from_slice(self.frame.as_slice());
        v
    }

    fn unpack(x: DVector<f64>, aux: &DVector<f64>, c: f64) -> Self {
        let n = x.len();
        let xhat = aux.rows(0, n + 1).into_owned();
        let frame = DMatrix::from_column_slice(n + 1, n, &aux.as_slice()[n + 1..]);
        Self { x, xhat, frame, c }
    }
}

/// Element of `G_c(n)`, the identity component of the group preserving `J`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GroupElement {
    #[serde(serialize_with = "crate::serial::matrix")]
    pub mat: DMatrix<f64>,
}

impl GroupElement {
    /// Wraps `mat` after checking `M^T J M = J` at `tol`, `det M = +1`, and
    /// for `c < 0` that the upper sheet is preserved.
    pub fn new(mat: DMatrix<f64>, c: f64, tol: f64) -> Result<Self> {
        let n = mat.nrows().checked_sub(1).ok_or_else(|| Error::arg("empty group element"))?;
        let j = form_matrix(n, c)?;
        let r = linalg::max_abs(&(mat.transpose() * &j * &mat - &j));
        if r > tol {
            return Err(Error::numeric(format!("matrix leaves the form invariant only to {r:e}")));
        }
        if mat.determinant() <= 0.0 {
            return Err(Error::numeric("group element has nonpositive determinant"));
        }
        if c < 0.0 && mat[(n, n)] <= 0.0 {
            return Err(Error::numeric("group element swaps the hyperboloid sheets"));
        }
        Ok(Self { mat })
    }

    pub fn identity(n: usize) -> Self {
        Self { mat: DMatrix::identity(n + 1, n + 1) }
    }
}

/// `μ(B, (x, x̂; A)) = (x, B x̂; B A)`.
pub fn mu_action(b: &GroupElement, q: &RollingState) -> Result<RollingState> {
    if b.mat.nrows() != q.xhat.len() {
        return Err(Error::arg("group element and state differ in dimension"));
    }
    Ok(RollingState { x: q.x.clone(), xhat: &b.mat * &q.xhat, frame: &b.mat * &q.frame, c: q.c })
}

struct RollingSystem {
    c: f64,
    j: DMatrix<f64>,
    project: bool,
}

impl AuxSystem for RollingSystem {
    fn rhs(&self, spec: &ManifoldSpec, x: &DVector<f64>, u: &DVector<f64>, aux: &DVector<f64>) -> Result<DVector<f64>> {
        let n = spec.dim();
        let (g, gamma) = spec.connection_data(x.as_slice(), DerivMode::Auto)?;
        let xhat = aux.rows(0, n + 1).into_owned();
        let a = DMatrix::from_column_slice(n + 1, n, &aux.as_slice()[n + 1..]);
        let dxhat = &a * u;
        let da = &a * gamma.along(u) - &xhat * (&g * u).transpose() * self.c;
        let mut out = DVector::zeros(aux.len());
        out.rows_mut(0, n + 1).copy_from(&dxhat);
        out.rows_mut(n + 1, (n + 1) * n).copy_from_slice(da.as_slice());
        Ok(out)
    }

    fn after_step(&self, spec: &ManifoldSpec, _: &DVector<f64>, aux: &mut DVector<f64>) -> Result<f64> {
        if !self.project {
            return Ok(0.0);
        }
        let n = spec.dim();
        let xhat = aux.rows(0, n + 1).into_owned();
        let mut a = DMatrix::from_column_slice(n + 1, n, &aux.as_slice()[n + 1..]);
        // a_i -= <a_i, x̂> / <x̂, x̂> x̂, with <x̂, x̂> = 1/c on the model
        let coeff = a.transpose() * &self.j * &xhat * self.c;
        let corr = &xhat * coeff.transpose();
        let mag = corr.amax();
        a -= corr;
        aux.rows_mut(n + 1, (n + 1) * n).copy_from_slice(a.as_slice());
        Ok(mag)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub state: RollingState,
    pub drift: Drift,
    /// Magnitude of the tangency projection applied after this step.
    pub projection: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RollOutcome {
    pub state: RollingState,
    pub truncated: bool,
    pub steps: usize,
    pub length: f64,
    /// Worst invariant values over all steps.
    pub drift: Drift,
    pub max_projection: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct RollOptions {
    pub step: f64,
    pub project: bool,
    /// Record every `trace_every`-th sample (0 disables tracing).
    pub trace_every: usize,
    /// Fail when the invariants drift beyond ten times their tolerances.
    pub enforce: bool,
}

impl Default for RollOptions {
    fn default() -> Self {
        Self { step: 1e-3, project: true, trace_every: 0, enforce: true }
    }
}

/// Rolls from `q0` along `path`, returning the final state, its drift
/// budget and (optionally) a sampled trajectory.
pub fn roll_traced(spec: &ManifoldSpec, q0: &RollingState, path: &Path, opts: RollOptions) -> Result<(RollOutcome, Vec<TrajectorySample>)> {
    let n = spec.dim();
    if q0.dim() != n || path.start.as_slice() != q0.x.as_slice() {
        return Err(Error::arg("rolling path must start at the state's base point"));
    }
    let c = q0.c;
    let start_drift = q0.drift(spec)?;
    if !start_drift.within(1.0) {
        return Err(Error::arg(format!("initial rolling state violates its invariants: {start_drift:?}")));
    }
    let sys = RollingSystem { c, j: form_matrix(n, c)?, project: opts.project };
    let mut worst = start_drift;
    let mut trace = Vec::new();
    let mut failure: Option<Error> = None;
    let mut count = 0usize;
    let mut obs = |s: Sample<'_>| {
        let q = RollingState::unpack(s.x.clone(), s.aux, c);
        match q.drift(spec) {
            Ok(d) => {
                worst = worst.worst(d);
                if opts.trace_every > 0 && count.is_multiple_of(opts.trace_every) {
                    trace.push(TrajectorySample { t: s.t, state: q, drift: d, projection: s.correction });
                }
            }
            Err(e) => {
                failure.get_or_insert(e);
            }
        }
        count += 1;
    };
    let run = integrate_along(spec, path, opts.step, q0.pack(), &sys, Some(&mut obs))?;
    if let Some(e) = failure {
        return Err(e);
    }
    let state = RollingState::unpack(run.x, &run.aux, c);
    if opts.trace_every > 0 && trace.last().map(|s| s.t) != Some(run.t) {
        let d = state.drift(spec)?;
        trace.push(TrajectorySample { t: run.t, state: state.clone(), drift: d, projection: 0.0 });
    }
    if opts.enforce && !worst.within(10.0) {
        return Err(Error::numeric(format!("rolling invariants drifted beyond 10x tolerance: {worst:?}")));
    }
    Ok((
        RollOutcome { state, truncated: run.truncated, steps: run.steps, length: run.t, drift: worst, max_projection: run.max_correction },
        trace,
    ))
}

pub fn roll_along(spec: &ManifoldSpec, q0: &RollingState, path: &Path, opts: RollOptions) -> Result<RollOutcome> {
    roll_traced(spec, q0, path, RollOptions { trace_every: 0, ..opts }).map(|r| r.0)
}

/// The `B` with `μ(B, q0)` equal to the state after rolling around `lp`.
pub fn rolling_loop_element(spec: &ManifoldSpec, q0: &RollingState, lp: &Loop) -> Result<GroupElement> {
    let path = lp.to_path(spec)?;
    let out = roll_along(spec, q0, &path, RollOptions { step: lp.step, ..RollOptions::default() })?;
    if out.truncated {
        return Err(Error::Domain { point: out.state.x.iter().copied().collect() });
    }
    let f0 = full_frame(&q0.frame, &q0.xhat);
    let f1 = full_frame(&out.state.frame, &out.state.xhat);
    let f0_inv = f0.try_inverse().ok_or_else(|| Error::numeric("degenerate rolling frame"))?;
    GroupElement::new(f1 * f0_inv, q0.c, 1e-6)
}

/// How a rolling loop element `B` relates to the loop transport `P` of the
/// rolling connection, after identifying the extended fiber at `x` with
/// `R^{n+1}` through `Φ = [A | x̂]` of the initial state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    /// `P = Φ^{-1} B Φ`.
    Equal,
    /// `P = Φ^{-1} B^{-1} Φ`.
    Inverse,
    /// `P = S Φ^{-1} B Φ S` with `S` reversing the scalar direction.
    Conjugate,
}

pub const CONVENTIONS: [Convention; 3] = [Convention::Equal, Convention::Inverse, Convention::Conjugate];

/// The convention fixed by [`holonomy_correspondence`] on every tested loop.
pub const ROLLING_CONVENTION: Convention = Convention::Inverse;

#[derive(Clone, Debug, Serialize)]
pub struct Correspondence {
    /// Deviation `max |P - candidate|` per convention, in [`CONVENTIONS`] order.
    pub deviations: Vec<(Convention, f64)>,
    pub best: Convention,
    pub best_deviation: f64,
    #[serde(serialize_with = "crate::serial::matrix")]
    pub loop_element: DMatrix<f64>,
    /// Loop transport in the orthonormal extended frame at `x`.
    #[serde(serialize_with = "crate::serial::matrix")]
    pub transport: DMatrix<f64>,
}

/// Candidate for `P` under `conv`, in the orthonormal extended frame at `x`.
pub fn expected_transport(spec: &ManifoldSpec, q0: &RollingState, b: &GroupElement, conv: Convention) -> Result<DMatrix<f64>> {
    let n = q0.dim();
    let phi = full_frame(&q0.frame, &q0.xhat);
    let phi_inv = phi.clone().try_inverse().ok_or_else(|| Error::numeric("degenerate rolling frame"))?;
    let b_inv = b.mat.clone().try_inverse().ok_or_else(|| Error::numeric("singular loop element"))?;
    let mut s = DMatrix::identity(n + 1, n + 1);
    s[(n, n)] = -1.0;
    let coord = match conv {
        Convention::Equal => &phi_inv * &b.mat * &phi,
        Convention::Inverse => &phi_inv * b_inv * &phi,
        Convention::Conjugate => &s * &phi_inv * &b.mat * &phi * &s,
    };
    let e = orthonormal_frame(spec, q0.x.as_slice())?;
    let e_inv = e.clone().try_inverse().ok_or_else(|| Error::numeric("singular frame"))?;
    Ok(e_inv * coord * e)
}

pub fn holonomy_correspondence(spec: &ManifoldSpec, q0: &RollingState, lp: &Loop) -> Result<Correspondence> {
    let b = rolling_loop_element(spec, q0, lp)?;
    let p = loop_transport(spec, q0.c, lp)?;
    let mut deviations = Vec::new();
    for conv in CONVENTIONS {
        let cand = expected_transport(spec, q0, &b, conv)?;
        deviations.push((conv, linalg::max_abs(&(&p - cand))));
    }
    let (best, best_deviation) = deviations
        .iter()
        .copied()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("three conventions");
    Ok(Correspondence { deviations, best, best_deviation, loop_element: b.mat, transport: p })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{perturbed_flat, space_form};

    #[test]
    fn initial_state_is_admissible() {
        for c in [-1.0, 1.0, -0.5] {
            let s = perturbed_flat(3, 0.15, 3).unwrap();
            let q = RollingState::initial(&s, c, &DVector::from_vec(vec![0.1, 0.2, -0.1])).unwrap();
            let d = q.drift(&s).unwrap();
            assert!(d.isometry < 1e-14 && d.tangency == 0.0 && d.on_manifold == 0.0);
            assert!((d.orientation - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_length_path_keeps_state() {
        let s = perturbed_flat(2, 0.1, 1).unwrap();
        let q = RollingState::initial(&s, -1.0, &DVector::from_vec(vec![0.2, 0.2])).unwrap();
        let out = roll_along(&s, &q, &Path::constant(&[0.2, 0.2]), RollOptions::default()).unwrap();
        assert_eq!(out.state, q);
    }

    #[test]
    fn mu_action_composes() {
        let q = RollingState::initial(&space_form(2, 1.0).unwrap(), -1.0, &DVector::zeros(2)).unwrap();
        let b1 = GroupElement::new(
            linalg::expm(&DMatrix::from_row_slice(3, 3, &[0.0, 0.3, 0.2, -0.3, 0.0, -0.1, 0.2, -0.1, 0.0])),
            -1.0,
            1e-12,
        )
        .unwrap();
        let b2 = GroupElement::new(
            linalg::expm(&DMatrix::from_row_slice(3, 3, &[0.0, -0.4, 0.5, 0.4, 0.0, 0.3, 0.5, 0.3, 0.0])),
            -1.0,
            1e-12,
        )
        .unwrap();
        let lhs = mu_action(&b2, &mu_action(&b1, &q).unwrap()).unwrap();
        let rhs = mu_action(&GroupElement { mat: &b2.mat * &b1.mat }, &q).unwrap();
        assert!((lhs.xhat - rhs.xhat).amax() < 1e-15);
        assert!(linalg::max_abs(&(lhs.frame - rhs.frame)) < 1e-15);
        assert_eq!(mu_action(&GroupElement::identity(2), &q).unwrap(), q);
    }

    #[test]
    fn sheet_swap_is_rejected() {
        let mut m = DMatrix::identity(3, 3);
        m[(2, 2)] = -1.0;
        m[(1, 1)] = -1.0;
        assert!(GroupElement::new(m, -1.0, 1e-12).is_err());
    }
}
