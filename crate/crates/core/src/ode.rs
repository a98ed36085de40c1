//! Fixed-step RK4 and the path driver shared by every transport ODE.
//!
//! A [`Path`] is a sequence of pieces in chart coordinates: straight chart
//! segments (unit chart speed) or geodesic arcs (integrated alongside the
//! auxiliary state). [`integrate_along`] advances an auxiliary state
//! `y' = F(x, x', y)` piece by piece, restarting RK4 at every corner.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::{DerivMode, ManifoldSpec};

pub const DEFAULT_STEP: f64 = 1e-3;

/// One classical RK4 step of `y' = f(t, y)`.
pub fn rk4_step<F>(f: F, t: f64, y: &DVector<f64>, h: f64) -> Result<DVector<f64>>
where
    F: Fn(f64, &DVector<f64>) -> Result<DVector<f64>>,
{
    let k1 = f(t, y)?;
    let k2 = f(t + 0.5 * h, &(y + &k1 * (0.5 * h)))?;
    let k3 = f(t + 0.5 * h, &(y + &k2 * (0.5 * h)))?;
    let k4 = f(t + h, &(y + &k3 * h))?;
    Ok(y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Piece {
    /// Straight chart segment to `to`, traversed at unit chart speed.
    Segment { to: Vec<f64> },
    /// Geodesic with initial chart velocity `velocity`, run for `duration`.
    Geodesic { velocity: Vec<f64>, duration: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub start: Vec<f64>,
    pub pieces: Vec<Piece>,
}

impl Path {
    pub fn constant(x: &[f64]) -> Self {
        Self {
            start: x.to_vec(),
            pieces: Vec::new(),
        }
    }

    pub fn polyline(points: &[DVector<f64>]) -> Result<Self> {
        let first = points
            .first()
            .ok_or_else(|| Error::arg("polyline needs at least one point"))?;
        let n = first.len();
        if points.iter().any(|p| p.len() != n) {
            return Err(Error::arg("polyline points differ in dimension"));
        }
        Ok(Self {
            start: first.iter().copied().collect(),
            pieces: points[1..]
                .iter()
                .map(|p| Piece::Segment { to: p.iter().copied().collect() })
                .collect(),
        })
    }

    pub fn geodesic(x0: &DVector<f64>, v0: &DVector<f64>, duration: f64) -> Self {
        Self {
            start: x0.iter().copied().collect(),
            pieces: vec![Piece::Geodesic {
                velocity: v0.iter().copied().collect(),
                duration,
            }],
        }
    }

    pub fn dim(&self) -> usize {
        self.start.len()
    }

    pub fn is_polyline(&self) -> bool {
        self.pieces.iter().all(|p| matches!(p, Piece::Segment { .. }))
    }

    /// Endpoint, known without integration for polylines.
    pub fn polyline_end(&self) -> Option<Vec<f64>> {
        let mut end = self.start.clone();
        for p in &self.pieces {
            match p {
                Piece::Segment { to } => end = to.clone(),
                Piece::Geodesic { .. } => return None,
            }
        }
        Some(end)
    }

    /// Chart vertices of a polyline.
    pub fn vertices(&self) -> Vec<Vec<f64>> {
        let mut out = vec![self.start.clone()];
        for p in &self.pieces {
            if let Piece::Segment { to } = p {
                out.push(to.clone());
            }
        }
        out
    }

    /// `self` followed by `other`; `other` must start where a polyline `self` ends.
    pub fn then(&self, other: &Path) -> Result<Path> {
        if let Some(end) = self.polyline_end() {
            if end != other.start {
                return Err(Error::arg("concatenated paths do not meet"));
            }
        }
        let mut pieces = self.pieces.clone();
        pieces.extend(other.pieces.iter().cloned());
        Ok(Path {
            start: self.start.clone(),
            pieces,
        })
    }

    /// Reversed traversal. Geodesic pieces are integrated to find their endpoints.
    pub fn reversed(&self, spec: &ManifoldSpec, step: f64) -> Result<Path> {
        let mut nodes: Vec<(Vec<f64>, Option<(Vec<f64>, f64)>)> = Vec::new();
        let mut cur = self.start.clone();
        for p in &self.pieces {
            match p {
                Piece::Segment { to } => {
                    nodes.push((cur.clone(), None));
                    cur = to.clone();
                }
                Piece::Geodesic { duration, .. } => {
                    let sub = Path {
                        start: cur.clone(),
                        pieces: vec![p.clone()],
                    };
                    let run = integrate_along(spec, &sub, step, DVector::zeros(0), &NoAux, None)?;
                    if run.truncated {
                        return Err(Error::Domain { point: run.x.iter().copied().collect() });
                    }
                    nodes.push((cur.clone(), Some((run.xdot.iter().map(|v| -v).collect(), *duration))));
                    cur = run.x.iter().copied().collect();
                }
            }
        }
        let mut pieces = Vec::new();
        for (from, geo) in nodes.into_iter().rev() {
            match geo {
                None => pieces.push(Piece::Segment { to: from }),
                Some((velocity, duration)) => pieces.push(Piece::Geodesic { velocity, duration }),
            }
        }
        Ok(Path { start: cur, pieces })
    }
}

/// Auxiliary state carried along a path.
pub trait AuxSystem {
    fn rhs(&self, spec: &ManifoldSpec, x: &DVector<f64>, xdot: &DVector<f64>, aux: &DVector<f64>) -> Result<DVector<f64>>;

    /// Hook run after each accepted step; returns a correction magnitude.
    fn after_step(&self, _spec: &ManifoldSpec, _x: &DVector<f64>, _aux: &mut DVector<f64>) -> Result<f64> {
        Ok(0.0)
    }
}

/// No auxiliary state; used to integrate bare geodesics.
pub struct NoAux;

impl AuxSystem for NoAux {
    fn rhs(&self, _: &ManifoldSpec, _: &DVector<f64>, _: &DVector<f64>, aux: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(DVector::zeros(aux.len()))
    }
}

pub struct Sample<'a> {
    pub t: f64,
    pub x: &'a DVector<f64>,
    pub xdot: &'a DVector<f64>,
    pub aux: &'a DVector<f64>,
    /// Value returned by [`AuxSystem::after_step`] for this step.
    pub correction: f64,
}

#[derive(Clone, Debug)]
pub struct Run {
    pub x: DVector<f64>,
    pub xdot: DVector<f64>,
    pub aux: DVector<f64>,
    pub t: f64,
    pub steps: usize,
    /// The path left the chart domain; state is the last in-domain one.
    pub truncated: bool,
    pub max_correction: f64,
}

fn geodesic_accel(spec: &ManifoldSpec, x: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
    let gamma = spec.christoffel_with(x.as_slice(), DerivMode::Auto)?;
    Ok(-gamma.contract(v, v))
}

fn is_domain(e: &Error) -> bool {
    matches!(e, Error::Domain { .. })
}

/// Integrates `aux` along `path` with RK4 at step at most `step`.
pub fn integrate_along(
    spec: &ManifoldSpec,
    path: &Path,
    step: f64,
    aux0: DVector<f64>,
    sys: &dyn AuxSystem,
    mut observer: Option<&mut dyn FnMut(Sample<'_>)>,
) -> Result<Run> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::arg(format!("integration step must be positive, got {step}")));
    }
    let n = spec.dim();
    if path.dim() != n {
        return Err(Error::arg("path dimension does not match manifold"));
    }
    spec.check_point(&path.start)?;
    let na = aux0.len();
    let mut x = DVector::from_column_slice(&path.start);
    let mut xdot = DVector::zeros(n);
    let mut aux = aux0;
    let mut t = 0.0;
    let mut steps = 0;
    let mut max_correction = 0.0_f64;
    if let Some(obs) = observer.as_mut() {
        obs(Sample { t, x: &x, xdot: &xdot, aux: &aux, correction: 0.0 });
    }
    let done = |x, xdot, aux, t, steps, truncated, max_correction| {
        Ok(Run { x, xdot, aux, t, steps, truncated, max_correction })
    };
    for piece in &path.pieces {
        match piece {
            Piece::Segment { to } => {
                if to.len() != n {
                    return Err(Error::arg("segment endpoint dimension mismatch"));
                }
                let a = x.clone();
                let b = DVector::from_column_slice(to);
                let len = (&b - &a).norm();
                if len == 0.0 {
                    continue;
                }
                let dir = (&b - &a) / len;
                let m = (len / step).ceil().max(1.0) as usize;
                let h = len / m as f64;
                xdot = dir.clone();
                for s in 0..m {
                    let t0 = s as f64 * h;
                    let xs = |tau: f64| &a + &dir * tau;
                    let f = |tau: f64, y: &DVector<f64>| sys.rhs(spec, &xs(tau), &dir, y);
                    let next = match rk4_step(f, t0, &aux, h) {
                        Ok(v) => v,
                        Err(e) if is_domain(&e) => return done(x, xdot, aux, t, steps, true, max_correction),
                        Err(e) => return Err(e),
                    };
                    let xn = if s + 1 == m { b.clone() } else { xs(t0 + h) };
                    if !spec.domain().contains(xn.as_slice()) {
                        return done(x, xdot, aux, t, steps, true, max_correction);
                    }
                    aux = next;
                    x = xn;
                    let corr = sys.after_step(spec, &x, &mut aux)?;
                    max_correction = max_correction.max(corr);
                    t += h;
                    steps += 1;
                    if let Some(obs) = observer.as_mut() {
                        obs(Sample { t, x: &x, xdot: &xdot, aux: &aux, correction: corr });
                    }
                }
            }
            Piece::Geodesic { velocity, duration } => {
                if velocity.len() != n {
                    return Err(Error::arg("geodesic velocity dimension mismatch"));
                }
                if *duration < 0.0 {
                    return Err(Error::arg("geodesic duration must be nonnegative"));
                }
                if *duration == 0.0 {
                    continue;
                }
                let m = (duration / step).ceil().max(1.0) as usize;
                let h = duration / m as f64;
                let mut state = DVector::zeros(2 * n + na);
                state.rows_mut(0, n).copy_from(&x);
                state.rows_mut(n, n).copy_from_slice(velocity);
                state.rows_mut(2 * n, na).copy_from(&aux);
                let f = |_: f64, y: &DVector<f64>| -> Result<DVector<f64>> {
                    let xs = y.rows(0, n).into_owned();
                    let vs = y.rows(n, n).into_owned();
                    let ys = y.rows(2 * n, na).into_owned();
                    let mut out = DVector::zeros(2 * n + na);
                    out.rows_mut(0, n).copy_from(&vs);
                    out.rows_mut(n, n).copy_from(&geodesic_accel(spec, &xs, &vs)?);
                    out.rows_mut(2 * n, na).copy_from(&sys.rhs(spec, &xs, &vs, &ys)?);
                    Ok(out)
                };
                xdot = DVector::from_column_slice(velocity);
                for _ in 0..m {
                    let next = match rk4_step(f, 0.0, &state, h) {
                        Ok(v) => v,
                        Err(e) if is_domain(&e) => return done(x, xdot, aux, t, steps, true, max_correction),
                        Err(e) => return Err(e),
                    };
                    let xn = next.rows(0, n).into_owned();
                    if !spec.domain().contains(xn.as_slice()) {
                        return done(x, xdot, aux, t, steps, true, max_correction);
                    }
                    state = next;
                    x = xn;
                    xdot = state.rows(n, n).into_owned();
                    aux = state.rows(2 * n, na).into_owned();
                    let corr = sys.after_step(spec, &x, &mut aux)?;
                    state.rows_mut(2 * n, na).copy_from(&aux);
                    max_correction = max_correction.max(corr);
                    t += h;
                    steps += 1;
                    if let Some(obs) = observer.as_mut() {
                        obs(Sample { t, x: &x, xdot: &xdot, aux: &aux, correction: corr });
                    }
                }
            }
        }
    }
    done(x, xdot, aux, t, steps, false, max_correction)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold;

    struct Decay;
    impl AuxSystem for Decay {
        fn rhs(&self, _: &ManifoldSpec, _: &DVector<f64>, _: &DVector<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
            Ok(-y)
        }
    }

    #[test]
    fn rk4_is_fourth_order() {
        let err = |h: f64| {
            let mut y = DVector::from_element(1, 1.0);
            let m = (1.0 / h).round() as usize;
            for i in 0..m {
                y = rk4_step(|_, y| Ok(-y.clone()), i as f64 * h, &y, h).unwrap();
            }
            (y[0] - (-1.0f64).exp()).abs()
        };
        let ratio = err(0.1) / err(0.05);
        assert!((ratio - 16.0).abs() < 1.5, "ratio {ratio}");
    }

    #[test]
    fn segment_parameter_is_chart_length() {
        let spec = manifold::flat(2).unwrap();
        let p = Path::polyline(&[
            DVector::from_vec(vec![0.0, 0.0]),
            DVector::from_vec(vec![0.3, 0.4]),
            DVector::from_vec(vec![0.3, 0.0]),
        ])
        .unwrap();
        let run = integrate_along(&spec, &p, 1e-2, DVector::from_element(1, 1.0), &Decay, None).unwrap();
        assert!((run.t - 0.9).abs() < 1e-12);
        assert!((run.aux[0] - (-0.9f64).exp()).abs() < 1e-10);
        assert_eq!(run.x.as_slice(), &[0.3, 0.0]);
    }

    #[test]
    fn leaving_domain_truncates() {
        let spec = manifold::flat(1).unwrap();
        let p = Path::polyline(&[DVector::from_vec(vec![0.0]), DVector::from_vec(vec![5.0])]).unwrap();
        let run = integrate_along(&spec, &p, 1e-2, DVector::zeros(0), &NoAux, None).unwrap();
        assert!(run.truncated);
        assert!(run.x[0] < 2.0 && run.x[0] > 1.9);
    }

    #[test]
    fn reversal_of_geodesic_returns_home() {
        let spec = manifold::space_form(2, -1.0).unwrap();
        let x0 = DVector::from_vec(vec![0.1, -0.2]);
        let p = Path::geodesic(&x0, &DVector::from_vec(vec![0.5, 0.3]), 1.0);
        let back = p.reversed(&spec, 1e-3).unwrap();
        let run = integrate_along(&spec, &back, 1e-3, DVector::zeros(0), &NoAux, None).unwrap();
        assert!((run.x - x0).norm() < 1e-9);
    }
}
