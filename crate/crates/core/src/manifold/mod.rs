//! Chart-based Riemannian manifolds.
//!
//! A [`ManifoldSpec`] pairs a [`Metric`] (the coordinate expression of `g`)
//! with a box-shaped chart domain. Metrics written against [`MetricScalar`]
//! are differentiated exactly through forward-mode jets; metrics that only
//! provide `f64` values fall back to central finite differences.

mod builtins;
mod geodesic;
pub mod registry;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::jet::{Dual, Jet2, Scalar, MAX_VARS};

pub use builtins::{
    flat, lw2, lw3, perturbed_flat, space_form, warped_product, wp1, wp2_polar, CustomMetric,
    CustomWarp, FlatMetric, PerturbedFlat, SpaceFormChart, WarpKind, WarpedProduct,
};
pub use geodesic::{geodesic, jacobi_check, lc_transport, shoot, Geodesic, JacobiOutcome};

/// Central-difference step for first metric derivatives.
pub const FD_STEP_FIRST: f64 = 1e-5;
/// Central-difference step for second metric derivatives.
pub const FD_STEP_SECOND: f64 = 1e-4;

/// Scalars a [`Metric`] can be evaluated on.
pub trait MetricScalar: Scalar {
    fn eval_metric(m: &dyn Metric, y: &[Self]) -> Option<Vec<Self>>;
}

impl MetricScalar for f64 {
    fn eval_metric(m: &dyn Metric, y: &[Self]) -> Option<Vec<Self>> {
        Some(m.entries_f64(y))
    }
}

impl MetricScalar for Dual {
    fn eval_metric(m: &dyn Metric, y: &[Self]) -> Option<Vec<Self>> {
        m.entries_dual(y)
    }
}

impl MetricScalar for Jet2 {
    fn eval_metric(m: &dyn Metric, y: &[Self]) -> Option<Vec<Self>> {
        m.entries_jet(y)
    }
}

/// Coordinate expression of a Riemannian metric; entries are row-major `n*n`.
pub trait Metric: Send + Sync + std::fmt::Debug {
    fn dim(&self) -> usize;
    fn entries_f64(&self, y: &[f64]) -> Vec<f64>;
    /// `None` when the metric cannot be evaluated on jets.
    fn entries_dual(&self, y: &[Dual]) -> Option<Vec<Dual>>;
    fn entries_jet(&self, y: &[Jet2]) -> Option<Vec<Jet2>>;
}

/// A metric given by one formula generic over the scalar type.
pub trait MetricFormula: Send + Sync + std::fmt::Debug {
    fn dim(&self) -> usize;
    fn formula<S: MetricScalar>(&self, y: &[S]) -> Option<Vec<S>>;
}

impl<T: MetricFormula> Metric for T {
    fn dim(&self) -> usize {
        MetricFormula::dim(self)
    }
    fn entries_f64(&self, y: &[f64]) -> Vec<f64> {
        self.formula(y).expect("f64 evaluation always available")
    }
    fn entries_dual(&self, y: &[Dual]) -> Option<Vec<Dual>> {
        self.formula(y)
    }
    fn entries_jet(&self, y: &[Jet2]) -> Option<Vec<Jet2>> {
        self.formula(y)
    }
}

/// Axis-aligned open box in chart coordinates.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Domain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Domain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::arg("domain bounds must be nonempty and equally long"));
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a < b)) {
            return Err(Error::arg(format!("empty domain box {lo:?} .. {hi:?}")));
        }
        Ok(Self { lo, hi })
    }

    pub fn cube(n: usize, half_width: f64) -> Self {
        Self {
            lo: vec![-half_width; n],
            hi: vec![half_width; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(v, (a, b))| v.is_finite() && a < v && v < b)
    }

    /// Box product, coordinates of `self` first.
    pub fn product(&self, other: &Domain) -> Domain {
        let mut lo = self.lo.clone();
        lo.extend_from_slice(&other.lo);
        let mut hi = self.hi.clone();
        hi.extend_from_slice(&other.hi);
        Domain { lo, hi }
    }

    pub fn center(&self) -> DVector<f64> {
        DVector::from_iterator(self.dim(), self.lo.iter().zip(&self.hi).map(|(a, b)| 0.5 * (a + b)))
    }
}

/// Structural description of a spec, echoed in reports.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Kind {
    SpaceForm { n: usize, c: f64 },
    Flat { n: usize },
    PerturbedFlat { n: usize, amplitude: f64, seed: u64 },
    WarpedProduct { base: Box<Kind>, fiber: Box<Kind>, warp: String },
    Custom { name: String },
}

/// How metric derivatives are obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivMode {
    /// Jets when the metric supports them, else finite differences.
    Auto,
    FiniteDifference,
}

#[derive(Clone, Debug)]
pub struct ManifoldSpec {
    name: String,
    metric: Arc<dyn Metric>,
    domain: Domain,
    kind: Kind,
}

/// Tangent vector at a chart point.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentVector {
    pub base: DVector<f64>,
    pub comp: DVector<f64>,
}

impl TangentVector {
    pub fn new(base: DVector<f64>, comp: DVector<f64>) -> Result<Self> {
        if base.len() != comp.len() {
            return Err(Error::arg("tangent vector and base point differ in dimension"));
        }
        Ok(Self { base, comp })
    }

    pub fn norm(&self, spec: &ManifoldSpec) -> Result<f64> {
        let g = spec.metric_at(self.base.as_slice())?;
        Ok(g_inner(&g, &self.comp, &self.comp).sqrt())
    }
}

pub fn g_inner(g: &DMatrix<f64>, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
    (u.transpose() * g * v)[(0, 0)]
}

/// `B(X,Y)Z = g(Y,Z)X - g(X,Z)Y`.
pub fn b_operator(g: &DMatrix<f64>, x: &DVector<f64>, y: &DVector<f64>, z: &DVector<f64>) -> DVector<f64> {
    x * g_inner(g, y, z) - y * g_inner(g, x, z)
}

/// Christoffel symbols `Γ^k_{ij}` at a point; storage `[k][i][j]`.
#[derive(Clone, Debug)]
pub struct Christoffel {
    n: usize,
    data: Vec<f64>,
}

impl Christoffel {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![0.0; n * n * n] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        self.data[(k * self.n + i) * self.n + j]
    }

    fn set(&mut self, k: usize, i: usize, j: usize, v: f64) {
        let n = self.n;
        self.data[(k * n + i) * n + j] = v;
    }

    /// `(Γ(u, v))^k = Γ^k_{ij} u^i v^j`.
    pub fn contract(&self, u: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let n = self.n;
        DVector::from_fn(n, |k, _| {
            let mut s = 0.0;
            for i in 0..n {
                if u[i] == 0.0 {
                    continue;
                }
                for j in 0..n {
                    s += self.get(k, i, j) * u[i] * v[j];
                }
            }
            s
        })
    }

    /// Matrix `M[k][j] = Γ^k_{ij} u^i`, so that `∇_u Y = dY(u) + M Y`.
    pub fn along(&self, u: &DVector<f64>) -> DMatrix<f64> {
        let n = self.n;
        DMatrix::from_fn(n, n, |k, j| (0..n).map(|i| self.get(k, i, j) * u[i]).sum())
    }

    pub fn max_abs_diff(&self, other: &Christoffel) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0_f64, |a, (x, y)| a.max((x - y).abs()))
    }
}

/// Riemann tensor `R^l_{kij}` with `R(∂_i, ∂_j)∂_k = R^l_{kij} ∂_l`.
#[derive(Clone, Debug)]
pub struct Riemann {
    n: usize,
    data: Vec<f64>,
    /// Metric at the evaluation point.
    pub g: DMatrix<f64>,
}

impl Riemann {
    pub fn get(&self, l: usize, k: usize, i: usize, j: usize) -> f64 {
        let n = self.n;
        self.data[((l * n + k) * n + i) * n + j]
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// `R(X,Y)` as an endomorphism `[l][k]` of the tangent space.
    pub fn operator(&self, x: &DVector<f64>, y: &DVector<f64>) -> DMatrix<f64> {
        let n = self.n;
        DMatrix::from_fn(n, n, |l, k| {
            let mut s = 0.0;
            for i in 0..n {
                for j in 0..n {
                    s += self.get(l, k, i, j) * x[i] * y[j];
                }
            }
            s
        })
    }

    pub fn apply(&self, x: &DVector<f64>, y: &DVector<f64>, z: &DVector<f64>) -> DVector<f64> {
        self.operator(x, y) * z
    }

    /// `R_{lkij} = g_{lm} R^m_{kij}`.
    pub fn lowered(&self, l: usize, k: usize, i: usize, j: usize) -> f64 {
        (0..self.n).map(|m| self.g[(l, m)] * self.get(m, k, i, j)).sum()
    }

    /// Largest violation of `R(X,Y) = -R(Y,X)`, pair symmetry and first Bianchi.
    pub fn symmetry_residual(&self) -> f64 {
        let n = self.n;
        let mut r = 0.0_f64;
        for l in 0..n {
            for k in 0..n {
                for i in 0..n {
                    for j in 0..n {
                        r = r.max((self.get(l, k, i, j) + self.get(l, k, j, i)).abs());
                        r = r.max((self.lowered(l, k, i, j) + self.lowered(k, l, i, j)).abs());
                        r = r.max((self.lowered(l, k, i, j) - self.lowered(i, j, l, k)).abs());
                        let bianchi = self.get(l, k, i, j) + self.get(l, i, j, k) + self.get(l, j, k, i);
                        r = r.max(bianchi.abs());
                    }
                }
            }
        }
        r
    }
}

/// Metric value and first (and optionally second) coordinate derivatives.
#[derive(Clone, Debug)]
pub struct MetricJet {
    pub g: DMatrix<f64>,
    /// `dg[m] = ∂_m g`.
    pub dg: Vec<DMatrix<f64>>,
    /// `ddg[a][b] = ∂_a ∂_b g`.
    pub ddg: Option<Vec<Vec<DMatrix<f64>>>>,
}

impl ManifoldSpec {
    pub fn new(name: impl Into<String>, metric: Arc<dyn Metric>, domain: Domain, kind: Kind) -> Result<Self> {
        if metric.dim() != domain.dim() {
            return Err(Error::arg(format!(
                "metric dimension {} does not match domain dimension {}",
                metric.dim(),
                domain.dim()
            )));
        }
        if metric.dim() == 0 {
            return Err(Error::arg("manifold dimension must be at least 1"));
        }
        Ok(Self {
            name: name.into(),
            metric,
            domain,
            kind,
        })
    }

    pub fn dim(&self) -> usize {
        self.metric.dim()
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn kind(&self) -> &Kind {
        &self.kind
    }

    pub fn metric(&self) -> &Arc<dyn Metric> {
        &self.metric
    }

    /// Same metric on a different chart box.
    pub fn with_domain(&self, domain: Domain) -> Result<Self> {
        Self::new(self.name.clone(), self.metric.clone(), domain, self.kind.clone())
    }

    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn supports_jets(&self) -> bool {
        self.dim() <= MAX_VARS
            && self
                .metric
                .entries_dual(&Dual::variables(self.domain.center().as_slice()))
                .is_some()
    }

    pub fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::arg(format!(
                "point has {} coordinates, manifold has dimension {}",
                x.len(),
                self.dim()
            )));
        }
        if !self.domain.contains(x) {
            return Err(Error::Domain { point: x.to_vec() });
        }
        Ok(())
    }

    fn raw_metric(&self, x: &[f64]) -> DMatrix<f64> {
        let n = self.dim();
        DMatrix::from_row_slice(n, n, &self.metric.entries_f64(x))
    }

    /// Symmetric positive-definite metric matrix at `x`.
    pub fn metric_at(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        self.check_point(x)?;
        let g = self.raw_metric(x);
        if g.iter().any(|v| !v.is_finite()) || g.clone().cholesky().is_none() {
            return Err(Error::numeric(format!("metric is not positive definite at {x:?}")));
        }
        Ok(g)
    }

    pub fn metric_jet(&self, x: &[f64], second: bool, mode: DerivMode) -> Result<MetricJet> {
        self.check_point(x)?;
        let n = self.dim();
        if mode == DerivMode::Auto && n <= MAX_VARS {
            if second {
                if let Some(e) = self.metric.entries_jet(&Jet2::variables(x)) {
                    return Ok(unpack_jet2(n, &e));
                }
            } else if let Some(e) = self.metric.entries_dual(&Dual::variables(x)) {
                return Ok(unpack_dual(n, &e));
            }
        }
        Ok(self.fd_jet(x, second))
    }

    fn fd_jet(&self, x: &[f64], second: bool) -> MetricJet {
        let n = self.dim();
        let g = self.raw_metric(x);
        let shifted = |d: &[(usize, f64)]| {
            let mut y = x.to_vec();
            for &(i, h) in d {
                y[i] += h;
            }
            self.raw_metric(&y)
        };
        let h1 = FD_STEP_FIRST;
        let dg: Vec<DMatrix<f64>> = (0..n)
            .map(|m| (shifted(&[(m, h1)]) - shifted(&[(m, -h1)])) / (2.0 * h1))
            .collect();
        let ddg = second.then(|| {
            let h = FD_STEP_SECOND;
            let mut out = vec![vec![DMatrix::zeros(n, n); n]; n];
            for a in 0..n {
                for b in a..n {
                    let d = if a == b {
                        (shifted(&[(a, h)]) - &g * 2.0 + shifted(&[(a, -h)])) / (h * h)
                    } else {
                        (shifted(&[(a, h), (b, h)]) - shifted(&[(a, h), (b, -h)])
                            - shifted(&[(a, -h), (b, h)])
                            + shifted(&[(a, -h), (b, -h)]))
                            / (4.0 * h * h)
                    };
                    out[b][a] = d.clone();
                    out[a][b] = d;
                }
            }
            out
        });
        MetricJet { g, dg, ddg }
    }

    pub fn christoffel(&self, x: &[f64]) -> Result<Christoffel> {
        self.christoffel_with(x, DerivMode::Auto)
    }

    pub fn christoffel_with(&self, x: &[f64], mode: DerivMode) -> Result<Christoffel> {
        Ok(self.connection_data(x, mode)?.1)
    }

    /// Metric together with its Christoffel symbols.
    pub fn connection_data(&self, x: &[f64], mode: DerivMode) -> Result<(DMatrix<f64>, Christoffel)> {
        let jet = self.metric_jet(x, false, mode)?;
        let ginv = invert_metric(&jet.g, x)?;
        let gamma = christoffel_from(&ginv, &jet.dg);
        Ok((jet.g, gamma))
    }

    pub fn riemann(&self, x: &[f64]) -> Result<Riemann> {
        self.riemann_with(x, DerivMode::Auto)
    }

    pub fn riemann_with(&self, x: &[f64], mode: DerivMode) -> Result<Riemann> {
        let n = self.dim();
        let jet = self.metric_jet(x, true, mode)?;
        let ddg = jet.ddg.as_ref().expect("second derivatives requested");
        let ginv = invert_metric(&jet.g, x)?;
        let gamma = christoffel_from(&ginv, &jet.dg);
        // ∂_m Γ^k_{ij}
        let mut dgamma = vec![Christoffel::zeros(n); n];
        for m in 0..n {
            let dginv = -(&ginv * &jet.dg[m] * &ginv);
            for k in 0..n {
                for i in 0..n {
                    for j in 0..n {
                        let mut s = 0.0;
                        for l in 0..n {
                            let t = jet.dg[i][(l, j)] + jet.dg[j][(l, i)] - jet.dg[l][(i, j)];
                            let dt = ddg[m][i][(l, j)] + ddg[m][j][(l, i)] - ddg[m][l][(i, j)];
                            s += dginv[(k, l)] * t + ginv[(k, l)] * dt;
                        }
                        dgamma[m].set(k, i, j, 0.5 * s);
                    }
                }
            }
        }
        let mut data = vec![0.0; n * n * n * n];
        for l in 0..n {
            for k in 0..n {
                for i in 0..n {
                    for j in 0..n {
                        let mut v = dgamma[i].get(l, j, k) - dgamma[j].get(l, i, k);
                        for m in 0..n {
                            v += gamma.get(l, i, m) * gamma.get(m, j, k)
                                - gamma.get(l, j, m) * gamma.get(m, i, k);
                        }
                        data[((l * n + k) * n + i) * n + j] = v;
                    }
                }
            }
        }
        Ok(Riemann { n, data, g: jet.g })
    }

    /// `Γ^k_{ij}` and `R^l_{kij}` from a single second-order jet.
    pub fn curvature_data(&self, x: &[f64]) -> Result<(Christoffel, Riemann)> {
        let r = self.riemann(x)?;
        let c = self.christoffel(x)?;
        Ok((c, r))
    }

    /// Sectional curvature of the plane spanned by `u`, `v` at `x`.
    pub fn sectional_curvature(&self, x: &[f64], u: &DVector<f64>, v: &DVector<f64>) -> Result<f64> {
        let r = self.riemann(x)?;
        let g = &r.g;
        let num = g_inner(g, &r.apply(u, v, v), u);
        let den = g_inner(g, u, u) * g_inner(g, v, v) - g_inner(g, u, v).powi(2);
        if den <= 0.0 {
            return Err(Error::arg("sectional curvature needs independent vectors"));
        }
        Ok(num / den)
    }
}

fn invert_metric(g: &DMatrix<f64>, x: &[f64]) -> Result<DMatrix<f64>> {
    g.clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::numeric(format!("degenerate metric at {x:?}")))
}

fn christoffel_from(ginv: &DMatrix<f64>, dg: &[DMatrix<f64>]) -> Christoffel {
    let n = ginv.nrows();
    let mut gamma = Christoffel::zeros(n);
    for k in 0..n {
        for i in 0..n {
            for j in i..n {
                let mut s = 0.0;
                for l in 0..n {
                    s += ginv[(k, l)] * (dg[i][(l, j)] + dg[j][(l, i)] - dg[l][(i, j)]);
                }
                gamma.set(k, i, j, 0.5 * s);
                gamma.set(k, j, i, 0.5 * s);
            }
        }
    }
    gamma
}

fn unpack_dual(n: usize, e: &[Dual]) -> MetricJet {
    let g = DMatrix::from_fn(n, n, |i, j| e[i * n + j].v);
    let dg = (0..n)
        .map(|m| DMatrix::from_fn(n, n, |i, j| e[i * n + j].d[m]))
        .collect();
    MetricJet { g, dg, ddg: None }
}

fn unpack_jet2(n: usize, e: &[Jet2]) -> MetricJet {
    let g = DMatrix::from_fn(n, n, |i, j| e[i * n + j].v);
    let dg = (0..n)
        .map(|m| DMatrix::from_fn(n, n, |i, j| e[i * n + j].d[m]))
        .collect();
    let ddg = (0..n)
        .map(|a| {
            (0..n)
                .map(|b| DMatrix::from_fn(n, n, |i, j| e[i * n + j].h[a][b]))
                .collect()
        })
        .collect();
    MetricJet { g, dg, ddg: Some(ddg) }
}

#[cfg(test)]
mod tests;
