//! Warped-product structure from a reducible rolling holonomy (c = -1).
//!
//! An invariant subspace `V1` at the base point is spread over the chart by
//! parallel transport along chart rays. It yields the split
//! `(0,1) = (W1,w1) + (W2,w2)` with `(Wα,wα) ∈ Vα` and the distributions
//! `D1 = (V2^M)^⊥`, `D2 = (V1^M)^⊥`, where `Vα^M` are the tangent parts.
//! A warped-product splitting needs integrable, umbilic leaves
//! (`II(X,Y) = g(X,Y) ν`) with parallel mean curvature `ν`; the warp then
//! satisfies `ν = -∇f / f`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::connection::{fiber_metric, nabla_c, transport_block, SectionJet};
use crate::error::{require_nonzero_c, Error, Result};
use crate::holonomy::{orthonormal_frame, HolonomyReport};
use crate::linalg;
use crate::manifold::{b_operator, g_inner, DerivMode, ManifoldSpec, FD_STEP_FIRST, FD_STEP_SECOND};
use crate::ode::{integrate_along, AuxSystem, Path};

pub type VectorField = Arc<dyn Fn(&DVector<f64>) -> Result<DVector<f64>> + Send + Sync>;

/// Default RK4 step for transporting subbundles across the chart.
pub const BUNDLE_STEP: f64 = 2e-3;

fn unit(n: usize, i: usize) -> DVector<f64> {
    let mut e = DVector::zeros(n);
    e[i] = 1.0;
    e
}

/// g-orthogonal projector onto the column span of `x`.
fn g_projector(g: &DMatrix<f64>, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x.ncols() == 0 {
        return Ok(DMatrix::zeros(g.nrows(), g.nrows()));
    }
    let gram = x.transpose() * g * x;
    let inv = gram
        .try_inverse()
        .ok_or_else(|| Error::numeric("degenerate spanning set"))?;
    Ok(x * inv * x.transpose() * g)
}

/// Columns spanning the g-orthogonal complement of the span of `x`.
fn g_complement(g: &DMatrix<f64>, x: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    if x.ncols() == 0 {
        return DMatrix::identity(g.nrows(), g.nrows());
    }
    linalg::null_space(&(x.transpose() * g), tol)
}

fn g_norm(g: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    g_inner(g, v, v).max(0.0).sqrt()
}

/// A holonomy-invariant subbundle of `TM ⊕ R`, extended from its value at
/// `base` by parallel transport along straight chart segments.
#[derive(Clone, Debug)]
pub struct ParallelSubbundle {
    pub spec: ManifoldSpec,
    pub c: f64,
    pub base: DVector<f64>,
    /// Basis at `base` in extended coordinate components.
    pub basis: DMatrix<f64>,
    pub step: f64,
}

impl ParallelSubbundle {
    pub fn new(spec: &ManifoldSpec, c: f64, base: &DVector<f64>, basis: DMatrix<f64>, step: f64) -> Result<Self> {
        require_nonzero_c(c)?;
        let n = spec.dim();
        if basis.nrows() != n + 1 || basis.ncols() == 0 || basis.ncols() > n {
            return Err(Error::arg("subbundle basis must be (n+1) x k with 0 < k <= n"));
        }
        spec.check_point(base.as_slice())?;
        Ok(Self { spec: spec.clone(), c, base: base.clone(), basis, step })
    }

    /// `V1` of a classification report, converted to coordinate components.
    pub fn from_report(spec: &ManifoldSpec, report: &HolonomyReport, step: f64) -> Result<Self> {
        let v1 = report
            .v1
            .as_ref()
            .ok_or_else(|| Error::WrongCase("report carries no invariant subspace".into()))?;
        let e = orthonormal_frame(spec, report.base_x.as_slice())?;
        Self::new(spec, report.c, &report.base_x, e * &v1.vectors, step)
    }

    /// The lightlike line `(L, 1)` of a report, in coordinate components.
    pub fn null_line_from_report(spec: &ManifoldSpec, report: &HolonomyReport, step: f64) -> Result<Self> {
        let l = report
            .null_direction
            .as_ref()
            .ok_or_else(|| Error::WrongCase("report carries no null direction".into()))?;
        let n = l.len();
        let mut v = DVector::from_element(n + 1, 1.0);
        v.rows_mut(0, n).copy_from(l);
        Self::new(spec, report.c, &report.base_x, DMatrix::from_column_slice(n + 1, 1, v.as_slice()), step)
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    /// Basis at `p`, transported along the segment from the base point.
    pub fn at(&self, p: &DVector<f64>) -> Result<DMatrix<f64>> {
        if p == &self.base {
            return Ok(self.basis.clone());
        }
        let path = Path::polyline(&[self.base.clone(), p.clone()])?;
        let res = transport_block(&self.spec, self.c, &path, &self.basis, self.step)?;
        if res.truncated {
            return Err(Error::Domain { point: p.iter().copied().collect() });
        }
        Ok(res.block)
    }

    /// Residual `|V(p) - proj_{V'(p)} V(p)|` between the ray transport and
    /// the transport along the axis-by-axis staircase to `p`.
    pub fn path_independence(&self, p: &DVector<f64>) -> Result<f64> {
        let n = self.spec.dim();
        let mut pts = vec![self.base.clone()];
        let mut cur = self.base.clone();
        for i in 0..n {
            cur[i] = p[i];
            pts.push(cur.clone());
        }
        let res = transport_block(&self.spec, self.c, &Path::polyline(&pts)?, &self.basis, self.step)?;
        let direct = self.at(p)?;
        let q = res.block.clone().qr().q();
        let resid = &direct - &q * (q.transpose() * &direct);
        Ok(linalg::max_abs(&resid) / linalg::max_abs(&direct).max(1e-300))
    }

    /// Samples `(t, x, x', basis)` along a geodesic from the base point.
    pub fn along_geodesic(&self, u: &DVector<f64>, length: f64, step: f64) -> Result<Vec<(f64, DVector<f64>, DVector<f64>, DMatrix<f64>)>> {
        struct Block<'a>(&'a ParallelSubbundle);
        impl AuxSystem for Block<'_> {
            fn rhs(&self, spec: &ManifoldSpec, x: &DVector<f64>, xdot: &DVector<f64>, aux: &DVector<f64>) -> Result<DVector<f64>> {
                let n = spec.dim();
                let (g, gamma) = spec.connection_data(x.as_slice(), DerivMode::Auto)?;
                let w = crate::connection::connection_matrix(&g, &gamma, self.0.c, xdot);
                let v = DMatrix::from_column_slice(n + 1, self.0.dim(), aux.as_slice());
                Ok(DVector::from_column_slice((-w * v).as_slice()))
            }
        }
        let n = self.spec.dim();
        let k = self.dim();
        let mut out = Vec::new();
        let mut obs = |s: crate::ode::Sample<'_>| {
            let xdot = if s.t == 0.0 { u.clone() } else { s.xdot.clone() };
            out.push((s.t, s.x.clone(), xdot, DMatrix::from_column_slice(n + 1, k, s.aux.as_slice())));
        };
        let run = integrate_along(
            &self.spec,
            &Path::geodesic(&self.base, u, length),
            step,
            DVector::from_column_slice(self.basis.as_slice()),
            &Block(self),
            Some(&mut obs),
        )?;
        if run.truncated {
            return Err(Error::Domain { point: run.x.iter().copied().collect() });
        }
        Ok(out)
    }
}

/// Value of the split of `(0, 1)` at one point.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SplitValue {
    #[serde(serialize_with = "crate::serial::vector")]
    pub x: DVector<f64>,
    #[serde(serialize_with = "crate::serial::vector")]
    pub big_w1: DVector<f64>,
    pub w1: f64,
    #[serde(serialize_with = "crate::serial::vector")]
    pub big_w2: DVector<f64>,
    pub w2: f64,
}

impl SplitValue {
    /// `max(|W1 + W2|, |w1 + w2 - 1|)`, zero by construction up to rounding.
    pub fn sum_residual(&self) -> f64 {
        (&self.big_w1 + &self.big_w2).amax().max((self.w1 + self.w2 - 1.0).abs())
    }

    /// `h((W1,w1), (W2,w2))` with `g` the metric at `x`.
    pub fn cross_h(&self, g: &DMatrix<f64>, c: f64) -> f64 {
        g_inner(g, &self.big_w1, &self.big_w2) + self.w1 * self.w2 / c
    }

    /// `|W2|^2_g + w2^2 / c`.
    pub fn h_norm_sq2(&self, g: &DMatrix<f64>, c: f64) -> f64 {
        g_inner(g, &self.big_w2, &self.big_w2) + self.w2 * self.w2 / c
    }

    /// Distance of `(0, 1)` from `V1`, i.e. the size of `(W2, w2)`.
    pub fn n1_residual(&self) -> f64 {
        self.big_w2.norm().max(self.w2.abs())
    }

    /// Mean-curvature normal `ν_α = W_α / w_α`; `None` where `w_α` vanishes.
    pub fn normal(&self, alpha: usize) -> Option<DVector<f64>> {
        let (w, big) = if alpha == 1 { (self.w1, &self.big_w1) } else { (self.w2, &self.big_w2) };
        (w.abs() > 1e-12).then(|| big / w)
    }
}

/// h-orthogonal projection of `(0,1)` onto the span of `basis` (`V1`) and
/// its complement (`V2`).
fn split_from_basis(h: &DMatrix<f64>, basis: &DMatrix<f64>, x: &DVector<f64>) -> Result<SplitValue> {
    let n = x.len();
    let gram = basis.transpose() * h * basis;
    let scale = linalg::max_abs(&gram).max(1e-300);
    let svals = linalg::singular_values(&gram);
    if svals.iter().copied().fold(f64::INFINITY, f64::min) <= 1e-10 * scale {
        return Err(Error::WrongCase(
            "V1 is degenerate for h (lightlike case); use lightlike_structure".into(),
        ));
    }
    let e = unit(n + 1, n);
    let coeff = gram
        .lu()
        .solve(&(basis.transpose() * h * &e))
        .ok_or_else(|| Error::numeric("singular Gram matrix"))?;
    let v1 = basis * coeff;
    let v2 = &e - &v1;
    Ok(SplitValue {
        x: x.clone(),
        big_w1: v1.rows(0, n).into_owned(),
        w1: v1[n],
        big_w2: v2.rows(0, n).into_owned(),
        w2: v2[n],
    })
}

/// The split `(0,1) = (W1,w1) + (W2,w2)` as a field over the chart.
#[derive(Clone, Debug)]
pub struct SplitSection {
    pub bundle: ParallelSubbundle,
}

impl SplitSection {
    pub fn at(&self, p: &DVector<f64>) -> Result<SplitValue> {
        let h = fiber_metric(&self.bundle.spec, self.bundle.c, p.as_slice())?;
        let v = split_from_basis(&h, &self.bundle.at(p)?, p)?;
        if v.w1.abs() < 1e-8 {
            return Err(Error::numeric(format!(
                "w1 = {:e} vanishes at {:?}; the invariant-subspace input is inconsistent",
                v.w1,
                p.as_slice()
            )));
        }
        Ok(v)
    }

    /// Split with `V1` and `V2` exchanged; used when `(0,1)` lies in `V1`.
    pub fn swapped(&self) -> Result<SplitSection> {
        let b = &self.bundle;
        let h = fiber_metric(&b.spec, b.c, b.base.as_slice())?;
        let perp = linalg::null_space(&(b.basis.transpose() * h), 1e-10);
        Ok(SplitSection { bundle: ParallelSubbundle::new(&b.spec, b.c, &b.base, perp, b.step)? })
    }

    /// Tangent parts `(V1^M, V2^M)` at `p`, as column bases.
    pub fn tangent_parts(&self, p: &DVector<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let b = &self.bundle;
        let n = b.spec.dim();
        let v1 = b.at(p)?;
        let h = fiber_metric(&b.spec, b.c, p.as_slice())?;
        let v2 = linalg::null_space(&(v1.transpose() * h), 1e-10);
        let t1 = linalg::column_basis(&v1.rows(0, n).into_owned(), 1e-8);
        let t2 = linalg::column_basis(&v2.rows(0, n).into_owned(), 1e-8);
        Ok((t1, t2))
    }
}

/// Splits `(0,1)` along the transported `V1` (transversal case).
pub fn split_unit_section(v1: &ParallelSubbundle) -> Result<SplitSection> {
    if v1.c != -1.0 {
        return Err(Error::arg("the split of (0,1) is defined for c = -1"));
    }
    let h = fiber_metric(&v1.spec, v1.c, v1.base.as_slice())?;
    split_from_basis(&h, &v1.basis, &v1.base)?;
    Ok(SplitSection { bundle: v1.clone() })
}

/// `max |R(X,Y) W_α + B(X,Y) W_α|` over coordinate pairs and both α.
pub fn curvature_annihilation_check(spec: &ManifoldSpec, split: &SplitSection, points: &[DVector<f64>]) -> Result<f64> {
    let n = spec.dim();
    let mut worst = 0.0_f64;
    for p in points {
        let v = split.at(p)?;
        let g = spec.metric_at(p.as_slice())?;
        let r = spec.riemann(p.as_slice())?;
        for i in 0..n {
            for j in (i + 1)..n {
                let (ei, ej) = (unit(n, i), unit(n, j));
                for w in [&v.big_w1, &v.big_w2] {
                    let res = r.apply(&ei, &ej, w) + b_operator(&g, &ei, &ej, w);
                    worst = worst.max(res.amax());
                }
            }
        }
    }
    Ok(worst)
}

/// A distribution given by spanning vector fields on the chart.
#[derive(Clone)]
pub struct DistributionField {
    pub fields: Vec<VectorField>,
    pub rank: usize,
}

impl std::fmt::Debug for DistributionField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "DistributionField(rank {})", self.rank)
    }
}

impl DistributionField {
    pub fn new(fields: Vec<VectorField>) -> Self {
        Self { rank: fields.len(), fields }
    }

    /// `span{∂_i : i ∈ idx}`.
    pub fn coordinate(n: usize, idx: &[usize]) -> Self {
        Self::new(
            idx.iter()
                .map(|&i| {
                    let e = unit(n, i);
                    Arc::new(move |_: &DVector<f64>| Ok(e.clone())) as VectorField
                })
                .collect(),
        )
    }

    /// Smooth spanning fields of the subspace field `sub` (columns in `TM`):
    /// g-orthogonal projections onto `sub(p)` of its basis at `reference`.
    pub fn from_subspaces<F>(spec: &ManifoldSpec, reference: &DVector<f64>, sub: F) -> Result<Self>
    where
        F: Fn(&DVector<f64>) -> Result<DMatrix<f64>> + Send + Sync + 'static,
    {
        let at_ref = sub(reference)?;
        if at_ref.ncols() == 0 {
            return Err(Error::WrongCase("distribution has rank zero at the reference point".into()));
        }
        let sub = Arc::new(sub);
        let fields = (0..at_ref.ncols())
            .map(|a| {
                let v = at_ref.column(a).into_owned();
                let sub = sub.clone();
                let spec = spec.clone();
                Arc::new(move |p: &DVector<f64>| {
                    let s = sub(p)?;
                    let g = spec.metric_at(p.as_slice())?;
                    Ok(g_projector(&g, &s)? * &v)
                }) as VectorField
            })
            .collect();
        Ok(Self { fields, rank: at_ref.ncols() })
    }

    /// `D1 = (V2^M)^⊥ `.
    pub fn d1(split: &SplitSection, reference: &DVector<f64>) -> Result<Self> {
        let s = split.clone();
        let spec = split.bundle.spec.clone();
        Self::from_subspaces(&split.bundle.spec, reference, move |p| {
            let (_, t2) = s.tangent_parts(p)?;
            Ok(g_complement(&spec.metric_at(p.as_slice())?, &t2, 1e-8))
        })
    }

    /// `D2 = (V1^M)^⊥`.
    pub fn d2(split: &SplitSection, reference: &DVector<f64>) -> Result<Self> {
        let s = split.clone();
        let spec = split.bundle.spec.clone();
        Self::from_subspaces(&split.bundle.spec, reference, move |p| {
            let (t1, _) = s.tangent_parts(p)?;
            Ok(g_complement(&spec.metric_at(p.as_slice())?, &t1, 1e-8))
        })
    }

    /// `L^⊥` for a nonvanishing field `L`.
    pub fn orthogonal_to(spec: &ManifoldSpec, reference: &DVector<f64>, l: VectorField) -> Result<Self> {
        let spec2 = spec.clone();
        Self::from_subspaces(spec, reference, move |p| {
            let g = spec2.metric_at(p.as_slice())?;
            let lp = l(p)?;
            Ok(g_complement(&g, &DMatrix::from_column_slice(lp.len(), 1, lp.as_slice()), 1e-10))
        })
    }

    /// Spanning vectors at `x` as columns.
    pub fn at(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        let cols: Vec<DVector<f64>> = self.fields.iter().map(|f| f(x)).collect::<Result<_>>()?;
        let n = x.len();
        let mut m = DMatrix::zeros(n, cols.len());
        for (j, c) in cols.iter().enumerate() {
            m.set_column(j, c);
        }
        Ok(m)
    }
}

/// Central-difference Jacobian `∂_j F^i` of a vector field.
fn field_jacobian(f: &VectorField, x: &DVector<f64>) -> Result<DMatrix<f64>> {
    let n = x.len();
    let h = FD_STEP_FIRST;
    let mut jac = DMatrix::zeros(n, n);
    for j in 0..n {
        let d = (f(&(x + unit(n, j) * h))? - f(&(x - unit(n, j) * h))?) / (2.0 * h);
        jac.set_column(j, &d);
    }
    Ok(jac)
}

#[derive(Clone, Debug, Serialize)]
pub struct FrobeniusOutcome {
    pub integrable: bool,
    /// Largest g-norm of a bracket component normal to `D`.
    pub residual: f64,
    /// Spanning fields dependent at `x`; the check was skipped.
    pub rank_drop: bool,
}

fn has_rank(span: &DMatrix<f64>, rank: usize) -> bool {
    linalg::rank(span, 1e-8) == rank
}

pub fn frobenius_check(spec: &ManifoldSpec, d: &DistributionField, x: &DVector<f64>, tol: f64) -> Result<FrobeniusOutcome> {
    let span = d.at(x)?;
    if !has_rank(&span, d.rank) {
        return Ok(FrobeniusOutcome { integrable: true, residual: 0.0, rank_drop: true });
    }
    let g = spec.metric_at(x.as_slice())?;
    let proj = g_projector(&g, &span)?;
    let jacs: Vec<DMatrix<f64>> = d.fields.iter().map(|f| field_jacobian(f, x)).collect::<Result<_>>()?;
    let mut worst = 0.0_f64;
    for a in 0..d.rank {
        for b in (a + 1)..d.rank {
            let br = &jacs[b] * span.column(a) - &jacs[a] * span.column(b);
            let normal = &br - &proj * &br;
            worst = worst.max(g_norm(&g, &normal));
        }
    }
    Ok(FrobeniusOutcome { integrable: worst <= tol, residual: worst, rank_drop: false })
}

/// Second fundamental form of the leaves of `D` at `x` on its spanning fields.
#[derive(Clone, Debug, Serialize)]
pub struct SecondFundamentalForm {
    #[serde(serialize_with = "crate::serial::matrix")]
    pub span: DMatrix<f64>,
    /// `ii[a][b]` = normal part of `∇_{X_a} X_b`.
    #[serde(skip)]
    pub ii: Vec<Vec<DVector<f64>>>,
    pub symmetry_residual: f64,
    #[serde(skip)]
    g: DMatrix<f64>,
}

impl SecondFundamentalForm {
    /// `max |II(X_a, X_b) - g(X_a, X_b) ν|_g`.
    pub fn umbilic_residual(&self, nu: &DVector<f64>) -> f64 {
        let mut worst = 0.0_f64;
        for a in 0..self.ii.len() {
            for b in 0..self.ii.len() {
                let ga = g_inner(&self.g, &self.span.column(a).into_owned(), &self.span.column(b).into_owned());
                worst = worst.max(g_norm(&self.g, &(&self.ii[a][b] - nu * ga)));
            }
        }
        worst
    }

    pub fn max_norm(&self) -> f64 {
        self.ii
            .iter()
            .flatten()
            .map(|v| g_norm(&self.g, v))
            .fold(0.0, f64::max)
    }
}

pub fn second_fundamental_form(spec: &ManifoldSpec, d: &DistributionField, x: &DVector<f64>) -> Result<SecondFundamentalForm> {
    let span = d.at(x)?;
    if !has_rank(&span, d.rank) {
        return Err(Error::numeric("distribution drops rank at the evaluation point"));
    }
    let (g, gamma) = spec.connection_data(x.as_slice(), DerivMode::Auto)?;
    let proj = g_projector(&g, &span)?;
    let jacs: Vec<DMatrix<f64>> = d.fields.iter().map(|f| field_jacobian(f, x)).collect::<Result<_>>()?;
    let k = d.rank;
    let mut ii = vec![vec![DVector::zeros(x.len()); k]; k];
    for a in 0..k {
        for b in 0..k {
            let xa = span.column(a).into_owned();
            let xb = span.column(b).into_owned();
            let cov = &jacs[b] * &xa + gamma.contract(&xa, &xb);
            ii[a][b] = &cov - &proj * &cov;
        }
    }
    let mut sym = 0.0_f64;
    for a in 0..k {
        for b in 0..k {
            sym = sym.max(g_norm(&g, &(&ii[a][b] - &ii[b][a])));
        }
    }
    Ok(SecondFundamentalForm { span, ii, symmetry_residual: sym, g })
}

#[derive(Clone, Debug, Serialize)]
pub struct SphericalOutcome {
    pub spherical: bool,
    /// Largest normal component of `∇_X ν` over spanning `X`.
    pub residual: f64,
    /// `ν` vanishes at `x`: umbilic leaves are totally geodesic there.
    pub degenerate: bool,
}

pub fn spherical_check(spec: &ManifoldSpec, d: &DistributionField, nu: &VectorField, x: &DVector<f64>, tol: f64) -> Result<SphericalOutcome> {
    let span = d.at(x)?;
    let (g, gamma) = spec.connection_data(x.as_slice(), DerivMode::Auto)?;
    let nu_x = nu(x)?;
    if g_norm(&g, &nu_x) <= 1e-12 {
        return Ok(SphericalOutcome { spherical: true, residual: 0.0, degenerate: true });
    }
    let proj = g_projector(&g, &span)?;
    let jac = field_jacobian(nu, x)?;
    let mut worst = 0.0_f64;
    for a in 0..span.ncols() {
        let xa = span.column(a).into_owned();
        let cov = &jac * &xa + gamma.contract(&xa, &nu_x);
        let normal = &cov - &proj * &cov;
        worst = worst.max(g_norm(&g, &normal));
    }
    Ok(SphericalOutcome { spherical: worst <= tol, residual: worst, degenerate: false })
}

/// Which normal field a subbundle defines.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalKind {
    /// `ν_α = W_α / w_α` of the split of `(0, 1)`.
    Split(usize),
    /// `L` with `(L, 1)` spanning a lightlike line.
    Null,
}

/// `L` from a transported lightlike line, scaled to unit scalar part.
fn null_from_basis(basis: &DMatrix<f64>) -> Result<DVector<f64>> {
    let n = basis.nrows() - 1;
    let v = basis.column(0).into_owned();
    if v[n].abs() < 1e-12 * v.norm() {
        return Err(Error::Inconsistent("null line has vanishing scalar part".into()));
    }
    Ok(v.rows(0, n).into_owned() / v[n])
}

fn normal_from_basis(spec: &ManifoldSpec, c: f64, x: &DVector<f64>, basis: &DMatrix<f64>, kind: NormalKind) -> Result<DVector<f64>> {
    match kind {
        NormalKind::Null => null_from_basis(basis),
        NormalKind::Split(alpha) => {
            let h = fiber_metric(spec, c, x.as_slice())?;
            let v = split_from_basis(&h, basis, x)?;
            v.normal(alpha)
                .ok_or_else(|| Error::numeric(format!("w{alpha} vanishes at {:?}", x.as_slice())))
        }
    }
}

/// The normal field of `kind` as a vector field on the chart.
pub fn normal_field(bundle: &ParallelSubbundle, kind: NormalKind) -> VectorField {
    let b = bundle.clone();
    Arc::new(move |p: &DVector<f64>| normal_from_basis(&b.spec, b.c, p, &b.at(p)?, kind))
}

/// Warp function recovered along a unit-speed geodesic.
#[derive(Clone, Debug, Serialize)]
pub struct WarpRecovery {
    pub t: Vec<f64>,
    /// `f(t)`, normalized to `f(0) = 1`.
    pub f: Vec<f64>,
    /// Least-squares fit `f ≈ A cosh t + B sinh t`.
    pub a: f64,
    pub b: f64,
    pub fit_residual: f64,
    /// `max |f'' - f| / max |f|` on interior samples.
    pub ode_residual: f64,
    /// Largest `|∂_i θ_j - ∂_j θ_i|` of `θ = g(ν, ·)` at probe points.
    pub closedness_residual: f64,
    pub profile: WarpProfile,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WarpProfile {
    /// `A = -B`: `f ∝ e^{-t}`.
    Exponential,
    /// `|B| < |A|`: `f ∝ cosh(t - t0)`.
    CoshShift,
    /// `|B| > |A|`: `f ∝ sinh(t - t0)`.
    SinhShift,
    Other,
}

impl WarpRecovery {
    /// `f` rescaled so the fitted pair sits on the unit hyperbola in the
    /// `(A, B)` plane: `A² - B² = ±1`.
    pub fn normalized(&self) -> Result<(Vec<f64>, f64, f64)> {
        let q = self.a * self.a - self.b * self.b;
        if q.abs() < 1e-12 {
            return Err(Error::NotAWarp("warp is exponential; no hyperbolic normalization".into()));
        }
        let s = q.abs().sqrt();
        Ok((self.f.iter().map(|v| v / s).collect(), self.a / s, self.b / s))
    }

    /// Relative error `max |f - target| / max |target|`.
    pub fn relative_error(&self, target: impl Fn(f64) -> f64) -> f64 {
        let mut num = 0.0_f64;
        let mut den = 0.0_f64;
        for (t, f) in self.t.iter().zip(&self.f) {
            num = num.max((f - target(*t)).abs());
            den = den.max(target(*t).abs());
        }
        num / den.max(1e-300)
    }
}

/// Closedness of the 1-form `g(ν, ·)` at `x` by central differences.
pub fn closedness_residual(spec: &ManifoldSpec, nu: &VectorField, x: &DVector<f64>) -> Result<f64> {
    let n = x.len();
    let h = FD_STEP_SECOND;
    let theta = |p: &DVector<f64>| -> Result<DVector<f64>> { Ok(spec.metric_at(p.as_slice())? * nu(p)?) };
    let mut d = DMatrix::zeros(n, n);
    for i in 0..n {
        let col = (theta(&(x + unit(n, i) * h))? - theta(&(x - unit(n, i) * h))?) / (2.0 * h);
        d.set_column(i, &col);
    }
    // d[(j, i)] = ∂_i θ_j
    Ok(linalg::max_abs(&(&d - d.transpose())))
}

/// Integrates `f'/f = -g(ν, γ')` along the geodesic from the base point of
/// `bundle` with unit initial velocity `u`, then fits `A cosh + B sinh`.
pub fn recover_warp(bundle: &ParallelSubbundle, kind: NormalKind, u: &DVector<f64>, length: f64, step: f64) -> Result<WarpRecovery> {
    let spec = &bundle.spec;
    let g0 = spec.metric_at(bundle.base.as_slice())?;
    if (g_inner(&g0, u, u) - 1.0).abs() > 1e-8 {
        return Err(Error::arg("base curve velocity must be unit"));
    }
    let samples = bundle.along_geodesic(u, length, step)?;
    let nu = normal_field(bundle, kind);
    let mut closed = 0.0_f64;
    for idx in [0, samples.len() / 2, samples.len() - 1] {
        closed = closed.max(closedness_residual(spec, &nu, &samples[idx].1)?);
    }
    if closed > 1e-4 {
        return Err(Error::NotAWarp(format!("g(ν, ·) is not closed: residual {closed:e}")));
    }
    let mut t = Vec::with_capacity(samples.len());
    let mut rate = Vec::with_capacity(samples.len());
    for (ti, x, xdot, basis) in &samples {
        let g = spec.metric_at(x.as_slice())?;
        let nu_x = normal_from_basis(spec, bundle.c, x, basis, kind)?;
        t.push(*ti);
        rate.push(-g_inner(&g, &nu_x, xdot));
    }
    let mut log_f = vec![0.0; t.len()];
    for k in 1..t.len() {
        log_f[k] = log_f[k - 1] + 0.5 * (t[k] - t[k - 1]) * (rate[k] + rate[k - 1]);
    }
    let f: Vec<f64> = log_f.iter().map(|v| v.exp()).collect();
    let design = DMatrix::from_fn(t.len(), 2, |i, j| if j == 0 { t[i].cosh() } else { t[i].sinh() });
    let rhs = DVector::from_column_slice(&f);
    let sol = design
        .clone()
        .svd(true, true)
        .solve(&rhs, 1e-14)
        .map_err(|e| Error::numeric(format!("warp fit failed: {e}")))?;
    let (a, b) = (sol[0], sol[1]);
    let fmax = f.iter().copied().fold(0.0, f64::max);
    let fit_residual = (design * &sol - &rhs).amax() / fmax;
    let mut ode = 0.0_f64;
    for k in 1..t.len() - 1 {
        let h1 = t[k] - t[k - 1];
        let h2 = t[k + 1] - t[k];
        let fpp = 2.0 * (h1 * f[k + 1] - (h1 + h2) * f[k] + h2 * f[k - 1]) / (h1 * h2 * (h1 + h2));
        ode = ode.max((fpp - f[k]).abs());
    }
    let profile = if (a + b).abs() <= 1e-4 * a.abs().max(1e-300) {
        WarpProfile::Exponential
    } else if b.abs() < a.abs() {
        WarpProfile::CoshShift
    } else if b.abs() > a.abs() {
        WarpProfile::SinhShift
    } else {
        WarpProfile::Other
    };
    Ok(WarpRecovery { t, f, a, b, fit_residual, ode_residual: ode / fmax, closedness_residual: closed, profile })
}

/// Base-curve direction for warp recovery: up the gradient of `f1`, or a
/// unit vector of `V2^M` where `ν1` vanishes.
pub fn warp_direction(split: &SplitSection, base: &DVector<f64>) -> Result<DVector<f64>> {
    let spec = &split.bundle.spec;
    let g = spec.metric_at(base.as_slice())?;
    let v = split.at(base)?;
    let nu = v.normal(1).unwrap_or_else(|| DVector::zeros(base.len()));
    let norm = g_inner(&g, &nu, &nu).sqrt();
    if norm > 1e-8 {
        return Ok(-nu / norm);
    }
    let (_, t2) = split.tangent_parts(base)?;
    if t2.ncols() == 0 {
        return Err(Error::WrongCase("V2 has no tangent part at the base point".into()));
    }
    let d = t2.column(0).into_owned();
    Ok(&d / g_inner(&g, &d, &d).sqrt())
}

/// `max |f1^2 - f2^2 - 1|` after normalizing each warp to `|A² - B²| = 1`.
pub fn hyperbolic_pair_residual(f1: &WarpRecovery, f2: &WarpRecovery) -> Result<f64> {
    if f1.t.len() != f2.t.len() {
        return Err(Error::arg("warp samples differ in length"));
    }
    let (a, _, _) = f1.normalized()?;
    let (b, _, _) = f2.normalized()?;
    Ok(a.iter().zip(&b).map(|(x, y)| (x * x - y * y - 1.0).abs()).fold(0.0, f64::max))
}

#[derive(Clone, Debug, Serialize)]
pub struct LightlikeReport {
    /// `max |∇_X L + X - g(X,L) L|` over coordinate `X` and points.
    pub nabla_l_residual: f64,
    /// `max |∇_L L|`.
    pub geodesic_residual: f64,
    /// `max |∇^{-1}_X (L,1) - g(X,L) (L,1)|`.
    pub invariance_residual: f64,
    /// `max ||L|_g - 1|`.
    pub unit_residual: f64,
    pub points: usize,
}

/// Checks the structure equations of a lightlike invariant line `(L, 1)`.
pub fn lightlike_structure(bundle: &ParallelSubbundle, points: &[DVector<f64>]) -> Result<LightlikeReport> {
    if bundle.c != -1.0 || bundle.dim() != 1 {
        return Err(Error::WrongCase("lightlike_structure needs a transported line with c = -1".into()));
    }
    let spec = &bundle.spec;
    let n = spec.dim();
    let l = normal_field(bundle, NormalKind::Null);
    let mut rep = LightlikeReport { nabla_l_residual: 0.0, geodesic_residual: 0.0, invariance_residual: 0.0, unit_residual: 0.0, points: points.len() };
    for x in points {
        let (g, gamma) = spec.connection_data(x.as_slice(), DerivMode::Auto)?;
        let lx = l(x)?;
        let jac = field_jacobian(&l, x)?;
        rep.unit_residual = rep.unit_residual.max((g_norm(&g, &lx) - 1.0).abs());
        let nabla = |v: &DVector<f64>| &jac * v + gamma.contract(v, &lx);
        for i in 0..n {
            let e = unit(n, i);
            let r = nabla(&e) + &e - &lx * g_inner(&g, &e, &lx);
            rep.nabla_l_residual = rep.nabla_l_residual.max(r.amax());
            let jet = SectionJet { y: lx.clone(), s: 1.0, dy: jac.column(i).into_owned(), ds: 0.0 };
            let out = nabla_c(spec, -1.0, x, &e, &jet)?;
            let k = g_inner(&g, &e, &lx);
            rep.invariance_residual = rep.invariance_residual.max((out.x - &lx * k).amax().max((out.r - k).abs()));
        }
        rep.geodesic_residual = rep.geodesic_residual.max(nabla(&lx).amax());
    }
    Ok(rep)
}

#[derive(Clone, Debug, Serialize)]
pub struct N1Locus {
    /// `(point, |(W2, w2)|)` over the grid.
    pub residuals: Vec<(Vec<f64>, f64)>,
    /// Grid points where `(0,1)` lies in `V1` within tolerance.
    pub locus: Vec<Vec<f64>>,
    pub tol: f64,
    pub note: Option<String>,
}

/// Grid points where `(0, 1) ∈ V1`.
pub fn n1_detector(v1: &ParallelSubbundle, grid: &[DVector<f64>], tol: f64) -> Result<N1Locus> {
    let h0 = fiber_metric(&v1.spec, v1.c, v1.base.as_slice())?;
    let gram = v1.basis.transpose() * &h0 * &v1.basis;
    let smin = linalg::singular_values(&gram).into_iter().fold(f64::INFINITY, f64::min);
    if smin <= 1e-10 * linalg::max_abs(&gram).max(1e-300) {
        return Ok(N1Locus {
            residuals: Vec::new(),
            locus: Vec::new(),
            tol,
            note: Some("lightlike case: no transversal N1".into()),
        });
    }
    let mut residuals = Vec::new();
    let mut locus = Vec::new();
    for p in grid {
        let h = fiber_metric(&v1.spec, v1.c, p.as_slice())?;
        let r = split_from_basis(&h, &v1.at(p)?, p)?.n1_residual();
        if r <= tol {
            locus.push(p.iter().copied().collect());
        }
        residuals.push((p.iter().copied().collect(), r));
    }
    Ok(N1Locus { residuals, locus, tol, note: None })
}

/// Value at `s = 0` of the least-squares polynomial (degree at most 4)
/// through `(s, residual)` samples.
pub fn extrapolate_to_zero(samples: &[(f64, f64)]) -> Result<f64> {
    if samples.len() < 3 {
        return Err(Error::arg("extrapolation needs three samples"));
    }
    let terms = samples.len().min(5);
    let design = DMatrix::from_fn(samples.len(), terms, |i, j| samples[i].0.powi(j as i32));
    let rhs = DVector::from_iterator(samples.len(), samples.iter().map(|s| s.1));
    let sol = design
        .svd(true, true)
        .solve(&rhs, 1e-14)
        .map_err(|e| Error::numeric(format!("extrapolation failed: {e}")))?;
    Ok(sol[0])
}

/// Points of `points` farther than `radius` from every point of `locus`.
pub fn outside_tube(points: &[DVector<f64>], locus: &[Vec<f64>], radius: f64) -> Vec<DVector<f64>> {
    points
        .iter()
        .filter(|p| {
            locus
                .iter()
                .all(|q| (*p - DVector::from_column_slice(q)).norm() > radius)
        })
        .cloned()
        .collect()
}

/// `dim(V1^M ∩ V2^M)` at `p` and the distance of `W1` from that intersection.
pub fn tangent_intersection(split: &SplitSection, p: &DVector<f64>) -> Result<(usize, f64)> {
    let (t1, t2) = split.tangent_parts(p)?;
    let n = t1.nrows();
    let mut both = DMatrix::zeros(n, t1.ncols() + t2.ncols());
    both.view_mut((0, 0), (n, t1.ncols())).copy_from(&t1);
    both.view_mut((0, t1.ncols()), (n, t2.ncols())).copy_from(&t2);
    let dim = t1.ncols() + t2.ncols() - linalg::rank(&both, 1e-8);
    let w1 = split.at(p)?.big_w1;
    let q1 = t1.clone().qr().q();
    let q2 = t2.clone().qr().q();
    let off1 = (&w1 - &q1 * (q1.transpose() * &w1)).norm();
    let off2 = (&w1 - &q2 * (q2.transpose() * &w1)).norm();
    Ok((dim, off1.max(off2) / w1.norm().max(1e-300)))
}
