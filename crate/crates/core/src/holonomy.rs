//! Sampling the holonomy of the rolling connection and classifying its
//! reducibility.
//!
//! Matrices returned here are expressed in the h_c-orthonormal extended
//! frame at the base point: `E = L^{-T} ⊕ 1` for `g = L L^T`, so every loop
//! transport `M` satisfies `M^T J M = J` with `J = diag(1, .., 1, 1/c)`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::connection::{rectangle_path, rolling_curvature, transport_matrix};
use crate::error::{require_nonzero_c, Error, Result};
use crate::linalg;
use crate::lorentz::{
    classify_pair, invariant_subspaces, lie_closure_with, membership_residual, AlgebraElement, BilinearForm, PairKind,
    SubspaceBasis,
};
use crate::manifold::{g_inner, shoot, ManifoldSpec};
use crate::ode::{Path, Piece};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LoopKind {
    /// Chart rectangle with corner `base` spanned by `eps ∂_i`, `eps ∂_j`.
    CoordinateRectangle { base: Vec<f64>, plane: (usize, usize), eps: f64 },
    /// Geodesic arcs through `vertices`; the last vertex must equal the first.
    GeodesicPolygon { vertices: Vec<Vec<f64>> },
    /// Straight chart segments through `waypoints`, first equal to last.
    ChartPath { waypoints: Vec<Vec<f64>> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Loop {
    #[serde(flatten)]
    pub kind: LoopKind,
    pub step: f64,
}

impl Loop {
    pub fn rectangle(base: &DVector<f64>, plane: (usize, usize), eps: f64, step: f64) -> Self {
        Self {
            kind: LoopKind::CoordinateRectangle { base: base.iter().copied().collect(), plane, eps },
            step,
        }
    }

    pub fn chart_path(waypoints: Vec<Vec<f64>>, step: f64) -> Self {
        Self { kind: LoopKind::ChartPath { waypoints }, step }
    }

    pub fn geodesic_polygon(vertices: Vec<Vec<f64>>, step: f64) -> Self {
        Self { kind: LoopKind::GeodesicPolygon { vertices }, step }
    }

    /// Segment `base -> p`, the ε-rectangle at `p`, and back to `base`.
    pub fn lasso(base: &DVector<f64>, p: &DVector<f64>, plane: (usize, usize), eps: f64, step: f64) -> Result<Self> {
        let rect = rectangle_path(p, plane.0, plane.1, eps)?;
        let mut pts = vec![base.iter().copied().collect::<Vec<f64>>()];
        pts.extend(rect.vertices());
        pts.push(pts[0].clone());
        pts.dedup();
        if pts.len() == 1 {
            pts.push(pts[0].clone());
        }
        Ok(Self::chart_path(pts, step))
    }

    pub fn base(&self) -> Vec<f64> {
        match &self.kind {
            LoopKind::CoordinateRectangle { base, .. } => base.clone(),
            LoopKind::GeodesicPolygon { vertices } => vertices.first().cloned().unwrap_or_default(),
            LoopKind::ChartPath { waypoints } => waypoints.first().cloned().unwrap_or_default(),
        }
    }

    fn check_closed(points: &[Vec<f64>]) -> Result<()> {
        match (points.first(), points.last()) {
            (Some(a), Some(b)) if points.len() >= 2 && a == b => Ok(()),
            _ => Err(Error::arg("loop is not closed: first and last points differ")),
        }
    }

    /// The loop as a chart path. Geodesic sides are found by shooting.
    pub fn to_path(&self, spec: &ManifoldSpec) -> Result<Path> {
        match &self.kind {
            LoopKind::CoordinateRectangle { base, plane, eps } => {
                rectangle_path(&DVector::from_column_slice(base), plane.0, plane.1, *eps)
            }
            LoopKind::ChartPath { waypoints } => {
                Self::check_closed(waypoints)?;
                let pts: Vec<DVector<f64>> = waypoints.iter().map(|p| DVector::from_column_slice(p)).collect();
                Path::polyline(&pts)
            }
            LoopKind::GeodesicPolygon { vertices } => {
                Self::check_closed(vertices)?;
                let mut pieces = Vec::new();
                for w in vertices.windows(2) {
                    let a = DVector::from_column_slice(&w[0]);
                    let b = DVector::from_column_slice(&w[1]);
                    if a == b {
                        continue;
                    }
                    let v = shoot(spec, &a, &b, self.step)?;
                    pieces.push(Piece::Geodesic { velocity: v.iter().copied().collect(), duration: 1.0 });
                }
                Ok(Path { start: vertices[0].clone(), pieces })
            }
        }
    }
}

/// `E = L^{-T} ⊕ 1`, columns an h_c-orthonormal extended frame at `x`.
pub fn orthonormal_frame(spec: &ManifoldSpec, x: &[f64]) -> Result<DMatrix<f64>> {
    let g = spec.metric_at(x)?;
    let n = g.nrows();
    let l = g
        .cholesky()
        .ok_or_else(|| Error::numeric("metric not positive definite"))?
        .l();
    let lt_inv = l
        .transpose()
        .try_inverse()
        .ok_or_else(|| Error::numeric("singular Cholesky factor"))?;
    let mut e = DMatrix::zeros(n + 1, n + 1);
    e.view_mut((0, 0), (n, n)).copy_from(&lt_inv);
    e[(n, n)] = 1.0;
    Ok(e)
}

fn invert(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    m.clone()
        .try_inverse()
        .ok_or_else(|| Error::numeric("singular transport matrix"))
}

/// Transport around `lp` in the orthonormal frame at its base point.
pub fn loop_transport(spec: &ManifoldSpec, c: f64, lp: &Loop) -> Result<DMatrix<f64>> {
    require_nonzero_c(c)?;
    let path = lp.to_path(spec)?;
    let base = path.start.clone();
    let res = transport_matrix(spec, c, &path, lp.step)?;
    if res.truncated {
        return Err(Error::Domain { point: res.end.iter().copied().collect() });
    }
    let e = orthonormal_frame(spec, &base)?;
    Ok(invert(&e)? * res.block * e)
}

/// `max |M^T J M - J|`.
pub fn group_residual(m: &DMatrix<f64>, form: &BilinearForm) -> f64 {
    let j = form.matrix();
    linalg::max_abs(&(m.transpose() * &j * m - j))
}

pub fn coordinate_planes(n: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            out.push((i, j));
        }
    }
    out
}

/// Curvature at each sample point on each plane, carried back to `base`
/// along the chart segment and written in the orthonormal frame there.
pub fn ambrose_singer_generators(
    spec: &ManifoldSpec,
    c: f64,
    base: &DVector<f64>,
    points: &[DVector<f64>],
    planes: &[(usize, usize)],
    step: f64,
) -> Result<Vec<AlgebraElement>> {
    require_nonzero_c(c)?;
    let n = spec.dim();
    let form = BilinearForm::new(n, c)?;
    let e = orthonormal_frame(spec, base.as_slice())?;
    let e_inv = invert(&e)?;
    let per_point: Vec<Result<Vec<AlgebraElement>>> = points
        .par_iter()
        .map(|p| {
            let path = Path::polyline(&[base.clone(), p.clone()])?;
            let res = transport_matrix(spec, c, &path, step)?;
            if res.truncated {
                return Err(Error::Domain { point: p.iter().copied().collect() });
            }
            let pt = &res.block;
            let pt_inv = invert(pt)?;
            let mut out = Vec::new();
            for &(i, j) in planes {
                let mut ei = DVector::zeros(n);
                ei[i] = 1.0;
                let mut ej = DVector::zeros(n);
                ej[j] = 1.0;
                let f = rolling_curvature(spec, c, p, &ei, &ej)?.mat;
                let at_base = &e_inv * &pt_inv * f * pt * &e;
                let scale = linalg::max_abs(&at_base).max(1.0);
                out.push(AlgebraElement::new(at_base, form, 1e-6 * scale)?);
            }
            Ok(out)
        })
        .collect();
    let mut all = Vec::new();
    for r in per_point {
        all.extend(r?);
    }
    Ok(all)
}

/// Sampling parameters for [`holonomy_algebra`] and [`classify`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Sampling {
    pub points: usize,
    pub loops: usize,
    /// Half-width of the box around the base point where samples are drawn.
    pub radius: f64,
    pub eps: f64,
    pub step: f64,
    pub seed: u64,
    /// Repeat with twice the samples and record whether the dimension agrees.
    pub doubling: bool,
    pub rank_tol: f64,
    pub zero_tol: f64,
    pub subspace_tol: f64,
    pub n1_tol: f64,
}

impl Default for Sampling {
    fn default() -> Self {
        Self {
            points: 9,
            loops: 40,
            radius: 0.3,
            eps: 0.15,
            step: 1e-3,
            seed: 7,
            doubling: true,
            rank_tol: 1e-8,
            zero_tol: 1e-9,
            subspace_tol: 1e-6,
            n1_tol: 1e-5,
        }
    }
}

impl Sampling {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.radius, self.eps, self.step, self.rank_tol, self.zero_tol, self.subspace_tol, self.n1_tol];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Config("sampling radius, eps, step and tolerances must be positive".into()));
        }
        if self.points == 0 {
            return Err(Error::Config("sampling needs at least one point".into()));
        }
        if self.eps > 0.2 {
            return Err(Error::Config(format!("loop size eps = {} exceeds 0.2; logs may leave the principal branch", self.eps)));
        }
        Ok(())
    }

    fn scaled(&self, factor: usize) -> Self {
        Self { points: self.points * factor, loops: self.loops * factor, ..self.clone() }
    }
}

/// Seeded sample points in the box of half-width `radius` around `base`;
/// the first point is `base`. Points whose loops would leave the domain
/// are redrawn.
pub fn sample_points(spec: &ManifoldSpec, base: &DVector<f64>, s: &Sampling) -> Result<Vec<DVector<f64>>> {
    spec.check_point(base.as_slice())?;
    let n = spec.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let mut out = vec![base.clone()];
    let fits = |p: &DVector<f64>| {
        let corner = p + DVector::from_element(n, s.eps);
        spec.domain().contains(p.as_slice()) && spec.domain().contains(corner.as_slice())
    };
    let mut tries = 0;
    while out.len() < s.points {
        tries += 1;
        if tries > 1000 * s.points {
            return Err(Error::Config("could not place sample points inside the domain; reduce radius".into()));
        }
        let p = base + DVector::from_fn(n, |_, _| rng.random_range(-s.radius..s.radius));
        if fits(&p) {
            out.push(p);
        }
    }
    Ok(out)
}

/// Lasso loops cycling through sample points and planes.
pub fn loop_family(spec: &ManifoldSpec, base: &DVector<f64>, s: &Sampling) -> Result<Vec<Loop>> {
    let points = sample_points(spec, base, s)?;
    let planes = coordinate_planes(spec.dim());
    if planes.is_empty() {
        return Ok(Vec::new());
    }
    (0..s.loops)
        .map(|k| {
            let p = &points[k % points.len()];
            let plane = planes[(k / points.len() + k) % planes.len()];
            let eps = s.eps * (1.0 - 0.5 * (k % 3) as f64 / 3.0);
            Loop::lasso(base, p, plane, eps, s.step)
        })
        .collect()
}

/// Lower bound on the absolute transport noise of a loop.
pub const LOOP_NOISE_MIN: f64 = 1e-13;

#[derive(Clone, Debug)]
pub struct HolonomyAlgebra {
    pub basis: Vec<AlgebraElement>,
    pub dim: usize,
    pub curvature_generators: usize,
    pub loop_generators: usize,
    /// Loop logs too small to carry information above transport noise.
    pub loops_below_noise_floor: usize,
    pub max_loop_residual: f64,
    pub max_membership_residual: f64,
    pub max_loop_log_norm: f64,
    /// Dimensions at `N` and (when doubling) `2N` samples.
    pub dims: Vec<usize>,
    pub stable: bool,
}

fn algebra_at(spec: &ManifoldSpec, c: f64, base: &DVector<f64>, s: &Sampling) -> Result<HolonomyAlgebra> {
    let n = spec.dim();
    let form = BilinearForm::new(n, c)?;
    let points = sample_points(spec, base, s)?;
    let planes = coordinate_planes(n);
    let mut gens = ambrose_singer_generators(spec, c, base, &points, &planes, s.step)?;
    let curvature_generators = gens.len();
    let loops = loop_family(spec, base, s)?;
    let mats: Vec<DMatrix<f64>> = loops
        .par_iter()
        .map(|lp| loop_transport(spec, c, lp))
        .collect::<Result<_>>()?;
    let mut max_loop_residual = 0.0_f64;
    for m in &mats {
        max_loop_residual = max_loop_residual.max(group_residual(m, &form));
    }
    // A log below noise / rank_tol cannot resolve new directions at rank_tol.
    let floor = max_loop_residual.max(LOOP_NOISE_MIN) / s.rank_tol;
    let mut max_membership = 0.0_f64;
    let mut max_log = 0.0_f64;
    let mut below_floor = 0;
    for m in &mats {
        let l = linalg::logm(m)?;
        max_membership = max_membership.max(membership_residual(&l, &form)?);
        max_log = max_log.max(l.norm());
        if l.norm() < floor {
            below_floor += 1;
            continue;
        }
        gens.push(AlgebraElement::project(&l, form));
    }
    for g in &gens[..curvature_generators] {
        max_membership = max_membership.max(membership_residual(&g.mat, &form)?);
    }
    let closure = lie_closure_with(&gens, s.rank_tol, s.zero_tol)?;
    Ok(HolonomyAlgebra {
        dim: closure.dim,
        basis: closure.basis,
        curvature_generators,
        loop_generators: loops.len() - below_floor,
        loops_below_noise_floor: below_floor,
        max_loop_residual,
        max_membership_residual: max_membership,
        max_loop_log_norm: max_log,
        dims: vec![closure.dim],
        stable: true,
    })
}

/// Lie algebra generated by transported curvature and loop logarithms.
pub fn holonomy_algebra(spec: &ManifoldSpec, c: f64, base: &DVector<f64>, s: &Sampling) -> Result<HolonomyAlgebra> {
    require_nonzero_c(c)?;
    s.validate()?;
    let mut alg = algebra_at(spec, c, base, s)?;
    if s.doubling {
        let big = algebra_at(spec, c, base, &s.scaled(2))?;
        alg.dims.push(big.dim);
        alg.stable = big.dim == alg.dim;
        if big.dim > alg.dim {
            let dims = alg.dims.clone();
            alg = HolonomyAlgebra { dims, stable: false, ..big };
        }
    }
    Ok(alg)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    IrreducibleControllable,
    ReducibleLightlike,
    ReducibleTransversal,
    ReducibleUnlocated,
}

impl Verdict {
    pub fn is_reducible(&self) -> bool {
        !matches!(self, Verdict::IrreducibleControllable)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Tolerances {
    pub rank: f64,
    pub zero: f64,
    pub subspace: f64,
    pub n1: f64,
    pub loop_group: f64,
    pub membership: f64,
    pub step: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Diagnostics {
    pub sample_points: usize,
    pub loops: usize,
    pub curvature_generators: usize,
    pub loop_generators: usize,
    pub loops_below_noise_floor: usize,
    pub dims: Vec<usize>,
    pub stable: bool,
    pub max_loop_group_residual: f64,
    pub max_membership_residual: f64,
    pub max_loop_log_norm: f64,
    /// `max |A v - proj_V(A v)|` over basis elements `A` and unit `v ∈ V1`.
    pub annihilation_residual: Option<f64>,
    pub tolerances: Tolerances,
}

#[derive(Clone, Debug, Serialize)]
pub struct HolonomyReport {
    #[serde(serialize_with = "crate::serial::vector")]
    pub base_x: DVector<f64>,
    pub c: f64,
    pub algebra_dim: usize,
    pub full_dim: usize,
    /// Basis of the holonomy algebra in the orthonormal frame at `base_x`.
    #[serde(serialize_with = "crate::serial::matrices")]
    pub algebra_basis: Vec<DMatrix<f64>>,
    pub invariant_subspaces: Vec<SubspaceBasis>,
    pub verdict: Verdict,
    /// Verdicts certify the chart-local statement only.
    pub scope: &'static str,
    /// `(0, 1)` lies in the chosen invariant `V1` at `base_x`.
    pub n1_hit: bool,
    /// Chosen invariant subspace `V1` (orthonormal frame).
    pub v1: Option<SubspaceBasis>,
    /// `L` with `(L, 1)` spanning `V1 ∩ V2`, coordinate components.
    #[serde(serialize_with = "crate::serial::opt_vector")]
    pub null_direction: Option<DVector<f64>>,
    /// `L / |L|_g`.
    #[serde(serialize_with = "crate::serial::opt_vector")]
    pub null_direction_unit: Option<DVector<f64>>,
    pub note: Option<String>,
    pub diagnostics: Diagnostics,
}

/// Largest action of the algebra out of `v`, relative to the basis scale.
fn annihilation_residual(basis: &[AlgebraElement], v: &SubspaceBasis) -> f64 {
    let mut worst = 0.0_f64;
    for a in basis {
        let scale = a.mat.norm().max(1e-300);
        for k in 0..v.dim() {
            let w = &a.mat * v.vectors.column(k);
            worst = worst.max(v.residual(&w).norm() / scale);
        }
    }
    worst
}

/// Common kernel of the algebra when proper and nonzero. Its
/// h-complement is the canonical invariant subspace to split along when
/// the holonomy fixes more than a line.
fn fixed_subspace(basis: &[AlgebraElement], size: usize, tol: f64) -> Result<Option<SubspaceBasis>> {
    let mut stack = DMatrix::zeros(size * basis.len(), size);
    for (k, a) in basis.iter().enumerate() {
        stack.view_mut((k * size, 0), (size, size)).copy_from(&a.mat);
    }
    let kernel = linalg::null_space(&stack, tol);
    if kernel.ncols() == 0 || kernel.ncols() == size {
        return Ok(None);
    }
    Ok(Some(SubspaceBasis::new(kernel, tol)?))
}

/// Classifies the rolling holonomy at `base` for `c < 0`.
pub fn classify(spec: &ManifoldSpec, c: f64, base: &DVector<f64>, s: &Sampling) -> Result<HolonomyReport> {
    require_nonzero_c(c)?;
    if c > 0.0 {
        return Err(Error::arg("classification is defined for c < 0; use holonomy_algebra for the raw dimension"));
    }
    let n = spec.dim();
    let form = BilinearForm::new(n, c)?;
    let alg = holonomy_algebra(spec, c, base, s)?;
    let full = form.algebra_dim();
    let tolerances = Tolerances {
        rank: s.rank_tol,
        zero: s.zero_tol,
        subspace: s.subspace_tol,
        n1: s.n1_tol,
        loop_group: 1e-6,
        membership: 1e-6,
        step: s.step,
    };
    let mut diagnostics = Diagnostics {
        sample_points: s.points,
        loops: s.loops,
        curvature_generators: alg.curvature_generators,
        loop_generators: alg.loop_generators,
        loops_below_noise_floor: alg.loops_below_noise_floor,
        dims: alg.dims.clone(),
        stable: alg.stable,
        max_loop_group_residual: alg.max_loop_residual,
        max_membership_residual: alg.max_membership_residual,
        max_loop_log_norm: alg.max_loop_log_norm,
        annihilation_residual: None,
        tolerances,
    };
    let mut report = HolonomyReport {
        base_x: base.clone(),
        c,
        algebra_dim: alg.dim,
        full_dim: full,
        algebra_basis: alg.basis.iter().map(|a| a.mat.clone()).collect(),
        invariant_subspaces: Vec::new(),
        verdict: Verdict::IrreducibleControllable,
        scope: "local",
        n1_hit: false,
        v1: None,
        null_direction: None,
        null_direction_unit: None,
        note: None,
        diagnostics: diagnostics.clone(),
    };
    if alg.dim == full {
        return Ok(report);
    }
    let scalar = {
        let mut e = DVector::zeros(n + 1);
        e[n] = 1.0;
        e
    };
    if alg.dim == 0 {
        report.verdict = Verdict::ReducibleTransversal;
        report.n1_hit = true;
        report.v1 = Some(SubspaceBasis::from_columns(&[scalar], s.rank_tol)?);
        report.note = Some("maximally degenerate: trivial holonomy, every subspace is invariant".into());
        return Ok(report);
    }
    let mut subspaces = Vec::new();
    let mut fixed_pair = false;
    if let Some(fixed) = fixed_subspace(&alg.basis, n + 1, s.subspace_tol)? {
        subspaces.push(fixed.h_orthogonal(&form));
        subspaces.push(fixed);
        fixed_pair = true;
    }
    for v in invariant_subspaces(&alg.basis, &form, s.subspace_tol)? {
        if !subspaces.iter().any(|f| f.same_as(&v, s.subspace_tol)) {
            subspaces.push(v);
        }
    }
    report.invariant_subspaces = reported_subspaces(&subspaces, fixed_pair, s.subspace_tol, &mut report.note);
    report.verdict = Verdict::ReducibleUnlocated;
    let e = orthonormal_frame(spec, base.as_slice())?;
    for v1 in &subspaces {
        let Ok(pair) = classify_pair(v1, &form, s.subspace_tol) else {
            continue;
        };
        diagnostics.annihilation_residual = Some(annihilation_residual(&alg.basis, v1));
        match pair.kind {
            PairKind::Lightlike => {
                let gen = pair.null_generator.clone().expect("lightlike pair has a generator");
                let coord = &e * gen;
                if coord[n].abs() < 1e-12 * coord.norm() {
                    return Err(Error::Inconsistent("null generator has no scalar part".into()));
                }
                let l = coord.rows(0, n).into_owned() / coord[n];
                let g = spec.metric_at(base.as_slice())?;
                let norm = g_inner(&g, &l, &l).sqrt();
                report.verdict = Verdict::ReducibleLightlike;
                report.null_direction_unit = Some(&l / norm);
                report.null_direction = Some(l);
            }
            PairKind::Transversal => {
                report.verdict = Verdict::ReducibleTransversal;
                let in1 = v1.residual(&scalar).norm() <= s.n1_tol;
                let in2 = pair.v2.residual(&scalar).norm() <= s.n1_tol;
                report.n1_hit = in1 || in2;
                if in2 && !in1 {
                    report.v1 = Some(pair.v2.clone());
                    diagnostics.annihilation_residual = Some(annihilation_residual(&alg.basis, &pair.v2));
                    break;
                }
            }
        }
        report.v1 = Some(v1.clone());
        break;
    }
    report.diagnostics = diagnostics;
    Ok(report)
}

/// Drops candidates that are invariant only because they sit inside the fixed
/// subspace `K` or contain its complement; with `dim K > 1` there is a continuum of them.
fn reported_subspaces(all: &[SubspaceBasis], fixed_pair: bool, tol: f64, note: &mut Option<String>) -> Vec<SubspaceBasis> {
    if !fixed_pair {
        return all.to_vec();
    }
    let (perp, fixed) = (&all[0], &all[1]);
    let columns = |b: &SubspaceBasis| (0..b.dim()).map(|i| b.vectors.column(i).into_owned()).collect::<Vec<_>>();
    let inside_fixed = |v: &SubspaceBasis| columns(v).iter().all(|c| fixed.contains(c, tol));
    let over_perp = |v: &SubspaceBasis| columns(perp).iter().all(|c| v.contains(c, tol));
    let mut kept = vec![perp.clone(), fixed.clone()];
    let mut dropped = 0;
    for v in &all[2..] {
        if inside_fixed(v) || over_perp(v) {
            dropped += 1;
        } else {
            kept.push(v.clone());
        }
    }
    if dropped > 0 && note.is_none() {
        *note = Some(format!(
            "omitted {dropped} invariant subspaces lying in the fixed subspace or containing its complement"
        ));
    }
    kept
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{flat, space_form};

    #[test]
    fn zero_area_rectangle_is_identity() {
        let s = space_form(2, 1.0).unwrap();
        let lp = Loop::rectangle(&DVector::from_vec(vec![0.1, 0.1]), (0, 1), 0.0, 1e-3);
        assert_eq!(loop_transport(&s, -1.0, &lp).unwrap(), DMatrix::identity(3, 3));
    }

    #[test]
    fn open_loops_are_rejected() {
        let s = flat(2).unwrap();
        let lp = Loop::chart_path(vec![vec![0.0, 0.0], vec![0.5, 0.0]], 1e-3);
        assert!(matches!(loop_transport(&s, -1.0, &lp), Err(Error::Argument(_))));
    }

    #[test]
    fn transports_are_in_the_group() {
        let s = space_form(2, 1.0).unwrap();
        let base = DVector::from_vec(vec![0.2, -0.1]);
        let form = BilinearForm::new(2, -1.0).unwrap();
        for lp in loop_family(&s, &base, &Sampling { loops: 6, ..Sampling::default() }).unwrap() {
            let m = loop_transport(&s, -1.0, &lp).unwrap();
            assert!(group_residual(&m, &form) < 1e-8);
        }
    }

    #[test]
    fn geodesic_triangle_on_hyperbolic_plane_is_trivial() {
        let h = space_form(2, -1.0).unwrap();
        let lp = Loop::geodesic_polygon(vec![vec![0.0, 0.0], vec![0.4, 0.1], vec![0.1, 0.5], vec![0.0, 0.0]], 1e-3);
        let m = loop_transport(&h, -1.0, &lp).unwrap();
        assert!(linalg::max_abs(&(m - DMatrix::identity(3, 3))) < 1e-8);
    }

    #[test]
    fn flat_base_point_generators_are_b_blocks() {
        let f = flat(2).unwrap();
        let x = DVector::from_vec(vec![0.3, 0.1]);
        let gens = ambrose_singer_generators(&f, -1.0, &x, std::slice::from_ref(&x), &[(0, 1)], 1e-3).unwrap();
        let expected = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(linalg::max_abs(&(&gens[0].mat - expected)) < 1e-15);
    }

    #[test]
    fn sampling_is_deterministic() {
        let s = space_form(3, -1.0).unwrap();
        let base = DVector::zeros(3);
        let a = sample_points(&s, &base, &Sampling::default()).unwrap();
        let b = sample_points(&s, &base, &Sampling::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[0], base);
        assert_eq!(a.len(), 9);
    }
}
