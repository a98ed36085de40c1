//! Verification suites selected by name at run time.
//!
//! * `converse`: warped-product constructions classify as reducible.
//! * `forward`: reducibility data reproduce the warped-product structure
//!   (integrable umbilic distributions with parallel mean curvature and a
//!   warp solving `f'' = f`).
//! * `lemmas`: residual batteries for the individual structure identities.

use std::collections::BTreeMap;

use nalgebra::DVector;
use serde::Serialize;

use crate::config::{RunConfig, VerifyConfig};
use crate::connection::{transport_ext, ExtendedVector};
use crate::decomposition::{
    curvature_annihilation_check, frobenius_check, hyperbolic_pair_residual, lightlike_structure, n1_detector,
    normal_field, outside_tube, recover_warp, second_fundamental_form, spherical_check, split_unit_section,
    tangent_intersection, warp_direction, DistributionField, NormalKind, ParallelSubbundle, WarpProfile, WarpRecovery,
};
use crate::error::{Error, Result};
use crate::holonomy::{classify, orthonormal_frame, sample_points, HolonomyReport, Sampling, Verdict};
use crate::manifold::{g_inner, geodesic, ManifoldSpec};
use crate::ode::Path;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

/// One row of the pass/fail matrix.
#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub status: Status,
    pub value: Option<f64>,
    pub tolerance: Option<f64>,
    pub detail: Option<String>,
}

impl Check {
    pub fn at_most(name: impl Into<String>, value: f64, tol: f64) -> Self {
        let ok = value.is_finite() && value <= tol;
        Self { name: name.into(), status: if ok { Status::Pass } else { Status::Fail }, value: Some(value), tolerance: Some(tol), detail: None }
    }

    pub fn flag(name: impl Into<String>, ok: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), status: if ok { Status::Pass } else { Status::Fail }, value: None, tolerance: None, detail: Some(detail.into()) }
    }

    pub fn skipped(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Self { name: name.into(), status: Status::Skipped, value: None, tolerance: None, detail: Some(reason.into()) }
    }

    pub fn failed(name: impl Into<String>, err: &Error) -> Self {
        Self::flag(name, false, err.to_string())
    }

    fn with_detail(mut self, d: impl Into<String>) -> Self {
        self.detail = Some(d.into());
        self
    }
}

/// Recovered warp samples, kept for plotting.
#[derive(Clone, Debug, Serialize)]
pub struct WarpTrace {
    pub label: String,
    pub recovery: WarpRecovery,
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteOutcome {
    pub suite: String,
    pub manifold: String,
    pub passed: bool,
    pub checks: Vec<Check>,
    #[serde(skip)]
    pub warps: Vec<WarpTrace>,
    pub classification: Option<HolonomyReport>,
}

pub struct SuiteContext<'a> {
    pub spec: &'a ManifoldSpec,
    pub c: f64,
    pub base: DVector<f64>,
    pub config: &'a RunConfig,
}

impl SuiteContext<'_> {
    fn verify(&self) -> &VerifyConfig {
        &self.config.verify
    }

    /// Seeded sample points around the base (the base comes first).
    pub fn points(&self) -> Result<Vec<DVector<f64>>> {
        let s = Sampling {
            points: self.verify().points,
            radius: self.verify().radius,
            eps: 0.0,
            seed: self.config.sampling.seed,
            ..Sampling::default()
        };
        sample_points(self.spec, &self.base, &s)
    }

    /// Base plus `±k·grid_step` offsets along every coordinate axis.
    pub fn axis_grid(&self) -> Vec<DVector<f64>> {
        let h = self.verify().grid_step;
        let mut out = vec![self.base.clone()];
        for i in 0..self.spec.dim() {
            for k in [-2.0, -1.0, 1.0, 2.0] {
                let mut p = self.base.clone();
                p[i] += k * h;
                if self.spec.domain().contains(p.as_slice()) {
                    out.push(p);
                }
            }
        }
        out
    }

    fn classify(&self) -> Result<HolonomyReport> {
        classify(self.spec, self.c, &self.base, &self.config.sampling)
    }
}

pub trait VerifySuite: Send + Sync {
    fn name(&self) -> &'static str;
    fn summary(&self) -> &'static str;
    fn run(&self, ctx: &SuiteContext<'_>) -> Result<SuiteOutcome>;
}

pub struct SuiteRegistry {
    suites: BTreeMap<&'static str, Box<dyn VerifySuite>>,
}

impl Default for SuiteRegistry {
    fn default() -> Self {
        let mut r = Self { suites: BTreeMap::new() };
        r.register(Box::new(ConverseSuite));
        r.register(Box::new(ForwardSuite));
        r.register(Box::new(LemmaSuite));
        r
    }
}

impl SuiteRegistry {
    pub fn register(&mut self, s: Box<dyn VerifySuite>) {
        self.suites.insert(s.name(), s);
    }

    pub fn names(&self) -> impl Iterator<Item = (&'static str, &'static str)> + '_ {
        self.suites.values().map(|s| (s.name(), s.summary()))
    }

    pub fn get(&self, name: &str) -> Result<&dyn VerifySuite> {
        self.suites.get(name).map(|b| b.as_ref()).ok_or_else(|| {
            let known: Vec<&str> = self.suites.keys().copied().collect();
            Error::arg(format!("unknown suite `{name}` (known: {})", known.join(", ")))
        })
    }
}

fn outcome(name: &str, ctx: &SuiteContext<'_>, checks: Vec<Check>, warps: Vec<WarpTrace>, classification: Option<HolonomyReport>) -> SuiteOutcome {
    let passed = checks.iter().all(|c| c.status != Status::Fail) && checks.iter().any(|c| c.status == Status::Pass);
    SuiteOutcome { suite: name.into(), manifold: ctx.spec.name().into(), passed, checks, warps, classification }
}

fn need_minus_one(ctx: &SuiteContext<'_>) -> Result<()> {
    if ctx.c != -1.0 {
        return Err(Error::Config(format!("this suite runs with c = -1, got {}", ctx.c)));
    }
    Ok(())
}

fn verdict_name(v: Verdict) -> String {
    serde_json::to_value(v).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()
}

struct ConverseSuite;

impl VerifySuite for ConverseSuite {
    fn name(&self) -> &'static str {
        "converse"
    }
    fn summary(&self) -> &'static str {
        "warped-product builtins classify as reducible, with a consistent invariant subspace"
    }
    fn run(&self, ctx: &SuiteContext<'_>) -> Result<SuiteOutcome> {
        need_minus_one(ctx)?;
        let rep = ctx.classify()?;
        let mut checks = Vec::new();
        let got = verdict_name(rep.verdict);
        checks.push(match &ctx.verify().expect {
            Some(want) => Check::flag("verdict", &got == want, format!("expected {want}, got {got}")),
            None => Check::flag("verdict", rep.verdict.is_reducible(), format!("got {got}")),
        });
        checks.push(Check::flag("dimension_stable", rep.diagnostics.stable, format!("dims {:?}", rep.diagnostics.dims)));
        checks.push(Check::at_most("loop_group_residual", rep.diagnostics.max_loop_group_residual, 1e-6));
        match rep.diagnostics.annihilation_residual {
            Some(r) => checks.push(Check::at_most("invariance_residual", r, rep.diagnostics.tolerances.subspace)),
            None => checks.push(Check::skipped("invariance_residual", "no invariant subspace chosen")),
        }
        if let Some(l) = &rep.null_direction {
            let g = ctx.spec.metric_at(ctx.base.as_slice())?;
            let tol = ctx.verify().tolerances.null_line;
            checks.push(Check::at_most("null_line_unit", (g_inner(&g, l, l).sqrt() - 1.0).abs(), tol));
        }
        Ok(outcome(self.name(), ctx, checks, Vec::new(), Some(rep)))
    }
}

struct ForwardSuite;

impl VerifySuite for ForwardSuite {
    fn name(&self) -> &'static str {
        "forward"
    }
    fn summary(&self) -> &'static str {
        "reducibility data reproduce integrable umbilic distributions and the warping functions"
    }
    fn run(&self, ctx: &SuiteContext<'_>) -> Result<SuiteOutcome> {
        need_minus_one(ctx)?;
        let rep = ctx.classify()?;
        let mut checks = Vec::new();
        let mut warps = Vec::new();
        match rep.verdict {
            Verdict::ReducibleTransversal => transversal_checks(ctx, &rep, Battery::Forward, &mut checks, &mut warps)?,
            Verdict::ReducibleLightlike => lightlike_checks(ctx, &rep, Battery::Forward, &mut checks, &mut warps)?,
            v => checks.push(Check::flag("reducible", false, format!("verdict {}", verdict_name(v)))),
        }
        Ok(outcome(self.name(), ctx, checks, warps, Some(rep)))
    }
}

struct LemmaSuite;

impl VerifySuite for LemmaSuite {
    fn name(&self) -> &'static str {
        "lemmas"
    }
    fn summary(&self) -> &'static str {
        "closed-form transport, scalar ODE, curvature annihilation, null-field, umbilicity, sphericity and warp ODE batteries"
    }
    fn run(&self, ctx: &SuiteContext<'_>) -> Result<SuiteOutcome> {
        need_minus_one(ctx)?;
        let mut checks = transport_battery(ctx)?;
        let mut warps = Vec::new();
        let rep = ctx.classify()?;
        match rep.verdict {
            Verdict::ReducibleTransversal => transversal_checks(ctx, &rep, Battery::Lemmas, &mut checks, &mut warps)?,
            Verdict::ReducibleLightlike => lightlike_checks(ctx, &rep, Battery::Lemmas, &mut checks, &mut warps)?,
            v => checks.push(Check::skipped("structure_identities", format!("verdict {} carries no splitting", verdict_name(v)))),
        }
        Ok(outcome(self.name(), ctx, checks, warps, Some(rep)))
    }
}

/// Result of transporting along a unit geodesic.
pub struct GeodesicTransport {
    pub length: f64,
    pub end_velocity: DVector<f64>,
    pub end: ExtendedVector,
}

/// Transports `(x0, r0)` along the unit geodesic from `base` with initial
/// velocity `u`, shortening the length until the geodesic stays in the chart.
pub fn transport_along_geodesic(spec: &ManifoldSpec, base: &DVector<f64>, u: &DVector<f64>, v0: &ExtendedVector, length: f64, step: f64) -> Result<GeodesicTransport> {
    let mut t = length;
    for _ in 0..5 {
        let geo = geodesic(spec, base, u, t, step)?;
        if !geo.truncated {
            let (end, trunc) = transport_ext(spec, -1.0, &Path::geodesic(base, u, t), v0, step)?;
            if !trunc {
                return Ok(GeodesicTransport { length: t, end_velocity: geo.end().1.clone(), end });
            }
        }
        t *= 0.5;
    }
    Err(Error::Domain { point: base.iter().copied().collect() })
}

/// Unit directions at the base: the orthonormal frame and one diagonal.
fn unit_directions(spec: &ManifoldSpec, base: &DVector<f64>) -> Result<Vec<DVector<f64>>> {
    let n = spec.dim();
    let e = orthonormal_frame(spec, base.as_slice())?;
    let mut dirs: Vec<DVector<f64>> = (0..n).map(|i| e.view((0, i), (n, 1)).into_owned().column(0).into_owned()).collect();
    let diag = dirs.iter().fold(DVector::zeros(n), |a, d| a + d) / (n as f64).sqrt();
    dirs.push(diag);
    Ok(dirs)
}

fn transport_battery(ctx: &SuiteContext<'_>) -> Result<Vec<Check>> {
    let spec = ctx.spec;
    let tol = &ctx.verify().tolerances;
    let step = ctx.config.sampling.step;
    let mut closed = 0.0_f64;
    let mut scalar = 0.0_f64;
    let mut shortest = f64::INFINITY;
    for u in unit_directions(spec, &ctx.base)? {
        let unit = ExtendedVector::unit_scalar(ctx.base.clone());
        let tr = transport_along_geodesic(spec, &ctx.base, &u, &unit, 1.0, step)?;
        let t = tr.length;
        shortest = shortest.min(t);
        let want_x = &tr.end_velocity * (-t.sinh());
        closed = closed.max((&tr.end.x - want_x).amax().max((tr.end.r - t.cosh()).abs()));
        let (a, r0) = (0.7, 0.4);
        let v0 = ExtendedVector::new(ctx.base.clone(), &u * a, r0)?;
        let tr = transport_along_geodesic(spec, &ctx.base, &u, &v0, t, step)?;
        scalar = scalar.max((tr.end.r - (r0 * t.cosh() - a * t.sinh())).abs());
    }
    let note = format!("unit geodesics of length {shortest}");
    Ok(vec![
        Check::at_most("parallel_unit_scalar_closed_form", closed, tol.transport).with_detail(note.clone()),
        Check::at_most("scalar_ode_parallel_velocity", scalar, tol.scalar_ode).with_detail(note),
    ])
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Battery {
    Forward,
    Lemmas,
}

/// Tries the curve length and then halves of it until the geodesic fits.
fn warp_along(bundle: &ParallelSubbundle, kind: NormalKind, u: &DVector<f64>, length: f64, step: f64) -> Result<WarpRecovery> {
    let mut t = length;
    let mut last = None;
    for _ in 0..4 {
        match recover_warp(bundle, kind, u, t, step) {
            Err(Error::Domain { point }) => last = Some(Error::Domain { point }),
            other => return other,
        }
        t *= 0.5;
    }
    Err(last.expect("at least one attempt"))
}

fn pointwise<F>(name: &str, points: &[DVector<f64>], tol: f64, f: F) -> Check
where
    F: Fn(&DVector<f64>) -> Result<Option<f64>> + Sync,
{
    use rayon::prelude::*;
    let vals: Vec<Result<Option<f64>>> = points.par_iter().map(&f).collect();
    let mut worst = 0.0_f64;
    let mut used = 0;
    for v in vals {
        match v {
            Ok(Some(r)) => {
                worst = worst.max(r);
                used += 1;
            }
            Ok(None) => {}
            Err(e) => return Check::failed(name, &e),
        }
    }
    if used == 0 {
        return Check::skipped(name, "no admissible sample points");
    }
    Check::at_most(name, worst, tol).with_detail(format!("{used} points"))
}

fn transversal_checks(ctx: &SuiteContext<'_>, rep: &HolonomyReport, battery: Battery, checks: &mut Vec<Check>, warps: &mut Vec<WarpTrace>) -> Result<()> {
    let spec = ctx.spec;
    let v = ctx.verify();
    let tol = &v.tolerances;
    let bundle = ParallelSubbundle::from_report(spec, rep, v.bundle_step)?;
    let split = match split_unit_section(&bundle) {
        Ok(s) => s,
        Err(e) => {
            checks.push(Check::failed("split_unit_section", &e));
            return Ok(());
        }
    };
    let points = ctx.points()?;
    let locus = n1_detector(&bundle, &ctx.axis_grid(), rep.diagnostics.tolerances.n1)?;
    let off_n1 = outside_tube(&points, &locus.locus, 2.0 * v.grid_step);
    let forward = battery == Battery::Forward;

    if forward {
        checks.push(Check::flag(
            "n1_locus_consistent",
            locus.locus.iter().any(|p| p.as_slice() == ctx.base.as_slice()) == rep.n1_hit,
            format!("{} grid points on N1; base flagged {}", locus.locus.len(), rep.n1_hit),
        ));
        checks.push(pointwise("path_independence", &points, tol.path_independence, |p| bundle.path_independence(p).map(Some)));
        checks.push(pointwise("split_orthogonality", &points, tol.split, |p| {
            let s = split.at(p)?;
            let g = spec.metric_at(p.as_slice())?;
            Ok(Some(s.cross_h(&g, -1.0).abs().max(s.sum_residual())))
        }));
        checks.push(pointwise("h_norm_v2_nonnegative", &points, tol.h_norm, |p| {
            let s = split.at(p)?;
            Ok(Some((-s.h_norm_sq2(&spec.metric_at(p.as_slice())?, -1.0)).max(0.0)))
        }));
        checks.push(pointwise("tangent_intersection_spanned_by_w1", &off_n1, tol.intersection, |p| {
            let (dim, off) = tangent_intersection(&split, p)?;
            Ok(Some(if dim == 1 { off } else { f64::INFINITY }))
        }));
    }

    match curvature_annihilation_check(spec, &split, &points) {
        Ok(r) => checks.push(Check::at_most("curvature_annihilates_w", r, tol.curvature)),
        Err(e) => {
            checks.push(Check::failed("curvature_annihilates_w", &e));
            return Ok(());
        }
    }

    for alpha in [1usize, 2] {
        let name = |s: &str| format!("{s}_d{alpha}");
        let pts = if alpha == 1 { points.clone() } else { off_n1.clone() };
        let dist = if alpha == 1 { DistributionField::d1(&split, &ctx.base) } else {
            let reference = pts.first().cloned().unwrap_or_else(|| ctx.base.clone());
            DistributionField::d2(&split, &reference)
        };
        let dist = match dist {
            Ok(d) => d,
            Err(e) => {
                checks.push(Check::skipped(name("distribution"), e.to_string()));
                continue;
            }
        };
        let nu = normal_field(&bundle, NormalKind::Split(alpha));
        if forward {
            checks.push(pointwise(&name("integrable"), &pts, tol.frobenius, |p| {
                let f = frobenius_check(spec, &dist, p, tol.frobenius)?;
                Ok((!f.rank_drop).then_some(f.residual))
            }));
        }
        checks.push(pointwise(&name("umbilic_normal_w_over_w"), &pts, tol.second_fundamental_form, |p| {
            let ii = second_fundamental_form(spec, &dist, p)?;
            Ok(Some(ii.umbilic_residual(&nu(p)?)))
        }));
        checks.push(pointwise(&name("spherical"), &pts, tol.spherical, |p| {
            let s = spherical_check(spec, &dist, &nu, p, tol.spherical)?;
            Ok(Some(s.residual))
        }));
    }

    let u = match warp_direction(&split, &ctx.base) {
        Ok(u) => u,
        Err(e) => {
            checks.push(Check::skipped("warp", e.to_string()));
            return Ok(());
        }
    };
    let mut recovered: BTreeMap<usize, WarpRecovery> = BTreeMap::new();
    for alpha in [1usize, 2] {
        match warp_along(&bundle, NormalKind::Split(alpha), &u, v.curve_length, v.curve_step) {
            Ok(w) => {
                checks.push(Check::at_most(format!("warp_f{alpha}_ode"), w.ode_residual, tol.warp_ode));
                if forward {
                    checks.push(Check::at_most(format!("warp_f{alpha}_fit"), w.fit_residual, tol.warp));
                    if alpha == 1 {
                        checks.push(Check::flag("warp_f1_cosh_profile", w.profile == WarpProfile::CoshShift, format!("A = {}, B = {}", w.a, w.b)));
                    }
                }
                warps.push(WarpTrace { label: format!("f{alpha}"), recovery: w.clone() });
                recovered.insert(alpha, w);
            }
            Err(e) if alpha == 2 => checks.push(Check::skipped("warp_f2", e.to_string())),
            Err(e) => checks.push(Check::failed("warp_f1", &e)),
        }
    }
    if forward {
        if let (Some(f1), Some(f2)) = (recovered.get(&1), recovered.get(&2)) {
            match hyperbolic_pair_residual(f1, f2) {
                Ok(r) => checks.push(Check::at_most("warp_pair_f1sq_minus_f2sq", r, tol.hyperbolic_pair)),
                Err(e) => checks.push(Check::skipped("warp_pair_f1sq_minus_f2sq", e.to_string())),
            }
        }
    }
    Ok(())
}

fn lightlike_checks(ctx: &SuiteContext<'_>, rep: &HolonomyReport, battery: Battery, checks: &mut Vec<Check>, warps: &mut Vec<WarpTrace>) -> Result<()> {
    let spec = ctx.spec;
    let v = ctx.verify();
    let tol = &v.tolerances;
    let bundle = ParallelSubbundle::null_line_from_report(spec, rep, v.bundle_step)?;
    let points = ctx.points()?;
    let forward = battery == Battery::Forward;
    let ll = lightlike_structure(&bundle, &points)?;
    checks.push(Check::at_most("nabla_x_l", ll.nabla_l_residual, tol.nabla_l));
    if forward {
        checks.push(Check::at_most("l_geodesic", ll.geodesic_residual, tol.nabla_l));
        checks.push(Check::at_most("null_line_invariant", ll.invariance_residual, tol.nabla_l));
        checks.push(Check::at_most("l_unit", ll.unit_residual, tol.null_line));
    }
    let l = normal_field(&bundle, NormalKind::Null);
    let dist = DistributionField::orthogonal_to(spec, &ctx.base, l.clone())?;
    if forward {
        checks.push(pointwise("integrable_l_perp", &points, tol.frobenius, |p| {
            let f = frobenius_check(spec, &dist, p, tol.frobenius)?;
            Ok((!f.rank_drop).then_some(f.residual))
        }));
    }
    checks.push(pointwise("umbilic_normal_l", &points, tol.second_fundamental_form, |p| {
        Ok(Some(second_fundamental_form(spec, &dist, p)?.umbilic_residual(&l(p)?)))
    }));
    checks.push(pointwise("spherical_l_perp", &points, tol.spherical, |p| Ok(Some(spherical_check(spec, &dist, &l, p, tol.spherical)?.residual))));
    let g = spec.metric_at(ctx.base.as_slice())?;
    let l0 = l(&ctx.base)?;
    let u = &l0 / g_inner(&g, &l0, &l0).sqrt();
    match warp_along(&bundle, NormalKind::Null, &u, v.curve_length, v.curve_step) {
        Ok(w) => {
            checks.push(Check::at_most("warp_ode", w.ode_residual, tol.warp_ode));
            if forward {
                checks.push(Check::at_most("warp_fit", w.fit_residual, tol.warp));
                checks.push(Check::flag("warp_exponential_profile", w.profile == WarpProfile::Exponential, format!("A = {}, B = {}", w.a, w.b)));
            }
            warps.push(WarpTrace { label: "f".into(), recovery: w });
        }
        Err(e) => checks.push(Check::failed("warp", &e)),
    }
    Ok(())
}
