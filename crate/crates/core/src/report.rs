//! Commands behind the CLI: classification, rolling and verification runs,
//! rendered as deterministic JSON reports plus plot-ready CSV rows.

use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::decomposition::{
    n1_detector, recover_warp, split_unit_section, warp_direction, NormalKind, ParallelSubbundle, WarpRecovery, BUNDLE_STEP,
};
use crate::error::{Error, Result};
use crate::holonomy::{classify, holonomy_algebra, HolonomyReport, Loop, Verdict};
use crate::linalg;
use crate::manifold::registry::Registry;
use crate::manifold::ManifoldSpec;
use crate::ode::Path;
use crate::rolling::{
    holonomy_correspondence, roll_traced, rolling_loop_element, RollOptions, RollingState, ISOMETRY_TOL,
    ON_MANIFOLD_TOL, TANGENCY_TOL,
};
use crate::suites::{SuiteContext, SuiteRegistry};

pub const TOOL: &str = "rollhol";

/// One CSV row `t, quantity, value`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PlotRow {
    pub t: f64,
    pub quantity: String,
    pub value: f64,
}

impl PlotRow {
    pub fn new(t: f64, quantity: impl Into<String>, value: f64) -> Self {
        Self { t, quantity: quantity.into(), value }
    }
}

/// Renders rows as CSV with a header line.
pub fn csv(rows: &[PlotRow]) -> String {
    let mut out = String::from("t,quantity,value\n");
    for r in rows {
        out.push_str(&format!("{},{},{}\n", r.t, r.quantity, r.value));
    }
    out
}

#[derive(Clone, Debug)]
pub struct CommandOutput {
    pub report: Value,
    /// False when a verification criterion failed.
    pub success: bool,
    /// Plot files: `(file stem, rows)`.
    pub plots: Vec<(String, Vec<PlotRow>)>,
    /// JSON-lines trajectory, one state per line.
    pub trajectory: Option<Vec<String>>,
}

/// Standard report envelope; `timing_s` is the only nondeterministic field.
fn envelope(command: &str, cfg: &RunConfig, spec: &ManifoldSpec, base: &DVector<f64>, tolerances: Value, results: Value, start: Instant) -> Result<Value> {
    Ok(json!({
        "tool": TOOL,
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "config": serde_json::to_value(cfg).map_err(|e| Error::numeric(e.to_string()))?,
        "manifold": { "name": spec.name(), "dim": spec.dim() },
        "base_point": base.as_slice(),
        "tolerances": tolerances,
        "results": results,
        "timing_s": start.elapsed().as_secs_f64(),
    }))
}

fn to_value<T: Serialize>(v: &T) -> Result<Value> {
    serde_json::to_value(v).map_err(|e| Error::numeric(format!("serialization failed: {e}")))
}

fn sampling_tolerances(cfg: &RunConfig) -> Value {
    let s = &cfg.sampling;
    json!({
        "rank": s.rank_tol,
        "zero": s.zero_tol,
        "subspace": s.subspace_tol,
        "n1": s.n1_tol,
        "step": s.step,
        "loop_eps": s.eps,
    })
}

pub struct Prepared {
    pub spec: ManifoldSpec,
    pub base: DVector<f64>,
}

pub fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    let spec = cfg.manifold(&Registry::with_builtins())?;
    let base = cfg.base(&spec)?;
    Ok(Prepared { spec, base })
}

/// Decomposition hints for a reducible verdict: N1 locus and a recovered warp.
#[derive(Clone, Debug, Serialize)]
struct Hints {
    n1_locus: Option<Vec<Vec<f64>>>,
    warp: Option<WarpSummary>,
    note: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
struct WarpSummary {
    direction: Vec<f64>,
    length: f64,
    a: f64,
    b: f64,
    profile: crate::decomposition::WarpProfile,
    fit_residual: f64,
    ode_residual: f64,
}

fn warp_summary(u: &DVector<f64>, w: &WarpRecovery) -> WarpSummary {
    WarpSummary {
        direction: u.iter().copied().collect(),
        length: *w.t.last().unwrap_or(&0.0),
        a: w.a,
        b: w.b,
        profile: w.profile,
        fit_residual: w.fit_residual,
        ode_residual: w.ode_residual,
    }
}

fn hints(spec: &ManifoldSpec, cfg: &RunConfig, base: &DVector<f64>, rep: &HolonomyReport, plots: &mut Vec<PlotRow>) -> Hints {
    let mut attempt = || -> Result<Hints> {
        let v = &cfg.verify;
        let (bundle, kind, u) = match rep.verdict {
            Verdict::ReducibleLightlike => {
                let b = ParallelSubbundle::null_line_from_report(spec, rep, BUNDLE_STEP)?;
                let u = rep.null_direction_unit.clone().ok_or_else(|| Error::WrongCase("no null direction".into()))?;
                (b, NormalKind::Null, u)
            }
            Verdict::ReducibleTransversal => {
                let b = ParallelSubbundle::from_report(spec, rep, BUNDLE_STEP)?;
                let split = split_unit_section(&b)?;
                let u = warp_direction(&split, base)?;
                (b, NormalKind::Split(1), u)
            }
            _ => return Ok(Hints { n1_locus: None, warp: None, note: Some("no invariant subspace located".into()) }),
        };
        let locus = if kind == NormalKind::Null {
            None
        } else {
            let n = spec.dim();
            let mut grid = vec![base.clone()];
            for i in 0..n {
                for k in [-1.0, 1.0] {
                    let mut p = base.clone();
                    p[i] += k * v.grid_step;
                    if spec.domain().contains(p.as_slice()) {
                        grid.push(p);
                    }
                }
            }
            Some(n1_detector(&bundle, &grid, cfg.sampling.n1_tol)?.locus)
        };
        let mut length = v.curve_length;
        let mut warp = None;
        for _ in 0..4 {
            match recover_warp(&bundle, kind, &u, length, v.curve_step) {
                Ok(w) => {
                    for (t, f) in w.t.iter().zip(&w.f).step_by(10) {
                        plots.push(PlotRow::new(*t, "warp", *f));
                    }
                    warp = Some(warp_summary(&u, &w));
                    break;
                }
                Err(Error::Domain { .. }) => length *= 0.5,
                Err(e) => return Err(e),
            }
        }
        Ok(Hints { n1_locus: locus, warp, note: None })
    };
    attempt().unwrap_or_else(|e| Hints { n1_locus: None, warp: None, note: Some(format!("decomposition hints unavailable: {e}")) })
}

pub fn cmd_classify(cfg: &RunConfig) -> Result<CommandOutput> {
    let start = Instant::now();
    let Prepared { spec, base } = prepare(cfg)?;
    let mut plots = Vec::new();
    let results = if cfg.c > 0.0 {
        let alg = holonomy_algebra(&spec, cfg.c, &base, &cfg.sampling)?;
        for (k, d) in alg.dims.iter().enumerate() {
            plots.push(PlotRow::new(k as f64, "algebra_dim", *d as f64));
        }
        let n = spec.dim();
        json!({
            "algebra_dim": alg.dim,
            "full_dim": n * (n + 1) / 2,
            "dims": alg.dims,
            "stable": alg.stable,
            "max_loop_log_norm": alg.max_loop_log_norm,
            "note": "c > 0: only the raw holonomy dimension is reported; verdicts are defined for c < 0",
        })
    } else {
        let rep = classify(&spec, cfg.c, &base, &cfg.sampling)?;
        for (k, d) in rep.diagnostics.dims.iter().enumerate() {
            plots.push(PlotRow::new(k as f64, "algebra_dim", *d as f64));
        }
        let mut warp_rows = Vec::new();
        let h = if rep.verdict.is_reducible() && cfg.c == -1.0 { Some(hints(&spec, cfg, &base, &rep, &mut warp_rows)) } else { None };
        if !warp_rows.is_empty() {
            plots.extend(warp_rows);
        }
        let mut v = to_value(&rep)?;
        v["case"] = json!(match rep.verdict {
            Verdict::IrreducibleControllable => "irreducible",
            Verdict::ReducibleLightlike => "lightlike (WP1-type)",
            Verdict::ReducibleTransversal => "transversal (WP2-type)",
            Verdict::ReducibleUnlocated => "unlocated",
        });
        v["decomposition_hints"] = to_value(&h)?;
        v
    };
    let report = envelope("classify", cfg, &spec, &base, sampling_tolerances(cfg), results, start)?;
    Ok(CommandOutput { report, success: true, plots: vec![("classify".into(), plots)], trajectory: None })
}

/// Path file for `roll`: chart waypoints, or a loop description.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathFile {
    #[serde(default)]
    pub waypoints: Option<Vec<Vec<f64>>>,
    #[serde(default, rename = "loop")]
    pub loop_: Option<Loop>,
}

impl PathFile {
    pub fn parse(text: &str) -> Result<Self> {
        let p: PathFile = serde_json::from_str(text).map_err(|e| Error::Config(format!("path file: {e}")))?;
        if p.waypoints.is_some() == p.loop_.is_some() {
            return Err(Error::Config("path file needs exactly one of `waypoints` or `loop`".into()));
        }
        Ok(p)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }
}

fn scaled_loop(lp: &Loop, factor: f64) -> Option<Loop> {
    use crate::holonomy::LoopKind;
    let b = lp.base();
    let scale = |pts: &[Vec<f64>]| -> Vec<Vec<f64>> {
        pts.iter().map(|p| p.iter().zip(&b).map(|(x, x0)| x0 + factor * (x - x0)).collect()).collect()
    };
    let kind = match &lp.kind {
        LoopKind::CoordinateRectangle { base, plane, eps } => LoopKind::CoordinateRectangle { base: base.clone(), plane: *plane, eps: eps * factor },
        LoopKind::ChartPath { waypoints } => LoopKind::ChartPath { waypoints: scale(waypoints) },
        LoopKind::GeodesicPolygon { .. } => return None,
    };
    Some(Loop { kind, step: (lp.step * factor).min(lp.step) })
}

pub fn cmd_roll(cfg: &RunConfig, path_file: &PathFile) -> Result<CommandOutput> {
    let start = Instant::now();
    let Prepared { spec, base } = prepare(cfg)?;
    let (path, lp) = match (&path_file.waypoints, &path_file.loop_) {
        (Some(w), _) if w.is_empty() => (Path::constant(base.as_slice()), None),
        (Some(w), _) => {
            let pts: Vec<DVector<f64>> = w.iter().map(|p| DVector::from_column_slice(p)).collect();
            if pts.iter().any(|p| p.len() != spec.dim()) {
                return Err(Error::Config("waypoint dimension does not match the manifold".into()));
            }
            let closed = pts.len() > 1 && pts.first() == pts.last();
            let lp = closed.then(|| Loop::chart_path(w.clone(), cfg.roll.step));
            (Path::polyline(&pts)?, lp)
        }
        (None, Some(lp)) => (lp.to_path(&spec)?, Some(lp.clone())),
        (None, None) => unreachable!("validated by PathFile::parse"),
    };
    let start_x = DVector::from_column_slice(&path.start);
    let q0 = RollingState::initial(&spec, cfg.c, &start_x)?;
    let opts = RollOptions { step: cfg.roll.step, project: cfg.roll.project, trace_every: cfg.roll.trace_every.max(1), enforce: false };
    let (out, trace) = roll_traced(&spec, &q0, &path, opts)?;
    let mut rows = Vec::new();
    let mut lines = Vec::with_capacity(trace.len());
    for s in &trace {
        rows.push(PlotRow::new(s.t, "on_manifold", s.drift.on_manifold));
        rows.push(PlotRow::new(s.t, "tangency", s.drift.tangency));
        rows.push(PlotRow::new(s.t, "isometry", s.drift.isometry));
        rows.push(PlotRow::new(s.t, "orientation", s.drift.orientation));
        lines.push(serde_json::to_string(s).map_err(|e| Error::numeric(e.to_string()))?);
    }
    let within = out.drift.within(1.0);
    let mut results = json!({
        "final_state": to_value(&out.state)?,
        "truncated": out.truncated,
        "steps": out.steps,
        "length": out.length,
        "drift": to_value(&out.drift)?,
        "drift_within_tolerance": within,
        "max_projection": out.max_projection,
    });
    if let Some(lp) = &lp {
        let lp = Loop { step: cfg.roll.step, ..lp.clone() };
        let b = rolling_loop_element(&spec, &q0, &lp)?;
        let corr = holonomy_correspondence(&spec, &q0, &lp)?;
        let id = nalgebra::DMatrix::identity(spec.dim() + 1, spec.dim() + 1);
        let log = linalg::logm(&b.mat)?;
        let mut closed = json!({
            "loop_element": crate::serial::rows(&b.mat),
            "identity_deviation": linalg::max_abs(&(&b.mat - id)),
            "log_norm": log.norm(),
            "correspondence": to_value(&corr)?,
        });
        if let Some(half) = scaled_loop(&lp, 0.5) {
            let bh = rolling_loop_element(&spec, &q0, &half)?;
            let lh = linalg::logm(&bh.mat)?.norm();
            let ratio = log.norm() / lh.max(1e-300);
            closed["area_scaling"] = json!({
                "half_size_log_norm": lh,
                "ratio": ratio,
                "observed_order": if lh > 1e-12 { Some(ratio.log2()) } else { None },
            });
        }
        results["closed_path"] = closed;
    }
    let tolerances = json!({
        "on_manifold": ON_MANIFOLD_TOL,
        "tangency": TANGENCY_TOL,
        "isometry": ISOMETRY_TOL,
        "step": cfg.roll.step,
        "group_membership": 1e-6,
    });
    let report = envelope("roll", cfg, &spec, &base, tolerances, results, start)?;
    Ok(CommandOutput { report, success: true, plots: vec![("roll".into(), rows)], trajectory: Some(lines) })
}

pub fn cmd_verify(cfg: &RunConfig, suite: &str) -> Result<CommandOutput> {
    let start = Instant::now();
    let registry = SuiteRegistry::default();
    let s = registry.get(suite)?;
    let Prepared { spec, base } = prepare(cfg)?;
    let ctx = SuiteContext { spec: &spec, c: cfg.c, base: base.clone(), config: cfg };
    let out = s.run(&ctx)?;
    let mut rows = Vec::new();
    for w in &out.warps {
        for (t, f) in w.recovery.t.iter().zip(&w.recovery.f).step_by(10) {
            rows.push(PlotRow::new(*t, &w.label, *f));
        }
    }
    let mut tolerances = to_value(&cfg.verify.tolerances)?;
    tolerances["sampling"] = sampling_tolerances(cfg);
    let report = envelope("verify", cfg, &spec, &base, tolerances, to_value(&out)?, start)?;
    Ok(CommandOutput { report, success: out.passed, plots: vec![("verify".into(), rows)], trajectory: None })
}

/// Report with the timing field removed, for determinism comparisons.
pub fn without_timing(mut report: Value) -> Value {
    if let Some(obj) = report.as_object_mut() {
        obj.remove("timing_s");
    }
    report
}
