//! Builtin metrics: space forms, flat and perturbed flat metrics, and
//! (doubly) warped products built by nesting.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Domain, Kind, ManifoldSpec, Metric, MetricFormula, MetricScalar};
use crate::error::{require_nonzero_c, Error, Result};
use crate::jet::{Dual, Jet2, Scalar};

/// Largest perturbation amplitude accepted by [`perturbed_flat`].
pub const MAX_PERTURBATION: f64 = 0.2;

const PERTURBATION_MODES: usize = 3;

#[derive(Clone, Debug)]
pub struct FlatMetric {
    pub n: usize,
}

impl MetricFormula for FlatMetric {
    fn dim(&self) -> usize {
        self.n
    }
    fn formula<S: MetricScalar>(&self, _y: &[S]) -> Option<Vec<S>> {
        let n = self.n;
        Some((0..n * n).map(|e| S::cst(if e / n == e % n { 1.0 } else { 0.0 })).collect())
    }
}

/// Chart of the space form of curvature `c`: graph chart `y -> (y, sqrt(1 - c|y|^2))`
/// for `c < 0`, stereographic chart for `c > 0`.
#[derive(Clone, Debug)]
pub struct SpaceFormChart {
    pub n: usize,
    pub c: f64,
}

impl SpaceFormChart {
    pub fn new(n: usize, c: f64) -> Result<Self> {
        require_nonzero_c(c)?;
        if n == 0 {
            return Err(Error::arg("space form dimension must be at least 1"));
        }
        Ok(Self { n, c })
    }

    /// Ambient point in R^{n+1} on `c|x|^2 + x_{n+1}^2 = 1`.
    pub fn embed(&self, y: &[f64]) -> DVector<f64> {
        let n = self.n;
        let r2: f64 = y.iter().map(|v| v * v).sum();
        let mut x = DVector::zeros(n + 1);
        if self.c < 0.0 {
            x.rows_mut(0, n).copy_from_slice(y);
            x[n] = (1.0 - self.c * r2).sqrt();
        } else {
            let s = 1.0 / self.c.sqrt();
            for i in 0..n {
                x[i] = s * 2.0 * y[i] / (1.0 + r2);
            }
            x[n] = (1.0 - r2) / (1.0 + r2);
        }
        x
    }

    /// Inverse of [`Self::embed`].
    pub fn chart_of(&self, x: &DVector<f64>) -> DVector<f64> {
        let n = self.n;
        if self.c < 0.0 {
            x.rows(0, n).into_owned()
        } else {
            let s = self.c.sqrt();
            x.rows(0, n) * (s / (1.0 + x[n]))
        }
    }

    /// Jacobian of the embedding, `(n+1) x n`.
    pub fn embed_jacobian(&self, y: &[f64]) -> DMatrix<f64> {
        let vars = Dual::variables(y);
        let n = self.n;
        let r2 = vars.iter().fold(Dual::cst(0.0), |a, &v| a + v * v);
        let mut jac = DMatrix::zeros(n + 1, n);
        let mut put = |row: usize, d: Dual| {
            for j in 0..n {
                jac[(row, j)] = d.d[j];
            }
        };
        if self.c < 0.0 {
            for (i, &v) in vars.iter().enumerate() {
                put(i, v);
            }
            put(n, (Dual::cst(1.0) - r2 * self.c).sqrt());
        } else {
            let s = 1.0 / self.c.sqrt();
            for (i, &v) in vars.iter().enumerate() {
                put(i, v * (2.0 * s) / (r2 + 1.0));
            }
            put(n, (Dual::cst(1.0) - r2) / (r2 + 1.0));
        }
        jac
    }

    /// Riemannian distance between two chart points.
    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        let xa = self.embed(a);
        let xb = self.embed(b);
        let n = self.n;
        let ip: f64 = (0..n).map(|i| xa[i] * xb[i]).sum::<f64>() + xa[n] * xb[n] / self.c;
        // <x, y> = cos(sqrt(c) d) / c for c > 0 and cosh(sqrt(-c) d) / c for c < 0
        let k = self.c.abs().sqrt();
        if self.c < 0.0 {
            (self.c * ip).max(1.0).acosh() / k
        } else {
            (self.c * ip).clamp(-1.0, 1.0).acos() / k
        }
    }
}

impl MetricFormula for SpaceFormChart {
    fn dim(&self) -> usize {
        self.n
    }
    fn formula<S: MetricScalar>(&self, y: &[S]) -> Option<Vec<S>> {
        let n = self.n;
        let r2 = y.iter().fold(S::cst(0.0), |a, &v| a + v * v);
        let mut out = Vec::with_capacity(n * n);
        if self.c < 0.0 {
            let inv = (S::cst(1.0) - r2 * self.c).recip();
            for i in 0..n {
                for j in 0..n {
                    let delta = if i == j { 1.0 } else { 0.0 };
                    out.push(y[i] * y[j] * inv * self.c + delta);
                }
            }
        } else {
            let conf = (r2 + 1.0).powi(2).recip() * (4.0 / self.c);
            for i in 0..n {
                for j in 0..n {
                    out.push(if i == j { conf } else { S::cst(0.0) });
                }
            }
        }
        Some(out)
    }
}

#[derive(Clone, Debug)]
struct Mode {
    coeff: f64,
    k: Vec<f64>,
    phase: f64,
}

/// `g_ij = δ_ij + (amplitude / n) Σ a sin(k·y + φ)`, three seeded modes per entry
/// with `Σ|a| ≤ 1`, so the metric stays diagonally dominant.
#[derive(Clone, Debug)]
pub struct PerturbedFlat {
    pub n: usize,
    pub amplitude: f64,
    pub seed: u64,
    modes: Vec<Vec<Mode>>,
}

impl PerturbedFlat {
    pub fn new(n: usize, amplitude: f64, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::arg("dimension must be at least 1"));
        }
        if !(0.0..=MAX_PERTURBATION).contains(&amplitude) {
            return Err(Error::arg(format!(
                "perturbation amplitude {amplitude} outside [0, {MAX_PERTURBATION}]"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut modes = Vec::new();
        for _ in 0..n * (n + 1) / 2 {
            let mut entry = Vec::with_capacity(PERTURBATION_MODES);
            for _ in 0..PERTURBATION_MODES {
                let coeff = rng.random_range(-1.0..=1.0) / PERTURBATION_MODES as f64;
                let k = (0..n).map(|_| rng.random_range(-2..=2) as f64).collect();
                let phase = rng.random_range(0.0..2.0 * PI);
                entry.push(Mode { coeff, k, phase });
            }
            modes.push(entry);
        }
        Ok(Self { n, amplitude, seed, modes })
    }

    fn entry_index(&self, i: usize, j: usize) -> usize {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        a * self.n - a * (a + 1) / 2 + b
    }
}

impl MetricFormula for PerturbedFlat {
    fn dim(&self) -> usize {
        self.n
    }
    fn formula<S: MetricScalar>(&self, y: &[S]) -> Option<Vec<S>> {
        let n = self.n;
        let scale = self.amplitude / n as f64;
        let mut out = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let mut v = S::cst(if i == j { 1.0 } else { 0.0 });
                if scale != 0.0 {
                    for m in &self.modes[self.entry_index(i, j)] {
                        let arg = y.iter().zip(&m.k).fold(S::cst(m.phase), |a, (&yy, &k)| a + yy * k);
                        v = v + arg.sin() * (scale * m.coeff);
                    }
                }
                out.push(v);
            }
        }
        Some(out)
    }
}

/// Scalar warping function with its first two derivatives, as a function of
/// the first base coordinate.
#[derive(Clone)]
pub struct CustomWarp {
    pub name: String,
    pub f: Arc<dyn Fn(f64) -> [f64; 3] + Send + Sync>,
}

impl std::fmt::Debug for CustomWarp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "CustomWarp({})", self.name)
    }
}

#[derive(Clone, Debug)]
pub enum WarpKind {
    /// `e^{-s}`, `s` the first base coordinate.
    ExpMinus,
    Sinh,
    Cosh,
    /// `cosh(sqrt(-c) d)` with `d` the distance to the chart origin of a
    /// space-form base of curvature `c < 0` in its graph chart.
    CoshDist { c: f64 },
    Custom(CustomWarp),
}

impl WarpKind {
    pub fn name(&self) -> String {
        match self {
            WarpKind::ExpMinus => "exp_minus".into(),
            WarpKind::Sinh => "sinh".into(),
            WarpKind::Cosh => "cosh".into(),
            WarpKind::CoshDist { .. } => "cosh_dist".into(),
            WarpKind::Custom(c) => format!("custom:{}", c.name),
        }
    }

    pub fn eval<S: Scalar>(&self, base: &[S]) -> S {
        match self {
            WarpKind::ExpMinus => (-base[0]).exp(),
            WarpKind::Sinh => base[0].sinh(),
            WarpKind::Cosh => base[0].cosh(),
            // x_{k+1} of the graph chart equals cosh(sqrt(-c) d)
            WarpKind::CoshDist { c } => {
                let r2 = base.iter().fold(S::cst(0.0), |a, &v| a + v * v);
                (r2 * (-*c) + 1.0).sqrt()
            }
            WarpKind::Custom(w) => {
                let [f, df, ddf] = (w.f)(base[0].value());
                base[0].chain(f, df, ddf)
            }
        }
    }
}

/// `h ⊕_f g`: base coordinates first, then fiber coordinates.
#[derive(Clone, Debug)]
pub struct WarpedProduct {
    pub base: Arc<dyn Metric>,
    pub fiber: Arc<dyn Metric>,
    pub warp: WarpKind,
}

impl WarpedProduct {
    fn entries<S: MetricScalar>(&self, y: &[S]) -> Option<Vec<S>> {
        let nb = self.base.dim();
        let nf = self.fiber.dim();
        let n = nb + nf;
        let hb = S::eval_metric(&*self.base, &y[..nb])?;
        let gf = S::eval_metric(&*self.fiber, &y[nb..])?;
        let f = self.warp.eval(&y[..nb]);
        let f2 = f * f;
        let mut out = vec![S::cst(0.0); n * n];
        for i in 0..nb {
            for j in 0..nb {
                out[i * n + j] = hb[i * nb + j];
            }
        }
        for i in 0..nf {
            for j in 0..nf {
                out[(nb + i) * n + nb + j] = f2 * gf[i * nf + j];
            }
        }
        Some(out)
    }
}

impl Metric for WarpedProduct {
    fn dim(&self) -> usize {
        self.base.dim() + self.fiber.dim()
    }
    fn entries_f64(&self, y: &[f64]) -> Vec<f64> {
        self.entries(y).expect("f64 evaluation always available")
    }
    fn entries_dual(&self, y: &[Dual]) -> Option<Vec<Dual>> {
        self.entries(y)
    }
    fn entries_jet(&self, y: &[Jet2]) -> Option<Vec<Jet2>> {
        self.entries(y)
    }
}

pub type MetricCallback = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;

/// Metric given by an `f64` callback; derivatives by finite differences.
#[derive(Clone)]
pub struct CustomMetric {
    pub n: usize,
    pub name: String,
    pub f: MetricCallback,
}

impl std::fmt::Debug for CustomMetric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "CustomMetric({}, n={})", self.name, self.n)
    }
}

impl Metric for CustomMetric {
    fn dim(&self) -> usize {
        self.n
    }
    fn entries_f64(&self, y: &[f64]) -> Vec<f64> {
        let m = (self.f)(y);
        let n = self.n;
        (0..n * n).map(|e| m[(e / n, e % n)]).collect()
    }
    fn entries_dual(&self, _y: &[Dual]) -> Option<Vec<Dual>> {
        None
    }
    fn entries_jet(&self, _y: &[Jet2]) -> Option<Vec<Jet2>> {
        None
    }
}

impl CustomMetric {
    pub fn spec(n: usize, name: &str, domain: Domain, f: MetricCallback) -> Result<ManifoldSpec> {
        let m = CustomMetric { n, name: name.into(), f };
        ManifoldSpec::new(name, Arc::new(m), domain, Kind::Custom { name: name.into() })
    }
}

pub fn space_form(n: usize, c: f64) -> Result<ManifoldSpec> {
    let chart = SpaceFormChart::new(n, c)?;
    let half = if c < 0.0 { 2.0 } else { 1.5 };
    ManifoldSpec::new(
        "space_form",
        Arc::new(chart),
        Domain::cube(n, half / c.abs().sqrt().max(1.0)),
        Kind::SpaceForm { n, c },
    )
}

pub fn flat(n: usize) -> Result<ManifoldSpec> {
    if n == 0 {
        return Err(Error::arg("dimension must be at least 1"));
    }
    ManifoldSpec::new("flat", Arc::new(FlatMetric { n }), Domain::cube(n, 2.0), Kind::Flat { n })
}

/// One-dimensional flat factor on `(lo, hi)`.
pub fn interval(lo: f64, hi: f64) -> Result<ManifoldSpec> {
    flat(1)?.with_domain(Domain::new(vec![lo], vec![hi])?)
}

pub fn perturbed_flat(n: usize, amplitude: f64, seed: u64) -> Result<ManifoldSpec> {
    let m = PerturbedFlat::new(n, amplitude, seed)?;
    ManifoldSpec::new(
        "perturbed_flat",
        Arc::new(m),
        Domain::cube(n, 1.0),
        Kind::PerturbedFlat { n, amplitude, seed },
    )
}

pub fn warped_product(base: &ManifoldSpec, fiber: &ManifoldSpec, warp: WarpKind) -> Result<ManifoldSpec> {
    let dom = base.domain();
    match &warp {
        WarpKind::Sinh => {
            if dom.lo[0] < 0.0 && dom.hi[0] > 0.0 {
                return Err(Error::arg("sinh warp vanishes inside the base domain"));
            }
        }
        WarpKind::CoshDist { c } => match base.kind() {
            Kind::SpaceForm { c: cb, .. } if *cb < 0.0 && (cb - c).abs() <= 1e-15 * c.abs() => {}
            _ => {
                return Err(Error::arg(
                    "cosh_dist warp needs a negatively curved space-form base of the same c",
                ))
            }
        },
        WarpKind::Custom(w) => {
            for i in 0..=16 {
                let s = dom.lo[0] + (dom.hi[0] - dom.lo[0]) * i as f64 / 16.0;
                let v = (w.f)(s)[0];
                if v == 0.0 || !v.is_finite() || v.signum() != (w.f)(dom.lo[0])[0].signum() {
                    return Err(Error::arg(format!("custom warp {} vanishes on the base domain", w.name)));
                }
            }
        }
        WarpKind::ExpMinus | WarpKind::Cosh => {}
    }
    let metric = WarpedProduct {
        base: base.metric().clone(),
        fiber: fiber.metric().clone(),
        warp: warp.clone(),
    };
    ManifoldSpec::new(
        "warped_product",
        Arc::new(metric),
        base.domain().product(fiber.domain()),
        Kind::WarpedProduct {
            base: Box::new(base.kind().clone()),
            fiber: Box::new(fiber.kind().clone()),
            warp: warp.name(),
        },
    )
}

/// `(I × M_1, ds² ⊕_{e^{-s}} g_1)` with `I = (-1, 1)`.
pub fn wp1(fiber: &ManifoldSpec) -> Result<ManifoldSpec> {
    Ok(warped_product(&interval(-1.0, 1.0)?, fiber, WarpKind::ExpMinus)?.renamed("wp1"))
}

/// `(I × M_2 × M_1, ds² ⊕_{sinh s} g_2 ⊕_{cosh s} g_1)` on `I = (s_min, s_max)`.
/// With `fiber2 = None` this is `ds² ⊕_{cosh s} g_1`.
pub fn lw2(fiber2: Option<&ManifoldSpec>, fiber1: &ManifoldSpec, s_min: f64, s_max: f64) -> Result<ManifoldSpec> {
    if !(s_min > 0.0 && s_max > s_min) {
        return Err(Error::arg("doubly warped interval must satisfy 0 < s_min < s_max"));
    }
    let i = interval(s_min, s_max)?;
    let base = match fiber2 {
        Some(f2) => warped_product(&i, f2, WarpKind::Sinh)?,
        None => i,
    };
    Ok(warped_product(&base, fiber1, WarpKind::Cosh)?.renamed("lw2"))
}

/// Polar presentation of `H^k ×_{cosh d} M_1`: `ds² + sinh²(s) g_{S^{k-1}} + cosh²(s) g_1`.
pub fn wp2_polar(k: usize, fiber1: &ManifoldSpec, s_min: f64, s_max: f64) -> Result<ManifoldSpec> {
    let sphere = match k {
        0 => return Err(Error::arg("k must be at least 1")),
        1 => None,
        2 => Some(flat(1)?.with_domain(Domain::new(vec![-PI + 0.1], vec![PI - 0.1])?)?),
        _ => Some(space_form(k - 1, 1.0)?),
    };
    Ok(lw2(sphere.as_ref(), fiber1, s_min, s_max)?.renamed("wp2_polar"))
}

/// `(O × M_1, g_{k;-1} ⊕_{cosh d} g_1)` in the graph chart of `H^k`; the chart origin is `x_0`.
pub fn lw3(k: usize, fiber: &ManifoldSpec) -> Result<ManifoldSpec> {
    let base = space_form(k, -1.0)?.with_domain(Domain::cube(k, 1.5))?;
    Ok(warped_product(&base, fiber, WarpKind::CoshDist { c: -1.0 })?.renamed("lw3"))
}
