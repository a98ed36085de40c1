//! Name-keyed catalog of manifold constructors driven by config tables.
//!
//! Each constructor reads its parameters from a TOML table whose `kind` key
//! selects it. Composite kinds take nested tables, so warped products
//! compose to any depth.

use std::collections::BTreeMap;

use toml::{Table, Value};

use super::builtins::{self, interval, WarpKind};
use super::{Domain, Kind, ManifoldSpec};
use crate::error::{Error, Result};

pub const DEFAULT_FIBER_SEED: u64 = 7;
pub const DEFAULT_AMPLITUDE: f64 = 0.1;

pub trait ManifoldBuilder: Send + Sync {
    fn kind(&self) -> &'static str;
    fn summary(&self) -> &'static str;
    fn build(&self, table: &Table, registry: &Registry) -> Result<ManifoldSpec>;
}

pub struct Registry {
    builders: BTreeMap<&'static str, Box<dyn ManifoldBuilder>>,
}

impl Default for Registry {
    fn default() -> Self {
        Self::with_builtins()
    }
}

impl Registry {
    pub fn empty() -> Self {
        Self { builders: BTreeMap::new() }
    }

    pub fn with_builtins() -> Self {
        let mut r = Self::empty();
        r.register(Box::new(SpaceFormBuilder));
        r.register(Box::new(FlatBuilder));
        r.register(Box::new(IntervalBuilder));
        r.register(Box::new(PerturbedFlatBuilder));
        r.register(Box::new(WarpedBuilder));
        r.register(Box::new(DoublyWarpedBuilder));
        r.register(Box::new(Wp1Builder));
        r.register(Box::new(Lw2Builder));
        r.register(Box::new(Wp2PolarBuilder));
        r.register(Box::new(Lw3Builder));
        r
    }

    pub fn register(&mut self, b: Box<dyn ManifoldBuilder>) {
        self.builders.insert(b.kind(), b);
    }

    pub fn kinds(&self) -> impl Iterator<Item = (&'static str, &'static str)> + '_ {
        self.builders.values().map(|b| (b.kind(), b.summary()))
    }

    pub fn build(&self, table: &Table) -> Result<ManifoldSpec> {
        let kind = get_str(table, "kind")?
            .ok_or_else(|| Error::Config("manifold table is missing `kind`".into()))?;
        let b = self.builders.get(kind).ok_or_else(|| {
            let known: Vec<&str> = self.builders.keys().copied().collect();
            Error::Config(format!("unknown manifold kind `{kind}` (known: {})", known.join(", ")))
        })?;
        let spec = b.build(table, self)?;
        match table.get("domain") {
            None => Ok(spec),
            Some(Value::Table(d)) => {
                let lo = get_floats(d, "lo")?.ok_or_else(|| Error::Config("domain needs `lo`".into()))?;
                let hi = get_floats(d, "hi")?.ok_or_else(|| Error::Config("domain needs `hi`".into()))?;
                let dom = Domain::new(lo, hi).map_err(|e| Error::Config(e.to_string()))?;
                spec.with_domain(dom).map_err(|e| Error::Config(e.to_string()))
            }
            Some(_) => Err(Error::Config("`domain` must be a table".into())),
        }
    }

    fn nested(&self, table: &Table, key: &str) -> Result<Option<ManifoldSpec>> {
        match table.get(key) {
            None => Ok(None),
            Some(Value::Table(t)) => self.build(t).map(Some),
            Some(_) => Err(Error::Config(format!("`{key}` must be a manifold table"))),
        }
    }

    fn nested_or(&self, table: &Table, key: &str, default: impl FnOnce() -> Result<ManifoldSpec>) -> Result<ManifoldSpec> {
        match self.nested(table, key)? {
            Some(s) => Ok(s),
            None => default(),
        }
    }
}

fn get_str<'a>(t: &'a Table, key: &str) -> Result<Option<&'a str>> {
    match t.get(key) {
        None => Ok(None),
        Some(Value::String(s)) => Ok(Some(s)),
        Some(_) => Err(Error::Config(format!("`{key}` must be a string"))),
    }
}

pub(crate) fn get_float(t: &Table, key: &str) -> Result<Option<f64>> {
    match t.get(key) {
        None => Ok(None),
        Some(Value::Float(f)) => Ok(Some(*f)),
        Some(Value::Integer(i)) => Ok(Some(*i as f64)),
        Some(_) => Err(Error::Config(format!("`{key}` must be a number"))),
    }
}

pub(crate) fn get_int(t: &Table, key: &str) -> Result<Option<i64>> {
    match t.get(key) {
        None => Ok(None),
        Some(Value::Integer(i)) => Ok(Some(*i)),
        Some(_) => Err(Error::Config(format!("`{key}` must be an integer"))),
    }
}

pub(crate) fn get_floats(t: &Table, key: &str) -> Result<Option<Vec<f64>>> {
    match t.get(key) {
        None => Ok(None),
        Some(Value::Array(a)) => a
            .iter()
            .map(|v| match v {
                Value::Float(f) => Ok(*f),
                Value::Integer(i) => Ok(*i as f64),
                _ => Err(Error::Config(format!("`{key}` must be an array of numbers"))),
            })
            .collect::<Result<Vec<f64>>>()
            .map(Some),
        Some(_) => Err(Error::Config(format!("`{key}` must be an array"))),
    }
}

fn need_float(t: &Table, key: &str) -> Result<f64> {
    get_float(t, key)?.ok_or_else(|| Error::Config(format!("missing `{key}`")))
}

fn dim(t: &Table, key: &str, default: Option<usize>) -> Result<usize> {
    match get_int(t, key)? {
        Some(v) if v >= 1 => Ok(v as usize),
        Some(v) => Err(Error::Config(format!("`{key}` must be at least 1, got {v}"))),
        None => default.ok_or_else(|| Error::Config(format!("missing `{key}`"))),
    }
}

fn seed(t: &Table) -> Result<u64> {
    match get_int(t, "seed")? {
        Some(v) if v >= 0 => Ok(v as u64),
        Some(v) => Err(Error::Config(format!("`seed` must be nonnegative, got {v}"))),
        None => Ok(DEFAULT_FIBER_SEED),
    }
}

fn cfg<T>(r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Argument(m) => Error::Config(m),
        other => other,
    })
}

fn default_fiber(t: &Table) -> Result<ManifoldSpec> {
    builtins::perturbed_flat(2, DEFAULT_AMPLITUDE, seed(t)?)
}

fn warp_kind(name: &str, base: &ManifoldSpec) -> Result<WarpKind> {
    Ok(match name {
        "exp_minus" => WarpKind::ExpMinus,
        "sinh" => WarpKind::Sinh,
        "cosh" => WarpKind::Cosh,
        "cosh_dist" => match base.kind() {
            Kind::SpaceForm { c, .. } => WarpKind::CoshDist { c: *c },
            _ => return Err(Error::Config("cosh_dist warp needs a space_form base".into())),
        },
        other => return Err(Error::Config(format!("unknown warp `{other}` (exp_minus, sinh, cosh, cosh_dist)"))),
    })
}

struct SpaceFormBuilder;
impl ManifoldBuilder for SpaceFormBuilder {
    fn kind(&self) -> &'static str {
        "space_form"
    }
    fn summary(&self) -> &'static str {
        "constant curvature c: graph chart (c<0) or stereographic chart (c>0); keys n, c"
    }
    fn build(&self, t: &Table, _: &Registry) -> Result<ManifoldSpec> {
        cfg(builtins::space_form(dim(t, "n", None)?, need_float(t, "c")?))
    }
}

struct FlatBuilder;
impl ManifoldBuilder for FlatBuilder {
    fn kind(&self) -> &'static str {
        "flat"
    }
    fn summary(&self) -> &'static str {
        "Euclidean metric; key n"
    }
    fn build(&self, t: &Table, _: &Registry) -> Result<ManifoldSpec> {
        cfg(builtins::flat(dim(t, "n", None)?))
    }
}

struct IntervalBuilder;
impl ManifoldBuilder for IntervalBuilder {
    fn kind(&self) -> &'static str {
        "interval"
    }
    fn summary(&self) -> &'static str {
        "one-dimensional flat factor (lo, hi)"
    }
    fn build(&self, t: &Table, _: &Registry) -> Result<ManifoldSpec> {
        cfg(interval(need_float(t, "lo")?, need_float(t, "hi")?))
    }
}

struct PerturbedFlatBuilder;
impl ManifoldBuilder for PerturbedFlatBuilder {
    fn kind(&self) -> &'static str {
        "perturbed_flat"
    }
    fn summary(&self) -> &'static str {
        "flat metric plus seeded smooth sine bumps; keys n, amplitude (<= 0.2), seed"
    }
    fn build(&self, t: &Table, _: &Registry) -> Result<ManifoldSpec> {
        let amp = get_float(t, "amplitude")?.unwrap_or(DEFAULT_AMPLITUDE);
        cfg(builtins::perturbed_flat(dim(t, "n", None)?, amp, seed(t)?))
    }
}

struct WarpedBuilder;
impl ManifoldBuilder for WarpedBuilder {
    fn kind(&self) -> &'static str {
        "warped_product"
    }
    fn summary(&self) -> &'static str {
        "base ⊕_f fiber; nested tables base, fiber and warp name"
    }
    fn build(&self, t: &Table, r: &Registry) -> Result<ManifoldSpec> {
        let base = r.nested(t, "base")?.ok_or_else(|| Error::Config("warped_product needs `base`".into()))?;
        let fiber = r.nested(t, "fiber")?.ok_or_else(|| Error::Config("warped_product needs `fiber`".into()))?;
        let w = get_str(t, "warp")?.ok_or_else(|| Error::Config("warped_product needs `warp`".into()))?;
        cfg(builtins::warped_product(&base, &fiber, warp_kind(w, &base)?))
    }
}

struct DoublyWarpedBuilder;
impl ManifoldBuilder for DoublyWarpedBuilder {
    fn kind(&self) -> &'static str {
        "doubly_warped"
    }
    fn summary(&self) -> &'static str {
        "ds² ⊕_{f2} g2 ⊕_{f1} g1 on (s_min, s_max); tables fiber2 (optional), fiber1; warps warp2, warp1"
    }
    fn build(&self, t: &Table, r: &Registry) -> Result<ManifoldSpec> {
        let i = cfg(interval(need_float(t, "s_min")?, need_float(t, "s_max")?))?;
        let base = match r.nested(t, "fiber2")? {
            Some(f2) => {
                let w2 = warp_kind(get_str(t, "warp2")?.unwrap_or("sinh"), &i)?;
                cfg(builtins::warped_product(&i, &f2, w2))?
            }
            None => i,
        };
        let f1 = r.nested(t, "fiber1")?.ok_or_else(|| Error::Config("doubly_warped needs `fiber1`".into()))?;
        let w1 = warp_kind(get_str(t, "warp1")?.unwrap_or("cosh"), &base)?;
        Ok(cfg(builtins::warped_product(&base, &f1, w1))?.renamed("doubly_warped"))
    }
}

struct Wp1Builder;
impl ManifoldBuilder for Wp1Builder {
    fn kind(&self) -> &'static str {
        "wp1"
    }
    fn summary(&self) -> &'static str {
        "(-1,1) × M1 with ds² ⊕_{e^-s} g1; fiber defaults to perturbed_flat(2, 0.1, seed)"
    }
    fn build(&self, t: &Table, r: &Registry) -> Result<ManifoldSpec> {
        let fiber = r.nested_or(t, "fiber", || default_fiber(t))?;
        cfg(builtins::wp1(&fiber))
    }
}

struct Lw2Builder;
impl ManifoldBuilder for Lw2Builder {
    fn kind(&self) -> &'static str {
        "lw2"
    }
    fn summary(&self) -> &'static str {
        "ds² ⊕_sinh g2 ⊕_cosh g1 on (s_min, s_max); defaults fiber2 = flat(1), fiber1 = perturbed_flat(2)"
    }
    fn build(&self, t: &Table, r: &Registry) -> Result<ManifoldSpec> {
        let f2 = r.nested_or(t, "fiber2", || builtins::flat(1))?;
        let f1 = r.nested_or(t, "fiber1", || default_fiber(t))?;
        let lo = get_float(t, "s_min")?.unwrap_or(0.1);
        let hi = get_float(t, "s_max")?.unwrap_or(2.0);
        cfg(builtins::lw2(Some(&f2), &f1, lo, hi))
    }
}

struct Wp2PolarBuilder;
impl ManifoldBuilder for Wp2PolarBuilder {
    fn kind(&self) -> &'static str {
        "wp2_polar"
    }
    fn summary(&self) -> &'static str {
        "polar chart ds² + sinh² g_{S^{k-1}} + cosh² g1; keys k, s_min, s_max, fiber"
    }
    fn build(&self, t: &Table, r: &Registry) -> Result<ManifoldSpec> {
        let f1 = r.nested_or(t, "fiber", || default_fiber(t))?;
        let lo = get_float(t, "s_min")?.unwrap_or(0.1);
        let hi = get_float(t, "s_max")?.unwrap_or(2.0);
        cfg(builtins::wp2_polar(dim(t, "k", Some(1))?, &f1, lo, hi))
    }
}

struct Lw3Builder;
impl ManifoldBuilder for Lw3Builder {
    fn kind(&self) -> &'static str {
        "lw3"
    }
    fn summary(&self) -> &'static str {
        "H^k graph chart ×_{cosh d} M1 with x0 at the origin; keys k, fiber"
    }
    fn build(&self, t: &Table, r: &Registry) -> Result<ManifoldSpec> {
        let f1 = r.nested_or(t, "fiber", || default_fiber(t))?;
        cfg(builtins::lw3(dim(t, "k", Some(2))?, &f1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Table {
        s.parse::<Table>().unwrap()
    }

    #[test]
    fn nested_warped_product_builds() {
        let t = parse(
            r#"
            kind = "warped_product"
            warp = "exp_minus"
            [base]
            kind = "interval"
            lo = -1.0
            hi = 1.0
            [fiber]
            kind = "perturbed_flat"
            n = 2
            seed = 3
            "#,
        );
        let spec = Registry::with_builtins().build(&t).unwrap();
        assert_eq!(spec.dim(), 3);
    }

    #[test]
    fn unknown_kind_is_config_error() {
        let t = parse("kind = \"torus\"");
        assert!(matches!(Registry::with_builtins().build(&t), Err(Error::Config(_))));
    }

    #[test]
    fn builtin_catalog_dimensions() {
        let r = Registry::with_builtins();
        for (src, n) in [
            ("kind = \"wp1\"", 3),
            ("kind = \"lw2\"", 4),
            ("kind = \"lw3\"", 4),
            ("kind = \"wp2_polar\"\nk = 1", 3),
            ("kind = \"space_form\"\nn = 3\nc = -1.0", 3),
        ] {
            assert_eq!(r.build(&parse(src)).unwrap().dim(), n, "{src}");
        }
    }

    #[test]
    fn domain_override() {
        let t = parse("kind = \"flat\"\nn = 1\n[domain]\nlo = [0.0]\nhi = [0.5]");
        let spec = Registry::with_builtins().build(&t).unwrap();
        assert!(!spec.domain().contains(&[0.7]));
    }
}
