//! Run configuration read from TOML.
//!
//! ```toml
//! c = -1.0
//! base_point = [1.0, 0.0, 0.0, 0.0]
//!
//! [manifold]
//! kind = "lw2"
//! [manifold.fiber1]
//! kind = "perturbed_flat"
//! n = 2
//!
//! [sampling]
//! loops = 40
//!
//! [roll]
//! step = 1e-3
//!
//! [verify]
//! points = 20
//! ```

use std::path::Path as FsPath;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use toml::Table;

use crate::error::{require_nonzero_c, Error, Result};
use crate::holonomy::Sampling;
use crate::manifold::registry::Registry;
use crate::manifold::ManifoldSpec;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_c")]
    pub c: f64,
    /// Chart point of the base; defaults to the domain center.
    #[serde(default)]
    pub base_point: Option<Vec<f64>>,
    pub manifold: Table,
    #[serde(default)]
    pub sampling: Sampling,
    #[serde(default)]
    pub roll: RollConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
}

fn default_c() -> f64 {
    -1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RollConfig {
    pub step: f64,
    pub project: bool,
    /// Trajectory sampling stride in integration steps.
    pub trace_every: usize,
}

impl Default for RollConfig {
    fn default() -> Self {
        Self { step: 1e-3, project: true, trace_every: 10 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    /// Sample points for pointwise checks.
    pub points: usize,
    /// Half-width of the sampling box around the base point.
    pub radius: f64,
    /// Length of base curves for warp recovery.
    pub curve_length: f64,
    pub curve_step: f64,
    /// RK4 step for transporting invariant subspaces across the chart.
    pub bundle_step: f64,
    /// Spacing of the grid searched for `N1`.
    pub grid_step: f64,
    /// Expected verdict for the converse suite, if any.
    pub expect: Option<String>,
    pub tolerances: VerifyTolerances,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            points: 20,
            radius: 0.3,
            curve_length: 0.6,
            curve_step: 1e-3,
            bundle_step: crate::decomposition::BUNDLE_STEP,
            grid_step: 0.1,
            expect: None,
            tolerances: VerifyTolerances::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyTolerances {
    pub transport: f64,
    pub scalar_ode: f64,
    pub curvature: f64,
    pub nabla_l: f64,
    pub second_fundamental_form: f64,
    pub spherical: f64,
    pub frobenius: f64,
    pub warp: f64,
    pub warp_ode: f64,
    pub hyperbolic_pair: f64,
    pub split: f64,
    pub h_norm: f64,
    pub path_independence: f64,
    pub intersection: f64,
    pub null_line: f64,
}

impl Default for VerifyTolerances {
    fn default() -> Self {
        Self {
            transport: 1e-6,
            scalar_ode: 1e-6,
            curvature: 1e-4,
            nabla_l: 1e-4,
            second_fundamental_form: 1e-4,
            spherical: 1e-4,
            frobenius: 1e-5,
            warp: 1e-4,
            warp_ode: 1e-4,
            hyperbolic_pair: 1e-4,
            split: 1e-8,
            h_norm: 1e-8,
            path_independence: 1e-6,
            intersection: 1e-5,
            null_line: 1e-5,
        }
    }
}

impl VerifyTolerances {
    fn validate(&self) -> Result<()> {
        let all = [
            self.transport,
            self.scalar_ode,
            self.curvature,
            self.nabla_l,
            self.second_fundamental_form,
            self.spherical,
            self.frobenius,
            self.warp,
            self.warp_ode,
            self.hyperbolic_pair,
            self.split,
            self.h_norm,
            self.path_independence,
            self.intersection,
            self.null_line,
        ];
        if all.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            return Err(Error::Config("verify tolerances must be positive".into()));
        }
        Ok(())
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &FsPath) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        require_nonzero_c(self.c).map_err(|e| Error::Config(e.to_string()))?;
        self.sampling.validate()?;
        self.verify.tolerances.validate()?;
        let v = &self.verify;
        if v.points == 0 || !(v.radius > 0.0 && v.curve_length > 0.0 && v.curve_step > 0.0 && v.bundle_step > 0.0 && v.grid_step > 0.0) {
            return Err(Error::Config("verify sizes and steps must be positive".into()));
        }
        if !(self.roll.step > 0.0 && self.roll.step.is_finite()) {
            return Err(Error::Config("roll step must be positive".into()));
        }
        Ok(())
    }

    pub fn manifold(&self, registry: &Registry) -> Result<ManifoldSpec> {
        registry.build(&self.manifold)
    }

    /// The configured base point, or the domain center, checked against `spec`.
    pub fn base(&self, spec: &ManifoldSpec) -> Result<DVector<f64>> {
        let x = match &self.base_point {
            Some(p) => DVector::from_column_slice(p),
            None => spec.domain().center(),
        };
        if x.len() != spec.dim() {
            return Err(Error::Config(format!(
                "base_point has {} coordinates; manifold `{}` has dimension {}",
                x.len(),
                spec.name(),
                spec.dim()
            )));
        }
        spec.check_point(x.as_slice()).map_err(|_| Error::Config(format!("base_point {:?} is outside the chart domain", x.as_slice())))?;
        Ok(x)
    }
}
