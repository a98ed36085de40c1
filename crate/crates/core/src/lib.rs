pub mod config;
pub mod connection;
pub mod decomposition;
pub mod error;
pub mod holonomy;
pub mod jet;
pub mod linalg;
pub mod lorentz;
pub mod manifold;
pub mod ode;
pub mod report;
pub mod rolling;
pub mod suites;
pub(crate) mod serial;

pub use error::{Error, Result};
