//! Hybridizable discontinuous Galerkin solvers for `-div(a grad u) = f` on
//! triangulations of polygonal domains, with guaranteed a posteriori error
//! estimators built from equilibrated fluxes and an adaptive driver.

pub mod basis;
pub mod driver;
pub mod error;
pub mod estimator;
pub mod exec;
pub mod linalg;
pub mod mesh;
pub mod postprocess;
pub mod hdg_mixed;
pub mod hdg_primal;
pub mod problem;
pub mod skeleton;

pub use error::{Error, Result};
