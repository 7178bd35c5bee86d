//! Structure-preserving P1 finite element discretisation of evolution
//! equations of the form `d_t u = J(u) dH(u) + G(u) dS(u)`: Hamiltonian,
//! gradient-flow and metriplectic (GENERIC) systems.
//!
//! The spatial discretisation is a mixed variational method with continuous
//! piecewise-linear elements that carries the Poisson and metric brackets to
//! the discrete level, so Casimirs, conservation laws and dissipation
//! identities hold exactly up to solver tolerances. Time integration is the
//! implicit midpoint rule or the average vector field (AVF) method.
//!
//! Concrete models: dissipative Korteweg-de Vries on a periodic interval and
//! the 2D incompressible Navier-Stokes equations in vorticity form on a flat
//! torus and on the sphere, plus a linear advection-diffusion smoke-test
//! model.

pub mod assembly;
pub mod diagnostics;
pub mod driver;
pub mod error;
pub mod integrators;
pub mod linalg;
pub mod mesh;
pub mod models;
pub mod system;

pub use assembly::P1Space;
pub use error::{Error, Result};
pub use linalg::{CsrMatrix, FixedPointConfig, TrilinearForm};
pub use mesh::{Mesh1D, TriMesh};
pub use system::{GSign, MetriplecticSystem, State};
