//! Numerical laboratory for local-entropy smoothing of energy landscapes and
//! its reverse-time stochastic control / half-bridge representations.
//!
//! The crate is organised bottom-up:
//!
//! * [`landscape`]: energies, the Boltzmann–Gibbs density and gradient noise.
//! * [`smoothing`]: heat-kernel smoothing (local entropy) by quadrature or
//!   Langevin estimation.
//! * [`pde`]: heat and viscous Hamilton–Jacobi solvers on 1-D/2-D grids and
//!   the logarithmic transform between them.
//! * [`sde`]: Euler–Maruyama ensembles, Nelson drift estimation, duality and
//!   Girsanov relative-entropy estimators.
//! * [`halfbridge`]: initial- and final-pinned half-bridge solutions and
//!   score-driven reverse sampling.
//! * [`control`]: reverse-time control rollouts and value-function checks.
//! * [`optimize`]: SGD and local-entropy descent.
//! * [`experiment`]: JSON-configured experiments shared by the CLI.

pub mod control;
pub mod error;
pub mod experiment;
pub mod halfbridge;
pub mod io;
pub mod landscape;
pub mod numerics;
pub mod optimize;
pub mod pde;
pub mod rng;
pub mod sde;
pub mod smoothing;
pub mod stats;

pub use control::{ControlPolicy, ValueEstimate};
pub use error::{Error, Result};
pub use experiment::{Manifest, RunConfig, EXPERIMENTS};
pub use halfbridge::HalfBridgeSolution;
pub use landscape::{DomainBox, EnergyLandscape, GibbsDensity, GradientNoiseModel};
pub use optimize::OptimizerRun;
pub use pde::{DensityStack, ScalarStack, SpatialGrid, VectorStack};
pub use sde::{DiffusionSpec, Direction, DriftEstimate, PathEnsemble};
