//! Grid solvers for the heat equation `∂ρ/∂t = (1/2β) Δρ` and the viscous
//! Hamilton–Jacobi equation `∂u/∂t = -½‖∇u‖² + (1/2β) Δu`, linked by
//! `u = -(1/β) log ρ + c(β)`.
//!
//! Boundaries are zero-flux on every face of the grid.

mod grid;
mod heat;
mod hjb;
pub(crate) mod residual;
mod stack;

pub use grid::{locate_time, Axis, SpatialGrid};
pub use heat::{solve_heat, HeatStepper};
pub use hjb::{cole_hopf, solve_hjb, HjbScheme, DENSITY_FLOOR};
pub use residual::{heat_residual, hjb_residual, Residual};
pub use stack::{score_field, DensityStack, ScalarStack, VectorStack};

/// Nodes adjacent to each boundary excluded from "bulk" comparisons.
pub const BULK_MARGIN: usize = 5;

/// Largest absolute difference between two stacks at common valid bulk
/// nodes of the final time slice.
pub fn bulk_linf(a: &ScalarStack, b: &ScalarStack, slice: usize) -> f64 {
    let bulk = a.grid.bulk_mask(BULK_MARGIN);
    let (va, vb) = (&a.values[slice], &b.values[slice]);
    (0..va.len())
        .filter(|&j| bulk[j] && a.valid[slice][j] && b.valid[slice][j])
        .map(|j| (va[j] - vb[j]).abs())
        .fold(0.0, f64::max)
}
