use super::grid::SpatialGrid;
use super::heat::HeatStepper;
use super::stack::{DensityStack, ScalarStack};
use crate::error::{check_positive, Error, Result};

/// Densities at or below this value are treated as zero.
pub const DENSITY_FLOOR: f64 = 1e-300;

/// Safety factor applied to the explicit stability bound.
const CFL_SAFETY: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HjbScheme {
    /// Advance `w = exp(-β (u - min u))` with one Crank–Nicolson heat step,
    /// then map back.
    ColeHopf,
    /// Explicit forward Euler on `u`. Gradients are centred where the cell
    /// Péclet number `|∂u| h / 2D` is at most 1 and switch to the Godunov
    /// upwind Hamiltonian elsewhere, so steep walls stay monotone. `None` picks
    /// the number of substeps per output step from the stability bound;
    /// `Some(n)` is rejected if `n` substeps violate it.
    Direct { substeps: Option<usize> },
}

/// Solve `∂u/∂t = -½‖∇u‖² + (1/2β) Δu`, `u(·,0) = u0`, on `[0, γ]` with
/// `steps` output steps.
pub fn solve_hjb(
    u0: &[f64],
    grid: &SpatialGrid,
    beta: f64,
    gamma: f64,
    steps: usize,
    scheme: HjbScheme,
) -> Result<ScalarStack> {
    check_positive("beta", beta)?;
    check_positive("gamma", gamma)?;
    if steps == 0 {
        return Err(Error::InvalidParameter("steps must be at least 1".into()));
    }
    if u0.len() != grid.len() {
        return Err(Error::DimensionMismatch { expected: grid.len(), got: u0.len() });
    }
    if let Some(v) = u0.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("initial condition contains {v}")));
    }
    let dt = gamma / steps as f64;
    let diffusion = 0.5 / beta;
    let mut times = vec![0.0];
    let mut values = vec![u0.to_vec()];
    let mut u = u0.to_vec();
    match scheme {
        HjbScheme::ColeHopf => {
            let stepper = HeatStepper::new(grid, diffusion, dt, 0.5);
            let mut w = vec![0.0; u.len()];
            for k in 1..=steps {
                let shift = u.iter().fold(f64::INFINITY, |m, v| m.min(*v));
                for (wi, ui) in w.iter_mut().zip(&u) {
                    *wi = (-beta * (ui - shift)).exp();
                }
                stepper.step(&mut w);
                for (ui, wi) in u.iter_mut().zip(&w) {
                    *ui = shift - wi.max(f64::MIN_POSITIVE).ln() / beta;
                }
                times.push(if k == steps { gamma } else { dt * k as f64 });
                values.push(u.clone());
            }
        }
        HjbScheme::Direct { substeps } => {
            let mut next = vec![0.0; u.len()];
            for k in 1..=steps {
                let bound = explicit_step_bound(grid, diffusion, max_gradient(grid, &u));
                let n = match substeps {
                    Some(n) => {
                        if n == 0 || dt / n as f64 > bound {
                            return Err(Error::Stability(format!(
                                "{n} substeps give dt = {:.3e} above the stability bound {bound:.3e}",
                                dt / n.max(1) as f64
                            )));
                        }
                        n
                    }
                    None => (dt / bound).ceil().max(1.0) as usize,
                };
                let h = dt / n as f64;
                for _ in 0..n {
                    explicit_step(grid, diffusion, h, &u, &mut next);
                    std::mem::swap(&mut u, &mut next);
                }
                if let Some(v) = u.iter().find(|v| !v.is_finite()) {
                    return Err(Error::Stability(format!("direct scheme produced {v} at step {k}")));
                }
                times.push(if k == steps { gamma } else { dt * k as f64 });
                values.push(u.clone());
            }
        }
    }
    Ok(ScalarStack::new(grid.clone(), times, values))
}

/// Largest stable explicit time step for the current gradient magnitude.
fn explicit_step_bound(grid: &SpatialGrid, diffusion: f64, grad_max: f64) -> f64 {
    let inv_h2: f64 = (0..grid.dim()).map(|a| 1.0 / grid.spacing(a).powi(2)).sum();
    let inv_h: f64 = (0..grid.dim()).map(|a| 1.0 / grid.spacing(a)).sum();
    // centred nodes have |∂u| <= 2D/h, where 2D/|∂u|² already exceeds this
    CFL_SAFETY / (2.0 * diffusion * inv_h2 + grad_max * inv_h)
}

fn max_gradient(grid: &SpatialGrid, u: &[f64]) -> f64 {
    let mut g = 0.0_f64;
    for j in 0..u.len() {
        let mi = grid.multi_index(j);
        let mut sq = 0.0;
        for a in 0..grid.dim() {
            let (lo, hi) = neighbours(grid, j, mi[a], a);
            let d = (u[hi] - u[lo]) / (2.0 * grid.spacing(a));
            sq += d * d;
        }
        g = g.max(sq.sqrt());
    }
    g
}

/// Mirrored neighbours along axis `a` (zero-flux ghost nodes).
#[inline]
fn neighbours(grid: &SpatialGrid, j: usize, i: usize, a: usize) -> (usize, usize) {
    let st = grid.stride(a);
    let n = grid.axis(a).n;
    let lo = if i == 0 { j + st } else { j - st };
    let hi = if i + 1 == n { j - st } else { j + st };
    (lo, hi)
}

fn explicit_step(grid: &SpatialGrid, diffusion: f64, dt: f64, u: &[f64], out: &mut [f64]) {
    for j in 0..u.len() {
        let mi = grid.multi_index(j);
        let mut grad2 = 0.0;
        let mut lap = 0.0;
        for a in 0..grid.dim() {
            let h = grid.spacing(a);
            let (lo, hi) = neighbours(grid, j, mi[a], a);
            let d = (u[hi] - u[lo]) / (2.0 * h);
            grad2 += if d.abs() * h <= 2.0 * diffusion {
                d * d
            } else {
                let back = ((u[j] - u[lo]) / h).max(0.0);
                let fwd = ((u[hi] - u[j]) / h).min(0.0);
                back.max(-fwd).powi(2)
            };
            lap += (u[hi] - 2.0 * u[j] + u[lo]) / (h * h);
        }
        out[j] = u[j] + dt * (-0.5 * grad2 + diffusion * lap);
    }
}

/// Pointwise `u = -(1/β) log ρ + c_β`; nodes with `ρ ≤ 1e-300` are masked.
pub fn cole_hopf(rho: &DensityStack, c_beta: f64) -> ScalarStack {
    let mut values = Vec::with_capacity(rho.values.len());
    let mut valid = Vec::with_capacity(rho.values.len());
    for slice in &rho.values {
        values.push(slice.iter().map(|r| -r.max(DENSITY_FLOOR).ln() / rho.beta + c_beta).collect());
        valid.push(slice.iter().map(|r| *r > DENSITY_FLOOR).collect());
    }
    ScalarStack { grid: rho.grid.clone(), times: rho.times.clone(), values, valid }
}
