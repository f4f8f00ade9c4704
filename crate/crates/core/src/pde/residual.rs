use super::grid::SpatialGrid;
use super::stack::{DensityStack, ScalarStack};

/// Maximum stencil residual over the bulk and interior times.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residual {
    pub max_abs: f64,
    /// Time and location of the maximum.
    pub at_time: f64,
    pub at_node: usize,
}

fn spatial_terms(grid: &SpatialGrid, u: &[f64], j: usize) -> (f64, f64) {
    let mut grad2 = 0.0;
    let mut lap = 0.0;
    for a in 0..grid.dim() {
        let st = grid.stride(a);
        let h = grid.spacing(a);
        let d = (u[j + st] - u[j - st]) / (2.0 * h);
        grad2 += d * d;
        lap += (u[j + st] - 2.0 * u[j] + u[j - st]) / (h * h);
    }
    (grad2, lap)
}

fn max_residual(
    grid: &SpatialGrid,
    times: &[f64],
    values: &[Vec<f64>],
    valid: Option<&[Vec<bool>]>,
    region: &[bool],
    f: impl Fn(f64, f64, f64) -> f64,
) -> Residual {
    let edge = grid.bulk_mask(1);
    let bulk: Vec<bool> = region.iter().zip(&edge).map(|(a, b)| *a && *b).collect();
    let mut best = Residual { max_abs: 0.0, at_time: 0.0, at_node: 0 };
    for k in 1..times.len().saturating_sub(1) {
        let dt2 = times[k + 1] - times[k - 1];
        for j in 0..grid.len() {
            if !bulk[j] {
                continue;
            }
            if let Some(m) = valid {
                if !(m[k - 1][j] && m[k][j] && m[k + 1][j]) {
                    continue;
                }
            }
            let ut = (values[k + 1][j] - values[k - 1][j]) / dt2;
            let (grad2, lap) = spatial_terms(grid, &values[k], j);
            let r = f(ut, grad2, lap).abs();
            if r > best.max_abs {
                best = Residual { max_abs: r, at_time: times[k], at_node: j };
            }
        }
    }
    best
}

/// Residual of `∂ρ/∂t - (1/2β) Δρ` on centred space–time stencils, over the
/// nodes selected by `region` (see [`SpatialGrid::bulk_mask`] and
/// [`SpatialGrid::interior_mask`]).
pub fn heat_residual(rho: &DensityStack, region: &[bool]) -> Residual {
    let d = 0.5 / rho.beta;
    max_residual(&rho.grid, &rho.times, &rho.values, None, region, |ut, _, lap| ut - d * lap)
}

/// Residual of `∂u/∂t + ½‖∇u‖² - (1/2β) Δu` on centred stencils.
pub fn hjb_residual(u: &ScalarStack, beta: f64, region: &[bool]) -> Residual {
    let d = 0.5 / beta;
    max_residual(&u.grid, &u.times, &u.values, Some(&u.valid), region, |ut, g2, lap| ut + 0.5 * g2 - d * lap)
}

/// Residual of `a ∂v/∂t - b Δv + c ‖∇v‖²` for caller-chosen coefficients.
pub(crate) fn weighted_residual(u: &ScalarStack, region: &[bool], a: f64, b: f64, c: f64) -> Residual {
    max_residual(&u.grid, &u.times, &u.values, Some(&u.valid), region, |ut, g2, lap| a * ut - b * lap + c * g2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pde::{solve_heat, solve_hjb, HjbScheme, BULK_MARGIN};

    fn heat_res(n: usize, steps: usize) -> f64 {
        let grid = SpatialGrid::line(-8.0, 8.0, n).unwrap();
        let rho0 = grid.sample(|x| (-x[0] * x[0] / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt());
        heat_residual(&solve_heat(&rho0, &grid, 1.0, 1.0, steps).unwrap(), &grid.bulk_mask(BULK_MARGIN)).max_abs
    }

    fn hjb_res(n: usize, steps: usize) -> f64 {
        let grid = SpatialGrid::line(-4.0, 4.0, n).unwrap();
        let u0 = grid.sample(|x| 0.5 * x[0] * x[0]);
        let st = solve_hjb(&u0, &grid, 1.0, 1.0, steps, HjbScheme::ColeHopf).unwrap();
        hjb_residual(&st, 1.0, &grid.interior_mask(1.0)).max_abs
    }

    #[test]
    fn residuals_converge_at_second_order() {
        let (a, b) = (heat_res(201, 50), heat_res(401, 100));
        let order = (a / b).log2();
        assert!(order >= 1.8, "heat order {order} ({a:e} -> {b:e})");
        let (a, b) = (hjb_res(201, 50), hjb_res(401, 100));
        let order = (a / b).log2();
        assert!(order >= 1.8, "hjb order {order} ({a:e} -> {b:e})");
    }
}
