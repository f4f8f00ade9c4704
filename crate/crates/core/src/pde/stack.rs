use serde::{Deserialize, Serialize};

use super::grid::{locate_time, SpatialGrid};
use super::hjb::DENSITY_FLOOR;
use crate::error::{Error, Result};

/// Grid-sampled density `ρ(x_j, t_k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityStack {
    pub grid: SpatialGrid,
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    pub beta: f64,
}

impl DensityStack {
    /// Time-independent stack repeating `rho` at every time.
    pub fn stationary(grid: SpatialGrid, rho: Vec<f64>, times: Vec<f64>, beta: f64) -> Self {
        let values = vec![rho; times.len()];
        Self { grid, times, values, beta }
    }

    pub fn mass(&self, k: usize) -> f64 {
        self.grid.integrate(&self.values[k])
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().expect("non-empty stack")
    }

    /// Density at `(x, t)`, bilinear in space and linear in time.
    pub fn at(&self, x: &[f64], t: f64) -> f64 {
        let (k, s) = locate_time(&self.times, t);
        let a = self.grid.interpolate(&self.values[k], x);
        if s == 0.0 || self.times.len() == 1 {
            return a;
        }
        a + s * (self.grid.interpolate(&self.values[k + 1], x) - a)
    }

    /// Time-reversed copy: slice `k` becomes slice `K - k`, times map to
    /// `T - t`.
    pub fn time_reversed(&self) -> Self {
        let t_end = self.horizon();
        let mut times: Vec<f64> = self.times.iter().rev().map(|t| t_end - t).collect();
        times[0] = 0.0;
        Self {
            grid: self.grid.clone(),
            times,
            values: self.values.iter().rev().cloned().collect(),
            beta: self.beta,
        }
    }
}

/// Scalar field `u(x_j, t_k)` with a per-node validity mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarStack {
    pub grid: SpatialGrid,
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    pub valid: Vec<Vec<bool>>,
}

impl ScalarStack {
    pub fn new(grid: SpatialGrid, times: Vec<f64>, values: Vec<Vec<f64>>) -> Self {
        let valid = values.iter().map(|v| vec![true; v.len()]).collect();
        Self { grid, times, values, valid }
    }

    /// Fraction of masked nodes over the whole stack.
    pub fn masked_fraction(&self) -> f64 {
        let total: usize = self.valid.iter().map(Vec::len).sum();
        let bad: usize = self.valid.iter().map(|v| v.iter().filter(|b| !**b).count()).sum();
        bad as f64 / total.max(1) as f64
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for slice in &mut out.values {
            for v in slice.iter_mut() {
                *v *= factor;
            }
        }
        out
    }

    pub fn at(&self, x: &[f64], t: f64) -> f64 {
        let (k, s) = locate_time(&self.times, t);
        let a = self.grid.interpolate(&self.values[k], x);
        if s == 0.0 || self.times.len() == 1 {
            return a;
        }
        a + s * (self.grid.interpolate(&self.values[k + 1], x) - a)
    }

    /// Like [`ScalarStack::at`] but fails when the stencil touches a masked
    /// node.
    pub fn checked_at(&self, x: &[f64], t: f64) -> Result<f64> {
        let (k, s) = locate_time(&self.times, t);
        let stencil = self.grid.stencil(x);
        let slices: &[usize] = if s == 0.0 { &[k][..] } else { &[k, k + 1][..] };
        for &kk in slices {
            if stencil.iter().any(|&j| !self.valid[kk][j]) {
                return Err(Error::Masked(format!("value at {x:?}, t = {t} uses a masked node")));
            }
        }
        Ok(self.at(x, t))
    }
}

/// Vector field stored with `dim` interleaved components per node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorStack {
    pub grid: SpatialGrid,
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    pub valid: Vec<Vec<bool>>,
}

impl VectorStack {
    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    /// Interpolated vector at `(x, t)`, ignoring the mask.
    pub fn at_into(&self, x: &[f64], t: f64, out: &mut [f64]) {
        let d = self.dim();
        let (k, s) = locate_time(&self.times, t);
        for (c, o) in out.iter_mut().enumerate().take(d) {
            let a = self.grid.interpolate_strided(&self.values[k], d, c, x);
            *o = if s == 0.0 || self.times.len() == 1 {
                a
            } else {
                a + s * (self.grid.interpolate_strided(&self.values[k + 1], d, c, x) - a)
            };
        }
    }

    pub fn checked_at(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        let (k, s) = locate_time(&self.times, t);
        let stencil = self.grid.stencil(x);
        let slices: &[usize] = if s == 0.0 { &[k][..] } else { &[k, k + 1][..] };
        for &kk in slices {
            if stencil.iter().any(|&j| !self.valid[kk][j]) {
                return Err(Error::Masked(format!("score at {x:?}, t = {t} uses a masked node")));
            }
        }
        let mut out = vec![0.0; self.dim()];
        self.at_into(x, t, &mut out);
        Ok(out)
    }
}

/// Finite-difference score `∇ log ρ`: centred in the interior, second-order
/// one-sided on the boundary. Nodes whose stencil touches a density at or
/// below the floor are masked.
pub fn score_field(rho: &DensityStack) -> VectorStack {
    let grid = &rho.grid;
    let d = grid.dim();
    let n = grid.len();
    let mut values = Vec::with_capacity(rho.times.len());
    let mut valid = Vec::with_capacity(rho.times.len());
    for slice in &rho.values {
        let logs: Vec<f64> = slice.iter().map(|r| r.max(DENSITY_FLOOR).ln()).collect();
        let ok: Vec<bool> = slice.iter().map(|r| *r > DENSITY_FLOOR).collect();
        let mut out = vec![0.0; n * d];
        let mut out_ok = vec![true; n];
        for j in 0..n {
            let mi = grid.multi_index(j);
            let mut node_ok = ok[j];
            for a in 0..d {
                let st = grid.stride(a);
                let h = grid.spacing(a);
                let na = grid.axis(a).n;
                let i = mi[a];
                let (g, used): (f64, [usize; 3]) = if i == 0 {
                    ((-3.0 * logs[j] + 4.0 * logs[j + st] - logs[j + 2 * st]) / (2.0 * h), [j, j + st, j + 2 * st])
                } else if i + 1 == na {
                    ((3.0 * logs[j] - 4.0 * logs[j - st] + logs[j - 2 * st]) / (2.0 * h), [j, j - st, j - 2 * st])
                } else {
                    ((logs[j + st] - logs[j - st]) / (2.0 * h), [j - st, j, j + st])
                };
                node_ok &= used.iter().all(|&u| ok[u]);
                out[j * d + a] = g;
            }
            out_ok[j] = node_ok;
        }
        values.push(out);
        valid.push(out_ok);
    }
    VectorStack { grid: grid.clone(), times: rho.times.clone(), values, valid }
}
