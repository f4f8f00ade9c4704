use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::landscape::DomainBox;
use crate::numerics::trapezoid_weight;

/// One uniformly spaced axis with `n` nodes including both endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Axis {
    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / (self.n - 1) as f64
    }

    pub fn coord(&self, i: usize) -> f64 {
        if i + 1 == self.n {
            self.hi
        } else {
            self.lo + self.spacing() * i as f64
        }
    }

    /// Cell index and fractional offset of `x`, clamped to the axis.
    pub fn locate(&self, x: f64) -> (usize, f64) {
        let s = ((x - self.lo) / self.spacing()).clamp(0.0, (self.n - 1) as f64);
        let i = (s.floor() as usize).min(self.n - 2);
        (i, s - i as f64)
    }
}

/// Tensor grid in one or two dimensions. Node values are stored with the
/// first axis varying fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialGrid {
    axes: Vec<Axis>,
}

impl SpatialGrid {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        if axes.is_empty() || axes.len() > 2 {
            return Err(Error::InvalidParameter(format!("grids support 1 or 2 axes, got {}", axes.len())));
        }
        for (a, ax) in axes.iter().enumerate() {
            if ax.n < 3 {
                return Err(Error::InvalidParameter(format!("axis {a} needs at least 3 nodes, got {}", ax.n)));
            }
            if !(ax.lo.is_finite() && ax.hi.is_finite() && ax.hi > ax.lo) {
                return Err(Error::InvalidParameter(format!("axis {a} bounds [{}, {}] are invalid", ax.lo, ax.hi)));
            }
        }
        Ok(Self { axes })
    }

    pub fn line(lo: f64, hi: f64, n: usize) -> Result<Self> {
        Self::new(vec![Axis { lo, hi, n }])
    }

    /// Grid over `domain` with `npts` nodes on every axis.
    pub fn over(domain: &DomainBox, npts: usize) -> Result<Self> {
        Self::new((0..domain.dim()).map(|a| Axis { lo: domain.lo[a], hi: domain.hi[a], n: npts }).collect())
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn axis(&self, a: usize) -> &Axis {
        &self.axes[a]
    }

    pub fn spacing(&self, a: usize) -> f64 {
        self.axes[a].spacing()
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.n).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat offset between neighbours along axis `a`.
    pub fn stride(&self, a: usize) -> usize {
        if a == 0 {
            1
        } else {
            self.axes[0].n
        }
    }

    pub fn index(&self, idx: &[usize]) -> usize {
        match idx.len() {
            1 => idx[0],
            _ => idx[0] + self.axes[0].n * idx[1],
        }
    }

    pub fn multi_index(&self, flat: usize) -> [usize; 2] {
        if self.dim() == 1 {
            [flat, 0]
        } else {
            let n0 = self.axes[0].n;
            [flat % n0, flat / n0]
        }
    }

    pub fn point_into(&self, flat: usize, out: &mut [f64]) {
        let mi = self.multi_index(flat);
        for (a, o) in out.iter_mut().enumerate().take(self.dim()) {
            *o = self.axes[a].coord(mi[a]);
        }
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        let mut p = vec![0.0; self.dim()];
        self.point_into(flat, &mut p);
        p
    }

    /// Evaluate `f` at every node.
    pub fn sample(&self, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        let mut p = vec![0.0; self.dim()];
        (0..self.len())
            .map(|j| {
                self.point_into(j, &mut p);
                f(&p)
            })
            .collect()
    }

    pub fn trapezoid_weights(&self) -> Vec<f64> {
        (0..self.len())
            .map(|j| {
                let mi = self.multi_index(j);
                (0..self.dim()).map(|a| trapezoid_weight(mi[a], self.axes[a].n, self.spacing(a))).product()
            })
            .collect()
    }

    pub fn integrate(&self, values: &[f64]) -> f64 {
        self.trapezoid_weights().iter().zip(values).map(|(w, v)| w * v).sum()
    }

    /// `true` for nodes at least `margin` nodes away from every boundary.
    pub fn bulk_mask(&self, margin: usize) -> Vec<bool> {
        (0..self.len())
            .map(|j| {
                let mi = self.multi_index(j);
                (0..self.dim()).all(|a| mi[a] >= margin && mi[a] + margin < self.axes[a].n)
            })
            .collect()
    }

    /// `true` for nodes at least `distance` (in coordinate units) inside
    /// every face. Zero-flux walls bend `u = -(1/β) log ρ` in a thin layer;
    /// stencil checks exclude it with this mask.
    pub fn interior_mask(&self, distance: f64) -> Vec<bool> {
        let mut p = vec![0.0; self.dim()];
        (0..self.len())
            .map(|j| {
                self.point_into(j, &mut p);
                self.axes.iter().zip(&p).all(|(a, v)| *v >= a.lo + distance && *v <= a.hi - distance)
            })
            .collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.axes.iter().zip(x).all(|(a, v)| *v >= a.lo && *v <= a.hi)
    }

    /// Linear (1-D) or bilinear (2-D) interpolation, clamped to the grid.
    pub fn interpolate(&self, values: &[f64], x: &[f64]) -> f64 {
        self.interpolate_strided(values, 1, 0, x)
    }

    /// Interpolate component `comp` of a field stored with `width` values
    /// per node.
    pub fn interpolate_strided(&self, values: &[f64], width: usize, comp: usize, x: &[f64]) -> f64 {
        match self.dim() {
            1 => {
                let (i, s) = self.axes[0].locate(x[0]);
                let a = values[i * width + comp];
                let b = values[(i + 1) * width + comp];
                a + s * (b - a)
            }
            _ => {
                let (i, s) = self.axes[0].locate(x[0]);
                let (j, r) = self.axes[1].locate(x[1]);
                let n0 = self.axes[0].n;
                let v = |ii: usize, jj: usize| values[(ii + n0 * jj) * width + comp];
                let lo = v(i, j) + s * (v(i + 1, j) - v(i, j));
                let hi = v(i, j + 1) + s * (v(i + 1, j + 1) - v(i, j + 1));
                lo + r * (hi - lo)
            }
        }
    }

    /// Flat indices of the interpolation stencil around `x`.
    pub fn stencil(&self, x: &[f64]) -> Vec<usize> {
        match self.dim() {
            1 => {
                let (i, _) = self.axes[0].locate(x[0]);
                vec![i, i + 1]
            }
            _ => {
                let (i, _) = self.axes[0].locate(x[0]);
                let (j, _) = self.axes[1].locate(x[1]);
                let n0 = self.axes[0].n;
                vec![i + n0 * j, i + 1 + n0 * j, i + n0 * (j + 1), i + 1 + n0 * (j + 1)]
            }
        }
    }
}

/// Bracketing time index and fraction for `t` in an increasing time list.
pub fn locate_time(times: &[f64], t: f64) -> (usize, f64) {
    let n = times.len();
    if n == 1 || t <= times[0] {
        return (0, 0.0);
    }
    if t >= times[n - 1] {
        return (n - 2, 1.0);
    }
    let k = match times.binary_search_by(|v| v.partial_cmp(&t).expect("finite times")) {
        Ok(k) => k.min(n - 2),
        Err(k) => k - 1,
    };
    (k, (t - times[k]) / (times[k + 1] - times[k]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spacing_is_exact() {
        let g = SpatialGrid::line(-8.0, 8.0, 801).unwrap();
        assert_eq!(g.spacing(0), 16.0 / 800.0);
        assert_eq!(g.axis(0).coord(800), 8.0);
        assert!(SpatialGrid::line(0.0, 1.0, 2).is_err());
        assert!(SpatialGrid::line(1.0, 0.0, 5).is_err());
    }

    #[test]
    fn bilinear_reproduces_affine_functions() {
        let g = SpatialGrid::new(vec![Axis { lo: -1.0, hi: 2.0, n: 7 }, Axis { lo: 0.0, hi: 1.0, n: 5 }]).unwrap();
        let v = g.sample(|p| 2.0 * p[0] - 3.0 * p[1] + 0.5);
        for x in [[0.13, 0.71], [-1.0, 0.0], [1.99, 0.5]] {
            assert!((g.interpolate(&v, &x) - (2.0 * x[0] - 3.0 * x[1] + 0.5)).abs() < 1e-12);
        }
        assert_eq!(g.stencil(&[0.13, 0.71]).len(), 4);
    }

    #[test]
    fn bulk_mask_drops_margins() {
        let g = SpatialGrid::line(0.0, 1.0, 21).unwrap();
        let m = g.bulk_mask(5);
        assert_eq!(m.iter().filter(|b| **b).count(), 11);
    }

    #[test]
    fn locate_time_brackets() {
        let t = [0.0, 0.5, 1.0, 1.5];
        assert_eq!(locate_time(&t, 0.75), (1, 0.5));
        assert_eq!(locate_time(&t, 1.5), (2, 1.0));
        assert_eq!(locate_time(&t, 0.5), (1, 0.0));
        assert_eq!(locate_time(&t, -1.0), (0, 0.0));
    }
}
