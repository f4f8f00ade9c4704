//! Sample statistics: means with standard errors, Wasserstein-1 distances,
//! Kolmogorov–Smirnov tests and inverse-CDF sampling from grid densities.

use rand::Rng;

use crate::error::{Error, Result};
use crate::pde::SpatialGrid;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanSe {
    pub mean: f64,
    pub std_error: f64,
    pub n: usize,
}

/// Sample mean and `std/√n` (unbiased variance).
pub fn mean_se(values: &[f64]) -> MeanSe {
    let n = values.len();
    if n == 0 {
        return MeanSe { mean: f64::NAN, std_error: f64::NAN, n };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return MeanSe { mean, std_error: 0.0, n };
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    MeanSe { mean, std_error: (var / n as f64).sqrt(), n }
}

/// Sample variance with the standard error of the variance estimate
/// (`√((m4 - s⁴)/n)`).
pub fn variance_se(values: &[f64]) -> MeanSe {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let m4 = values.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n;
    MeanSe { mean: var, std_error: ((m4 - var * var).max(0.0) / n).sqrt(), n: values.len() }
}

/// Piecewise-linear CDF of a 1-D grid density (trapezoid cell masses),
/// normalised to 1.
#[derive(Debug, Clone)]
pub struct GridCdf {
    xs: Vec<f64>,
    cdf: Vec<f64>,
}

impl GridCdf {
    pub fn new(xs: Vec<f64>, density: &[f64]) -> Result<Self> {
        if xs.len() != density.len() || xs.len() < 2 {
            return Err(Error::InvalidParameter("CDF needs matching nodes and values".into()));
        }
        let mut cdf = vec![0.0; xs.len()];
        for i in 1..xs.len() {
            cdf[i] = cdf[i - 1] + 0.5 * (density[i] + density[i - 1]) * (xs[i] - xs[i - 1]);
        }
        let total = cdf[xs.len() - 1];
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::InvalidParameter(format!("density has mass {total}")));
        }
        for c in cdf.iter_mut() {
            *c /= total;
        }
        Ok(Self { xs, cdf })
    }

    /// CDF of the marginal along `axis` of a grid density.
    pub fn marginal(grid: &SpatialGrid, values: &[f64], axis: usize) -> Result<Self> {
        let ax = grid.axis(axis);
        let xs: Vec<f64> = (0..ax.n).map(|i| ax.coord(i)).collect();
        if grid.dim() == 1 {
            return Self::new(xs, values);
        }
        let other = 1 - axis;
        let no = grid.axis(other).n;
        let ho = grid.spacing(other);
        let marg: Vec<f64> = (0..ax.n)
            .map(|i| {
                (0..no)
                    .map(|j| {
                        let idx = if axis == 0 { [i, j] } else { [j, i] };
                        let w = if j == 0 || j + 1 == no { 0.5 * ho } else { ho };
                        w * values[grid.index(&idx)]
                    })
                    .sum()
            })
            .collect();
        Self::new(xs, &marg)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return 0.0;
        }
        if x >= self.xs[n - 1] {
            return 1.0;
        }
        let i = self.xs.partition_point(|v| *v <= x) - 1;
        let s = (x - self.xs[i]) / (self.xs[i + 1] - self.xs[i]);
        self.cdf[i] + s * (self.cdf[i + 1] - self.cdf[i])
    }

    pub fn nodes(&self) -> &[f64] {
        &self.xs
    }

    pub fn mean(&self) -> f64 {
        (1..self.xs.len())
            .map(|i| 0.5 * (self.xs[i] + self.xs[i - 1]) * (self.cdf[i] - self.cdf[i - 1]))
            .sum()
    }
}

/// `∫|F(x) - G(x)| dx` for a linear `F - G` on `[a, b]` with end values
/// `da`, `db`.
fn abs_linear_integral(da: f64, db: f64, width: f64) -> f64 {
    if da * db >= 0.0 {
        0.5 * (da.abs() + db.abs()) * width
    } else {
        0.5 * (da * da + db * db) / (da.abs() + db.abs()) * width
    }
}

/// Wasserstein-1 distance between an empirical sample and a grid CDF,
/// `∫ |F_n - F| dx`, integrated exactly over merged breakpoints.
pub fn w1_to_cdf(samples: &[f64], cdf: &GridCdf) -> f64 {
    let mut s: Vec<f64> = samples.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).expect("finite samples"));
    let n = s.len() as f64;
    let mut points: Vec<f64> = s.iter().copied().chain(cdf.xs.iter().copied()).collect();
    points.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    points.dedup();
    let mut total = 0.0;
    let mut count = 0usize; // samples <= current left point
    for w in points.windows(2) {
        let (a, b) = (w[0], w[1]);
        while count < s.len() && s[count] <= a {
            count += 1;
        }
        let fn_ = count as f64 / n;
        total += abs_linear_integral(fn_ - cdf.eval(a), fn_ - cdf.eval(b), b - a);
    }
    total
}

/// Wasserstein-1 distance between two empirical samples.
pub fn w1_samples(a: &[f64], b: &[f64]) -> f64 {
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(|x, y| x.partial_cmp(y).expect("finite"));
    sb.sort_by(|x, y| x.partial_cmp(y).expect("finite"));
    let (na, nb) = (sa.len() as f64, sb.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut prev: Option<f64> = None;
    let mut total = 0.0;
    while i < sa.len() || j < sb.len() {
        let x = match (sa.get(i), sb.get(j)) {
            (Some(&p), Some(&q)) => p.min(q),
            (Some(&p), None) => p,
            (None, Some(&q)) => q,
            _ => unreachable!(),
        };
        if let Some(p) = prev {
            total += (i as f64 / na - j as f64 / nb).abs() * (x - p);
        }
        while i < sa.len() && sa[i] <= x {
            i += 1;
        }
        while j < sb.len() && sb[j] <= x {
            j += 1;
        }
        prev = Some(x);
    }
    total
}

/// Kolmogorov–Smirnov statistic of `samples` against `cdf`.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Asymptotic p-value `P(D_n ≥ d)` from the Kolmogorov distribution with
/// the Stephens small-sample correction.
pub fn ks_pvalue(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut p = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = 2.0 * (-1f64).powi(k - 1) * (-2.0 * kf * kf * lambda * lambda).exp();
        p += term;
        if term.abs() < 1e-12 {
            break;
        }
    }
    p.clamp(0.0, 1.0)
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Complementary error function (Numerical Recipes Chebyshev fit,
/// relative error below `1.2e-7`).
pub fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let r = t
        * (-z * z - 1.265_512_23
            + t * (1.000_023_68
                + t * (0.374_091_96
                    + t * (0.096_784_18
                        + t * (-0.186_288_06
                            + t * (0.278_868_07
                                + t * (-1.135_203_98
                                    + t * (1.488_515_87 + t * (-0.822_152_23 + t * 0.170_872_77)))))))))
            .exp();
    if x >= 0.0 {
        r
    } else {
        2.0 - r
    }
}

/// Draws from a 1-D or 2-D grid density: a cell is picked with probability
/// proportional to its trapezoid mass, then a uniform point inside it.
#[derive(Debug, Clone)]
pub struct GridSampler {
    grid: SpatialGrid,
    cumulative: Vec<f64>,
}

impl GridSampler {
    pub fn new(grid: &SpatialGrid, density: &[f64]) -> Result<Self> {
        if density.len() != grid.len() {
            return Err(Error::DimensionMismatch { expected: grid.len(), got: density.len() });
        }
        let n0 = grid.axis(0).n;
        let cells: Vec<f64> = match grid.dim() {
            1 => (0..n0 - 1).map(|i| 0.5 * (density[i] + density[i + 1])).collect(),
            _ => {
                let n1 = grid.axis(1).n;
                let mut c = Vec::with_capacity((n0 - 1) * (n1 - 1));
                for j in 0..n1 - 1 {
                    for i in 0..n0 - 1 {
                        let v = |a: usize, b: usize| density[a + n0 * b];
                        c.push(0.25 * (v(i, j) + v(i + 1, j) + v(i, j + 1) + v(i + 1, j + 1)));
                    }
                }
                c
            }
        };
        let mut cumulative = Vec::with_capacity(cells.len());
        let mut acc = 0.0;
        for c in cells {
            if !(c.is_finite() && c >= 0.0) {
                return Err(Error::InvalidParameter(format!("density cell mass {c} is invalid")));
            }
            acc += c;
            cumulative.push(acc);
        }
        if acc <= 0.0 {
            return Err(Error::InvalidParameter("density has zero mass".into()));
        }
        for c in cumulative.iter_mut() {
            *c /= acc;
        }
        Ok(Self { grid: grid.clone(), cumulative })
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        let u: f64 = rng.random();
        let cell = self.cumulative.partition_point(|c| *c < u).min(self.cumulative.len() - 1);
        let n0 = self.grid.axis(0).n - 1;
        let (i, j) = (cell % n0, cell / n0);
        let ax0 = self.grid.axis(0);
        out[0] = ax0.coord(i) + rng.random::<f64>() * ax0.spacing();
        if self.grid.dim() == 2 {
            let ax1 = self.grid.axis(1);
            out[1] = ax1.coord(j) + rng.random::<f64>() * ax1.spacing();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn w1_between_point_masses() {
        assert!((w1_samples(&[0.0, 0.0], &[1.0, 1.0]) - 1.0).abs() < 1e-15);
        assert!((w1_samples(&[0.0, 1.0], &[0.5]) - 0.5).abs() < 1e-15);
        assert_eq!(w1_samples(&[0.3, -1.0, 2.0], &[2.0, 0.3, -1.0]), 0.0);
    }

    #[test]
    fn w1_to_uniform_cdf() {
        let cdf = GridCdf::new(vec![0.0, 1.0], &[1.0, 1.0]).unwrap();
        // a point mass at 0.5 against U(0,1) has W1 = 1/4
        assert!((w1_to_cdf(&[0.5], &cdf) - 0.25).abs() < 1e-15);
        assert!((w1_to_cdf(&[0.0], &cdf) - 0.5).abs() < 1e-15);
        // mass outside the grid
        assert!((w1_to_cdf(&[2.0], &cdf) - 1.5).abs() < 1e-15);
    }

    #[test]
    fn ks_accepts_own_distribution_and_rejects_shift() {
        let grid = SpatialGrid::line(-6.0, 6.0, 1201).unwrap();
        let rho = grid.sample(|x| (-0.5 * x[0] * x[0]).exp());
        let sampler = GridSampler::new(&grid, &rho).unwrap();
        let mut rng = stream(1, 0, 0);
        let mut x = [0.0];
        let draws: Vec<f64> = (0..20_000)
            .map(|_| {
                sampler.sample(&mut rng, &mut x);
                x[0]
            })
            .collect();
        let d = ks_statistic(&draws, normal_cdf);
        assert!(ks_pvalue(d, draws.len()) > 0.01);
        let shifted: Vec<f64> = draws.iter().map(|v| v + 0.1).collect();
        assert!(ks_pvalue(ks_statistic(&shifted, normal_cdf), shifted.len()) < 1e-6);
        let v = variance_se(&draws);
        assert!((v.mean - 1.0).abs() < 4.0 * v.std_error);
    }

    #[test]
    fn erfc_reference_values() {
        assert!((erfc(0.0) - 1.0).abs() < 1e-7);
        assert!((normal_cdf(1.0) - 0.841_344_746).abs() < 1e-7);
        assert!((normal_cdf(-2.0) - 0.022_750_132).abs() < 1e-7);
    }

    #[test]
    fn marginal_cdf_of_product_density() {
        let grid = SpatialGrid::new(vec![
            crate::pde::Axis { lo: -5.0, hi: 5.0, n: 201 },
            crate::pde::Axis { lo: -2.0, hi: 2.0, n: 81 },
        ])
        .unwrap();
        let rho = grid.sample(|x| (-0.5 * x[0] * x[0]).exp() * (1.0 + 0.1 * x[1]));
        let m = GridCdf::marginal(&grid, &rho, 0).unwrap();
        assert!((m.eval(1.0) - normal_cdf(1.0)).abs() < 1e-3);
        assert!(m.mean().abs() < 1e-12);
    }
}
