//! Energy landscapes, the Boltzmann–Gibbs density and stochastic-gradient
//! noise.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, check_finite, check_positive, Error, Result};
use crate::numerics::{for_each_tensor_node, LogSumExp};
use crate::rng;

/// `β (f(boundary) - min f)` required for the box; `e^-30` keeps the Gibbs
/// tail mass outside the box well below `1e-10`.
const BOX_TAIL_EXPONENT: f64 = 30.0;
const BOX_STEP: f64 = 0.5;
const BOX_MIN_HALF_WIDTH: f64 = 2.0;

/// Axis-aligned box `[lo_0, hi_0] × … × [lo_{d-1}, hi_{d-1}]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl DomainBox {
    pub fn symmetric(dim: usize, half_width: f64) -> Self {
        Self { lo: vec![-half_width; dim], hi: vec![half_width; dim] }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn extended(&self, margin: f64) -> Self {
        Self {
            lo: self.lo.iter().map(|v| v - margin).collect(),
            hi: self.hi.iter().map(|v| v + margin).collect(),
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }

    /// Largest absolute coordinate of any corner.
    pub fn radius(&self) -> f64 {
        self.lo.iter().chain(&self.hi).fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).product()
    }
}

/// Shape of a built-in energy.
#[derive(Debug, Clone, PartialEq)]
pub enum LandscapeKind {
    /// `‖x‖²/2`.
    Quadratic { dim: usize },
    /// `(x²-1)²/4`.
    DoubleWell,
    /// `(x²-1)²/4 + y²/2`.
    DoubleWell2d,
    /// `x²/2 + a cos(b x)`: many sharp minima around one wide valley.
    Rugged { a: f64, b: f64 },
    /// `f ≡ 0` restricted to a declared box.
    Constant { dim: usize, half_width: f64 },
    /// Finite sum `f_i(x) = ‖x - c_i‖²/2`.
    QuadraticFamily { centers: Vec<Vec<f64>> },
    /// Finite sum `f_i(x) = (y_i - ξ_i·x)²` (linear least squares).
    LeastSquares { features: Vec<Vec<f64>>, targets: Vec<f64> },
}

/// An energy `f: ℝ^d → ℝ` with a hand-coded gradient and, for finite-sum
/// losses, per-sample components `f_i` with `f = (1/N) Σ f_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyLandscape {
    kind: LandscapeKind,
    offset: f64,
    name: String,
}

/// Names accepted by [`EnergyLandscape::from_name`], in registry order.
pub const LANDSCAPE_NAMES: &[&str] = &[
    "quadratic",
    "double-well",
    "double-well-2d",
    "rugged",
    "constant",
    "quadratic-family",
    "least-squares",
];

impl EnergyLandscape {
    pub fn new(kind: LandscapeKind, name: impl Into<String>) -> Result<Self> {
        match &kind {
            LandscapeKind::Quadratic { dim } | LandscapeKind::Constant { dim, .. } if *dim == 0 => {
                return Err(Error::InvalidParameter("dim must be at least 1".into()))
            }
            LandscapeKind::Constant { half_width, .. } => check_positive("half_width", *half_width)?,
            LandscapeKind::Rugged { a, b } => {
                check_finite("rugged parameters", &[*a, *b])?;
            }
            LandscapeKind::QuadraticFamily { centers } => {
                let d = centers.first().map(Vec::len).unwrap_or(0);
                if d == 0 || centers.iter().any(|c| c.len() != d) {
                    return Err(Error::InvalidParameter("centers must be non-empty with equal dims".into()));
                }
            }
            LandscapeKind::LeastSquares { features, targets } => {
                let d = features.first().map(Vec::len).unwrap_or(0);
                if d == 0 || features.len() != targets.len() || features.iter().any(|c| c.len() != d) {
                    return Err(Error::InvalidParameter("features/targets are inconsistent".into()));
                }
            }
            _ => {}
        }
        Ok(Self { kind, offset: 0.0, name: name.into() })
    }

    pub fn quadratic(dim: usize) -> Self {
        Self::new(LandscapeKind::Quadratic { dim }, "quadratic").expect("valid quadratic")
    }

    pub fn double_well() -> Self {
        Self::new(LandscapeKind::DoubleWell, "double-well").expect("valid double well")
    }

    pub fn double_well_2d() -> Self {
        Self::new(LandscapeKind::DoubleWell2d, "double-well-2d").expect("valid double well")
    }

    pub fn rugged(a: f64, b: f64) -> Result<Self> {
        Self::new(LandscapeKind::Rugged { a, b }, "rugged")
    }

    /// Default rugged landscape: `a = 0.2`, `b = 10`.
    pub fn rugged_default() -> Self {
        Self::rugged(0.2, 10.0).expect("valid rugged")
    }

    pub fn constant(dim: usize, half_width: f64) -> Result<Self> {
        Self::new(LandscapeKind::Constant { dim, half_width }, "constant")
    }

    pub fn quadratic_family(centers: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(LandscapeKind::QuadraticFamily { centers }, "quadratic-family")
    }

    pub fn least_squares(features: Vec<Vec<f64>>, targets: Vec<f64>) -> Result<Self> {
        Self::new(LandscapeKind::LeastSquares { features, targets }, "least-squares")
    }

    /// Synthetic regression data `y_i = ξ_i·w + 0.1 ε_i` with Gaussian
    /// features, reproducible from `seed`.
    pub fn least_squares_synthetic(samples: usize, dim: usize, seed: u64) -> Result<Self> {
        if samples == 0 || dim == 0 {
            return Err(Error::InvalidParameter("samples and dim must be positive".into()));
        }
        let mut rng = rng::stream(seed, rng::FAMILY_DATA, 0);
        let truth: Vec<f64> = (0..dim).map(|j| 0.5 - 0.25 * j as f64).collect();
        let mut features = Vec::with_capacity(samples);
        let mut targets = Vec::with_capacity(samples);
        for _ in 0..samples {
            let xi: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let noise: f64 = rng.sample(StandardNormal);
            targets.push(dot(&xi, &truth) + 0.1 * noise);
            features.push(xi);
        }
        Self::least_squares(features, targets)
    }

    /// Construct a registered landscape from its name and parameter map.
    /// Unknown names and parameters are rejected.
    pub fn from_name(name: &str, params: &BTreeMap<String, f64>) -> Result<Self> {
        let allowed: &[&str] = match name {
            "quadratic" => &["dim"],
            "double-well" | "double-well-2d" => &[],
            "rugged" => &["a", "b"],
            "constant" => &["dim", "half_width"],
            "quadratic-family" => &["separation"],
            "least-squares" => &["samples", "dim", "seed"],
            other => {
                return Err(Error::Config(format!(
                    "unknown landscape `{other}` (known: {})",
                    LANDSCAPE_NAMES.join(", ")
                )))
            }
        };
        if let Some(k) = params.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(Error::Config(format!("unknown parameter `{k}` for landscape `{name}`")));
        }
        let get = |k: &str, default: f64| params.get(k).copied().unwrap_or(default);
        let as_count = |k: &str, default: f64| -> Result<usize> {
            let v = get(k, default);
            if v < 1.0 || v.fract() != 0.0 || v > 1e6 {
                return Err(Error::Config(format!("`{k}` must be a positive integer, got {v}")));
            }
            Ok(v as usize)
        };
        match name {
            "quadratic" => Self::new(LandscapeKind::Quadratic { dim: as_count("dim", 1.0)? }, name),
            "double-well" => Ok(Self::double_well()),
            "double-well-2d" => Ok(Self::double_well_2d()),
            "rugged" => Self::rugged(get("a", 0.2), get("b", 10.0)),
            "constant" => Self::constant(as_count("dim", 1.0)?, get("half_width", 4.0)),
            "quadratic-family" => {
                let s = get("separation", 2.0);
                Self::quadratic_family(vec![vec![0.5 * s], vec![-0.5 * s]])
            }
            "least-squares" => Self::least_squares_synthetic(
                as_count("samples", 8.0)?,
                as_count("dim", 2.0)?,
                get("seed", 11.0) as u64,
            ),
            _ => unreachable!(),
        }
    }

    /// Same landscape shifted by a constant: `f + k`.
    pub fn shifted(&self, k: f64) -> Self {
        let mut out = self.clone();
        out.offset += k;
        out
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> &LandscapeKind {
        &self.kind
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            LandscapeKind::Quadratic { dim } | LandscapeKind::Constant { dim, .. } => *dim,
            LandscapeKind::DoubleWell | LandscapeKind::Rugged { .. } => 1,
            LandscapeKind::DoubleWell2d => 2,
            LandscapeKind::QuadraticFamily { centers } => centers[0].len(),
            LandscapeKind::LeastSquares { features, .. } => features[0].len(),
        }
    }

    /// Smallest feature size of the energy, used to pick quadrature spacing.
    pub fn length_scale(&self) -> f64 {
        match &self.kind {
            LandscapeKind::Rugged { b, .. } if *b != 0.0 => (1.0 / b.abs()).min(1.0),
            LandscapeKind::DoubleWell | LandscapeKind::DoubleWell2d => 0.5,
            LandscapeKind::LeastSquares { .. } => 0.5,
            _ => 1.0,
        }
    }

    /// True when the Gibbs density is the uniform law on the declared box
    /// (and zero outside it).
    pub fn is_box_indicator(&self) -> bool {
        matches!(self.kind, LandscapeKind::Constant { .. })
    }

    pub fn has_components(&self) -> bool {
        self.component_count() > 0
    }

    pub fn component_count(&self) -> usize {
        match &self.kind {
            LandscapeKind::QuadraticFamily { centers } => centers.len(),
            LandscapeKind::LeastSquares { targets, .. } => targets.len(),
            _ => 0,
        }
    }

    /// `f(x)` without input validation (hot path).
    pub fn energy(&self, x: &[f64]) -> f64 {
        let raw = match &self.kind {
            LandscapeKind::Quadratic { .. } => 0.5 * dot(x, x),
            LandscapeKind::DoubleWell => {
                let s = x[0] * x[0] - 1.0;
                0.25 * s * s
            }
            LandscapeKind::DoubleWell2d => {
                let s = x[0] * x[0] - 1.0;
                0.25 * s * s + 0.5 * x[1] * x[1]
            }
            LandscapeKind::Rugged { a, b } => 0.5 * x[0] * x[0] + a * (b * x[0]).cos(),
            LandscapeKind::Constant { .. } => 0.0,
            LandscapeKind::QuadraticFamily { .. } | LandscapeKind::LeastSquares { .. } => {
                let n = self.component_count();
                return (0..n).map(|i| self.component_energy(i, x)).sum::<f64>() / n as f64;
            }
        };
        raw + self.offset
    }

    /// Validated evaluation of `f(x)`.
    pub fn eval_energy(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        check_finite("point", x)?;
        Ok(self.energy(x))
    }

    /// Writes `∇f(x)` into `out`.
    pub fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        match &self.kind {
            LandscapeKind::Quadratic { .. } => out.copy_from_slice(x),
            LandscapeKind::DoubleWell => out[0] = x[0] * (x[0] * x[0] - 1.0),
            LandscapeKind::DoubleWell2d => {
                out[0] = x[0] * (x[0] * x[0] - 1.0);
                out[1] = x[1];
            }
            LandscapeKind::Rugged { a, b } => out[0] = x[0] - a * b * (b * x[0]).sin(),
            LandscapeKind::Constant { .. } => out.fill(0.0),
            LandscapeKind::QuadraticFamily { .. } | LandscapeKind::LeastSquares { .. } => {
                let n = self.component_count();
                out.fill(0.0);
                let mut g = vec![0.0; x.len()];
                for i in 0..n {
                    self.component_gradient_into(i, x, &mut g);
                    for (o, gi) in out.iter_mut().zip(&g) {
                        *o += gi;
                    }
                }
                for o in out.iter_mut() {
                    *o /= n as f64;
                }
            }
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        self.gradient_into(x, &mut g);
        g
    }

    /// `f_i(x)`; panics if `i` is out of range.
    pub fn component_energy(&self, i: usize, x: &[f64]) -> f64 {
        match &self.kind {
            LandscapeKind::QuadraticFamily { centers } => {
                let c = &centers[i];
                0.5 * x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() + self.offset
            }
            LandscapeKind::LeastSquares { features, targets } => {
                let r = targets[i] - dot(&features[i], x);
                r * r + self.offset
            }
            _ => panic!("landscape `{}` has no components", self.name),
        }
    }

    pub fn component_gradient_into(&self, i: usize, x: &[f64], out: &mut [f64]) {
        match &self.kind {
            LandscapeKind::QuadraticFamily { centers } => {
                for ((o, a), b) in out.iter_mut().zip(x).zip(&centers[i]) {
                    *o = a - b;
                }
            }
            LandscapeKind::LeastSquares { features, targets } => {
                let r = targets[i] - dot(&features[i], x);
                for (o, xi) in out.iter_mut().zip(&features[i]) {
                    *o = -2.0 * r * xi;
                }
            }
            _ => panic!("landscape `{}` has no components", self.name),
        }
    }

    /// Global minimum value of `f` (closed form where available, otherwise a
    /// dense scan).
    pub fn min_energy(&self) -> f64 {
        match &self.kind {
            LandscapeKind::Quadratic { .. }
            | LandscapeKind::DoubleWell
            | LandscapeKind::DoubleWell2d
            | LandscapeKind::Constant { .. } => self.offset,
            LandscapeKind::QuadraticFamily { centers } => {
                let d = centers[0].len();
                let mean: Vec<f64> = (0..d)
                    .map(|j| centers.iter().map(|c| c[j]).sum::<f64>() / centers.len() as f64)
                    .collect();
                self.energy(&mean)
            }
            LandscapeKind::LeastSquares { features, targets } => match least_squares_solution(features, targets) {
                Some(w) => self.energy(&w),
                None => self.offset,
            },
            LandscapeKind::Rugged { .. } => {
                let n = 200_001;
                let (lo, hi) = (-10.0, 10.0);
                let h = (hi - lo) / (n - 1) as f64;
                let mut best = (f64::INFINITY, 0.0);
                for i in 0..n {
                    let x = lo + h * i as f64;
                    let v = self.energy(&[x]);
                    if v < best.0 {
                        best = (v, x);
                    }
                }
                // polish with Newton on f'
                let (a, b) = match self.kind {
                    LandscapeKind::Rugged { a, b } => (a, b),
                    _ => unreachable!(),
                };
                let mut x = best.1;
                for _ in 0..20 {
                    let g = x - a * b * (b * x).sin();
                    let hss = 1.0 - a * b * b * (b * x).cos();
                    if hss <= 0.0 {
                        break;
                    }
                    x -= g / hss;
                }
                self.energy(&[x]).min(best.0)
            }
        }
    }

    /// Symmetric truncation box `[-L, L]^d` outside which
    /// `β (f - min f) ≥ 30`, so the Gibbs tail mass there is below `1e-10`.
    pub fn domain_box(&self, beta: f64) -> DomainBox {
        let d = self.dim();
        if let LandscapeKind::Constant { half_width, .. } = self.kind {
            return DomainBox::symmetric(d, half_width);
        }
        let fmin = self.min_energy();
        let mut half = BOX_MIN_HALF_WIDTH;
        loop {
            if beta * (self.boundary_min(half) - fmin) >= BOX_TAIL_EXPONENT || half > 1e3 {
                return DomainBox::symmetric(d, half);
            }
            half += BOX_STEP;
        }
    }

    fn boundary_min(&self, half: f64) -> f64 {
        let d = self.dim();
        match d {
            1 => self.energy(&[-half]).min(self.energy(&[half])),
            _ => {
                let m = if d == 2 { 201 } else { 41 };
                let mut best = f64::INFINITY;
                let mut x = vec![0.0; d];
                // every face: fix one axis at ±half, scan the others
                for face in 0..d {
                    for &side in &[-half, half] {
                        let others: Vec<(f64, f64, usize)> = (0..d - 1).map(|_| (-half, half, m)).collect();
                        for_each_tensor_node(&others, |y, _| {
                            let mut k = 0;
                            for (a, xa) in x.iter_mut().enumerate() {
                                if a == face {
                                    *xa = side;
                                } else {
                                    *xa = y[k];
                                    k += 1;
                                }
                            }
                            best = best.min(self.energy(&x));
                        });
                    }
                }
                best
            }
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn least_squares_solution(features: &[Vec<f64>], targets: &[f64]) -> Option<Vec<f64>> {
    let d = features[0].len();
    let a = DMatrix::from_fn(features.len(), d, |i, j| features[i][j]);
    let y = DVector::from_column_slice(targets);
    let ata = a.transpose() * &a;
    let aty = a.transpose() * y;
    ata.cholesky().map(|c| c.solve(&aty).iter().copied().collect())
}

/// Default number of quadrature points per axis for `log Z` by dimension.
pub fn default_partition_points(dim: usize) -> usize {
    match dim {
        1 => 4001,
        2 => 401,
        _ => 81,
    }
}

/// `log ∫_box exp(-β f) dx` by tensor trapezoid quadrature with log-sum-exp
/// accumulation.
pub fn log_partition(landscape: &EnergyLandscape, beta: f64, domain: &DomainBox, npts: usize) -> Result<f64> {
    check_positive("beta", beta)?;
    let d = landscape.dim();
    check_dim(d, domain.dim())?;
    if d > 3 {
        return Err(Error::InvalidParameter(format!("tensor quadrature supports d <= 3, got {d}")));
    }
    if npts < 3 {
        return Err(Error::InvalidParameter("npts must be at least 3".into()));
    }
    let axes: Vec<(f64, f64, usize)> = (0..d).map(|a| (domain.lo[a], domain.hi[a], npts)).collect();
    let mut acc = LogSumExp::new();
    let mut bad = None;
    for_each_tensor_node(&axes, |x, w| {
        let e = -beta * landscape.energy(x);
        if e.is_nan() || e == f64::INFINITY {
            bad = Some(x.to_vec());
        }
        acc.push(e + w.ln());
    });
    if let Some(x) = bad {
        return Err(Error::Quadrature(format!("integrand not finite at {x:?}")));
    }
    let v = acc.value();
    if !v.is_finite() {
        return Err(Error::Quadrature(format!("log-partition is {v}")));
    }
    Ok(v)
}

/// Boltzmann–Gibbs density `ρ̄(x) = exp(-β f(x) - log Z)` on the landscape's
/// truncation box.
#[derive(Debug, Clone)]
pub struct GibbsDensity {
    landscape: EnergyLandscape,
    beta: f64,
    log_z: f64,
    domain: DomainBox,
}

impl GibbsDensity {
    pub fn new(landscape: EnergyLandscape, beta: f64) -> Result<Self> {
        let n = default_partition_points(landscape.dim());
        Self::with_points(landscape, beta, n)
    }

    pub fn with_points(landscape: EnergyLandscape, beta: f64, npts: usize) -> Result<Self> {
        check_positive("beta", beta)?;
        let domain = landscape.domain_box(beta);
        let log_z = log_partition(&landscape, beta, &domain, npts)?;
        Ok(Self { landscape, beta, log_z, domain })
    }

    pub fn landscape(&self) -> &EnergyLandscape {
        &self.landscape
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn log_z(&self) -> f64 {
        self.log_z
    }

    /// Additive constant `c(β) = -log Z / β`, chosen so that
    /// `-(1/β) log ρ̄ + c(β) = f` holds exactly.
    pub fn c_beta(&self) -> f64 {
        -self.log_z / self.beta
    }

    pub fn domain(&self) -> &DomainBox {
        &self.domain
    }

    /// `log ρ̄(x) = -β f(x) - log Z`.
    pub fn log_density(&self, x: &[f64]) -> f64 {
        -self.beta * self.landscape.energy(x) - self.log_z
    }

    pub fn gibbs_log_density(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.landscape.dim(), x.len())?;
        check_finite("point", x)?;
        Ok(self.log_density(x))
    }

    pub fn density(&self, x: &[f64]) -> f64 {
        self.log_density(x).exp()
    }
}

/// Mini-batch gradient noise for a finite-sum landscape.
#[derive(Debug, Clone)]
pub struct GradientNoiseModel {
    landscape: EnergyLandscape,
    minibatch: usize,
    eta: f64,
}

impl GradientNoiseModel {
    pub fn new(landscape: EnergyLandscape, minibatch: usize, eta: f64) -> Result<Self> {
        if !landscape.has_components() {
            return Err(Error::Config(format!("landscape `{}` has no per-sample components", landscape.name())));
        }
        if minibatch == 0 {
            return Err(Error::InvalidParameter("minibatch must be at least 1".into()));
        }
        if !(eta.is_finite() && eta >= 0.0) {
            return Err(Error::InvalidParameter(format!("eta must be non-negative, got {eta}")));
        }
        Ok(Self { landscape, minibatch, eta })
    }

    pub fn landscape(&self) -> &EnergyLandscape {
        &self.landscape
    }

    pub fn minibatch(&self) -> usize {
        self.minibatch
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// `Σ(x) = (1/N) Σ_i (∇f - ∇f_i)(∇f - ∇f_i)ᵀ`.
    pub fn noise_covariance(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let d = self.landscape.dim();
        check_dim(d, x.len())?;
        check_finite("point", x)?;
        let n = self.landscape.component_count();
        let full = DVector::from_vec(self.landscape.gradient(x));
        let mut sigma = DMatrix::zeros(d, d);
        let mut gi = vec![0.0; d];
        for i in 0..n {
            self.landscape.component_gradient_into(i, x, &mut gi);
            let dev = &full - DVector::from_column_slice(&gi);
            sigma += &dev * dev.transpose();
        }
        sigma /= n as f64;
        // exact symmetry regardless of rounding in the outer products
        let sym = (&sigma + sigma.transpose()) * 0.5;
        Ok(sym)
    }

    /// Mini-batch gradient with indices drawn uniformly with replacement.
    pub fn sample_gradient<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R, out: &mut [f64]) {
        let n = self.landscape.component_count();
        out.fill(0.0);
        let mut gi = vec![0.0; x.len()];
        for _ in 0..self.minibatch {
            let i = rng.random_range(0..n);
            self.landscape.component_gradient_into(i, x, &mut gi);
            for (o, g) in out.iter_mut().zip(&gi) {
                *o += g;
            }
        }
        for o in out.iter_mut() {
            *o /= self.minibatch as f64;
        }
    }
}
