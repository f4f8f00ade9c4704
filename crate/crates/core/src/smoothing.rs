//! Local entropy: the heat-kernel smoothing
//! `u(x, γ) = -(1/β) log ∫ exp(-β f(y)) G_{γ/β}(x - y) dy`.
//!
//! Times are measured on the heat clock `t ∈ [0, γ]` with diffusion
//! coefficient `1/(2β)`, so the kernel at time `γ` has variance `γ/β`.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, check_finite, check_positive, Error, Result};
use crate::landscape::{EnergyLandscape, LandscapeKind};
use crate::numerics::for_each_tensor_node;
use crate::rng;

/// Kernel tails beyond this many standard deviations are dropped.
const WINDOW_SIGMAS: f64 = 10.0;
/// Box extension, in kernel standard deviations.
const BOX_EXTENSION_SIGMAS: f64 = 6.0;
/// Largest admissible integrand on the quadrature boundary, relative to
/// its peak.
const BOUNDARY_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatKernelParams {
    pub gamma: f64,
    pub beta: f64,
    pub dim: usize,
}

impl HeatKernelParams {
    pub fn new(gamma: f64, beta: f64, dim: usize) -> Result<Self> {
        check_positive("beta", beta)?;
        if !(gamma.is_finite() && gamma >= 0.0) {
            return Err(Error::InvalidParameter(format!("gamma must be non-negative, got {gamma}")));
        }
        if dim == 0 {
            return Err(Error::InvalidParameter("dim must be at least 1".into()));
        }
        Ok(Self { gamma, beta, dim })
    }

    /// Variance `γ/β` of the smoothing kernel.
    pub fn kernel_variance(&self) -> f64 {
        self.gamma / self.beta
    }
}

/// `G_{γ/β}(x) = (2π γ/β)^{-d/2} exp(-‖x‖² β / (2γ))`.
pub fn heat_kernel(p: &HeatKernelParams, x: &[f64]) -> Result<f64> {
    check_dim(p.dim, x.len())?;
    check_finite("point", x)?;
    if p.gamma <= 0.0 {
        return Err(Error::InvalidParameter("heat kernel needs gamma > 0".into()));
    }
    let v = p.kernel_variance();
    let r2: f64 = x.iter().map(|a| a * a).sum();
    Ok((2.0 * std::f64::consts::PI * v).powf(-0.5 * p.dim as f64) * (-r2 / (2.0 * v)).exp())
}

/// Closed-form local entropy of `f = ‖x‖²/2`:
/// `‖x‖²/(2(1+γ)) + (d/(2β)) log(1+γ)`.
pub fn gaussian_oracle(beta: f64, gamma: f64, x: &[f64]) -> f64 {
    let r2: f64 = x.iter().map(|a| a * a).sum();
    r2 / (2.0 * (1.0 + gamma)) + x.len() as f64 / (2.0 * beta) * (1.0 + gamma).ln()
}

/// Gradient of [`gaussian_oracle`]: `x / (1+γ)`.
pub fn gaussian_oracle_gradient(gamma: f64, x: &[f64]) -> Vec<f64> {
    x.iter().map(|a| a / (1.0 + gamma)).collect()
}

/// How `∇u(x, γ) = (x - E[Y]) / γ` is evaluated; `Y` has density
/// `∝ exp(-β f(y) - β ‖x - y‖² / (2γ))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GradientMethod {
    /// Tensor trapezoid quadrature (d ≤ 2).
    Quadrature,
    /// Unadjusted Langevin chain with `steps` iterations, half used as
    /// burn-in.
    Langevin { steps: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientEstimate {
    pub gradient: Vec<f64>,
    /// Per-component standard error; `None` for deterministic paths.
    pub std_error: Option<Vec<f64>>,
}

/// Log-integral and mean of the tilted density around `x`.
struct TiltedMoments {
    log_integral: f64,
    mean: Vec<f64>,
}

fn smoothing_box(p: &HeatKernelParams, landscape: &EnergyLandscape) -> (Vec<f64>, Vec<f64>, bool) {
    let dom = landscape.domain_box(p.beta);
    match landscape.kind() {
        // the constant landscape is the indicator of its box
        LandscapeKind::Constant { .. } => (dom.lo, dom.hi, true),
        _ => {
            let ext = dom.extended(BOX_EXTENSION_SIGMAS * p.kernel_variance().sqrt());
            (ext.lo, ext.hi, false)
        }
    }
}

fn tilted_moments(p: &HeatKernelParams, landscape: &EnergyLandscape, x: &[f64]) -> Result<TiltedMoments> {
    let d = p.dim;
    if d > 2 {
        return Err(Error::InvalidParameter(format!(
            "quadrature smoothing supports d <= 2, got {d}; use the Langevin estimator"
        )));
    }
    let v = p.kernel_variance();
    let sk = v.sqrt();
    let (lo, hi, indicator) = smoothing_box(p, landscape);
    let scale = landscape.length_scale() / p.beta.sqrt();
    let (per_sigma, floor) = if d == 1 { (10.0, 201) } else { (6.0, 61) };
    let h_target = (sk / per_sigma).min(scale / per_sigma);
    let mut axes = Vec::with_capacity(d);
    for a in 0..d {
        let wlo = lo[a].max(x[a] - WINDOW_SIGMAS * sk);
        let whi = hi[a].min(x[a] + WINDOW_SIGMAS * sk);
        if whi <= wlo {
            return Err(Error::Quadrature(format!(
                "point {x:?} is too far outside the smoothing domain [{}, {}] on axis {a}",
                lo[a], hi[a]
            )));
        }
        let n = (((whi - wlo) / h_target).ceil() as usize + 1).max(floor);
        axes.push((wlo, whi, n));
    }
    // two passes: locate the peak, then accumulate relative to it
    let log_integrand = |y: &[f64]| -> f64 {
        let r2: f64 = y.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
        -p.beta * landscape.energy(y) - r2 / (2.0 * v)
    };
    let mut peak = f64::NEG_INFINITY;
    for_each_tensor_node(&axes, |y, _| peak = peak.max(log_integrand(y)));
    if !peak.is_finite() {
        return Err(Error::Quadrature(format!("integrand is not finite near {x:?}")));
    }
    let mut sum = 0.0;
    let mut first = vec![0.0; d];
    let mut boundary_peak = f64::NEG_INFINITY;
    let edge = |y: &[f64]| -> bool {
        axes.iter().zip(y).any(|(&(l, h, n), &c)| {
            let step = (h - l) / (n - 1) as f64;
            c <= l + 0.5 * step || c >= h - 0.5 * step
        })
    };
    for_each_tensor_node(&axes, |y, w| {
        let a = log_integrand(y);
        let e = w * (a - peak).exp();
        sum += e;
        for (m, c) in first.iter_mut().zip(y) {
            *m += e * c;
        }
        if edge(y) {
            boundary_peak = boundary_peak.max(a);
        }
    });
    if !indicator && boundary_peak - peak > BOUNDARY_TOLERANCE.ln() {
        return Err(Error::Quadrature(format!(
            "boundary contribution {:.3e} of peak exceeds {BOUNDARY_TOLERANCE:e} at {x:?}",
            (boundary_peak - peak).exp()
        )));
    }
    let log_norm = -0.5 * d as f64 * (2.0 * std::f64::consts::PI * v).ln();
    Ok(TiltedMoments {
        log_integral: peak + sum.ln() + log_norm,
        mean: first.iter().map(|m| m / sum).collect(),
    })
}

fn validate(p: &HeatKernelParams, landscape: &EnergyLandscape, x: &[f64]) -> Result<()> {
    check_dim(landscape.dim(), p.dim)?;
    check_dim(p.dim, x.len())?;
    check_finite("point", x)
}

/// Local entropy `u(x, γ)`; returns `f(x)` exactly at `γ = 0`.
pub fn local_entropy(p: &HeatKernelParams, landscape: &EnergyLandscape, x: &[f64]) -> Result<f64> {
    validate(p, landscape, x)?;
    if p.gamma == 0.0 {
        return Ok(landscape.energy(x));
    }
    let m = tilted_moments(p, landscape, x)?;
    Ok(-m.log_integral / p.beta)
}

/// `∇u(x, γ)`. At `γ = 0` this is `∇f(x)` exactly, matching
/// `u(x, 0) = f(x)`.
pub fn local_entropy_gradient(
    p: &HeatKernelParams,
    landscape: &EnergyLandscape,
    x: &[f64],
    method: GradientMethod,
) -> Result<GradientEstimate> {
    validate(p, landscape, x)?;
    if p.gamma == 0.0 {
        return Ok(GradientEstimate { gradient: landscape.gradient(x), std_error: None });
    }
    match method {
        GradientMethod::Quadrature => {
            let m = tilted_moments(p, landscape, x)?;
            let gradient = x.iter().zip(&m.mean).map(|(a, ey)| (a - ey) / p.gamma).collect();
            Ok(GradientEstimate { gradient, std_error: None })
        }
        GradientMethod::Langevin { steps, seed } => langevin_gradient(p, landscape, x, steps, seed),
    }
}

/// Step size of the inner Langevin chain, `γ / (10 β (1+γ))`.
pub fn langevin_step(p: &HeatKernelParams) -> f64 {
    p.gamma / (10.0 * p.beta * (1.0 + p.gamma))
}

const LANGEVIN_BATCHES: usize = 20;

fn langevin_gradient(
    p: &HeatKernelParams,
    landscape: &EnergyLandscape,
    x: &[f64],
    steps: usize,
    seed: u64,
) -> Result<GradientEstimate> {
    let burn = steps / 2;
    let kept = steps - burn;
    if kept < 2 * LANGEVIN_BATCHES {
        return Err(Error::InvalidParameter(format!(
            "Langevin estimator needs at least {} steps, got {steps}",
            4 * LANGEVIN_BATCHES
        )));
    }
    let d = p.dim;
    let delta = langevin_step(p);
    let noise = (2.0 * delta).sqrt();
    let dom = landscape.domain_box(p.beta).extended(BOX_EXTENSION_SIGMAS * p.kernel_variance().sqrt());
    let mut rng = rng::stream(seed, rng::FAMILY_CHAIN, 0);
    let mut y = x.to_vec();
    let mut grad = vec![0.0; d];
    let batch_len = kept / LANGEVIN_BATCHES;
    let mut batch_means = vec![vec![0.0; d]; LANGEVIN_BATCHES];
    for j in 0..steps {
        landscape.gradient_into(&y, &mut grad);
        for a in 0..d {
            let drift = p.beta * grad[a] + p.beta * (y[a] - x[a]) / p.gamma;
            let xi: f64 = rng.sample(StandardNormal);
            y[a] += -delta * drift + noise * xi;
        }
        if !dom.contains(&y) {
            return Err(Error::Divergence(format!("Langevin chain left the smoothing box at step {j}: {y:?}")));
        }
        if j >= burn {
            let b = ((j - burn) / batch_len).min(LANGEVIN_BATCHES - 1);
            for a in 0..d {
                batch_means[b][a] += y[a];
            }
        }
    }
    let mut mean = vec![0.0; d];
    let mut se = vec![0.0; d];
    for a in 0..d {
        let per: Vec<f64> = (0..LANGEVIN_BATCHES)
            .map(|b| {
                let len = if b + 1 == LANGEVIN_BATCHES { kept - batch_len * (LANGEVIN_BATCHES - 1) } else { batch_len };
                batch_means[b][a] / len as f64
            })
            .collect();
        let total: f64 = (0..LANGEVIN_BATCHES).map(|b| batch_means[b][a]).sum();
        mean[a] = total / kept as f64;
        let m = per.iter().sum::<f64>() / LANGEVIN_BATCHES as f64;
        let var = per.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (LANGEVIN_BATCHES - 1) as f64;
        se[a] = (var / LANGEVIN_BATCHES as f64).sqrt() / p.gamma;
    }
    let gradient = x.iter().zip(&mean).map(|(a, ey)| (a - ey) / p.gamma).collect();
    Ok(GradientEstimate { gradient, std_error: Some(se) })
}
