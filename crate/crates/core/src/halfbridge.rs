//! Half-bridge solutions: the path measures closest to stationary Wiener
//! measure with one prescribed time marginal, their score drifts, and
//! reverse-time sampling of the Gibbs density.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{check_positive, Error, Result};
use crate::landscape::{DomainBox, EnergyLandscape, GibbsDensity};
use crate::pde::{score_field, solve_heat, DensityStack, SpatialGrid, VectorStack};
use crate::sde::{simulate_forward, simulate_reverse, DiffusionSpec, Direction, DriftFn, SimulationPlan};
use crate::stats::{w1_to_cdf, GridCdf, GridSampler};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pinned {
    /// Initial marginal prescribed; forward drift vanishes.
    Initial,
    /// Final marginal prescribed; backward drift vanishes.
    Final,
}

#[derive(Debug, Clone)]
pub struct HalfBridgeSolution {
    pub which: Pinned,
    /// The prescribed marginal on the grid.
    pub marginal: Vec<f64>,
    pub beta: f64,
    /// `q*(·, t)` on `[0, γ]`.
    pub density: DensityStack,
    pub score: Arc<VectorStack>,
}

impl HalfBridgeSolution {
    pub fn sigma2(&self) -> f64 {
        1.0 / self.beta
    }

    pub fn horizon(&self) -> f64 {
        self.density.horizon()
    }

    pub fn zero_drift_side(&self) -> Direction {
        match self.which {
            Pinned::Initial => Direction::Forward,
            Pinned::Final => Direction::Reverse,
        }
    }

    /// `±σ² ∇log q*` as a simulation drift, bilinear between nodes.
    fn score_drift(&self, sign: f64) -> DriftFn {
        let score = Arc::clone(&self.score);
        let s = sign * self.sigma2();
        Arc::new(move |x: &[f64], t: f64, out: &mut [f64]| {
            score.at_into(x, t, out);
            for o in out.iter_mut() {
                *o *= s;
            }
        })
    }

    /// Diffusion whose drift is the non-trivial one for this problem: the
    /// backward drift of Problem 1 or the forward drift of Problem 2.
    pub fn score_diffusion(&self) -> Result<DiffusionSpec> {
        let d = self.density.grid.dim();
        let sigma = self.sigma2().sqrt();
        match self.which {
            Pinned::Initial => DiffusionSpec::new(d, self.score_drift(-1.0), sigma, Direction::Reverse, self.horizon()),
            Pinned::Final => DiffusionSpec::new(d, self.score_drift(1.0), sigma, Direction::Forward, self.horizon()),
        }
    }

    /// The vanishing drift, as a diffusion on the same horizon.
    pub fn zero_diffusion(&self) -> Result<DiffusionSpec> {
        DiffusionSpec::zero_drift(self.density.grid.dim(), self.sigma2().sqrt(), self.zero_drift_side(), self.horizon())
    }
}

fn validate_marginal(rho: &[f64], grid: &SpatialGrid) -> Result<()> {
    if rho.len() != grid.len() {
        return Err(Error::DimensionMismatch { expected: grid.len(), got: rho.len() });
    }
    if let Some(v) = rho.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::Precondition(format!("marginal must be finite and non-negative, found {v}")));
    }
    let mass = grid.integrate(rho);
    if (mass - 1.0).abs() > 1e-3 {
        return Err(Error::Precondition(format!("marginal has mass {mass}, expected 1")));
    }
    Ok(())
}

/// Problem 1: `q₁*(·, t)` is the heat flow of `ρ₀`, i.e. the law of
/// `X(0) + σ W(t)` with `X(0) ∼ ρ₀`.
pub fn solve_problem1(rho0: &[f64], grid: &SpatialGrid, beta: f64, gamma: f64, steps: usize) -> Result<HalfBridgeSolution> {
    validate_marginal(rho0, grid)?;
    let density = solve_heat(rho0, grid, beta, gamma, steps)?;
    let score = Arc::new(score_field(&density));
    Ok(HalfBridgeSolution { which: Pinned::Initial, marginal: rho0.to_vec(), beta, density, score })
}

/// Problem 2: `q₂*(·, γ - s)` is the heat flow of `ρ₁` for duration `s`,
/// i.e. the law of `X(γ) + σ W̄(t)` with a backward Wiener process.
pub fn solve_problem2(rho1: &[f64], grid: &SpatialGrid, beta: f64, gamma: f64, steps: usize) -> Result<HalfBridgeSolution> {
    validate_marginal(rho1, grid)?;
    let density = solve_heat(rho1, grid, beta, gamma, steps)?.time_reversed();
    let score = Arc::new(score_field(&density));
    Ok(HalfBridgeSolution { which: Pinned::Final, marginal: rho1.to_vec(), beta, density, score })
}

/// Backward drift of Problem 1, `-σ² ∇log q₁*(x, t)`.
pub fn backward_drift_q1(sol: &HalfBridgeSolution, x: &[f64], t: f64) -> Result<Vec<f64>> {
    if sol.which != Pinned::Initial {
        return Err(Error::Precondition("backward drift of Problem 1 needs an initial-pinned solution".into()));
    }
    if t <= 0.0 {
        return Err(Error::Precondition(format!("t must be positive, got {t}")));
    }
    let g = sol.score.checked_at(x, t)?;
    Ok(g.iter().map(|v| -sol.sigma2() * v).collect())
}

/// Forward drift of Problem 2, `σ² ∇log q₂*(x, t)`.
pub fn forward_drift_q2(sol: &HalfBridgeSolution, x: &[f64], t: f64) -> Result<Vec<f64>> {
    if sol.which != Pinned::Final {
        return Err(Error::Precondition("forward drift of Problem 2 needs a final-pinned solution".into()));
    }
    let g = sol.score.checked_at(x, t)?;
    Ok(g.iter().map(|v| sol.sigma2() * v).collect())
}

/// Grid points per axis used for the bridge PDE.
pub fn default_bridge_points(dim: usize) -> usize {
    if dim == 1 {
        1601
    } else {
        161
    }
}

/// Gibbs box widened by `4√(γ/β)` (rounded up to a half unit) so the heat
/// flow stays clear of the walls.
pub fn bridge_domain(gibbs: &GibbsDensity, gamma: f64) -> DomainBox {
    let spread = 4.0 * (gamma / gibbs.beta()).sqrt();
    gibbs.domain().extended((2.0 * spread).ceil() / 2.0)
}

pub fn bridge_grid(gibbs: &GibbsDensity, gamma: f64, npts: usize) -> Result<SpatialGrid> {
    SpatialGrid::over(&bridge_domain(gibbs, gamma), npts)
}

/// `ρ̄` sampled on `grid` and renormalised by the trapezoid rule.
pub fn gibbs_on_grid(gibbs: &GibbsDensity, grid: &SpatialGrid) -> Vec<f64> {
    let inside = gibbs.domain().clone();
    let boxed = gibbs.landscape().is_box_indicator();
    let mut rho = grid.sample(|x| if boxed && !inside.contains(x) { 0.0 } else { gibbs.density(x) });
    let mass = grid.integrate(&rho);
    for r in rho.iter_mut() {
        *r /= mass;
    }
    rho
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GibbsSampleReport {
    pub dim: usize,
    /// Samples at `t = 0`, flattened row-major.
    pub samples: Vec<f64>,
    /// The draws from `q₁*(·, γ)` the reverse paths started from.
    pub starts: Vec<f64>,
    /// Per-axis W1 distance between sample marginals and `ρ̄`.
    pub w1: Vec<f64>,
}

impl GibbsSampleReport {
    pub fn max_w1(&self) -> f64 {
        self.w1.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingOptions {
    /// Reverse Euler–Maruyama steps.
    pub steps: usize,
    pub paths: usize,
    pub seed: u64,
    pub grid_points: Option<usize>,
    /// Crank–Nicolson steps for `q₁*`; defaults to `steps`.
    pub pde_steps: Option<usize>,
}

/// Draws `X_γ ∼ q₁*(·, γ)` and integrates the backward representation of
/// Problem 1 down to `t = 0`. The samples follow `ρ̄`.
pub fn reverse_sample_gibbs(landscape: &EnergyLandscape, beta: f64, gamma: f64, opts: &SamplingOptions) -> Result<GibbsSampleReport> {
    check_positive("gamma", gamma)?;
    let d = landscape.dim();
    if d > 2 {
        return Err(Error::InvalidParameter(format!("reverse sampling needs a 1-D or 2-D landscape, got {d}")));
    }
    let gibbs = GibbsDensity::new(landscape.clone(), beta)?;
    let grid = bridge_grid(&gibbs, gamma, opts.grid_points.unwrap_or_else(|| default_bridge_points(d)))?;
    let rho0 = gibbs_on_grid(&gibbs, &grid);
    let sol = solve_problem1(&rho0, &grid, beta, gamma, opts.pde_steps.unwrap_or(opts.steps).max(1))?;
    let terminal = GridSampler::new(&grid, sol.density.values.last().expect("non-empty stack"))?;
    let spec = sol.score_diffusion()?.with_guard(10.0 * gibbs.domain().radius());
    let ens = simulate_reverse(&spec, &terminal, &SimulationPlan::new(opts.steps, opts.paths, opts.seed).endpoints())?;
    let k = ens.steps();
    let mut samples = Vec::with_capacity(opts.paths * d);
    let mut starts = Vec::with_capacity(opts.paths * d);
    for p in 0..ens.paths {
        samples.extend_from_slice(ens.state(p, 0));
        starts.extend_from_slice(ens.state(p, ens.slot(k).expect("endpoint recorded")));
    }
    let w1 = (0..d)
        .map(|a| {
            let cdf = GridCdf::marginal(&grid, &rho0, a)?;
            let xs: Vec<f64> = samples.iter().skip(a).step_by(d).copied().collect();
            Ok(w1_to_cdf(&xs, &cdf))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(GibbsSampleReport { dim: d, samples, starts, w1 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginalCheck {
    pub time: f64,
    pub w1: f64,
}

/// Simulates the zero-drift side of a 1-D solution (forward from `ρ₀` for
/// Problem 1, backward from `ρ₁` for Problem 2) and reports the W1 distance
/// between the path marginals and `q*` at each requested step.
pub fn marginal_agreement(sol: &HalfBridgeSolution, steps: usize, paths: usize, seed: u64, check: &[usize]) -> Result<Vec<MarginalCheck>> {
    let grid = &sol.density.grid;
    if grid.dim() != 1 {
        return Err(Error::InvalidParameter("marginal agreement is implemented for 1-D solutions".into()));
    }
    let start = GridSampler::new(grid, &sol.marginal)?;
    let spec = sol.zero_diffusion()?;
    let plan = SimulationPlan::new(steps, paths, seed).recording(check.to_vec());
    let ens = match sol.which {
        Pinned::Initial => simulate_forward(&spec, &start, &plan)?,
        Pinned::Final => simulate_reverse(&spec, &start, &plan)?,
    };
    check
        .iter()
        .map(|&k| {
            let t = ens.times[k];
            let cdf = GridCdf::marginal(grid, &crate::sde::slice_at(&sol.density, t), 0)?;
            Ok(MarginalCheck { time: t, w1: w1_to_cdf(&ens.marginal(k, 0)?, &cdf) })
        })
        .collect()
}
