//! Euler–Maruyama simulation of forward and reverse-time diffusions,
//! conditional-increment drift estimates and Girsanov relative entropies.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::landscape::EnergyLandscape;
use crate::pde::{locate_time, score_field, DensityStack};
use crate::rng::path_rng;
use crate::stats::{ks_pvalue, ks_statistic, mean_se, GridCdf, GridSampler, MeanSe};

/// Drift `b(x, t)` written into the output slice.
pub type DriftFn = Arc<dyn Fn(&[f64], f64, &mut [f64]) + Send + Sync>;

/// Largest number of stored `f64` values an ensemble may hold.
pub const MAX_RECORDED_VALUES: usize = 1 << 28;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Reverse,
}

/// `dX = b dt + σ dW` on `[0, T]`. For a reverse spec `b` is the backward
/// drift and integration runs from `T` down to 0.
#[derive(Clone)]
pub struct DiffusionSpec {
    dim: usize,
    drift: DriftFn,
    sigma: f64,
    direction: Direction,
    horizon: f64,
    guard: f64,
}

impl fmt::Debug for DiffusionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DiffusionSpec")
            .field("dim", &self.dim)
            .field("sigma", &self.sigma)
            .field("direction", &self.direction)
            .field("horizon", &self.horizon)
            .field("guard", &self.guard)
            .finish_non_exhaustive()
    }
}

impl DiffusionSpec {
    pub fn new(dim: usize, drift: DriftFn, sigma: f64, direction: Direction, horizon: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidParameter(format!("horizon must be positive, got {horizon}")));
        }
        Ok(Self { dim, drift, sigma, direction, horizon, guard: f64::INFINITY })
    }

    pub fn zero_drift(dim: usize, sigma: f64, direction: Direction, horizon: f64) -> Result<Self> {
        Self::new(dim, Arc::new(|_, _, out: &mut [f64]| out.fill(0.0)), sigma, direction, horizon)
    }

    pub fn constant_drift(theta: Vec<f64>, sigma: f64, direction: Direction, horizon: f64) -> Result<Self> {
        let dim = theta.len();
        Self::new(dim, Arc::new(move |_, _, out: &mut [f64]| out.copy_from_slice(&theta)), sigma, direction, horizon)
    }

    /// Linear drift `-k x`.
    pub fn ornstein_uhlenbeck(dim: usize, k: f64, sigma: f64, horizon: f64) -> Result<Self> {
        let drift: DriftFn = Arc::new(move |x: &[f64], _, out: &mut [f64]| {
            for (o, xi) in out.iter_mut().zip(x) {
                *o = -k * xi;
            }
        });
        Self::new(dim, drift, sigma, Direction::Forward, horizon)
    }

    /// Langevin diffusion `dX = -∇f dt + √(2/β) dW`, whose invariant law is
    /// the Gibbs density at `β`. Guard radius is ten times the Gibbs box.
    pub fn langevin(landscape: &EnergyLandscape, beta: f64, horizon: f64) -> Result<Self> {
        let l = landscape.clone();
        let drift: DriftFn = Arc::new(move |x: &[f64], _, out: &mut [f64]| {
            l.gradient_into(x, out);
            for o in out.iter_mut() {
                *o = -*o;
            }
        });
        let guard = 10.0 * landscape.domain_box(beta).radius();
        Ok(Self::new(landscape.dim(), drift, (2.0 / beta).sqrt(), Direction::Forward, horizon)?.with_guard(guard))
    }

    /// Paths whose norm exceeds `radius` are counted as exploded.
    pub fn with_guard(mut self, radius: f64) -> Self {
        self.guard = radius;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn guard(&self) -> f64 {
        self.guard
    }

    pub fn drift_into(&self, x: &[f64], t: f64, out: &mut [f64]) {
        (self.drift)(x, t, out)
    }

    pub fn drift_fn(&self) -> &DriftFn {
        &self.drift
    }
}

/// Source of initial (or final) states.
pub trait Sampler: Send + Sync {
    fn dim(&self) -> usize;
    fn sample(&self, rng: &mut ChaCha8Rng, out: &mut [f64]);
}

#[derive(Debug, Clone)]
pub struct PointMass(pub Vec<f64>);

impl Sampler for PointMass {
    fn dim(&self) -> usize {
        self.0.len()
    }

    fn sample(&self, _rng: &mut ChaCha8Rng, out: &mut [f64]) {
        out.copy_from_slice(&self.0);
    }
}

/// Isotropic Gaussian `N(mean, var·I)`.
#[derive(Debug, Clone)]
pub struct GaussianSampler {
    pub mean: Vec<f64>,
    pub var: f64,
}

impl Sampler for GaussianSampler {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn sample(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        let s = self.var.sqrt();
        for (o, m) in out.iter_mut().zip(&self.mean) {
            let z: f64 = rng.sample(StandardNormal);
            *o = m + s * z;
        }
    }
}

impl Sampler for GridSampler {
    fn dim(&self) -> usize {
        GridSampler::dim(self)
    }

    fn sample(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        GridSampler::sample(self, rng, out)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Record {
    All,
    /// Chronological step indices in `0..=K`.
    Steps(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimulationPlan {
    pub steps: usize,
    pub paths: usize,
    pub seed: u64,
    pub record: Record,
}

impl SimulationPlan {
    pub fn new(steps: usize, paths: usize, seed: u64) -> Self {
        Self { steps, paths, seed, record: Record::All }
    }

    pub fn recording(mut self, steps: Vec<usize>) -> Self {
        self.record = Record::Steps(steps);
        self
    }

    /// Record only the state at `t = 0` and `t = T`.
    pub fn endpoints(self) -> Self {
        let k = self.steps;
        self.recording(vec![0, k])
    }
}

/// Simulated paths, stored path-major: `values[(p * recorded + r) * dim + c]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathEnsemble {
    /// All `K + 1` time points.
    pub times: Vec<f64>,
    /// Recorded step indices, increasing.
    pub recorded: Vec<usize>,
    pub dt: f64,
    pub dim: usize,
    pub paths: usize,
    pub sigma: f64,
    pub direction: Direction,
    pub seed: u64,
    pub values: Vec<f64>,
    /// Per-path `Σ_k ‖b(x_k, t_k)‖² Δt`.
    pub energy: Vec<f64>,
}

impl PathEnsemble {
    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn is_complete(&self) -> bool {
        self.recorded.len() == self.times.len()
    }

    /// Position of step `k` among the recorded slices.
    pub fn slot(&self, k: usize) -> Option<usize> {
        self.recorded.binary_search(&k).ok()
    }

    pub fn state(&self, path: usize, slot: usize) -> &[f64] {
        let r = self.recorded.len();
        let o = (path * r + slot) * self.dim;
        &self.values[o..o + self.dim]
    }

    /// Component `c` of every path at step `k`.
    pub fn marginal(&self, k: usize, c: usize) -> Result<Vec<f64>> {
        let slot = self.slot(k).ok_or_else(|| Error::Precondition(format!("step {k} was not recorded")))?;
        Ok((0..self.paths).map(|p| self.state(p, slot)[c]).collect())
    }

    pub fn energy_mean(&self) -> MeanSe {
        mean_se(&self.energy)
    }
}

fn record_slots(plan: &SimulationPlan) -> Result<Vec<usize>> {
    let k = plan.steps;
    let slots: Vec<usize> = match &plan.record {
        Record::All => (0..=k).collect(),
        Record::Steps(s) => {
            let mut s = s.clone();
            s.sort_unstable();
            s.dedup();
            if s.last().is_some_and(|&v| v > k) {
                return Err(Error::InvalidParameter(format!("recorded step beyond K = {k}")));
            }
            s
        }
    };
    Ok(slots)
}

fn simulate(spec: &DiffusionSpec, start: &dyn Sampler, plan: &SimulationPlan, direction: Direction) -> Result<PathEnsemble> {
    if spec.direction != direction {
        return Err(Error::Precondition(format!("spec direction is {:?}", spec.direction)));
    }
    if start.dim() != spec.dim {
        return Err(Error::DimensionMismatch { expected: spec.dim, got: start.dim() });
    }
    if plan.steps == 0 || plan.paths == 0 {
        return Err(Error::InvalidParameter("steps and paths must be positive".into()));
    }
    let slots = record_slots(plan)?;
    let d = spec.dim;
    let width = slots.len() * d;
    if width.saturating_mul(plan.paths) > MAX_RECORDED_VALUES {
        return Err(Error::InvalidParameter(format!(
            "{} paths x {} slices exceed the recording limit",
            plan.paths,
            slots.len()
        )));
    }
    let k_total = plan.steps;
    let dt = spec.horizon / k_total as f64;
    let times: Vec<f64> = (0..=k_total).map(|k| spec.horizon * k as f64 / k_total as f64).collect();
    let sqdt = dt.sqrt();
    let mut values = vec![f64::NAN; width * plan.paths];
    let mut energy = vec![0.0; plan.paths];
    let mut exploded = vec![false; plan.paths];

    values
        .par_chunks_mut(width)
        .zip(energy.par_iter_mut())
        .zip(exploded.par_iter_mut())
        .enumerate()
        .for_each(|(p, ((out, e), boom))| {
            let mut rng = path_rng(plan.seed, p as u64);
            let mut x = vec![0.0; d];
            let mut b = vec![0.0; d];
            start.sample(&mut rng, &mut x);
            let store = |k: usize, x: &[f64], out: &mut [f64]| {
                if let Ok(r) = slots.binary_search(&k) {
                    out[r * d..(r + 1) * d].copy_from_slice(x);
                }
            };
            let (first, sign) = match direction {
                Direction::Forward => (0, 1.0),
                Direction::Reverse => (k_total, -1.0),
            };
            store(first, &x, out);
            let mut acc = 0.0;
            for i in 0..k_total {
                let k = match direction {
                    Direction::Forward => i,
                    Direction::Reverse => k_total - i,
                };
                spec.drift_into(&x, times[k], &mut b);
                let mut norm2 = 0.0;
                for c in 0..d {
                    acc += b[c] * b[c] * dt;
                    let z: f64 = rng.sample(StandardNormal);
                    x[c] += sign * b[c] * dt + spec.sigma * sqdt * z;
                    norm2 += x[c] * x[c];
                }
                if !(norm2.sqrt() <= spec.guard) {
                    *boom = true;
                    break;
                }
                let next = match direction {
                    Direction::Forward => k + 1,
                    Direction::Reverse => k - 1,
                };
                store(next, &x, out);
            }
            *e = acc;
        });

    let n_exploded = exploded.iter().filter(|b| **b).count();
    if n_exploded > 0 {
        return Err(Error::Explosion { exploded: n_exploded, total: plan.paths });
    }
    Ok(PathEnsemble {
        times,
        recorded: slots,
        dt,
        dim: d,
        paths: plan.paths,
        sigma: spec.sigma,
        direction,
        seed: plan.seed,
        values,
        energy,
    })
}

/// Euler–Maruyama from `t = 0`: `x_{k+1} = x_k + b(x_k, t_k)Δt + σ√Δt ξ`.
/// Path `p` draws from its own stream, so results do not depend on the
/// worker count.
pub fn simulate_forward(spec: &DiffusionSpec, init: &dyn Sampler, plan: &SimulationPlan) -> Result<PathEnsemble> {
    simulate(spec, init, plan, Direction::Forward)
}

/// Reverse-time Euler–Maruyama from `t = T`:
/// `x_{k-1} = x_k - b(x_k, t_k)Δt + σ√Δt ξ`.
pub fn simulate_reverse(spec: &DiffusionSpec, terminal: &dyn Sampler, plan: &SimulationPlan) -> Result<PathEnsemble> {
    simulate(spec, terminal, plan, Direction::Reverse)
}

/// Backward Wiener process on `times` pinned at `W̄(T) = 0`, built from
/// independent increments running from `T` down to 0.
pub fn backward_wiener<R: Rng + ?Sized>(times: &[f64], dim: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let n = times.len();
    let mut w = vec![vec![0.0; dim]; n];
    for k in (1..n).rev() {
        let s = (times[k] - times[k - 1]).sqrt();
        for c in 0..dim {
            let z: f64 = rng.sample(StandardNormal);
            w[k - 1][c] = w[k][c] + s * z;
        }
    }
    w
}

/// Equal-width bins on `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinSpec {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

/// Minimum occupancy for a bin to be reported.
pub const MIN_BIN_COUNT: usize = 50;
pub const DEFAULT_BINS: usize = 64;

impl BinSpec {
    /// `DEFAULT_BINS` bins spanning the central 99% of `samples`.
    pub fn bulk(samples: &[f64]) -> Self {
        let mut s = samples.to_vec();
        s.sort_by(|a, b| a.partial_cmp(b).expect("finite samples"));
        let q = |p: f64| s[((s.len() - 1) as f64 * p).round() as usize];
        Self { lo: q(0.005), hi: q(0.995), count: DEFAULT_BINS }
    }

    fn index(&self, x: f64) -> Option<usize> {
        if !(x >= self.lo && x < self.hi) {
            return None;
        }
        Some((((x - self.lo) / (self.hi - self.lo)) * self.count as f64) as usize).map(|i| i.min(self.count - 1))
    }

    fn center(&self, i: usize) -> f64 {
        self.lo + (i as f64 + 0.5) * (self.hi - self.lo) / self.count as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftBin {
    pub center: f64,
    pub count: usize,
    pub forward: f64,
    pub forward_se: f64,
    pub backward: f64,
    pub backward_se: f64,
    /// Standard error of `forward - backward` from per-path differences.
    pub difference_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftEstimate {
    pub time: f64,
    pub step: usize,
    pub bins: Vec<DriftBin>,
}

/// Conditional-increment estimates of the forward and backward drifts at
/// step `k` of a 1-D ensemble, with `Δ` equal to one time step.
pub fn estimate_drifts(ens: &PathEnsemble, k: usize, bins: &BinSpec) -> Result<DriftEstimate> {
    if ens.dim != 1 {
        return Err(Error::InvalidParameter("drift estimation is implemented for 1-D ensembles".into()));
    }
    if k == 0 || k >= ens.steps() {
        return Err(Error::Precondition(format!("slice {k} must be interior to 0..{}", ens.steps())));
    }
    let prev = ens.marginal(k - 1, 0)?;
    let now = ens.marginal(k, 0)?;
    let next = ens.marginal(k + 1, 0)?;
    let dt = ens.dt;
    let mut fwd: Vec<Vec<f64>> = vec![Vec::new(); bins.count];
    let mut bwd: Vec<Vec<f64>> = vec![Vec::new(); bins.count];
    let mut diff: Vec<Vec<f64>> = vec![Vec::new(); bins.count];
    for p in 0..ens.paths {
        if let Some(i) = bins.index(now[p]) {
            let f = (next[p] - now[p]) / dt;
            let b = (now[p] - prev[p]) / dt;
            fwd[i].push(f);
            bwd[i].push(b);
            diff[i].push(f - b);
        }
    }
    let out = (0..bins.count)
        .filter(|&i| fwd[i].len() >= MIN_BIN_COUNT)
        .map(|i| {
            let f = mean_se(&fwd[i]);
            let b = mean_se(&bwd[i]);
            DriftBin {
                center: bins.center(i),
                count: fwd[i].len(),
                forward: f.mean,
                forward_se: f.std_error,
                backward: b.mean,
                backward_se: b.std_error,
                difference_se: mean_se(&diff[i]).std_error,
            }
        })
        .collect();
    Ok(DriftEstimate { time: ens.times[k], step: k, bins: out })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualityBin {
    pub center: f64,
    pub count: usize,
    pub residual: f64,
    pub std_error: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualityReport {
    pub time: f64,
    pub ks_pvalue: f64,
    pub bins: Vec<DualityBin>,
    /// Count-weighted root-mean-square residual.
    pub weighted_l2: f64,
    pub pass_fraction: f64,
}

/// Density slice of `rho` at time `t`, linear between stored slices.
pub(crate) fn slice_at(rho: &DensityStack, t: f64) -> Vec<f64> {
    let (k, s) = locate_time(&rho.times, t);
    if s == 0.0 || rho.times.len() == 1 {
        return rho.values[k].clone();
    }
    rho.values[k].iter().zip(&rho.values[k + 1]).map(|(a, b)| a + s * (b - a)).collect()
}

/// Compares `b̂₊ - b̂₋` with `σ² ∇log ρ` per bin at step `k`. The ensemble
/// marginal must be consistent with `rho` (KS p-value above 0.01).
pub fn check_duality(ens: &PathEnsemble, rho: &DensityStack, k: usize, bins: &BinSpec) -> Result<DualityReport> {
    if rho.grid.dim() != 1 || ens.dim != 1 {
        return Err(Error::InvalidParameter("duality check is implemented for 1-D ensembles".into()));
    }
    let t = ens.times[k];
    let xs = ens.marginal(k, 0)?;
    let cdf = GridCdf::marginal(&rho.grid, &slice_at(rho, t), 0)?;
    let p = ks_pvalue(ks_statistic(&xs, |x| cdf.eval(x)), xs.len());
    if p <= 0.01 {
        return Err(Error::Precondition(format!("ensemble marginal at t = {t} is inconsistent with rho (KS p = {p:.3e})")));
    }
    let est = estimate_drifts(ens, k, bins)?;
    let score = score_field(rho);
    let s2 = ens.sigma * ens.sigma;
    let mut out = Vec::with_capacity(est.bins.len());
    for b in &est.bins {
        let g = score.checked_at(&[b.center], t)?;
        let residual = (b.forward - b.backward) - s2 * g[0];
        out.push(DualityBin {
            center: b.center,
            count: b.count,
            residual,
            std_error: b.difference_se,
            pass: residual.abs() <= 3.0 * b.difference_se,
        });
    }
    let total: usize = out.iter().map(|b| b.count).sum();
    let weighted_l2 = (out.iter().map(|b| b.count as f64 * b.residual * b.residual).sum::<f64>() / total.max(1) as f64).sqrt();
    let pass_fraction = out.iter().filter(|b| b.pass).count() as f64 / out.len().max(1) as f64;
    Ok(DualityReport { time: t, ks_pvalue: p, bins: out, weighted_l2, pass_fraction })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyEstimate {
    pub value: f64,
    pub std_error: f64,
    pub paths: usize,
}

fn drift_mismatch(ens: &PathEnsemble, q: &DiffusionSpec, p: &DiffusionSpec, marginal: f64) -> Result<EntropyEstimate> {
    if !ens.is_complete() {
        return Err(Error::Precondition("relative entropy needs fully recorded paths".into()));
    }
    for s in [q, p] {
        if (s.sigma - ens.sigma).abs() > 1e-12 * ens.sigma {
            return Err(Error::InvalidParameter(format!("sigma {} differs from the ensemble's {}", s.sigma, ens.sigma)));
        }
        if s.dim != ens.dim {
            return Err(Error::DimensionMismatch { expected: ens.dim, got: s.dim });
        }
    }
    let n_t = ens.times.len();
    let d = ens.dim;
    let scale = 0.5 / (ens.sigma * ens.sigma);
    let per_path: Vec<f64> = (0..ens.paths)
        .into_par_iter()
        .map(|path| {
            let mut bq = vec![0.0; d];
            let mut bp = vec![0.0; d];
            let mut acc = 0.0;
            for k in 0..n_t {
                let x = ens.state(path, k);
                q.drift_into(x, ens.times[k], &mut bq);
                p.drift_into(x, ens.times[k], &mut bp);
                let m: f64 = bq.iter().zip(&bp).map(|(a, b)| (a - b) * (a - b)).sum();
                let w = if k == 0 || k + 1 == n_t { 0.5 } else { 1.0 };
                acc += w * m;
            }
            scale * acc * ens.dt
        })
        .collect();
    let m = mean_se(&per_path);
    Ok(EntropyEstimate { value: marginal + m.mean, std_error: m.std_error, paths: ens.paths })
}

/// `H(Q, P) = h0 + E_Q ∫ ‖b₊^Q - b₊^P‖² / (2σ²) dt` with `h0 = H(q₀, p₀)`.
pub fn relative_entropy_forward(ens: &PathEnsemble, q: &DiffusionSpec, p: &DiffusionSpec, h0: f64) -> Result<EntropyEstimate> {
    if q.direction != Direction::Forward || p.direction != Direction::Forward {
        return Err(Error::InvalidParameter("forward estimator takes forward drifts".into()));
    }
    drift_mismatch(ens, q, p, h0)
}

/// `H(Q, P) = h1 + E_Q ∫ ‖b₋^Q - b₋^P‖² / (2σ²) dt` with `h1 = H(q₁, p₁)`.
pub fn relative_entropy_backward(ens: &PathEnsemble, q: &DiffusionSpec, p: &DiffusionSpec, h1: f64) -> Result<EntropyEstimate> {
    if q.direction != Direction::Reverse || p.direction != Direction::Reverse {
        return Err(Error::InvalidParameter("backward estimator takes backward drifts".into()));
    }
    drift_mismatch(ens, q, p, h1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pde::{solve_heat, SpatialGrid};
    use crate::stats::variance_se;

    fn gaussian(var: f64) -> GaussianSampler {
        GaussianSampler { mean: vec![0.0], var }
    }

    fn within(est: MeanSe, target: f64) -> bool {
        (est.mean - target).abs() <= 3.0 * est.std_error
    }

    #[test]
    fn brownian_variance() {
        let spec = DiffusionSpec::zero_drift(1, 1.0, Direction::Forward, 1.0).unwrap();
        let ens = simulate_forward(&spec, &PointMass(vec![0.0]), &SimulationPlan::new(20, 100_000, 1).endpoints()).unwrap();
        assert!(within(variance_se(&ens.marginal(20, 0).unwrap()), 1.0));
        assert_eq!(ens.energy_mean().mean, 0.0);
    }

    #[test]
    fn ou_stationarity() {
        let spec = DiffusionSpec::ornstein_uhlenbeck(1, 1.0, 2f64.sqrt(), 1.0).unwrap();
        let ens = simulate_forward(&spec, &gaussian(1.0), &SimulationPlan::new(100, 100_000, 2).endpoints()).unwrap();
        let xs = ens.marginal(100, 0).unwrap();
        assert!(within(mean_se(&xs), 0.0));
        // Euler inflates the stationary variance by a factor 1/(1 - Δt/2)
        let v = variance_se(&xs);
        assert!(within(v, 1.0) || (v.mean - 1.0 / (1.0 - 0.005)).abs() <= 3.0 * v.std_error);
        let x0 = ens.marginal(0, 0).unwrap();
        assert!(ks_pvalue(ks_statistic(&x0, crate::stats::normal_cdf), x0.len()) > 0.01);
        assert!(ens.energy_mean().mean.is_finite());
    }

    #[test]
    fn deterministic_and_thread_independent() {
        let spec = DiffusionSpec::ornstein_uhlenbeck(2, 0.5, 1.0, 1.0).unwrap();
        let plan = SimulationPlan::new(50, 500, 9);
        let init = GaussianSampler { mean: vec![0.0, 1.0], var: 0.5 };
        let a = simulate_forward(&spec, &init, &plan).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| simulate_forward(&spec, &init, &plan).unwrap());
        assert_eq!(a.values, b.values);
        assert_eq!(a.energy, b.energy);
    }

    #[test]
    fn reverse_zero_drift_spreads_terminal_law() {
        let spec = DiffusionSpec::zero_drift(1, 1.0, Direction::Reverse, 1.0).unwrap();
        let ens = simulate_reverse(&spec, &gaussian(1.0), &SimulationPlan::new(40, 100_000, 3).recording(vec![0, 20, 40])).unwrap();
        // time-s marginal has variance 1 + (T - s)
        assert!(within(variance_se(&ens.marginal(20, 0).unwrap()), 1.5));
        assert!(within(variance_se(&ens.marginal(0, 0).unwrap()), 2.0));
    }

    #[test]
    fn reverse_score_flow_recovers_unit_gaussian() {
        let drift: DriftFn = Arc::new(|x: &[f64], t: f64, out: &mut [f64]| out[0] = x[0] / (1.0 + t));
        let spec = DiffusionSpec::new(1, drift, 1.0, Direction::Reverse, 1.0).unwrap();
        let ens = simulate_reverse(&spec, &gaussian(2.0), &SimulationPlan::new(200, 100_000, 4).endpoints()).unwrap();
        assert!(within(variance_se(&ens.marginal(0, 0).unwrap()), 1.0));
    }

    #[test]
    fn reverse_zero_drift_is_pinned_backward_wiener() {
        let spec = DiffusionSpec::zero_drift(1, 0.7, Direction::Reverse, 2.0).unwrap();
        let ens = simulate_reverse(&spec, &PointMass(vec![0.3]), &SimulationPlan::new(16, 3, 5)).unwrap();
        for p in 0..3 {
            let mut rng = path_rng(5, p as u64);
            let w = backward_wiener(&ens.times, 1, &mut rng);
            for k in 0..=16 {
                let expect = 0.3 + 0.7 * w[k][0];
                assert!((ens.state(p, k)[0] - expect).abs() < 1e-12);
            }
            assert_eq!(w[16][0], 0.0);
        }
    }

    #[test]
    fn small_noise_limit_matches_euler_ode() {
        let drift: DriftFn = Arc::new(|x: &[f64], _, out: &mut [f64]| out[0] = x[0].sin());
        let spec = DiffusionSpec::new(1, drift, 1e-9, Direction::Reverse, 1.0).unwrap();
        let ens = simulate_reverse(&spec, &PointMass(vec![1.0]), &SimulationPlan::new(100, 1, 6)).unwrap();
        let mut x = 1.0f64;
        for _ in 0..100 {
            x -= x.sin() * 0.01;
        }
        assert!((ens.state(0, 0)[0] - x).abs() < 1e-6);
    }

    #[test]
    fn explosion_is_reported() {
        let drift: DriftFn = Arc::new(|x: &[f64], _, out: &mut [f64]| out[0] = 5.0 * x[0]);
        let spec = DiffusionSpec::new(1, drift, 1.0, Direction::Forward, 5.0).unwrap().with_guard(10.0);
        let err = simulate_forward(&spec, &PointMass(vec![1.0]), &SimulationPlan::new(100, 10, 0).endpoints()).unwrap_err();
        assert!(matches!(err, Error::Explosion { exploded: 10, total: 10 }));
    }

    #[test]
    fn wrong_direction_rejected() {
        let spec = DiffusionSpec::zero_drift(1, 1.0, Direction::Reverse, 1.0).unwrap();
        assert!(simulate_forward(&spec, &PointMass(vec![0.0]), &SimulationPlan::new(2, 2, 0)).is_err());
    }

    #[test]
    fn drift_estimates_for_brownian_and_ou() {
        let spec = DiffusionSpec::zero_drift(1, 1.0, Direction::Forward, 1.0).unwrap();
        let ens = simulate_forward(&spec, &gaussian(1.0), &SimulationPlan::new(100, 100_000, 7).recording(vec![49, 50, 51])).unwrap();
        let bins = BinSpec::bulk(&ens.marginal(50, 0).unwrap());
        let est = estimate_drifts(&ens, 50, &bins).unwrap();
        let t = est.time;
        let ok_f = est.bins.iter().filter(|b| b.forward.abs() <= 3.0 * b.forward_se).count();
        let ok_b = est.bins.iter().filter(|b| (b.backward - b.center / (1.0 + t)).abs() <= 3.0 * b.backward_se).count();
        assert!(ok_f as f64 >= 0.9 * est.bins.len() as f64);
        assert!(ok_b as f64 >= 0.9 * est.bins.len() as f64);
        assert!(est.bins.iter().all(|b| b.count >= MIN_BIN_COUNT));

        let ou = DiffusionSpec::ornstein_uhlenbeck(1, 1.0, 2f64.sqrt(), 1.0).unwrap();
        let ens = simulate_forward(&ou, &gaussian(1.0), &SimulationPlan::new(100, 100_000, 8).recording(vec![49, 50, 51])).unwrap();
        let est = estimate_drifts(&ens, 50, &BinSpec::bulk(&ens.marginal(50, 0).unwrap())).unwrap();
        let ok = est.bins.iter().filter(|b| (b.forward + b.center).abs() <= 3.0 * b.forward_se).count();
        assert!(ok as f64 >= 0.9 * est.bins.len() as f64);
    }

    #[test]
    fn duality_precondition_rejects_wrong_density() {
        let spec = DiffusionSpec::zero_drift(1, 1.0, Direction::Forward, 1.0).unwrap();
        let ens = simulate_forward(&spec, &gaussian(1.0), &SimulationPlan::new(10, 20_000, 9).recording(vec![4, 5, 6])).unwrap();
        let grid = SpatialGrid::line(-8.0, 8.0, 801).unwrap();
        let rho0 = grid.sample(|x| (-x[0] * x[0] / 8.0).exp() / (8.0 * std::f64::consts::PI).sqrt());
        let rho = solve_heat(&rho0, &grid, 1.0, 1.0, 10).unwrap();
        let err = check_duality(&ens, &rho, 5, &BinSpec::bulk(&ens.marginal(5, 0).unwrap())).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }

    #[test]
    fn relative_entropy_identities() {
        let q = DiffusionSpec::constant_drift(vec![0.8], 0.5, Direction::Forward, 2.0).unwrap();
        let p = DiffusionSpec::zero_drift(1, 0.5, Direction::Forward, 2.0).unwrap();
        let ens = simulate_forward(&q, &gaussian(1.0), &SimulationPlan::new(50, 2000, 10)).unwrap();
        let same = relative_entropy_forward(&ens, &q, &q, 0.0).unwrap();
        assert_eq!(same.value, 0.0);
        let re = relative_entropy_forward(&ens, &q, &p, 0.0).unwrap();
        let exact = 0.8 * 0.8 * 2.0 / (2.0 * 0.25);
        assert!((re.value - exact).abs() <= 3.0 * re.std_error + 1e-12);
        let other = DiffusionSpec::zero_drift(1, 0.4, Direction::Forward, 2.0).unwrap();
        assert!(relative_entropy_forward(&ens, &q, &other, 0.0).is_err());
    }
}
