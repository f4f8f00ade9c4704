//! Plain and stochastic gradient descent, local-entropy descent with a
//! shrinking smoothing scale, and a census of grid minima.

use serde::{Deserialize, Serialize};

use crate::error::{check_positive, Error, Result};
use crate::landscape::{EnergyLandscape, GradientNoiseModel};
use crate::numerics::linspace;
use crate::rng::{stream, sub_seed, FAMILY_OPTIMIZER};
use crate::smoothing::{local_entropy, local_entropy_gradient, GradientMethod, HeatKernelParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Sgd,
    GradientDescent,
    LocalEntropy,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Sgd => "sgd",
            Method::GradientDescent => "gd",
            Method::LocalEntropy => "local-entropy",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerRun {
    pub method: Method,
    /// Iterates `x_0 … x_K`.
    pub xs: Vec<Vec<f64>>,
    /// `f(x_k)`.
    pub f: Vec<f64>,
    /// `u(x_k, γ_k)` for local-entropy runs in one or two dimensions.
    pub f_gamma: Option<Vec<f64>>,
    /// `γ_k` used for step `k` (local entropy only).
    pub gammas: Vec<f64>,
    pub eta: f64,
    pub seed: u64,
    /// Run stopped early because an iterate left the guard radius.
    pub diverged: bool,
}

impl OptimizerRun {
    pub fn last(&self) -> &[f64] {
        self.xs.last().expect("history holds x_0")
    }

    pub fn final_energy(&self) -> f64 {
        *self.f.last().expect("history holds f(x_0)")
    }
}

fn guard_radius(landscape: &EnergyLandscape) -> f64 {
    10.0 * landscape.domain_box(1.0).radius()
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn check_start(landscape: &EnergyLandscape, x0: &[f64]) -> Result<()> {
    if x0.len() != landscape.dim() {
        return Err(Error::DimensionMismatch { expected: landscape.dim(), got: x0.len() });
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("starting point".into()));
    }
    Ok(())
}

/// `x_{k+1} = x_k - η ∇f_{i_k}(x_k)` with mini-batch indices drawn uniformly.
pub fn sgd_run(model: &GradientNoiseModel, x0: &[f64], iters: usize, seed: u64) -> Result<OptimizerRun> {
    let l = model.landscape();
    check_start(l, x0)?;
    let eta = model.eta();
    let guard = guard_radius(l);
    let mut rng = stream(seed, FAMILY_OPTIMIZER, 0);
    let mut x = x0.to_vec();
    let mut g = vec![0.0; x.len()];
    let mut run = OptimizerRun {
        method: Method::Sgd,
        xs: vec![x.clone()],
        f: vec![l.energy(&x)],
        f_gamma: None,
        gammas: Vec::new(),
        eta,
        seed,
        diverged: false,
    };
    for _ in 0..iters {
        model.sample_gradient(&x, &mut rng, &mut g);
        for (xi, gi) in x.iter_mut().zip(&g) {
            *xi -= eta * gi;
        }
        if !(norm(&x) <= guard) {
            run.diverged = true;
            break;
        }
        run.f.push(l.energy(&x));
        run.xs.push(x.clone());
    }
    Ok(run)
}

/// Full-gradient descent `x_{k+1} = x_k - η ∇f(x_k)`.
pub fn gd_run(landscape: &EnergyLandscape, x0: &[f64], eta: f64, iters: usize) -> Result<OptimizerRun> {
    check_start(landscape, x0)?;
    let guard = guard_radius(landscape);
    let mut x = x0.to_vec();
    let mut g = vec![0.0; x.len()];
    let mut run = OptimizerRun {
        method: Method::GradientDescent,
        xs: vec![x.clone()],
        f: vec![landscape.energy(&x)],
        f_gamma: None,
        gammas: Vec::new(),
        eta,
        seed: 0,
        diverged: false,
    };
    for _ in 0..iters {
        landscape.gradient_into(&x, &mut g);
        for (xi, gi) in x.iter_mut().zip(&g) {
            *xi -= eta * gi;
        }
        if !(norm(&x) <= guard) {
            run.diverged = true;
            break;
        }
        run.f.push(landscape.energy(&x));
        run.xs.push(x.clone());
    }
    Ok(run)
}

/// Smoothing scale per iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GammaSchedule {
    Constant(f64),
    /// `γ_k = γ₀ rᵏ`.
    Geometric { gamma0: f64, rate: f64 },
    Explicit(Vec<f64>),
}

/// Default decay rate of the geometric schedule.
pub const DEFAULT_GAMMA_DECAY: f64 = 0.97;

impl GammaSchedule {
    pub fn geometric(gamma0: f64) -> Self {
        GammaSchedule::Geometric { gamma0, rate: DEFAULT_GAMMA_DECAY }
    }

    pub fn values(&self, iters: usize) -> Result<Vec<f64>> {
        let v: Vec<f64> = match self {
            GammaSchedule::Constant(g) => vec![*g; iters],
            GammaSchedule::Geometric { gamma0, rate } => {
                if !(*rate > 0.0 && *rate <= 1.0) {
                    return Err(Error::InvalidParameter(format!("decay rate must lie in (0, 1], got {rate}")));
                }
                (0..iters).map(|k| gamma0 * rate.powi(k as i32)).collect()
            }
            GammaSchedule::Explicit(v) => {
                if v.len() < iters {
                    return Err(Error::InvalidParameter(format!("schedule has {} values for {iters} iterations", v.len())));
                }
                v[..iters].to_vec()
            }
        };
        if let Some(g) = v.iter().find(|g| !(g.is_finite() && **g >= 0.0)) {
            return Err(Error::InvalidParameter(format!("smoothing scale must be non-negative, got {g}")));
        }
        if v.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::InvalidParameter("smoothing schedule must be nonincreasing".into()));
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalEntropyOptions {
    pub beta: f64,
    pub schedule: GammaSchedule,
    pub eta: f64,
    pub iters: usize,
    /// Inner Langevin steps when quadrature is unavailable (dimension > 2).
    pub inner_steps: usize,
    pub seed: u64,
}

/// `x_{k+1} = x_k - η ∇u(x_k, γ_k)`, with the gradient by quadrature in one
/// or two dimensions and by an inner Langevin chain otherwise.
pub fn local_entropy_run(landscape: &EnergyLandscape, x0: &[f64], opts: &LocalEntropyOptions) -> Result<OptimizerRun> {
    check_start(landscape, x0)?;
    check_positive("beta", opts.beta)?;
    let gammas = opts.schedule.values(opts.iters)?;
    let d = landscape.dim();
    let quadrature = d <= 2;
    let guard = guard_radius(landscape);
    let smoothed = |x: &[f64], g: f64| HeatKernelParams::new(g, opts.beta, d).and_then(|p| local_entropy(&p, landscape, x));
    let mut x = x0.to_vec();
    let mut f_gamma = Vec::with_capacity(opts.iters + 1);
    if quadrature {
        f_gamma.push(smoothed(&x, gammas.first().copied().unwrap_or(0.0)).map_err(|e| at(0, e))?);
    }
    let mut run = OptimizerRun {
        method: Method::LocalEntropy,
        xs: vec![x.clone()],
        f: vec![landscape.energy(&x)],
        f_gamma: None,
        gammas: gammas.clone(),
        eta: opts.eta,
        seed: opts.seed,
        diverged: false,
    };
    for (k, &g) in gammas.iter().enumerate() {
        let p = HeatKernelParams::new(g, opts.beta, d)?;
        let method = if quadrature {
            GradientMethod::Quadrature
        } else {
            GradientMethod::Langevin { steps: opts.inner_steps, seed: sub_seed(opts.seed, k as u64) }
        };
        let grad = local_entropy_gradient(&p, landscape, &x, method).map_err(|e| at(k, e))?;
        for (xi, gi) in x.iter_mut().zip(&grad.gradient) {
            *xi -= opts.eta * gi;
        }
        if !(norm(&x) <= guard) {
            run.diverged = true;
            break;
        }
        run.f.push(landscape.energy(&x));
        if quadrature {
            // f_γ at the new iterate, under the scale of the step that produced it
            f_gamma.push(smoothed(&x, g).map_err(|e| at(k + 1, e))?);
        }
        run.xs.push(x.clone());
    }
    if quadrature {
        run.f_gamma = Some(f_gamma);
    }
    Ok(run)
}

fn at(index: usize, e: Error) -> Error {
    Error::Iterate { index, source: Box::new(e) }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Minimum {
    pub location: f64,
    pub value: f64,
    /// Second difference at the minimum; 0 for a flat valley floor.
    pub curvature: f64,
    /// Width of the valley floor (0 for an isolated node).
    pub width: f64,
}

/// Interior local minima of a sampled 1-D function, sorted by value.
///
/// Runs of exactly equal values are one candidate. A candidate counts when,
/// on each side, the profile rises more than rounding (relative `1e-12`,
/// plus `1024 ε` times the finite range) before reaching a lower value or
/// the end of the grid. Wiggles at rounding level in a flat valley therefore
/// collapse onto the lowest point. `+∞` marks excluded nodes.
pub fn minima_census(xs: &[f64], values: &[f64]) -> Result<Vec<Minimum>> {
    if xs.len() != values.len() {
        return Err(Error::DimensionMismatch { expected: xs.len(), got: values.len() });
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::NonFinite("census values".into()));
    }
    let n = xs.len();
    let (lo, hi) = values.iter().filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(*v), h.max(*v)));
    let floor = if hi > lo { 1024.0 * f64::EPSILON * (hi - lo) } else { 0.0 };
    // highest value passed before `stop` holds, scanning outward
    let barrier = |it: &mut dyn Iterator<Item = &f64>, stop: &dyn Fn(f64) -> bool| {
        let mut m = f64::NEG_INFINITY;
        for &w in it {
            if stop(w) {
                break;
            }
            m = m.max(w);
        }
        m
    };
    let mut out = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        let v = values[i];
        let mut j = i;
        while j + 1 < n && values[j + 1] == v {
            j += 1;
        }
        let candidate = v.is_finite() && values[i - 1] > v && j + 1 < n && values[j + 1] > v;
        if candidate {
            let rise = v + 1e-12 * v.abs() + floor;
            let left = barrier(&mut values[..i].iter().rev(), &|w| w <= v);
            let right = barrier(&mut values[j + 1..].iter(), &|w| w < v);
            if left > rise && right > rise {
                let curvature = if i == j {
                    let h = 0.5 * (xs[i + 1] - xs[i - 1]);
                    (values[i - 1] - 2.0 * v + values[i + 1]) / (h * h)
                } else {
                    0.0
                };
                out.push(Minimum {
                    location: if i == j { xs[i] } else { 0.5 * (xs[i] + xs[j]) },
                    value: v,
                    curvature,
                    width: xs[j] - xs[i],
                });
            }
        }
        i = j + 1;
    }
    out.sort_by(|a, b| a.value.partial_cmp(&b.value).expect("finite minima"));
    Ok(out)
}

/// Padding added to each side of the Gibbs box for census grids, so a flat
/// minimum filling the box is still bounded by higher values on both sides.
pub const CENSUS_PADDING: f64 = 0.5;

/// `npts` uniform census nodes over the padded Gibbs box of a 1-D landscape.
pub fn census_nodes(landscape: &EnergyLandscape, beta: f64, npts: usize) -> Result<Vec<f64>> {
    if landscape.dim() != 1 {
        return Err(Error::InvalidParameter("census profiles are 1-D".into()));
    }
    if npts < 3 {
        return Err(Error::InvalidParameter(format!("census needs at least 3 nodes, got {npts}")));
    }
    let dom = landscape.domain_box(beta);
    Ok(linspace(dom.lo[0] - CENSUS_PADDING, dom.hi[0] + CENSUS_PADDING, npts))
}

/// `u(x, γ)` on `xs` for a 1-D landscape. For box-uniform landscapes the
/// unsmoothed profile is `+∞` outside the box.
pub fn smoothed_profile(landscape: &EnergyLandscape, beta: f64, gamma: f64, xs: &[f64]) -> Result<Vec<f64>> {
    if landscape.dim() != 1 {
        return Err(Error::InvalidParameter("census profiles are 1-D".into()));
    }
    let p = HeatKernelParams::new(gamma, beta, 1)?;
    let dom = landscape.domain_box(beta);
    xs.iter()
        .map(|&x| {
            if gamma == 0.0 && landscape.is_box_indicator() && !dom.contains(&[x]) {
                Ok(f64::INFINITY)
            } else {
                local_entropy(&p, landscape, &[x])
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts(schedule: GammaSchedule, eta: f64, iters: usize) -> LocalEntropyOptions {
        LocalEntropyOptions { beta: 1.0, schedule, eta, iters, inner_steps: 2000, seed: 1 }
    }

    #[test]
    fn flat_box_counts_as_one_minimum() {
        let l = EnergyLandscape::constant(1, 4.0).unwrap();
        let xs = census_nodes(&l, 1.0, 1801).unwrap();
        assert!(xs[0] < -4.0 && xs[1800] > 4.0);
        for g in [0.0, 0.25, 0.5, 2.0] {
            let mins = minima_census(&xs, &smoothed_profile(&l, 1.0, g, &xs).unwrap()).unwrap();
            assert_eq!(mins.len(), 1, "gamma {g}");
            // the valley floor is flat to rounding for small gamma
            assert!(mins[0].location.abs() < 0.5, "gamma {g}: {:?}", mins[0]);
        }
    }

    #[test]
    fn sgd_on_identical_quadratics_is_geometric() {
        let l = EnergyLandscape::quadratic_family(vec![vec![0.0]; 4]).unwrap();
        let run = sgd_run(&GradientNoiseModel::new(l.clone(), 1, 0.1).unwrap(), &[1.0], 50, 3).unwrap();
        assert_eq!(run.xs.len(), 51);
        for (k, x) in run.xs.iter().enumerate() {
            assert!((x[0] - 0.9f64.powi(k as i32)).abs() < 1e-14);
        }
        let still = sgd_run(&GradientNoiseModel::new(l, 1, 0.0).unwrap(), &[1.0], 20, 3).unwrap();
        assert!(still.xs.iter().all(|x| x[0] == 1.0));
    }

    #[test]
    fn sgd_stationary_variance_scales_with_step() {
        let l = EnergyLandscape::quadratic_family(vec![vec![1.0], vec![-1.0]]).unwrap();
        let etas = [0.01, 0.02, 0.04];
        let mut logs = Vec::new();
        for (i, &eta) in etas.iter().enumerate() {
            let run = sgd_run(&GradientNoiseModel::new(l.clone(), 1, eta).unwrap(), &[0.5], 400_000, i as u64).unwrap();
            let tail: Vec<f64> = run.xs[20_000..].iter().map(|x| x[0]).collect();
            let m = tail.iter().sum::<f64>() / tail.len() as f64;
            let v = tail.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / tail.len() as f64;
            assert!(m.abs() < 0.05, "mean {m}");
            logs.push((eta.ln(), v.ln()));
        }
        let (mx, my) = (logs.iter().map(|p| p.0).sum::<f64>() / 3.0, logs.iter().map(|p| p.1).sum::<f64>() / 3.0);
        let slope = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / logs.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
        assert!((slope - 1.0).abs() < 0.2, "slope {slope}");
    }

    #[test]
    fn sgd_divergence_truncates() {
        let l = EnergyLandscape::quadratic_family(vec![vec![0.0]]).unwrap();
        let run = sgd_run(&GradientNoiseModel::new(l, 1, 3.0).unwrap(), &[1.0], 100, 0).unwrap();
        assert!(run.diverged);
        assert!(run.xs.len() < 101);
    }

    #[test]
    fn local_entropy_converges_on_quadratic() {
        let run = local_entropy_run(&EnergyLandscape::quadratic(1), &[2.0], &opts(GammaSchedule::Constant(1.0), 0.1, 200)).unwrap();
        assert!(run.last()[0].abs() <= 1e-3);
        assert_eq!(run.xs.len(), 201);
        assert!(run.f_gamma.as_ref().unwrap().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn zero_scale_reproduces_gradient_descent() {
        let l = EnergyLandscape::rugged_default();
        let le = local_entropy_run(&l, &[1.7], &opts(GammaSchedule::Constant(0.0), 0.01, 50)).unwrap();
        let gd = gd_run(&l, &[1.7], 0.01, 50).unwrap();
        for (a, b) in le.xs.iter().zip(&gd.xs) {
            assert!((a[0] - b[0]).abs() <= 1e-12);
        }
    }

    #[test]
    fn schedule_validation() {
        assert!(GammaSchedule::Explicit(vec![1.0, 2.0]).values(2).is_err());
        assert!(GammaSchedule::Constant(-1.0).values(2).is_err());
        let g = GammaSchedule::geometric(2.0).values(3).unwrap();
        assert_eq!(g, vec![2.0, 2.0 * 0.97, 2.0 * 0.97 * 0.97]);
    }

    #[test]
    fn census_of_simple_profiles() {
        let xs = linspace(-3.0, 3.0, 601);
        let q: Vec<f64> = xs.iter().map(|x| 0.5 * x * x).collect();
        let m = minima_census(&xs, &q).unwrap();
        assert_eq!(m.len(), 1);
        assert!(m[0].location.abs() < 1e-12);
        let dw: Vec<f64> = xs.iter().map(|x| 0.25 * (x * x - 1.0).powi(2)).collect();
        assert_eq!(minima_census(&xs, &dw).unwrap().len(), 2);
        let flat: Vec<f64> = xs.iter().map(|x| if x.abs() <= 2.0 { 0.0 } else { f64::INFINITY }).collect();
        let m = minima_census(&xs, &flat).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].curvature, 0.0);
    }

    #[test]
    fn rugged_census_matches_stationary_point_count() {
        let l = EnergyLandscape::rugged_default();
        let xs = linspace(-4.0, 4.0, 8001);
        let prof = smoothed_profile(&l, 1.0, 0.0, &xs).unwrap();
        // minima are sign changes of f'(x) = x - a b sin(b x) from - to +
        let fp = |x: f64| x - 2.0 * (10.0 * x).sin();
        let grid = linspace(-4.0, 4.0, 400_001);
        let analytic = grid.windows(2).filter(|w| fp(w[0]) < 0.0 && fp(w[1]) >= 0.0).count();
        assert_eq!(minima_census(&xs, &prof).unwrap().len(), analytic);
        assert!(analytic > 3);
    }
}
