//! Reverse-time stochastic control: feedback policies, Monte Carlo value
//! estimates and the value/local-entropy identity `V(x, t) / β = u(x, t)`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{check_positive, Error, Result};
use crate::halfbridge::{bridge_grid, default_bridge_points, gibbs_on_grid};
use crate::landscape::{EnergyLandscape, GibbsDensity};
use crate::pde::{residual, score_field, solve_heat, solve_hjb, DensityStack, HjbScheme, Residual, ScalarStack, SpatialGrid};
use crate::rng::sub_seed;
use crate::sde::{simulate_reverse, DiffusionSpec, Direction, DriftFn, PointMass, SimulationPlan};
use crate::smoothing::{local_entropy, HeatKernelParams};
use crate::stats::mean_se;

/// Fewest rollouts accepted by [`rollout_value`].
pub const MIN_ROLLOUTS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Zero,
    Score,
    Constant(Vec<f64>),
    Custom(String),
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicyKind::Zero => write!(f, "zero"),
            PolicyKind::Score => write!(f, "score"),
            PolicyKind::Constant(t) => write!(f, "constant{t:?}"),
            PolicyKind::Custom(name) => write!(f, "custom:{name}"),
        }
    }
}

/// Markov feedback control `v(x, s)` for the reverse-time state equation
/// `dX = v ds + β^{-1/2} dW̄`.
#[derive(Clone)]
pub struct ControlPolicy {
    kind: PolicyKind,
    beta: f64,
    dim: usize,
    field: DriftFn,
    /// Last time covered by the density the policy was built from.
    horizon: Option<f64>,
}

impl fmt::Debug for ControlPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ControlPolicy")
            .field("kind", &self.kind)
            .field("beta", &self.beta)
            .field("dim", &self.dim)
            .field("horizon", &self.horizon)
            .finish_non_exhaustive()
    }
}

impl ControlPolicy {
    pub fn zero(dim: usize, beta: f64) -> Self {
        Self { kind: PolicyKind::Zero, beta, dim, field: Arc::new(|_, _, out: &mut [f64]| out.fill(0.0)), horizon: None }
    }

    pub fn constant(theta: Vec<f64>, beta: f64) -> Self {
        let th = theta.clone();
        Self {
            kind: PolicyKind::Constant(theta),
            beta,
            dim: th.len(),
            field: Arc::new(move |_, _, out: &mut [f64]| out.copy_from_slice(&th)),
            horizon: None,
        }
    }

    pub fn custom(name: impl Into<String>, dim: usize, beta: f64, field: DriftFn) -> Self {
        Self { kind: PolicyKind::Custom(name.into()), beta, dim, field, horizon: None }
    }

    pub fn kind(&self) -> &PolicyKind {
        &self.kind
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn control_into(&self, x: &[f64], s: f64, out: &mut [f64]) {
        (self.field)(x, s, out)
    }

    /// The controlled state equation run backward from time `t`.
    pub fn state_equation(&self, t: f64) -> Result<DiffusionSpec> {
        DiffusionSpec::new(self.dim, Arc::clone(&self.field), self.beta.powf(-0.5), Direction::Reverse, t)
    }

    pub fn control(&self, x: &[f64], s: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.control_into(x, s, &mut out);
        out
    }
}

/// Optimal feedback `v*(x, t) = -(1/β) ∇log ρ(x, t)` from the heat flow of
/// the Gibbs density.
pub fn make_score_policy(rho: &DensityStack, beta: f64) -> Result<ControlPolicy> {
    check_positive("beta", beta)?;
    if (rho.beta - beta).abs() > 1e-12 * beta {
        return Err(Error::InvalidParameter(format!("density was evolved at beta = {}, policy asks for {beta}", rho.beta)));
    }
    let score = Arc::new(score_field(rho));
    let inv = -1.0 / beta;
    let field: DriftFn = Arc::new(move |x: &[f64], s: f64, out: &mut [f64]| {
        score.at_into(x, s, out);
        for o in out.iter_mut() {
            *o *= inv;
        }
    });
    Ok(ControlPolicy { kind: PolicyKind::Score, beta, dim: rho.grid.dim(), field, horizon: Some(rho.horizon()) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub rollouts: usize,
    pub x: Vec<f64>,
    pub t: f64,
    pub policy: String,
    /// Paths whose `X₀` left the Gibbs box.
    pub outside_box: usize,
}

/// `β f(x)`, which equals `-log ρ̄(x) - log Z`. For box-uniform landscapes
/// the outside of the box uses the envelope `β dist(x, box)² / 2`.
fn terminal_cost(gibbs: &GibbsDensity, x: &[f64]) -> (f64, bool) {
    let dom = gibbs.domain();
    let outside = !dom.contains(x);
    let l = gibbs.landscape();
    if outside && l.is_box_indicator() {
        let d2: f64 = x
            .iter()
            .enumerate()
            .map(|(a, v)| {
                let e = (dom.lo[a] - v).max(v - dom.hi[a]).max(0.0);
                e * e
            })
            .sum();
        return (0.5 * gibbs.beta() * d2, true);
    }
    (gibbs.beta() * l.energy(x), outside)
}

/// Monte Carlo value of `policy` from `X_t = x`: reverse Euler–Maruyama down
/// to `s = 0`, cost `Σ (β/2)‖v‖² Δs + β f(X₀)` per path.
pub fn rollout_value(
    policy: &ControlPolicy,
    x: &[f64],
    t: f64,
    steps: usize,
    paths: usize,
    seed: u64,
    gibbs: &GibbsDensity,
) -> Result<ValueEstimate> {
    if paths < MIN_ROLLOUTS {
        return Err(Error::InvalidParameter(format!("at least {MIN_ROLLOUTS} rollouts are required, got {paths}")));
    }
    check_positive("t", t)?;
    if x.len() != policy.dim {
        return Err(Error::DimensionMismatch { expected: policy.dim, got: x.len() });
    }
    if let Some(h) = policy.horizon {
        if t > h * (1.0 + 1e-12) {
            return Err(Error::Precondition(format!("policy covers [0, {h}], rollout starts at {t}")));
        }
    }
    let beta = policy.beta;
    let spec = policy.state_equation(t)?.with_guard(10.0 * gibbs.domain().radius());
    let ens = simulate_reverse(&spec, &PointMass(x.to_vec()), &SimulationPlan::new(steps, paths, seed).recording(vec![0]))?;
    let mut outside = 0;
    let costs: Vec<f64> = (0..paths)
        .map(|p| {
            let (term, out) = terminal_cost(gibbs, ens.state(p, 0));
            outside += out as usize;
            0.5 * beta * ens.energy[p] + term
        })
        .collect();
    let m = mean_se(&costs);
    Ok(ValueEstimate {
        mean: m.mean,
        std_error: m.std_error,
        rollouts: paths,
        x: x.to_vec(),
        t,
        policy: policy.kind.to_string(),
        outside_box: outside,
    })
}

/// Residual of `∂V/∂t - (1/2β) ΔV + (1/2β)‖∇V‖²` over `region`.
pub fn check_dpe_residual(v: &ScalarStack, beta: f64, region: &[bool]) -> Residual {
    let c = 0.5 / beta;
    residual::weighted_residual(v, region, 1.0, c, c)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoremOptions {
    pub rollouts: usize,
    pub steps: usize,
    pub seed: u64,
    pub grid_points: Option<usize>,
    pub pde_steps: usize,
    pub scheme: HjbScheme,
}

impl Default for TheoremOptions {
    fn default() -> Self {
        Self { rollouts: 100_000, steps: 200, seed: 0, grid_points: None, pde_steps: 400, scheme: HjbScheme::ColeHopf }
    }
}

/// Shared ingredients of the value checks: Gibbs density, its heat flow,
/// the optimal policy and the HJB solution.
pub struct TheoremSetup {
    pub gibbs: GibbsDensity,
    pub gamma: f64,
    pub grid: SpatialGrid,
    pub density: DensityStack,
    pub policy: ControlPolicy,
    pub u_pde: ScalarStack,
}

impl TheoremSetup {
    pub fn new(landscape: &EnergyLandscape, beta: f64, gamma: f64, opts: &TheoremOptions) -> Result<Self> {
        check_positive("gamma", gamma)?;
        let d = landscape.dim();
        if d > 2 {
            return Err(Error::InvalidParameter(format!("value checks need a 1-D or 2-D landscape, got {d}")));
        }
        let gibbs = GibbsDensity::new(landscape.clone(), beta)?;
        let grid = bridge_grid(&gibbs, gamma, opts.grid_points.unwrap_or_else(|| default_bridge_points(d)))?;
        let rho0 = gibbs_on_grid(&gibbs, &grid);
        let density = solve_heat(&rho0, &grid, beta, gamma, opts.pde_steps)?;
        let policy = make_score_policy(&density, beta)?;
        let u0 = grid.sample(|x| terminal_cost(&gibbs, x).0 / beta);
        let u_pde = solve_hjb(&u0, &grid, beta, gamma, opts.pde_steps, opts.scheme)?;
        Ok(Self { gibbs, gamma, grid, density, policy, u_pde })
    }

    pub fn beta(&self) -> f64 {
        self.gibbs.beta()
    }
}

/// Probe points `x ∈ {-1, 0, 1}` (first coordinate; others 0) at
/// `t ∈ {γ/4, γ/2, γ}`.
pub fn default_probes(dim: usize, gamma: f64) -> Vec<(Vec<f64>, f64)> {
    let mut out = Vec::with_capacity(9);
    for &t in &[0.25 * gamma, 0.5 * gamma, gamma] {
        for &x0 in &[-1.0, 0.0, 1.0] {
            let mut x = vec![0.0; dim];
            x[0] = x0;
            out.push((x, t));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub x: Vec<f64>,
    pub t: f64,
    /// `V̂(x, t) / β`.
    pub value: f64,
    pub std_error: f64,
    pub u_quadrature: f64,
    pub u_pde: f64,
    pub z_quadrature: f64,
    pub z_pde: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremReport {
    pub landscape: String,
    pub beta: f64,
    pub gamma: f64,
    pub rows: Vec<ProbeRow>,
    pub pass_fraction: f64,
    pub pass: bool,
}

/// Fraction of probes that must pass.
pub const THEOREM_PASS_FRACTION: f64 = 0.9;

fn z_score(value: f64, se: f64, reference: f64) -> f64 {
    let diff = value - reference;
    if se > 0.0 {
        diff / se
    } else if diff == 0.0 {
        0.0
    } else {
        f64::INFINITY.copysign(diff)
    }
}

/// Compares `V̂/β` under the score policy with `u` from quadrature and from
/// the HJB solver at every probe. A probe passes when both `|z| ≤ 3`.
/// Probe-level failures are recorded as failing rows.
pub fn verify_theorem(setup: &TheoremSetup, probes: &[(Vec<f64>, f64)], opts: &TheoremOptions) -> TheoremReport {
    let beta = setup.beta();
    let landscape = setup.gibbs.landscape();
    let rows: Vec<ProbeRow> = probes
        .iter()
        .enumerate()
        .map(|(i, (x, t))| {
            let v = rollout_value(&setup.policy, x, *t, opts.steps, opts.rollouts, sub_seed(opts.seed, i as u64), &setup.gibbs);
            let uq = HeatKernelParams::new(*t, beta, x.len()).and_then(|p| local_entropy(&p, landscape, x));
            let up = setup.u_pde.checked_at(x, *t);
            match (v, uq, up) {
                (Ok(v), Ok(uq), Ok(up)) => {
                    let (value, se) = (v.mean / beta, v.std_error / beta);
                    let zq = z_score(value, se, uq);
                    let zp = z_score(value, se, up);
                    ProbeRow {
                        x: x.clone(),
                        t: *t,
                        value,
                        std_error: se,
                        u_quadrature: uq,
                        u_pde: up,
                        z_quadrature: zq,
                        z_pde: zp,
                        pass: zq.abs() <= 3.0 && zp.abs() <= 3.0,
                    }
                }
                _ => ProbeRow {
                    x: x.clone(),
                    t: *t,
                    value: f64::NAN,
                    std_error: f64::NAN,
                    u_quadrature: f64::NAN,
                    u_pde: f64::NAN,
                    z_quadrature: f64::NAN,
                    z_pde: f64::NAN,
                    pass: false,
                },
            }
        })
        .collect();
    let pass_fraction = rows.iter().filter(|r| r.pass).count() as f64 / rows.len().max(1) as f64;
    TheoremReport {
        landscape: landscape.name().to_string(),
        beta,
        gamma: setup.gamma,
        rows,
        pass_fraction,
        pass: pass_fraction >= THEOREM_PASS_FRACTION,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominanceRow {
    pub x: Vec<f64>,
    pub t: f64,
    pub score: ValueEstimate,
    pub zero: ValueEstimate,
    pub constant: ValueEstimate,
}

impl DominanceRow {
    /// `value(zero) ≥ value(score) - 3 (SE_zero + SE_score)`.
    pub fn zero_dominated(&self) -> bool {
        self.zero.mean >= self.score.mean - 3.0 * (self.zero.std_error + self.score.std_error)
    }

    pub fn constant_dominated(&self) -> bool {
        self.constant.mean >= self.score.mean - 3.0 * (self.constant.std_error + self.score.std_error)
    }

    /// `value(zero) - value(score)`.
    pub fn zero_gap(&self) -> f64 {
        self.zero.mean - self.score.mean
    }
}

/// Values of the score, zero and constant-`θ` policies at every probe, all
/// driven by the same noise (common seed per probe).
pub fn policy_dominance(setup: &TheoremSetup, probes: &[(Vec<f64>, f64)], theta: f64, opts: &TheoremOptions) -> Result<Vec<DominanceRow>> {
    let beta = setup.beta();
    let d = setup.grid.dim();
    let zero = ControlPolicy::zero(d, beta);
    let constant = ControlPolicy::constant(vec![theta; d], beta);
    probes
        .iter()
        .enumerate()
        .map(|(i, (x, t))| {
            let seed = sub_seed(opts.seed, i as u64);
            let run = |p: &ControlPolicy| rollout_value(p, x, *t, opts.steps, opts.rollouts, seed, &setup.gibbs);
            Ok(DominanceRow { x: x.clone(), t: *t, score: run(&setup.policy)?, zero: run(&zero)?, constant: run(&constant)? })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smoothing::gaussian_oracle;

    fn gaussian_setup() -> (GibbsDensity, DensityStack) {
        let gibbs = GibbsDensity::new(EnergyLandscape::quadratic(1), 1.0).unwrap();
        let grid = bridge_grid(&gibbs, 1.0, 1601).unwrap();
        let rho0 = gibbs_on_grid(&gibbs, &grid);
        (gibbs, solve_heat(&rho0, &grid, 1.0, 1.0, 400).unwrap())
    }

    #[test]
    fn score_policy_gaussian_closed_form() {
        let (_, rho) = gaussian_setup();
        let p = make_score_policy(&rho, 1.0).unwrap();
        for &t in &[0.25, 0.5, 1.0] {
            for &x in &[-2.0, -0.5, 1.0, 2.5] {
                let v = p.control(&[x], t)[0];
                assert!((v - x / (1.0 + t)).abs() < 1e-3, "v*({x},{t}) = {v}");
            }
            assert!(p.control(&[0.0], t)[0].abs() < 1e-12);
        }
        assert!(make_score_policy(&rho, 2.0).is_err());
    }

    #[test]
    fn score_policy_is_scaled_hjb_gradient() {
        let (gibbs, rho) = gaussian_setup();
        let p = make_score_policy(&rho, 1.0).unwrap();
        let grid = &rho.grid;
        let u0 = grid.sample(|x| gibbs.landscape().energy(x));
        let u = solve_hjb(&u0, grid, 1.0, 1.0, 400, HjbScheme::Direct { substeps: None }).unwrap();
        let h = grid.spacing(0);
        let k = 200;
        let t = u.times[k];
        let mut worst: f64 = 0.0;
        for j in 1..grid.len() - 1 {
            let x = grid.point(j)[0];
            if x.abs() > 4.0 {
                continue;
            }
            // v* = (1/β) ∇V = ∇u
            let du = (u.values[k][j + 1] - u.values[k][j - 1]) / (2.0 * h);
            worst = worst.max((p.control(&[x], t)[0] - du).abs());
        }
        assert!(worst <= 5e-3, "{worst}");
    }

    #[test]
    fn gaussian_value_matches_local_entropy() {
        let (gibbs, rho) = gaussian_setup();
        let p = make_score_policy(&rho, 1.0).unwrap();
        let v = rollout_value(&p, &[1.0], 1.0, 200, 100_000, 11, &gibbs).unwrap();
        let target = gaussian_oracle(1.0, 1.0, &[1.0]);
        assert!((target - 0.596_573_590_279_972_6).abs() < 1e-12);
        assert!((v.mean - target).abs() <= 3.0 * v.std_error, "{v:?} vs {target}");
        let z = rollout_value(&ControlPolicy::zero(1, 1.0), &[1.0], 1.0, 200, 100_000, 11, &gibbs).unwrap();
        assert!(z.mean >= v.mean - 3.0 * v.std_error);
    }

    #[test]
    fn short_horizon_value_is_scaled_energy() {
        let gibbs = GibbsDensity::new(EnergyLandscape::double_well(), 2.0).unwrap();
        let p = ControlPolicy::zero(1, 2.0);
        let v = rollout_value(&p, &[0.5], 1e-6, 1, 10_000, 1, &gibbs).unwrap();
        let exact = 2.0 * gibbs.landscape().energy(&[0.5]);
        assert!((v.mean - exact).abs() < 1e-3, "{} vs {exact}", v.mean);
    }

    #[test]
    fn rollout_preconditions() {
        let (gibbs, rho) = gaussian_setup();
        let p = make_score_policy(&rho, 1.0).unwrap();
        assert!(rollout_value(&p, &[0.0], 1.0, 10, 999, 0, &gibbs).is_err());
        assert!(rollout_value(&p, &[0.0], 1.5, 10, 1000, 0, &gibbs).is_err());
        assert!(rollout_value(&p, &[0.0, 0.0], 1.0, 10, 1000, 0, &gibbs).is_err());
    }

    #[test]
    fn dpe_residual_of_constant_and_gaussian_value() {
        let grid = SpatialGrid::line(-4.0, 4.0, 401).unwrap();
        let times: Vec<f64> = (0..=100).map(|k| k as f64 / 100.0).collect();
        let flat = ScalarStack::new(grid.clone(), times.clone(), vec![vec![3.0; grid.len()]; times.len()]);
        assert_eq!(check_dpe_residual(&flat, 1.0, &grid.interior_mask(1.0)).max_abs, 0.0);

        let beta = 2.0;
        let exact = |x: f64, t: f64| beta * (x * x / (2.0 * (1.0 + t)) + (1.0 + t).ln() / (2.0 * beta));
        let v = ScalarStack::new(
            grid.clone(),
            times.clone(),
            times.iter().map(|&t| grid.sample(|x| exact(x[0], t))).collect(),
        );
        let r = check_dpe_residual(&v, beta, &grid.interior_mask(1.0));
        assert!(r.max_abs <= 5e-3, "{r:?}");
    }

    #[test]
    fn quadratic_theorem_probes_pass() {
        let opts = TheoremOptions { rollouts: 20_000, steps: 100, seed: 5, ..TheoremOptions::default() };
        let setup = TheoremSetup::new(&EnergyLandscape::quadratic(1), 1.0, 1.0, &opts).unwrap();
        let report = verify_theorem(&setup, &default_probes(1, 1.0), &opts);
        assert_eq!(report.rows.len(), 9);
        assert!(report.pass, "{report:?}");
        for r in &report.rows {
            let exact = gaussian_oracle(1.0, r.t, &r.x);
            assert!((r.u_quadrature - exact).abs() < 1e-6);
            assert!((r.u_pde - exact).abs() < 5e-3);
        }
    }
}
