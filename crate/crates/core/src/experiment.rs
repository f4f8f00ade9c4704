//! Configured experiments: JSON run configuration, dispatch, CSV artifacts
//! and a manifest with artifact hashes.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::control::{default_probes, verify_theorem, TheoremOptions, TheoremSetup};
use crate::error::{Error, Result};
use crate::halfbridge::{
    bridge_grid, default_bridge_points, gibbs_on_grid, marginal_agreement, reverse_sample_gibbs, solve_problem1, SamplingOptions,
};
use crate::io::{cache_key, fmt_f64, sha256_file, write_density_stack, write_scalar_stack, CsvTable};
use crate::landscape::{EnergyLandscape, GibbsDensity, GradientNoiseModel};
use crate::optimize::{
    census_nodes, gd_run, local_entropy_run, minima_census, sgd_run, smoothed_profile, GammaSchedule, LocalEntropyOptions, OptimizerRun,
};
use crate::pde::{bulk_linf, cole_hopf, solve_heat, solve_hjb, DensityStack, HjbScheme, SpatialGrid};
use crate::sde::{check_duality, simulate_forward, BinSpec, DiffusionSpec, GaussianSampler, SimulationPlan};
use crate::smoothing::{local_entropy, local_entropy_gradient, GradientMethod, HeatKernelParams};
use crate::stats::GridSampler;

/// Registered experiments with one-line descriptions, in a stable order.
pub const EXPERIMENTS: &[(&str, &str)] = &[
    ("smooth", "local entropy by quadrature against the Cole-Hopf transform of the heat flow"),
    ("pde-check", "heat-equation and HJB solvers agree through the Cole-Hopf transform"),
    ("duality", "forward minus backward drift equals sigma^2 times the score, per bin"),
    ("bridge", "reverse-time half-bridge sampling of the Gibbs density"),
    ("verify-theorem", "rollout values of the score policy against local entropy"),
    ("optimize", "gradient descent, SGD and local-entropy descent with a minima census"),
];

fn default_beta() -> f64 {
    1.0
}

fn default_gamma() -> f64 {
    1.0
}

fn default_output() -> PathBuf {
    PathBuf::from("results")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LandscapeConfig {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

impl Default for LandscapeConfig {
    fn default() -> Self {
        Self { name: "double-well".into(), params: BTreeMap::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Points per axis; experiment-specific default when absent.
    #[serde(default)]
    pub npts: Option<usize>,
    /// Symmetric half-width; the landscape's Gibbs box when absent.
    #[serde(default)]
    pub half_width: Option<f64>,
    /// Time steps of the PDE solvers.
    #[serde(default = "default_pde_steps")]
    pub steps: usize,
}

fn default_pde_steps() -> usize {
    400
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { npts: None, half_width: None, steps: default_pde_steps() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    #[serde(default = "default_paths")]
    pub paths: usize,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_paths() -> usize {
    100_000
}

fn default_steps() -> usize {
    200
}

impl Default for McConfig {
    fn default() -> Self {
        Self { paths: default_paths(), steps: default_steps(), seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    #[serde(default = "default_iters")]
    pub iters: usize,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default = "default_gamma")]
    pub gamma0: f64,
    #[serde(default = "default_decay")]
    pub decay: f64,
    #[serde(default = "default_census_gammas")]
    pub census_gammas: Vec<f64>,
}

fn default_iters() -> usize {
    300
}

fn default_eta() -> f64 {
    0.05
}

fn default_decay() -> f64 {
    crate::optimize::DEFAULT_GAMMA_DECAY
}

fn default_census_gammas() -> Vec<f64> {
    vec![0.0, 0.5, 1.0, 2.0]
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            x0: None,
            iters: default_iters(),
            eta: default_eta(),
            gamma0: default_gamma(),
            decay: default_decay(),
            census_gammas: default_census_gammas(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: String,
    #[serde(default)]
    pub landscape: LandscapeConfig,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub mc: McConfig,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
}

/// Tolerance names and defaults per experiment.
fn default_tolerances(experiment: &str) -> &'static [(&'static str, f64)] {
    match experiment {
        "smooth" => &[("linf", 5e-3)],
        "pde-check" => &[("linf", 5e-3), ("mass", 1e-6)],
        "duality" => &[("pass_fraction", 0.9)],
        "bridge" => &[("w1", 0.05)],
        "verify-theorem" => &[("pass_fraction", 0.9)],
        "optimize" => &[("relative_gap", 0.1)],
        _ => &[],
    }
}

/// Prefix a validation message naming a `key` with the line where that key
/// first appears in the source text.
fn anchor_to_line(text: &str, msg: String) -> String {
    let key = msg.split('`').nth(1).and_then(|k| k.rsplit('.').next()).map(|k| format!("\"{k}\""));
    match key.and_then(|k| text.lines().position(|l| l.contains(&k))) {
        Some(i) => format!("line {}: {msg}", i + 1),
        None => msg,
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(format!("line {}, column {}: {e}", e.line(), e.column())))?;
        cfg.validate().map_err(|e| match e {
            Error::Config(m) => Error::Config(anchor_to_line(text, m)),
            other => other,
        })?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Minimal configuration for `experiment` with every default filled in.
    pub fn for_experiment(experiment: &str) -> Self {
        let mut cfg: RunConfig = serde_json::from_value(serde_json::json!({ "experiment": experiment })).expect("defaults deserialize");
        cfg.tolerances = default_tolerances(experiment).iter().map(|(k, v)| (k.to_string(), *v)).collect();
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !EXPERIMENTS.iter().any(|(n, _)| *n == self.experiment) {
            let names: Vec<&str> = EXPERIMENTS.iter().map(|(n, _)| *n).collect();
            return bad(format!("unknown experiment `{}` (known: {})", self.experiment, names.join(", ")));
        }
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return bad(format!("`beta` must be positive, got {}", self.beta));
        }
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return bad(format!("`gamma` must be positive, got {}", self.gamma));
        }
        if self.mc.paths == 0 || self.mc.steps == 0 {
            return bad("`mc.paths` and `mc.steps` must be positive".into());
        }
        if self.grid.steps == 0 {
            return bad("`grid.steps` must be positive".into());
        }
        if let Some(n) = self.grid.npts {
            if n < 11 {
                return bad(format!("`grid.npts` must be at least 11, got {n}"));
            }
        }
        if let Some(h) = self.grid.half_width {
            if !(h.is_finite() && h > 0.0) {
                return bad(format!("`grid.half_width` must be positive, got {h}"));
            }
        }
        let o = &self.optimizer;
        if !(o.eta.is_finite() && o.eta >= 0.0) || !(o.gamma0.is_finite() && o.gamma0 >= 0.0) || !(o.decay > 0.0 && o.decay <= 1.0) {
            return bad("`optimizer` needs eta >= 0, gamma0 >= 0 and decay in (0, 1]".into());
        }
        if o.census_gammas.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
            return bad("`optimizer.census_gammas` must be non-negative".into());
        }
        let known = default_tolerances(&self.experiment);
        for (k, v) in &self.tolerances {
            if !known.iter().any(|(n, _)| n == k) {
                return bad(format!("unknown tolerance `{k}` for experiment `{}`", self.experiment));
            }
            if !(v.is_finite() && *v >= 0.0) {
                return bad(format!("tolerance `{k}` must be non-negative, got {v}"));
            }
        }
        let l = self.build_landscape()?;
        if let Some(x0) = &o.x0 {
            if x0.len() != l.dim() {
                return bad(format!("`optimizer.x0` has {} entries for a {}-D landscape", x0.len(), l.dim()));
            }
        }
        Ok(())
    }

    pub fn build_landscape(&self) -> Result<EnergyLandscape> {
        EnergyLandscape::from_name(&self.landscape.name, &self.landscape.params).map_err(|e| match e {
            Error::Config(m) => Error::Config(m),
            other => Error::Config(format!("landscape: {other}")),
        })
    }

    /// Copy with every default tolerance written out.
    pub fn resolved(&self) -> Self {
        let mut out = self.clone();
        for (k, v) in default_tolerances(&self.experiment) {
            out.tolerances.entry(k.to_string()).or_insert(*v);
        }
        out
    }

    fn tol(&self, name: &str) -> f64 {
        self.tolerances
            .get(name)
            .copied()
            .or_else(|| default_tolerances(&self.experiment).iter().find(|(n, _)| *n == name).map(|(_, v)| *v))
            .expect("tolerance registered for the experiment")
    }

    /// Hash of every setting that affects numeric output; the output
    /// directory is excluded.
    pub fn content_key(&self) -> Result<String> {
        let mut c = self.resolved();
        c.output = PathBuf::new();
        cache_key(&c)
    }

    /// Directory the experiment writes to: `<output>/<experiment>`.
    pub fn run_dir(&self) -> PathBuf {
        self.output.join(&self.experiment)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl Check {
    fn at_most(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self { name: name.into(), value, threshold, pass: value <= threshold }
    }

    fn at_least(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self { name: name.into(), value, threshold, pass: value >= threshold }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub config: RunConfig,
    pub pass: bool,
    pub checks: Vec<Check>,
    pub artifacts: Vec<Artifact>,
}

struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    fn csv(&mut self, name: &str, table: &CsvTable) -> Result<()> {
        table.write(&self.dir.join(name))?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_string());
        self.dir.join(name)
    }
}

/// Runs the configured experiment, writing artifacts and `manifest.json`
/// under [`RunConfig::run_dir`].
pub fn run(config: &RunConfig) -> Result<Manifest> {
    config.validate()?;
    let cfg = config.resolved();
    let dir = cfg.run_dir();
    fs::create_dir_all(&dir)?;
    let mut out = Outputs { dir: dir.clone(), files: Vec::new() };
    let checks = match cfg.experiment.as_str() {
        "smooth" => smooth(&cfg, &mut out)?,
        "pde-check" => pde_check(&cfg, &mut out)?,
        "duality" => duality(&cfg, &mut out)?,
        "bridge" => bridge(&cfg, &mut out)?,
        "verify-theorem" => theorem(&cfg, &mut out)?,
        "optimize" => optimize(&cfg, &mut out)?,
        other => return Err(Error::Config(format!("unknown experiment `{other}`"))),
    };
    let artifacts = out
        .files
        .iter()
        .map(|f| Ok(Artifact { file: f.clone(), sha256: sha256_file(&dir.join(f))? }))
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        pass: checks.iter().all(|c| c.pass),
        config: cfg,
        checks,
        artifacts,
    };
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(manifest)
}

fn f(v: f64) -> String {
    fmt_f64(v)
}

fn require_1d(cfg: &RunConfig, l: &EnergyLandscape) -> Result<()> {
    if l.dim() != 1 {
        return Err(Error::Config(format!("experiment `{}` needs a 1-D landscape, `{}` is {}-D", cfg.experiment, l.name(), l.dim())));
    }
    Ok(())
}

fn gibbs_box_grid(cfg: &RunConfig, gibbs: &GibbsDensity, default_npts: usize) -> Result<SpatialGrid> {
    let dom = match cfg.grid.half_width {
        Some(h) => crate::landscape::DomainBox::symmetric(gibbs.landscape().dim(), h),
        None => gibbs.domain().clone(),
    };
    SpatialGrid::over(&dom, cfg.grid.npts.unwrap_or(default_npts))
}

fn smooth(cfg: &RunConfig, out: &mut Outputs) -> Result<Vec<Check>> {
    let l = cfg.build_landscape()?;
    require_1d(cfg, &l)?;
    let gibbs = GibbsDensity::new(l.clone(), cfg.beta)?;
    let pde_grid = bridge_grid(&gibbs, cfg.gamma, default_bridge_points(1))?;
    let rho = solve_heat(&gibbs_on_grid(&gibbs, &pde_grid), &pde_grid, cfg.beta, cfg.gamma, cfg.grid.steps)?;
    let u = cole_hopf(&rho, gibbs.c_beta());
    let probe_grid = gibbs_box_grid(cfg, &gibbs, 201)?;
    let p = HeatKernelParams::new(cfg.gamma, cfg.beta, 1)?;
    let mut table = CsvTable::new(["x", "f", "u_quadrature", "u_pde", "du_quadrature"]);
    let mut worst: f64 = 0.0;
    let dom = gibbs.domain();
    for j in 0..probe_grid.len() {
        let x = probe_grid.point(j);
        let uq = local_entropy(&p, &l, &x)?;
        let g = local_entropy_gradient(&p, &l, &x, GradientMethod::Quadrature)?.gradient[0];
        let up = u.checked_at(&x, cfg.gamma)?;
        // walls of the PDE box bend u in a thin layer; compare one unit inside the Gibbs box
        if x[0] >= dom.lo[0] + 1.0 && x[0] <= dom.hi[0] - 1.0 {
            worst = worst.max((uq - up).abs());
        }
        table.push(vec![f(x[0]), f(l.energy(&x)), f(uq), f(up), f(g)]);
    }
    out.csv("smooth.csv", &table)?;
    Ok(vec![Check::at_most("linf_quadrature_vs_pde", worst, cfg.tol("linf"))])
}

fn pde_check(cfg: &RunConfig, out: &mut Outputs) -> Result<Vec<Check>> {
    let l = cfg.build_landscape()?;
    let gibbs = GibbsDensity::new(l.clone(), cfg.beta)?;
    let grid = gibbs_box_grid(cfg, &gibbs, if l.dim() == 1 { 801 } else { 121 })?;
    let rho0 = gibbs_on_grid(&gibbs, &grid);
    let rho = solve_heat(&rho0, &grid, cfg.beta, cfg.gamma, cfg.grid.steps)?;
    let u_heat = cole_hopf(&rho, gibbs.c_beta());
    let u0 = grid.sample(|x| l.energy(x));
    let u_direct = solve_hjb(&u0, &grid, cfg.beta, cfg.gamma, cfg.grid.steps, HjbScheme::Direct { substeps: None })?;
    let m0 = rho.mass(0);
    let mut table = CsvTable::new(["t", "linf_cole_hopf_vs_direct", "mass"]);
    let mut drift: f64 = 0.0;
    for k in 0..rho.times.len() {
        drift = drift.max((rho.mass(k) - m0).abs());
        table.push(vec![f(rho.times[k]), f(bulk_linf(&u_heat, &u_direct, k)), f(rho.mass(k))]);
    }
    // the comparison is made at t = γ; early slices near steep walls are
    // resolved only by the substepped direct scheme
    let worst = bulk_linf(&u_heat, &u_direct, rho.times.len() - 1);
    out.csv("pde.csv", &table)?;
    let key = cfg.content_key()?;
    write_density_stack(&out.path("density.hbl"), &key, &rho)?;
    write_scalar_stack(&out.path("hjb.hbl"), &key, &u_direct)?;
    Ok(vec![Check::at_most("linf_cole_hopf_vs_direct", worst, cfg.tol("linf")), Check::at_most("mass_drift", drift, cfg.tol("mass"))])
}

fn duality(cfg: &RunConfig, out: &mut Outputs) -> Result<Vec<Check>> {
    let l = cfg.build_landscape()?;
    require_1d(cfg, &l)?;
    let k_total = cfg.mc.steps.max(4);
    let k = k_total / 2;
    let plan = SimulationPlan::new(k_total, cfg.mc.paths, cfg.mc.seed).recording(vec![k - 1, k, k + 1]);
    let mut table = CsvTable::new(["case", "t", "center", "count", "residual", "std_error", "pass"]);
    let mut checks = Vec::new();

    // Wiener process started from the Gibbs density: q(·, t) is its heat flow
    let gibbs = GibbsDensity::new(l.clone(), cfg.beta)?;
    let grid = bridge_grid(&gibbs, cfg.gamma, default_bridge_points(1))?;
    let rho0 = gibbs_on_grid(&gibbs, &grid);
    let sol = solve_problem1(&rho0, &grid, cfg.beta, cfg.gamma, cfg.grid.steps)?;
    let wiener = sol.zero_diffusion()?;
    let ens = simulate_forward(&wiener, &GridSampler::new(&grid, &rho0)?, &plan)?;
    let cases: Vec<(&str, crate::sde::PathEnsemble, DensityStack)> = {
        // stationary Ornstein–Uhlenbeck: dX = -X dt + √2 dW, N(0, 1) throughout
        let ou = DiffusionSpec::ornstein_uhlenbeck(1, 1.0, 2f64.sqrt(), 1.0)?;
        let ou_ens = simulate_forward(&ou, &GaussianSampler { mean: vec![0.0], var: 1.0 }, &plan)?;
        let ou_grid = SpatialGrid::line(-8.0, 8.0, 1601)?;
        let n01 = ou_grid.sample(|x| (-0.5 * x[0] * x[0]).exp() / (2.0 * std::f64::consts::PI).sqrt());
        let ou_rho = DensityStack::stationary(ou_grid, n01, vec![0.0, 1.0], 0.5);
        vec![("wiener-gibbs", ens, sol.density.clone()), ("ou-stationary", ou_ens, ou_rho)]
    };
    for (name, ens, rho) in &cases {
        let bins = BinSpec::bulk(&ens.marginal(k, 0)?);
        let rep = check_duality(ens, rho, k, &bins)?;
        for b in &rep.bins {
            table.push(vec![
                name.to_string(),
                f(rep.time),
                f(b.center),
                b.count.to_string(),
                f(b.residual),
                f(b.std_error),
                b.pass.to_string(),
            ]);
        }
        checks.push(Check::at_least(format!("{name}_pass_fraction"), rep.pass_fraction, cfg.tol("pass_fraction")));
    }
    out.csv("duality.csv", &table)?;
    Ok(checks)
}

fn bridge(cfg: &RunConfig, out: &mut Outputs) -> Result<Vec<Check>> {
    let l = cfg.build_landscape()?;
    let d = l.dim();
    if d > 2 {
        return Err(Error::Config(format!("bridge needs a 1-D or 2-D landscape, `{}` is {d}-D", l.name())));
    }
    let opts = SamplingOptions {
        steps: cfg.mc.steps,
        paths: cfg.mc.paths,
        seed: cfg.mc.seed,
        grid_points: cfg.grid.npts,
        pde_steps: Some(cfg.grid.steps),
    };
    let tol = cfg.tol("w1");
    let rep = reverse_sample_gibbs(&l, cfg.beta, cfg.gamma, &opts)?;
    let mut table = CsvTable::new(["check", "t", "axis", "w1"]);
    let mut checks = Vec::new();
    for (a, w) in rep.w1.iter().enumerate() {
        table.push(vec!["reverse-sample".into(), f(0.0), a.to_string(), f(*w)]);
        checks.push(Check::at_most(format!("reverse_sample_w1_axis{a}"), *w, tol));
    }
    if d == 1 {
        let gibbs = GibbsDensity::new(l.clone(), cfg.beta)?;
        let grid = bridge_grid(&gibbs, cfg.gamma, cfg.grid.npts.unwrap_or_else(|| default_bridge_points(1)))?;
        let rho0 = gibbs_on_grid(&gibbs, &grid);
        let sol = solve_problem1(&rho0, &grid, cfg.beta, cfg.gamma, cfg.grid.steps)?;
        let k = cfg.mc.steps.max(4);
        let marks = [k / 4, k / 2, k];
        let checks_t = marginal_agreement(&sol, k, cfg.mc.paths, crate::rng::sub_seed(cfg.mc.seed, 1), &marks)?;
        for c in &checks_t {
            table.push(vec!["forward-marginal".into(), f(c.time), "0".into(), f(c.w1)]);
            checks.push(Check::at_most(format!("forward_marginal_w1_t{}", f(c.time)), c.w1, tol));
        }
        // histogram of the reverse samples against the Gibbs density
        let dom = gibbs.domain();
        let bins = 64;
        let (lo, hi) = (dom.lo[0], dom.hi[0]);
        let w = (hi - lo) / bins as f64;
        let mut counts = vec![0usize; bins];
        for x in &rep.samples {
            if *x >= lo && *x < hi {
                counts[(((x - lo) / w) as usize).min(bins - 1)] += 1;
            }
        }
        let mut hist = CsvTable::new(["center", "sample_density", "gibbs_density"]);
        for (i, c) in counts.iter().enumerate() {
            let x = lo + (i as f64 + 0.5) * w;
            hist.push(vec![f(x), f(*c as f64 / (rep.samples.len() as f64 * w)), f(gibbs.density(&[x]))]);
        }
        out.csv("bridge_hist.csv", &hist)?;
    }
    out.csv("bridge.csv", &table)?;
    Ok(checks)
}

fn theorem(cfg: &RunConfig, out: &mut Outputs) -> Result<Vec<Check>> {
    let l = cfg.build_landscape()?;
    if l.dim() > 2 {
        return Err(Error::Config(format!("verify-theorem needs a 1-D or 2-D landscape, `{}` is {}-D", l.name(), l.dim())));
    }
    let opts = TheoremOptions {
        rollouts: cfg.mc.paths,
        steps: cfg.mc.steps,
        seed: cfg.mc.seed,
        grid_points: cfg.grid.npts,
        pde_steps: cfg.grid.steps,
        scheme: HjbScheme::ColeHopf,
    };
    if opts.rollouts < crate::control::MIN_ROLLOUTS {
        return Err(Error::Config(format!("`mc.paths` must be at least {} for value estimates", crate::control::MIN_ROLLOUTS)));
    }
    let setup = TheoremSetup::new(&l, cfg.beta, cfg.gamma, &opts)?;
    let report = verify_theorem(&setup, &default_probes(l.dim(), cfg.gamma), &opts);
    let mut header: Vec<String> = if l.dim() == 1 { vec!["x".into()] } else { (0..l.dim()).map(|a| format!("x{a}")).collect() };
    header.extend(["t", "value_over_beta", "se", "u_quadrature", "u_pde", "z_quadrature", "z_pde", "pass"].map(String::from));
    let mut table = CsvTable::new(header);
    for r in &report.rows {
        let mut row: Vec<String> = r.x.iter().map(|v| f(*v)).collect();
        row.extend([f(r.t), f(r.value), f(r.std_error), f(r.u_quadrature), f(r.u_pde), f(r.z_quadrature), f(r.z_pde), r.pass.to_string()]);
        table.push(row);
    }
    out.csv("theorem.csv", &table)?;
    Ok(vec![Check::at_least("probe_pass_fraction", report.pass_fraction, cfg.tol("pass_fraction"))])
}

fn push_run(table: &mut CsvTable, run: &OptimizerRun) {
    for (k, x) in run.xs.iter().enumerate() {
        let mut row = vec![run.method.name().to_string(), k.to_string()];
        row.extend(x.iter().map(|v| f(*v)));
        row.push(f(run.f[k]));
        row.push(run.f_gamma.as_ref().map(|g| f(g[k])).unwrap_or_default());
        row.push(run.gammas.get(k).map(|g| f(*g)).unwrap_or_default());
        table.push(row);
    }
}

fn optimize(cfg: &RunConfig, out: &mut Outputs) -> Result<Vec<Check>> {
    let l = cfg.build_landscape()?;
    let d = l.dim();
    let o = &cfg.optimizer;
    let x0 = o.x0.clone().unwrap_or_else(|| vec![2.0; d]);
    let gd = gd_run(&l, &x0, o.eta, o.iters)?;
    let le = local_entropy_run(
        &l,
        &x0,
        &LocalEntropyOptions {
            beta: cfg.beta,
            schedule: GammaSchedule::Geometric { gamma0: o.gamma0, rate: o.decay },
            eta: o.eta,
            iters: o.iters,
            inner_steps: cfg.mc.steps.max(100) * 10,
            seed: cfg.mc.seed,
        },
    )?;
    let mut header = vec!["method".to_string(), "k".to_string()];
    header.extend((0..d).map(|a| format!("x{a}")));
    header.extend(["f", "f_gamma", "gamma"].map(String::from));
    let mut table = CsvTable::new(header);
    push_run(&mut table, &gd);
    push_run(&mut table, &le);
    if l.has_components() {
        let sgd = sgd_run(&GradientNoiseModel::new(l.clone(), 1, o.eta)?, &x0, o.iters, cfg.mc.seed)?;
        push_run(&mut table, &sgd);
    }
    out.csv("optimize.csv", &table)?;

    let fmin = l.min_energy();
    let gap = le.final_energy() - fmin;
    let mut checks = vec![
        Check::at_most("local_entropy_minus_gd_final_f", le.final_energy() - gd.final_energy(), 1e-9),
        Check::at_most("local_entropy_gap_to_global_min", gap, cfg.tol("relative_gap") * fmin.abs() + 1e-6),
    ];
    if d == 1 {
        let xs = census_nodes(&l, cfg.beta, cfg.grid.npts.unwrap_or(2001))?;
        let mut census = CsvTable::new(["gamma", "rank", "location", "value", "curvature", "width"]);
        let mut counts = Vec::new();
        for &g in &o.census_gammas {
            let mins = minima_census(&xs, &smoothed_profile(&l, cfg.beta, g, &xs)?)?;
            for (r, m) in mins.iter().enumerate() {
                census.push(vec![f(g), r.to_string(), f(m.location), f(m.value), f(m.curvature), f(m.width)]);
            }
            counts.push((g, mins.len()));
        }
        out.csv("census.csv", &census)?;
        let mut sorted = counts.clone();
        sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite gammas"));
        let increases = sorted.windows(2).filter(|w| w[1].1 > w[0].1).count();
        checks.push(Check::at_most("census_count_increases", increases as f64, 0.0));
    }
    Ok(checks)
}
