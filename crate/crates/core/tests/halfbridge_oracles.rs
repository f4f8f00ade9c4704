//! Half-bridge drifts against Gaussian closed forms and empirical drift
//! estimates.

use hbl_core::halfbridge::{backward_drift_q1, bridge_grid, forward_drift_q2, gibbs_on_grid, solve_problem1, solve_problem2};
use hbl_core::sde::{estimate_drifts, simulate_forward, simulate_reverse, BinSpec, SimulationPlan};
use hbl_core::stats::GridSampler;
use hbl_core::{EnergyLandscape, GibbsDensity, HalfBridgeSolution};

fn gaussian_problem(which: u8, beta: f64) -> HalfBridgeSolution {
    let gibbs = GibbsDensity::new(EnergyLandscape::quadratic(1), beta).unwrap();
    let grid = bridge_grid(&gibbs, 1.0, 1601).unwrap();
    let rho = gibbs_on_grid(&gibbs, &grid);
    if which == 1 {
        solve_problem1(&rho, &grid, beta, 1.0, 400).unwrap()
    } else {
        solve_problem2(&rho, &grid, beta, 1.0, 400).unwrap()
    }
}

#[test]
fn problem1_backward_drift_is_x_over_one_plus_t() {
    for beta in [1.0, 2.0] {
        let sol = gaussian_problem(1, beta);
        for t in [0.25, 0.5, 1.0] {
            for x in [-2.0, -0.5, 0.5, 1.5] {
                let b = backward_drift_q1(&sol, &[x], t).unwrap()[0];
                let exact = x / (1.0 + t);
                assert!(((b - exact) / exact).abs() <= 1e-3, "beta {beta} t {t} x {x}: {b}");
            }
            assert!(backward_drift_q1(&sol, &[0.0], t).unwrap()[0].abs() < 1e-12);
        }
    }
}

#[test]
fn problem2_forward_drift_is_minus_x_over_remaining_time() {
    let sol = gaussian_problem(2, 1.0);
    for t in [0.0, 0.5, 1.0] {
        for x in [-1.5, 0.5, 2.0] {
            let b = forward_drift_q2(&sol, &[x], t).unwrap()[0];
            let exact = -x / (2.0 - t);
            assert!(((b - exact) / exact).abs() <= 1e-3, "t {t} x {x}: {b}");
        }
        assert!(forward_drift_q2(&sol, &[0.0], t).unwrap()[0].abs() < 1e-12);
    }
    // symmetric final law keeps every slice symmetric
    let n = sol.density.grid.len();
    for slice in &sol.density.values {
        assert!((0..n).all(|j| (slice[j] - slice[n - 1 - j]).abs() <= 1e-12 * slice[n / 2]));
    }
}

#[test]
fn problem1_drift_matches_empirical_backward_drift() {
    let gibbs = GibbsDensity::new(EnergyLandscape::double_well(), 2.0).unwrap();
    let grid = bridge_grid(&gibbs, 1.0, 1601).unwrap();
    let sol = solve_problem1(&gibbs_on_grid(&gibbs, &grid), &grid, 2.0, 1.0, 400).unwrap();
    let init = GridSampler::new(&grid, &sol.marginal).unwrap();
    let k = 50;
    let ens = simulate_forward(&sol.zero_diffusion().unwrap(), &init, &SimulationPlan::new(100, 100_000, 21).recording(vec![k - 1, k, k + 1])).unwrap();
    let est = estimate_drifts(&ens, k, &BinSpec::bulk(&ens.marginal(k, 0).unwrap())).unwrap();
    let ok = est
        .bins
        .iter()
        .filter(|b| (b.backward - backward_drift_q1(&sol, &[b.center], est.time).unwrap()[0]).abs() <= 3.0 * b.backward_se)
        .count();
    assert!(ok as f64 >= 0.9 * est.bins.len() as f64, "{ok}/{}", est.bins.len());
}

#[test]
fn problem2_drift_matches_empirical_forward_drift() {
    let gibbs = GibbsDensity::new(EnergyLandscape::double_well(), 2.0).unwrap();
    let grid = bridge_grid(&gibbs, 1.0, 1601).unwrap();
    let sol = solve_problem2(&gibbs_on_grid(&gibbs, &grid), &grid, 2.0, 1.0, 400).unwrap();
    let fin = GridSampler::new(&grid, &sol.marginal).unwrap();
    let k = 50;
    let ens = simulate_reverse(&sol.zero_diffusion().unwrap(), &fin, &SimulationPlan::new(100, 100_000, 22).recording(vec![k - 1, k, k + 1])).unwrap();
    let est = estimate_drifts(&ens, k, &BinSpec::bulk(&ens.marginal(k, 0).unwrap())).unwrap();
    let ok = est
        .bins
        .iter()
        .filter(|b| (b.forward - forward_drift_q2(&sol, &[b.center], est.time).unwrap()[0]).abs() <= 3.0 * b.forward_se)
        .count();
    assert!(ok as f64 >= 0.9 * est.bins.len() as f64, "{ok}/{}", est.bins.len());
}

#[test]
fn drift_accessors_check_the_problem() {
    let p1 = gaussian_problem(1, 1.0);
    let p2 = gaussian_problem(2, 1.0);
    assert!(forward_drift_q2(&p1, &[0.0], 0.5).is_err());
    assert!(backward_drift_q1(&p2, &[0.0], 0.5).is_err());
    assert!(backward_drift_q1(&p1, &[0.0], 0.0).is_err());
}
