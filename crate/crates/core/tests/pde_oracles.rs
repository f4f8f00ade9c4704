//! Heat flow and viscous HJB solutions on every built-in landscape.

use std::collections::BTreeMap;

use hbl_core::halfbridge::{bridge_grid, gibbs_on_grid};
use hbl_core::pde::{bulk_linf, cole_hopf, solve_heat, solve_hjb, HjbScheme, SpatialGrid};
use hbl_core::smoothing::{local_entropy, HeatKernelParams};
use hbl_core::{EnergyLandscape, GibbsDensity};

fn builtin(dim: usize) -> Vec<EnergyLandscape> {
    let d = BTreeMap::from([("dim".to_string(), dim as f64)]);
    let none = BTreeMap::new();
    let specs: Vec<(&str, &BTreeMap<String, f64>)> = if dim == 1 {
        vec![
            ("quadratic", &d),
            ("double-well", &none),
            ("rugged", &none),
            ("constant", &d),
            ("quadratic-family", &none),
            ("least-squares", &d),
        ]
    } else {
        vec![("quadratic", &d), ("double-well-2d", &none), ("constant", &d), ("least-squares", &d)]
    };
    specs.into_iter().map(|(n, p)| EnergyLandscape::from_name(n, p).unwrap_or_else(|e| panic!("{n}: {e}"))).collect()
}

/// Bulk discrepancy at `t = γ` between the Cole-Hopf transform of heat flow
/// and the directly integrated HJB equation, for each `(β, γ)` pair.
fn equivalence_gaps(dim: usize, npts: usize, steps: usize) -> Vec<(String, f64)> {
    let mut out = Vec::new();
    for l in builtin(dim) {
        assert_eq!(l.dim(), dim, "{}", l.name());
        for beta in [1.0, 2.0] {
            for gamma in [0.5, 1.0] {
                let gibbs = GibbsDensity::new(l.clone(), beta).unwrap();
                let grid = SpatialGrid::over(gibbs.domain(), npts).unwrap();
                let rho = solve_heat(&gibbs_on_grid(&gibbs, &grid), &grid, beta, gamma, steps).unwrap();
                let u_heat = cole_hopf(&rho, gibbs.c_beta());
                let u0 = grid.sample(|x| if l.is_box_indicator() { 0.0 } else { l.energy(x) });
                let u = solve_hjb(&u0, &grid, beta, gamma, steps, HjbScheme::Direct { substeps: None }).unwrap();
                out.push((format!("{} beta {beta} gamma {gamma}", l.name()), bulk_linf(&u_heat, &u, steps)));
            }
        }
    }
    out
}

fn assert_within(gaps: &[(String, f64)], tol: f64) {
    let bad: Vec<_> = gaps.iter().filter(|(_, d)| !(*d <= tol)).collect();
    assert!(bad.is_empty(), "above {tol:e}: {bad:?}");
}

#[test]
fn cole_hopf_of_heat_flow_solves_hjb_on_every_1d_landscape() {
    assert_within(&equivalence_gaps(1, 801, 400), 5e-3);
}

// TODO: the 2-D walls of the cubic box are not resolved to this bound at
// 161 nodes per axis; needs a graded grid or a per-axis box before it can run by default.
#[test]
#[ignore = "2-D tails on the cubic box are not resolved to 5e-3; run with --ignored"]
fn cole_hopf_of_heat_flow_solves_hjb_on_every_2d_landscape() {
    let gaps = equivalence_gaps(2, 161, 1600);
    for (case, d) in &gaps {
        println!("{case}: {d:.2e}");
    }
    assert_within(&gaps, 5e-3);
}

#[test]
fn quadrature_matches_pde_at_final_time() {
    for l in builtin(1) {
        if l.is_box_indicator() {
            continue;
        }
        for (beta, gamma) in [(1.0, 0.5), (2.0, 1.0)] {
            let gibbs = GibbsDensity::new(l.clone(), beta).unwrap();
            let grid = bridge_grid(&gibbs, gamma, 1601).unwrap();
            let u = cole_hopf(&solve_heat(&gibbs_on_grid(&gibbs, &grid), &grid, beta, gamma, 400).unwrap(), gibbs.c_beta());
            let p = HeatKernelParams::new(gamma, beta, 1).unwrap();
            let dom = gibbs.domain();
            let mut worst: f64 = 0.0;
            for x in hbl_core::numerics::linspace(dom.lo[0] + 1.0, dom.hi[0] - 1.0, 121) {
                let uq = local_entropy(&p, &l, &[x]).unwrap();
                worst = worst.max((uq - u.checked_at(&[x], gamma).unwrap()).abs());
            }
            assert!(worst <= 5e-3, "{} beta {beta} gamma {gamma}: {worst}", l.name());
        }
    }
}

#[test]
fn double_well_density_keeps_mass_and_sign() {
    let gibbs = GibbsDensity::new(EnergyLandscape::double_well(), 1.0).unwrap();
    let grid = SpatialGrid::over(gibbs.domain(), 801).unwrap();
    let rho = solve_heat(&gibbs_on_grid(&gibbs, &grid), &grid, 1.0, 1.0, 200).unwrap();
    let m0 = rho.mass(0);
    for k in 0..rho.times.len() {
        assert!((rho.mass(k) - m0).abs() <= 1e-6);
        assert!(rho.values[k].iter().all(|v| *v >= 0.0));
    }
}
