use std::f64::consts::PI;

use cbram::params::{load_preset, Overrides, SampleName, SamplePreset};
use cbram::pde::fields::{
    assemble_conductivity, device_current, edge_conductances, plane_currents, solve_potential, ElementMap,
};
use cbram::pde::flux::filament_rate;
use cbram::pde::heat::{solve_heat, HeatMethod, HeatProblem};
use cbram::pde::{AxiGrid, PdeModel};
use cbram::Error;

fn preset(name: SampleName) -> SamplePreset {
    load_preset(name, &Overrides::new()).unwrap()
}

fn uniform(grid: &AxiGrid, v: f64) -> ElementMap {
    ElementMap { values: vec![v; grid.n_elements()] }
}

#[test]
fn uniform_slab_has_linear_potential() {
    let g = AxiGrid::new(17, 33, 100e-9, 40e-9).unwrap();
    let sigma = uniform(&g, 1e-3);
    let psi = solve_potential(&g, &sigma, 0.2, 0.0).unwrap();
    for j in 0..g.n_z {
        for i in [0, 8, 16] {
            let expect = 0.2 * g.z(j) / g.height;
            assert!((psi[g.node(i, j)] - expect).abs() < 1e-12);
        }
    }
    let field = (psi[g.node(0, 1)] - psi[g.node(0, 0)]) / g.dz;
    assert!((field - 5e6).abs() < 1e-6 * 5e6);
}

#[test]
fn uniform_slab_current_is_ohmic() {
    let g = AxiGrid::new(16, 16, 100e-9, 40e-9).unwrap();
    let sigma = uniform(&g, 2.5);
    let psi = solve_potential(&g, &sigma, 0.3, 0.0).unwrap();
    let i = device_current(&g, &psi, &sigma).unwrap();
    let expect = 2.5 * PI * g.radius * g.radius * 0.3 / g.height;
    assert!((i - expect).abs() < 1e-10 * expect);
}

#[test]
fn current_is_continuous_through_a_cone() {
    for name in [SampleName::NPs, SampleName::R] {
        let p = preset(name);
        let m = PdeModel::new(p.clone(), 24, 40).unwrap();
        let phi = m.cone_profile(2e-9);
        let sigma = assemble_conductivity(&m.grid, &phi, &p.geometry, &p.material);
        let psi = solve_potential(&m.grid, &sigma, 0.2, 0.0).unwrap();
        let c = plane_currents(&m.grid, &edge_conductances(&m.grid, &sigma), &psi);
        assert!(c.mismatch() < 1e-6, "{name:?}: {}", c.mismatch());
    }
}

#[test]
fn slender_cone_resistance_matches_frustum_formula() {
    // the 1-D frustum formula only holds for a small opening angle
    let mut p = preset(SampleName::R);
    p.geometry.phi_te = 10e-9;
    let m = PdeModel::new(p.clone(), 48, 161).unwrap();
    let tip = 4e-9;
    let g_pde = m.conductance(&m.cone_profile(tip)).unwrap();
    let r_exact = 4.0 * p.geometry.t_ox / (p.material.sigma_cf * PI * tip * p.geometry.phi_te);
    assert!((1.0 / g_pde - r_exact).abs() < 0.03 * r_exact, "{} vs {}", 1.0 / g_pde, r_exact);
}

#[test]
fn steady_heat_in_a_slab_is_parabolic() {
    let g = AxiGrid::new(16, 41, 100e-9, 40e-9).unwrap();
    let k = 1.4;
    let q = 1e16; // W/m³
    let kth = uniform(&g, k);
    let mut src = vec![0.0; g.len()];
    for j in 0..g.n_z {
        for i in 0..g.n_r {
            src[g.node(i, j)] = q * g.node_volume(i, j);
        }
    }
    let t_amb = 300.0;
    let problem = HeatProblem { kth: &kth, heat_capacity: 2e6, sources: &src, t_amb };
    let t = solve_heat(&g, &problem, &vec![t_amb; g.len()], f64::INFINITY, HeatMethod::Implicit).unwrap();
    let l = g.height;
    for j in 0..g.n_z {
        let z = g.z(j);
        let exact = t_amb + q * z * (l - z) / (2.0 * k);
        let rise = exact - t_amb;
        for i in [0, 7, 15] {
            let got = t[g.node(i, j)];
            if rise > 0.0 {
                assert!(((got - t_amb) - rise).abs() < 0.01 * rise, "j={j}: {got} vs {exact}");
            }
        }
    }
}

#[test]
fn adiabatic_cell_heats_at_q_over_rho_cp() {
    let g = AxiGrid::new(16, 16, 100e-9, 40e-9).unwrap();
    let kth = uniform(&g, 1.4);
    let rho_cp = 2650.0 * 740.0;
    let q = 1e15;
    let src: Vec<f64> = (0..g.len()).map(|k| q * g.node_volume(k % g.n_r, k / g.n_r)).collect();
    let problem = HeatProblem { kth: &kth, heat_capacity: rho_cp, sources: &src, t_amb: 300.0 };
    let dt = 1e-13;
    let t = solve_heat(&g, &problem, &vec![300.0; g.len()], dt, HeatMethod::Explicit).unwrap();
    // interior rows away from the isothermal electrodes see no conduction yet
    let node = g.node(5, 8);
    assert!((t[node] - 300.0 - q * dt / rho_cp).abs() < 1e-9 * q * dt / rho_cp);
}

#[test]
fn explicit_heat_step_beyond_bound_is_unstable() {
    let g = AxiGrid::new(16, 16, 100e-9, 40e-9).unwrap();
    let kth = uniform(&g, 10.0);
    let src = vec![0.0; g.len()];
    let problem = HeatProblem { kth: &kth, heat_capacity: 2e6, sources: &src, t_amb: 300.0 };
    let r = solve_heat(&g, &problem, &vec![300.0; g.len()], 1e-6, HeatMethod::Explicit);
    assert!(matches!(r, Err(Error::Unstable { .. })));
}

#[test]
fn one_step_agrees_with_lumped_explicit_euler() {
    let p = preset(SampleName::NPs);
    let m = PdeModel::new(p.clone(), 24, 48).unwrap();
    let tip = 1.5e-9;
    let state = m.initial_state(m.cone_profile(tip)).unwrap();
    let v = 0.45;
    let dt = 5e-3;
    let (next, rep) = m.self_consistent_step(&state, v, None, dt).unwrap();
    assert!(rep.iterations >= 1);
    // the tip sits on the isothermal electrode and sees the full drop
    let floor = p.conduction.phi_th_min;
    let rate = filament_rate(tip.max(floor), v, m.t_amb(), (0.0, 0.0), &p.material).total;
    let oracle = dt * rate;
    let got = next.phi[0] - tip;
    assert!(oracle > 0.0);
    assert!((got - oracle).abs() < 0.15 * oracle, "{got} vs {oracle}");
}

#[test]
fn pristine_neck_resistance_is_grid_independent() {
    let p = preset(SampleName::NPs);
    let coarse = PdeModel::new(p.clone(), 17, 33).unwrap();
    let fine = PdeModel::new(p, 33, 65).unwrap();
    let gc = coarse.conductance(&coarse.pristine_profile()).unwrap();
    let gf = fine.conductance(&fine.pristine_profile()).unwrap();
    assert!((gc - gf).abs() < 0.02 * gf, "{gc} vs {gf}");
}
