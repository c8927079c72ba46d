//! Transient heat conduction with Joule sources and isothermal electrodes.

use serde::{Deserialize, Serialize};

use super::fields::{edge_conductances, solve_dirichlet, ElementMap};
use super::grid::AxiGrid;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HeatMethod {
    /// Backward Euler; unconditionally stable.
    Implicit,
    /// Forward Euler; refuses steps above the stability bound.
    Explicit,
}

/// Heat step input: conductivity map, volumetric heat capacity ρ·c_p
/// (J/m³K) and node sources (W).
#[derive(Debug, Clone, Copy)]
pub struct HeatProblem<'a> {
    pub kth: &'a ElementMap,
    pub heat_capacity: f64,
    pub sources: &'a [f64],
    pub t_amb: f64,
}

fn node_capacities(grid: &AxiGrid, rho_cp: f64) -> Vec<f64> {
    let mut c = vec![0.0; grid.len()];
    for j in 0..grid.n_z {
        for i in 0..grid.n_r {
            c[grid.node(i, j)] = rho_cp * grid.node_volume(i, j);
        }
    }
    c
}

/// Largest stable forward-Euler step: min over interior nodes of C / ΣG.
pub fn explicit_stability_bound(grid: &AxiGrid, kth: &ElementMap, rho_cp: f64) -> f64 {
    let edges = edge_conductances(grid, kth);
    let caps = node_capacities(grid, rho_cp);
    let mut gsum = vec![0.0; grid.len()];
    let n_r = grid.n_r;
    for j in 0..grid.n_z {
        for i in 0..n_r - 1 {
            let g = edges.radial[j * (n_r - 1) + i];
            gsum[grid.node(i, j)] += g;
            gsum[grid.node(i + 1, j)] += g;
        }
    }
    for j in 0..grid.n_z - 1 {
        for i in 0..n_r {
            let g = edges.axial[j * n_r + i];
            gsum[grid.node(i, j)] += g;
            gsum[grid.node(i, j + 1)] += g;
        }
    }
    let mut bound = f64::INFINITY;
    for j in 1..grid.n_z - 1 {
        for i in 0..n_r {
            let k = grid.node(i, j);
            bound = bound.min(caps[k] / gsum[k]);
        }
    }
    bound
}

/// Advances the temperature by `dt`. `dt = ∞` with the implicit method gives
/// the steady state.
pub fn solve_heat(grid: &AxiGrid, problem: &HeatProblem, t_prev: &[f64], dt: f64, method: HeatMethod) -> Result<Vec<f64>> {
    if !(dt > 0.0) {
        return Err(Error::Validation(format!("heat step dt must be positive, got {dt}")));
    }
    let edges = edge_conductances(grid, problem.kth);
    match method {
        HeatMethod::Implicit => {
            let caps = node_capacities(grid, problem.heat_capacity);
            let diag: Vec<f64> = caps.iter().map(|c| c / dt).collect();
            let rhs: Vec<f64> = problem
                .sources
                .iter()
                .zip(&diag)
                .zip(t_prev)
                .map(|((s, d), t)| s + d * t)
                .collect();
            solve_dirichlet(grid, &edges, problem.t_amb, problem.t_amb, Some(&diag), Some(&rhs))
        }
        HeatMethod::Explicit => {
            let bound = explicit_stability_bound(grid, problem.kth, problem.heat_capacity);
            if dt > bound {
                return Err(Error::Unstable { dt, bound });
            }
            let caps = node_capacities(grid, problem.heat_capacity);
            let n_r = grid.n_r;
            let mut flow = problem.sources.to_vec();
            for j in 0..grid.n_z {
                for i in 0..n_r - 1 {
                    let (p, q) = (grid.node(i, j), grid.node(i + 1, j));
                    let f = edges.radial[j * (n_r - 1) + i] * (t_prev[q] - t_prev[p]);
                    flow[p] += f;
                    flow[q] -= f;
                }
            }
            for j in 0..grid.n_z - 1 {
                for i in 0..n_r {
                    let (p, q) = (grid.node(i, j), grid.node(i, j + 1));
                    let f = edges.axial[j * n_r + i] * (t_prev[q] - t_prev[p]);
                    flow[p] += f;
                    flow[q] -= f;
                }
            }
            let mut t = t_prev.to_vec();
            for j in 0..grid.n_z {
                for i in 0..n_r {
                    let k = grid.node(i, j);
                    t[k] = if j == 0 || j + 1 == grid.n_z { problem.t_amb } else { t_prev[k] + dt * flow[k] / caps[k] };
                }
            }
            Ok(t)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform(grid: &AxiGrid, k: f64) -> ElementMap {
        ElementMap { values: vec![k; grid.n_elements()] }
    }

    #[test]
    fn explicit_step_above_bound_is_refused() {
        let g = AxiGrid::new(16, 16, 1e-7, 4e-8).unwrap();
        let kth = uniform(&g, 1.4);
        let bound = explicit_stability_bound(&g, &kth, 2e6);
        let q = vec![0.0; g.len()];
        let p = HeatProblem { kth: &kth, heat_capacity: 2e6, sources: &q, t_amb: 300.0 };
        let t0 = vec![300.0; g.len()];
        assert!(matches!(solve_heat(&g, &p, &t0, 2.0 * bound, HeatMethod::Explicit), Err(Error::Unstable { .. })));
        assert!(solve_heat(&g, &p, &t0, 0.5 * bound, HeatMethod::Explicit).is_ok());
    }
}
