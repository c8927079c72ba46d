//! Element property maps, edge conductances and the two elliptic solves
//! (potential and temperature share the same discrete operator).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::grid::AxiGrid;
use super::linalg::BandedSpd;
use crate::error::{Error, Result};
use crate::params::{GeometryParams, MaterialParams};

/// Current continuity tolerance between the two electrode planes.
pub const CONTINUITY_TOL: f64 = 1e-6;
/// Relative residual accepted from the direct solve.
pub const RESIDUAL_TOL: f64 = 1e-8;

/// Node fields of the simulation at one instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldState {
    /// Electric potential per node (V).
    pub psi: Vec<f64>,
    /// Temperature per node (K).
    pub temp: Vec<f64>,
    /// Filament diameter per z-node (m).
    pub phi: Vec<f64>,
    /// Simulated time (s).
    pub t_now: f64,
}

impl FieldState {
    pub fn new(grid: &AxiGrid, phi: Vec<f64>, t_amb: f64) -> Result<Self> {
        if phi.len() != grid.n_z {
            return Err(Error::Validation(format!("phi has {} entries, grid has {} rows", phi.len(), grid.n_z)));
        }
        Ok(Self { psi: vec![0.0; grid.len()], temp: vec![t_amb; grid.len()], phi, t_now: 0.0 })
    }

    pub fn t_max(&self) -> f64 {
        self.temp.iter().copied().fold(f64::MIN, f64::max)
    }
}

/// A scalar per element, e.g. σ or k_th.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementMap {
    pub values: Vec<f64>,
}

/// Effective diameter of the filament in element row j. Each node owns
/// its control volume, so the row is the series connection of two
/// half-rows and the effective area is the harmonic mean of the two.
pub fn element_diameter(phi: &[f64], j: usize) -> f64 {
    let (a, b) = (phi[j], phi[j + 1]);
    (2.0 / (1.0 / (a * a) + 1.0 / (b * b))).sqrt()
}

/// Fraction of the annulus [r_i, r_{i+1}] covered by a disk of radius `a`.
pub fn covered_fraction(grid: &AxiGrid, i: usize, a: f64) -> f64 {
    let (r0, r1) = (grid.r(i), grid.r(i + 1));
    if a <= r0 {
        return 0.0;
    }
    let top = a.min(r1);
    ((top * top - r0 * r0) / (r1 * r1 - r0 * r0)).clamp(0.0, 1.0)
}

fn blend(grid: &AxiGrid, phi: &[f64], inside: f64, outside: impl Fn(usize) -> f64) -> ElementMap {
    let mut values = vec![0.0; grid.n_elements()];
    for j in 0..grid.n_z - 1 {
        let a = 0.5 * element_diameter(phi, j);
        let out = outside(j);
        for i in 0..grid.n_r - 1 {
            let f = covered_fraction(grid, i, a);
            values[grid.element(i, j)] = f * inside + (1.0 - f) * out;
        }
    }
    ElementMap { values }
}

/// Electrical conductivity per element. Outside the filament the oxide is
/// enriched by the nanoparticle plane directly under the top electrode,
/// weighted by how much of each element row that plane overlaps.
pub fn assemble_conductivity(grid: &AxiGrid, phi: &[f64], geom: &GeometryParams, mat: &MaterialParams) -> ElementMap {
    let fill = geom.np_fill_fraction();
    let plane_lo = grid.height - geom.np_diameter;
    blend(grid, phi, mat.sigma_cf, |j| {
        if fill == 0.0 {
            return mat.sigma_ox;
        }
        let (z0, z1) = (grid.z(j), grid.z(j + 1));
        let overlap = ((z1.min(grid.height) - z0.max(plane_lo)) / grid.dz).clamp(0.0, 1.0);
        mat.sigma_ox + overlap * fill * (mat.sigma_np - mat.sigma_ox)
    })
}

pub fn assemble_thermal_conductivity(grid: &AxiGrid, phi: &[f64], mat: &MaterialParams) -> ElementMap {
    blend(grid, phi, mat.kth_cf, |_| mat.kth_ox)
}

/// Conductances of the grid edges for an element map.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeConductances {
    /// Edge (i, j)–(i+1, j), indexed j·(n_r−1) + i.
    pub radial: Vec<f64>,
    /// Edge (i, j)–(i, j+1), indexed j·n_r + i.
    pub axial: Vec<f64>,
}

pub fn edge_conductances(grid: &AxiGrid, map: &ElementMap) -> EdgeConductances {
    let (n_r, n_z) = (grid.n_r, grid.n_z);
    let mut radial = vec![0.0; (n_r - 1) * n_z];
    for j in 0..n_z {
        for i in 0..n_r - 1 {
            let mut s = 0.0;
            if j > 0 {
                s += map.values[grid.element(i, j - 1)];
            }
            if j + 1 < n_z {
                s += map.values[grid.element(i, j)];
            }
            let r_face = grid.r(i) + 0.5 * grid.dr;
            radial[j * (n_r - 1) + i] = 2.0 * PI * r_face * 0.5 * grid.dz * s / grid.dr;
        }
    }
    let mut axial = vec![0.0; n_r * (n_z - 1)];
    for j in 0..n_z - 1 {
        for i in 0..n_r {
            let (inner, outer) = grid.node_ring_parts(i);
            let mut g = 0.0;
            if i > 0 {
                g += map.values[grid.element(i - 1, j)] * inner;
            }
            if i + 1 < n_r {
                g += map.values[grid.element(i, j)] * outer;
            }
            axial[j * n_r + i] = g / grid.dz;
        }
    }
    EdgeConductances { radial, axial }
}

/// Solves Σ G (u_q − u_p) + diag_p (rhs_p/diag_p − u_p) = 0 on interior rows
/// with u fixed to `bottom` on row 0 and `top` on the last row.
///
/// `capacity` adds a diagonal term c_p and `source` a right-hand side s_p
/// (both per node, ignored on the electrode rows).
pub fn solve_dirichlet(
    grid: &AxiGrid,
    edges: &EdgeConductances,
    bottom: f64,
    top: f64,
    capacity: Option<&[f64]>,
    source: Option<&[f64]>,
) -> Result<Vec<f64>> {
    let (n_r, n_z) = (grid.n_r, grid.n_z);
    let n = n_r * (n_z - 2);
    let unknown = |j: usize| j > 0 && j + 1 < n_z;
    let idx = |i: usize, j: usize| (j - 1) * n_r + i;
    let fixed = |j: usize| if j == 0 { bottom } else { top };
    let mut a = BandedSpd::zeros(n, n_r);
    let mut rhs = vec![0.0; n];
    let couple = |a: &mut BandedSpd, rhs: &mut [f64], p: (usize, usize), q: (usize, usize), g: f64| {
        match (unknown(p.1), unknown(q.1)) {
            (true, true) => {
                let (ip, iq) = (idx(p.0, p.1), idx(q.0, q.1));
                a.add(ip, ip, g);
                a.add(iq, iq, g);
                a.add(ip, iq, -g);
            }
            (true, false) => {
                let ip = idx(p.0, p.1);
                a.add(ip, ip, g);
                rhs[ip] += g * fixed(q.1);
            }
            (false, true) => {
                let iq = idx(q.0, q.1);
                a.add(iq, iq, g);
                rhs[iq] += g * fixed(p.1);
            }
            (false, false) => {}
        }
    };
    for j in 0..n_z {
        for i in 0..n_r - 1 {
            couple(&mut a, &mut rhs, (i, j), (i + 1, j), edges.radial[j * (n_r - 1) + i]);
        }
    }
    for j in 0..n_z - 1 {
        for i in 0..n_r {
            couple(&mut a, &mut rhs, (i, j), (i, j + 1), edges.axial[j * n_r + i]);
        }
    }
    for j in 1..n_z - 1 {
        for i in 0..n_r {
            let k = idx(i, j);
            let node = grid.node(i, j);
            if let Some(c) = capacity {
                a.add(k, k, c[node]);
            }
            if let Some(s) = source {
                rhs[k] += s[node];
            }
        }
    }
    let chol = a.clone().factor()?;
    let mut x = chol.solve(&rhs);
    // one round of iterative refinement, then check the residual
    let r: Vec<f64> = a.mul(&x).iter().zip(&rhs).map(|(ax, b)| b - ax).collect();
    let dx = chol.solve(&r);
    for (xi, d) in x.iter_mut().zip(&dx) {
        *xi += d;
    }
    let res = a.mul(&x).iter().zip(&rhs).map(|(ax, b)| (b - ax).abs()).fold(0.0, f64::max);
    let scale = rhs.iter().map(|b| b.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    if res > RESIDUAL_TOL * scale {
        return Err(Error::NonConvergence { solver: "linear solve", iterations: 2, residual: res / scale });
    }
    let mut full = vec![0.0; grid.len()];
    for j in 0..n_z {
        for i in 0..n_r {
            full[grid.node(i, j)] = if unknown(j) { x[idx(i, j)] } else { fixed(j) };
        }
    }
    Ok(full)
}

/// Potential with the top electrode at `v_top` and the bottom at `v_bottom`.
pub fn solve_potential(grid: &AxiGrid, sigma: &ElementMap, v_top: f64, v_bottom: f64) -> Result<Vec<f64>> {
    let edges = edge_conductances(grid, sigma);
    solve_dirichlet(grid, &edges, v_bottom, v_top, None, None)
}

/// Currents (A, flowing top → bottom) through the two electrode planes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneCurrents {
    pub bottom: f64,
    pub top: f64,
}

impl PlaneCurrents {
    pub fn mismatch(&self) -> f64 {
        let scale = self.bottom.abs().max(self.top.abs());
        if scale == 0.0 {
            0.0
        } else {
            (self.bottom - self.top).abs() / scale
        }
    }
}

pub fn plane_currents(grid: &AxiGrid, edges: &EdgeConductances, psi: &[f64]) -> PlaneCurrents {
    let n_r = grid.n_r;
    let top_row = grid.n_z - 2;
    let mut bottom = 0.0;
    let mut top = 0.0;
    for i in 0..n_r {
        bottom += edges.axial[i] * (psi[grid.node(i, 1)] - psi[grid.node(i, 0)]);
        top += edges.axial[top_row * n_r + i] * (psi[grid.node(i, top_row + 1)] - psi[grid.node(i, top_row)]);
    }
    PlaneCurrents { bottom, top }
}

/// Device current; fails if the two electrode planes disagree.
pub fn device_current(grid: &AxiGrid, psi: &[f64], sigma: &ElementMap) -> Result<f64> {
    let edges = edge_conductances(grid, sigma);
    let c = plane_currents(grid, &edges, psi);
    if c.mismatch() > CONTINUITY_TOL {
        return Err(Error::NonConvergence { solver: "current continuity", iterations: 1, residual: c.mismatch() });
    }
    Ok(0.5 * (c.bottom + c.top))
}

/// Joule power per node (W): every edge dissipates G·Δψ², shared equally by
/// its two end nodes.
pub fn joule_sources(grid: &AxiGrid, edges: &EdgeConductances, psi: &[f64]) -> Vec<f64> {
    let (n_r, n_z) = (grid.n_r, grid.n_z);
    let mut q = vec![0.0; grid.len()];
    for j in 0..n_z {
        for i in 0..n_r - 1 {
            let (p, r) = (grid.node(i, j), grid.node(i + 1, j));
            let w = 0.5 * edges.radial[j * (n_r - 1) + i] * (psi[p] - psi[r]).powi(2);
            q[p] += w;
            q[r] += w;
        }
    }
    for j in 0..n_z - 1 {
        for i in 0..n_r {
            let (p, r) = (grid.node(i, j), grid.node(i, j + 1));
            let w = 0.5 * edges.axial[j * n_r + i] * (psi[p] - psi[r]).powi(2);
            q[p] += w;
            q[r] += w;
        }
    }
    q
}
