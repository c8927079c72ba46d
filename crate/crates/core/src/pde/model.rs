//! Coupled filament / potential / temperature stepping.

use serde::{Deserialize, Serialize};

use super::fields::{
    assemble_conductivity, assemble_thermal_conductivity, edge_conductances, joule_sources, plane_currents,
    solve_dirichlet, FieldState, CONTINUITY_TOL,
};
use super::flux::{filament_rate, FluxComponents};
use super::grid::AxiGrid;
use super::heat::{solve_heat, HeatMethod, HeatProblem};
use crate::error::{Error, Result};
use crate::params::{MaterialParams, SamplePreset};

/// Under-relaxation of the filament fixed point.
pub const DAMPING: f64 = 0.5;
/// Convergence threshold on the largest relative change of φ.
pub const FIXED_POINT_TOL: f64 = 1e-4;
pub const MAX_FIXED_POINT_ITERS: usize = 60;

/// Fields consistent with one filament profile and bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub psi: Vec<f64>,
    pub temp: Vec<f64>,
    /// Voltage across the device after compliance clipping (V).
    pub v_dev: f64,
    pub current: f64,
    /// Device conductance (S).
    pub conductance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub iterations: usize,
    pub current: f64,
    pub v_dev: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PdeModel {
    pub preset: SamplePreset,
    pub grid: AxiGrid,
    /// Material in effect (nominal or a device draw).
    pub material: MaterialParams,
}

impl PdeModel {
    pub fn new(preset: SamplePreset, n_r: usize, n_z: usize) -> Result<Self> {
        preset.validate()?;
        let grid = AxiGrid::for_geometry(n_r, n_z, &preset.geometry)?;
        let material = preset.material;
        Ok(Self { preset, grid, material })
    }

    pub fn t_amb(&self) -> f64 {
        self.preset.constants.t_amb
    }

    /// As-fabricated profile: a neck of `gap_max` at phi_min on the bottom
    /// electrode, then a cone opening to phi_te at the top electrode.
    /// Node values carry the resistance of their control volume, so the
    /// neck resistance does not depend on where it ends between nodes.
    pub fn pristine_profile(&self) -> Vec<f64> {
        let g = self.preset.geometry;
        let neck = self.preset.conduction.gap_max;
        let exact = |z: f64| {
            if z <= neck {
                g.phi_min
            } else {
                g.phi_min + (g.phi_te - g.phi_min) * (z - neck) / (g.t_ox - neck)
            }
        };
        self.resample(exact)
    }

    /// Node diameters with the same ∫dz/φ² over each control volume as `f`.
    pub fn resample(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        const SUB: usize = 256;
        let grid = &self.grid;
        (0..grid.n_z)
            .map(|j| {
                let lo = (grid.z(j) - 0.5 * grid.dz).max(0.0);
                let hi = (grid.z(j) + 0.5 * grid.dz).min(grid.height);
                let h = (hi - lo) / SUB as f64;
                let mean: f64 = (0..SUB).map(|k| f(lo + (k as f64 + 0.5) * h).powi(-2)).sum::<f64>() / SUB as f64;
                mean.powf(-0.5)
            })
            .collect()
    }

    /// Connected cone from `phi_tip` at the bottom electrode to phi_te.
    pub fn cone_profile(&self, phi_tip: f64) -> Vec<f64> {
        let g = &self.preset.geometry;
        (0..self.grid.n_z)
            .map(|j| phi_tip + (g.phi_te - phi_tip) * self.grid.z(j) / g.t_ox)
            .collect()
    }

    pub fn initial_state(&self, phi: Vec<f64>) -> Result<FieldState> {
        FieldState::new(&self.grid, phi, self.t_amb())
    }

    /// Conductance of the device for a profile (S).
    pub fn conductance(&self, phi: &[f64]) -> Result<f64> {
        let sigma = assemble_conductivity(&self.grid, phi, &self.preset.geometry, &self.material);
        let edges = edge_conductances(&self.grid, &sigma);
        let unit = solve_dirichlet(&self.grid, &edges, 0.0, 1.0, None, None)?;
        let c = plane_currents(&self.grid, &edges, &unit);
        check_continuity(c.mismatch())?;
        Ok(0.5 * (c.bottom + c.top))
    }

    /// Potential and temperature for `phi` at applied bias `v_applied`,
    /// optionally clipped to `i_cc` by an ideal source. The heat equation
    /// advances from `t_prev` over `dt`.
    pub fn snapshot(&self, phi: &[f64], v_applied: f64, i_cc: Option<f64>, t_prev: &[f64], dt: f64) -> Result<Snapshot> {
        let grid = &self.grid;
        let sigma = assemble_conductivity(grid, phi, &self.preset.geometry, &self.material);
        let edges = edge_conductances(grid, &sigma);
        let unit = solve_dirichlet(grid, &edges, 0.0, 1.0, None, None)?;
        let c = plane_currents(grid, &edges, &unit);
        check_continuity(c.mismatch())?;
        let conductance = 0.5 * (c.bottom + c.top);
        let mut v_dev = v_applied;
        if let Some(cap) = i_cc {
            if (v_dev * conductance).abs() > cap {
                v_dev = v_dev.signum() * cap / conductance;
            }
        }
        let psi: Vec<f64> = unit.iter().map(|u| u * v_dev).collect();
        let mut sources = joule_sources(grid, &edges, &unit);
        for s in &mut sources {
            *s *= v_dev * v_dev;
        }
        let kth = assemble_thermal_conductivity(grid, phi, &self.material);
        let problem = HeatProblem {
            kth: &kth,
            heat_capacity: self.material.rho_m * self.material.c_p,
            sources: &sources,
            t_amb: self.t_amb(),
        };
        let temp = solve_heat(grid, &problem, t_prev, dt, HeatMethod::Implicit)?;
        Ok(Snapshot { psi, temp, v_dev, current: conductance * v_dev, conductance })
    }

    /// Growth-law rate at every z-node of the axis.
    pub fn rates(&self, phi: &[f64], snap: &Snapshot) -> Vec<FluxComponents> {
        let grid = &self.grid;
        let floor = self.preset.conduction.phi_th_min;
        let axis = |j: usize| snap.temp[grid.node(0, j)];
        (0..grid.n_z)
            .map(|j| {
                // potential of the metal just below the node's control volume
                let below = if j == 0 { snap.psi[grid.node(0, 0)] } else { 0.5 * (snap.psi[grid.node(0, j)] + snap.psi[grid.node(0, j - 1)]) };
                let psi_local = snap.v_dev - below;
                let i = ((0.5 * phi[j] / grid.dr) as usize).min(grid.n_r - 2);
                let gr = (snap.temp[grid.node(i + 1, j)] - snap.temp[grid.node(i, j)]) / grid.dr;
                // the lateral gradient at the filament wall drives thermophoresis
                filament_rate(phi[j].max(floor), psi_local, axis(j), (gr.abs(), 0.0), &self.material)
            })
            .collect()
    }

    fn clamp_phi(&self, phi: f64) -> f64 {
        let g = &self.preset.geometry;
        phi.clamp(g.phi_min, g.phi_max)
    }

    /// One implicit step of length `dt`: φ = φ₀ + dt·rate(φ) solved by damped
    /// fixed-point iteration, with ψ and T re-solved at every iterate.
    pub fn self_consistent_step(
        &self,
        state: &FieldState,
        v_applied: f64,
        i_cc: Option<f64>,
        dt: f64,
    ) -> Result<(FieldState, StepReport)> {
        self.step_from(state, None, v_applied, i_cc, dt).map(|(s, r, _)| (s, r))
    }

    /// Same as [`Self::self_consistent_step`], optionally reusing the fields
    /// already solved for `state.phi`. Also returns the fields of the last
    /// iterate, which agree with the returned profile to the tolerance.
    pub fn step_from(
        &self,
        state: &FieldState,
        first: Option<Snapshot>,
        v_applied: f64,
        i_cc: Option<f64>,
        dt: f64,
    ) -> Result<(FieldState, StepReport, Snapshot)> {
        let mut guess = state.phi.clone();
        let mut first = first;
        for it in 1..=MAX_FIXED_POINT_ITERS {
            let snap = match first.take() {
                Some(s) => s,
                None => self.snapshot(&guess, v_applied, i_cc, &state.temp, dt)?,
            };
            let rates = self.rates(&guess, &snap);
            let mut change: f64 = 0.0;
            let next: Vec<f64> = guess
                .iter()
                .zip(&state.phi)
                .zip(&rates)
                .map(|((g, p0), r)| {
                    let target = self.clamp_phi(p0 + dt * r.total);
                    let n = if it == 1 { target } else { (1.0 - DAMPING) * g + DAMPING * target };
                    change = change.max((n - g).abs() / g);
                    n
                })
                .collect();
            guess = next;
            if change < FIXED_POINT_TOL {
                let report = StepReport { iterations: it, current: snap.current, v_dev: snap.v_dev };
                let out = FieldState { psi: snap.psi.clone(), temp: snap.temp.clone(), phi: guess, t_now: state.t_now + dt };
                return Ok((out, report, snap));
            }
        }
        Err(Error::NonConvergence { solver: "filament fixed point", iterations: MAX_FIXED_POINT_ITERS, residual: f64::NAN })
    }

    /// Largest step that keeps every unpinned diameter within `fraction` of
    /// its value at the current rates.
    pub fn stable_dt(&self, phi: &[f64], rates: &[FluxComponents], fraction: f64) -> f64 {
        let g = &self.preset.geometry;
        phi.iter()
            .zip(rates)
            .filter(|(p, r)| !((**p <= g.phi_min && r.total < 0.0) || (**p >= g.phi_max && r.total > 0.0)))
            .map(|(p, r)| fraction * p / r.total.abs())
            .fold(f64::INFINITY, f64::min)
    }
}

fn check_continuity(mismatch: f64) -> Result<()> {
    if mismatch > CONTINUITY_TOL {
        Err(Error::NonConvergence { solver: "current continuity", iterations: 1, residual: mismatch })
    } else {
        Ok(())
    }
}
