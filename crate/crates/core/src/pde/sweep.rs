//! Quasi-static DC sweeps on the field solver.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::fields::{assemble_conductivity, FieldState};
use super::model::PdeModel;
use crate::circuit::READ_VOLTAGE;
use crate::error::{Error, Result};
use crate::params::SweepDefaults;
use crate::sweep::{onset, reset_voltage, SweepSummary};

/// Largest relative change of any diameter per substep.
pub const SUBSTEP_FRACTION: f64 = 0.05;
/// Substep budget per voltage dwell.
pub const MAX_SUBSTEPS: usize = 20_000;
/// Shortest substep tried when the fixed point refuses to converge (s).
pub const MIN_SUBSTEP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub v_peak_pos: f64,
    pub v_peak_neg: f64,
    pub step: f64,
    pub rate: f64,
    /// Ideal current clipping on the positive branch (A).
    pub i_cc: f64,
}

impl SweepSpec {
    pub fn from_defaults(d: &SweepDefaults) -> Self {
        Self { v_peak_pos: d.v_peak_pos, v_peak_neg: d.v_peak_neg, step: 5e-3, rate: 0.01, i_cc: 100e-6 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.v_peak_pos > 0.0 && self.v_peak_neg <= 0.0 && self.step > 0.0 && self.rate > 0.0 && self.i_cc > 0.0 {
            Ok(())
        } else {
            Err(Error::Validation(format!("bad sweep spec {self:?}")))
        }
    }

    fn as_compact(&self) -> crate::sweep::DcSweepSpec {
        crate::sweep::DcSweepSpec {
            v_peak_pos: self.v_peak_pos,
            v_peak_neg: self.v_peak_neg.min(-self.step),
            step: self.step,
            rate: self.rate,
            i_cc: self.i_cc,
            reset_gate: 0.0,
        }
    }

    /// 0 → +peak → 0 → −peak → 0, one entry per dwell. A zero negative peak
    /// stops after the positive branch.
    pub fn voltages(&self) -> Vec<f64> {
        let mut v = self.as_compact().voltages();
        if self.v_peak_neg == 0.0 {
            let up = (self.v_peak_pos / self.step).round() as usize;
            v.truncate(2 * up + 1);
        }
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PdeTracePoint {
    pub t: f64,
    pub v_applied: f64,
    pub current: f64,
    pub v_dev: f64,
    /// Largest filament diameter (m).
    pub phi_max: f64,
    /// Diameter at the bottom electrode (m).
    pub phi_tip: f64,
    /// Narrowest diameter along the filament (m).
    pub phi_neck: f64,
    pub t_max: f64,
    pub substeps: usize,
}

/// Field maps captured at one sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldDump {
    pub v_applied: f64,
    pub state: FieldState,
    pub sigma: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PdeSweep {
    pub points: Vec<PdeTracePoint>,
    pub summary: SweepSummary,
    pub final_state: FieldState,
    pub dumps: Vec<FieldDump>,
}

pub const TRACE_HEADER: &str = "t_s,V_applied,I_A,phi_max_nm,T_max_K,phi_tip_nm,phi_neck_nm";

impl PdeSweep {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(TRACE_HEADER);
        out.push('\n');
        for p in &self.points {
            let _ = writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                p.t,
                p.v_applied,
                p.current,
                p.phi_max * 1e9,
                p.t_max,
                p.phi_tip * 1e9,
                p.phi_neck * 1e9
            );
        }
        out
    }
}

/// Node-by-node dump of ψ, T and the conductivity of the element above and
/// outward of each node (zero on the last row and column).
pub fn field_dump_csv(model: &PdeModel, dump: &FieldDump) -> String {
    let g = &model.grid;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# n_r={},n_z={},dr={:.16e},dz={:.16e},V_applied={:.6}",
        g.n_r, g.n_z, g.dr, g.dz, dump.v_applied
    );
    out.push_str("i,j,r_m,z_m,psi_V,T_K,sigma_S_per_m\n");
    for j in 0..g.n_z {
        for i in 0..g.n_r {
            let k = g.node(i, j);
            let sigma = if i + 1 < g.n_r && j + 1 < g.n_z { dump.sigma[g.element(i, j)] } else { 0.0 };
            let _ = writeln!(
                out,
                "{i},{j},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e}",
                g.r(i),
                g.z(j),
                dump.state.psi[k],
                dump.state.temp[k],
                sigma
            );
        }
    }
    out
}

/// Holds `v` for `dwell`, subdividing so no diameter moves by more than
/// [`SUBSTEP_FRACTION`] per substep.
pub fn hold(model: &PdeModel, state: &FieldState, v: f64, i_cc: Option<f64>, dwell: f64) -> Result<(FieldState, f64, usize)> {
    let mut s = state.clone();
    let mut left = dwell;
    let mut current = 0.0;
    let mut n = 0;
    let mut snap = model.snapshot(&s.phi, v, i_cc, &s.temp, dwell)?;
    while left > 0.0 {
        if n >= MAX_SUBSTEPS {
            return Err(Error::NonConvergence { solver: "sweep substeps", iterations: n, residual: left });
        }
        let rates = model.rates(&s.phi, &snap);
        let dt = model.stable_dt(&s.phi, &rates, SUBSTEP_FRACTION).min(left);
        // avoid a sliver at the end of the dwell
        let mut dt = if left - dt < 1e-3 * dwell { left } else { dt };
        let mut first = Some(snap);
        let (next, rep, last) = loop {
            match model.step_from(&s, first.take(), v, i_cc, dt) {
                Ok(ok) => break ok,
                Err(Error::NonConvergence { .. }) if dt > MIN_SUBSTEP => dt *= 0.25,
                Err(e) => return Err(e),
            }
        };
        s = next;
        snap = last;
        current = rep.current;
        left -= dt;
        n += 1;
    }
    Ok((s, current, n))
}

/// Runs the sweep from `initial`, dumping fields at the listed point indices.
pub fn run_dc_sweep(model: &PdeModel, spec: &SweepSpec, initial: &FieldState, dump_at: &[usize]) -> Result<PdeSweep> {
    spec.validate()?;
    let dwell = spec.step / spec.rate;
    let volts = spec.voltages();
    let up = (spec.v_peak_pos / spec.step).round() as usize;
    let turn = 2 * up;
    let mut s = initial.clone();
    let mut points = Vec::with_capacity(volts.len());
    let mut dumps = Vec::new();
    let mut i_lrs = 0.0;
    for (idx, &v) in volts.iter().enumerate() {
        let cap = (v > 0.0).then_some(spec.i_cc);
        let (next, current, substeps) =
            hold(model, &s, v, cap, dwell).map_err(|e| Error::AtVoltage { voltage: v, source: Box::new(e) })?;
        s = next;
        let v_dev = if cap.is_some() { s.psi[model.grid.node(0, model.grid.n_z - 1)] } else { v };
        points.push(PdeTracePoint {
            t: s.t_now,
            v_applied: v,
            current,
            v_dev,
            phi_max: s.phi.iter().copied().fold(0.0, f64::max),
            phi_tip: s.phi[0],
            phi_neck: s.phi.iter().copied().fold(f64::INFINITY, f64::min),
            t_max: s.t_max(),
            substeps,
        });
        if dump_at.contains(&idx) {
            let sigma = assemble_conductivity(&model.grid, &s.phi, &model.preset.geometry, &model.material).values;
            dumps.push(FieldDump { v_applied: v, state: s.clone(), sigma });
        }
        if idx == turn {
            i_lrs = READ_VOLTAGE * model.conductance(&s.phi)?;
        }
    }
    let pairs: Vec<(f64, f64)> = points.iter().map(|p| (p.v_applied, p.current)).collect();
    let summary = SweepSummary {
        v_set: onset(pairs[..=up.min(pairs.len() - 1)].iter().copied()),
        v_reset: if pairs.len() > turn + 1 { reset_voltage(&pairs[turn + 1..]) } else { None },
        i_lrs,
        i_hrs: READ_VOLTAGE * model.conductance(&s.phi)?,
    };
    Ok(PdeSweep { points, summary, final_state: s, dumps })
}
