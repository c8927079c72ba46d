//! Quasi-static DC sweeps of the 1T1M cell on the compact engine.
//!
//! The sweep runs 0 → `v_peak_pos` → 0 → `v_peak_neg` → 0 in fixed voltage
//! steps held for `step / rate` seconds each. The positive branch is limited
//! by the compliance gate; the negative branch opens the transistor fully.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::circuit::{solve_series, MosfetParams, ERASE_GATE, READ_VOLTAGE};
use crate::circuit::gate_for_compliance;
use crate::compact::{CompactModel, CompactState, DrivePoint};
use crate::error::{Error, Result};
use crate::params::SweepDefaults;

/// Current that marks the SET onset on the rising branch (A).
pub const ONSET_CURRENT: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DcSweepSpec {
    pub v_peak_pos: f64,
    pub v_peak_neg: f64,
    /// Voltage step (V).
    pub step: f64,
    /// Sweep rate (V/s).
    pub rate: f64,
    /// Compliance on the positive branch (A).
    pub i_cc: f64,
    /// Gate bias on the negative branch (V).
    pub reset_gate: f64,
}

impl DcSweepSpec {
    pub fn from_defaults(d: &SweepDefaults) -> Self {
        Self {
            v_peak_pos: d.v_peak_pos,
            v_peak_neg: d.v_peak_neg,
            step: 5e-3,
            rate: 0.01,
            i_cc: 100e-6,
            reset_gate: ERASE_GATE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.v_peak_pos > 0.0
            && self.v_peak_neg < 0.0
            && self.step > 0.0
            && self.rate > 0.0
            && self.i_cc > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Validation(format!("bad sweep spec {self:?}")))
        }
    }

    pub fn dwell(&self) -> f64 {
        self.step / self.rate
    }

    /// Applied voltages, one per dwell.
    pub fn voltages(&self) -> Vec<f64> {
        let up = (self.v_peak_pos / self.step).round() as usize;
        let down = (-self.v_peak_neg / self.step).round() as usize;
        let mut out = Vec::with_capacity(2 * (up + down) + 1);
        for k in 0..=up {
            out.push(k as f64 * self.step);
        }
        for k in (0..up).rev() {
            out.push(k as f64 * self.step);
        }
        for k in 1..=down {
            out.push(-(k as f64) * self.step);
        }
        for k in (0..down).rev() {
            out.push(-(k as f64) * self.step);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub t: f64,
    pub v_applied: f64,
    pub current: f64,
    pub v_mem: f64,
    pub phi_tip: f64,
    pub gap: f64,
    pub t_loc: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    /// First rising-branch voltage with I ≥ 1 µA.
    pub v_set: Option<f64>,
    /// Negative-branch voltage of peak |I|, if the current collapses after it.
    pub v_reset: Option<f64>,
    /// Memristor current at the read voltage after the positive branch.
    pub i_lrs: f64,
    /// Same, after the full sweep.
    pub i_hrs: f64,
}

impl SweepSummary {
    pub fn window(&self) -> f64 {
        self.i_lrs / self.i_hrs
    }

    pub fn r_lrs(&self) -> f64 {
        READ_VOLTAGE / self.i_lrs
    }

    pub fn r_hrs(&self) -> f64 {
        READ_VOLTAGE / self.i_hrs
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
    pub summary: SweepSummary,
    pub final_state: CompactState,
}

pub const TRACE_HEADER: &str = "t_s,V_applied,I_A,V_mem,phi_tip_nm,gap_nm,T_K";

impl SweepResult {
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
                p.v_mem,
                p.phi_tip * 1e9,
                p.gap * 1e9,
                p.t_loc
            );
        }
        out
    }
}

/// Runs one full DC cycle from `dev`.
pub fn dc_sweep(model: &CompactModel, dev: &CompactState, spec: &DcSweepSpec, fet: &MosfetParams) -> Result<SweepResult> {
    spec.validate()?;
    let set_gate = gate_for_compliance(fet, spec.i_cc)?;
    let dwell = spec.dwell();
    let volts = spec.voltages();
    let up = (spec.v_peak_pos / spec.step).round() as usize;
    let turn = 2 * up;
    let mut s = *dev;
    let mut points = Vec::with_capacity(volts.len());
    let mut i_lrs = 0.0;
    let mut t = 0.0;
    for (idx, &v) in volts.iter().enumerate() {
        let gate = if v < 0.0 { spec.reset_gate } else { set_gate };
        let mut failure = None;
        let (next, _) = model.integrate(&s, dwell, model.t_amb(), f64::INFINITY, |st, _| {
            match solve_series(model, st, v, gate, fet) {
                Ok(sol) => DrivePoint { v_mem: sol.v_mem, current: sol.current, source_power: sol.current * v },
                Err(e) => {
                    failure.get_or_insert(e);
                    DrivePoint { v_mem: 0.0, current: 0.0, source_power: 0.0 }
                }
            }
        });
        if let Some(e) = failure {
            return Err(Error::AtVoltage { voltage: v, source: Box::new(e) });
        }
        s = next;
        t += dwell;
        let sol = solve_series(model, &s, v, gate, fet).map_err(|e| Error::AtVoltage { voltage: v, source: Box::new(e) })?;
        points.push(SweepPoint {
            t,
            v_applied: v,
            current: sol.current,
            v_mem: sol.v_mem,
            phi_tip: s.phi_tip,
            gap: s.gap,
            t_loc: s.t_loc,
        });
        if idx == turn {
            i_lrs = model.conduct(&s, READ_VOLTAGE);
        }
    }
    s.t_loc = model.t_amb();
    let summary = SweepSummary {
        v_set: onset(points[..=up].iter().map(|p| (p.v_applied, p.current))),
        v_reset: reset_voltage(&points[turn + 1..].iter().map(|p| (p.v_applied, p.current)).collect::<Vec<_>>()),
        i_lrs,
        i_hrs: model.conduct(&s, READ_VOLTAGE),
    };
    Ok(SweepResult { points, summary, final_state: s })
}

/// First rising-branch voltage whose current reaches [`ONSET_CURRENT`].
pub fn onset(rising: impl IntoIterator<Item = (f64, f64)>) -> Option<f64> {
    rising.into_iter().find(|p| p.1 >= ONSET_CURRENT).map(|p| p.0)
}

/// Voltage of the largest |I| on the negative branch, provided the current
/// later falls below a tenth of that peak. Points are (V, I).
pub fn reset_voltage(negative: &[(f64, f64)]) -> Option<f64> {
    let (k, peak) = negative
        .iter()
        .enumerate()
        .filter(|(_, p)| p.0 < 0.0)
        .max_by(|a, b| a.1 .1.abs().total_cmp(&b.1 .1.abs()))?;
    let collapsed = negative[k + 1..].iter().any(|p| p.0 < 0.0 && p.1.abs() < 0.1 * peak.1.abs());
    collapsed.then_some(peak.0)
}
