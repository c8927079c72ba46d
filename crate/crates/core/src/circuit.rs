//! 1T1M series circuit: square-law n-MOSFET in series with the memristor's
//! bottom electrode, plus the pulse and pulse-train stimuli.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::compact::{CompactModel, CompactState, DrivePoint};
use crate::error::{Error, Result};

/// Read-out amplitude (V).
pub const READ_VOLTAGE: f64 = 0.2;
/// Gate bias used for verify reads during ASCA (V).
pub const ASCA_READ_GATE: f64 = 3.0;
/// Gate bias held during erase pulses (V).
pub const ERASE_GATE: f64 = 1.85;
/// Minimum number of samples across a rise or fall edge.
const EDGE_SAMPLES: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MosfetParams {
    /// Threshold voltage (V).
    pub v_th: f64,
    /// Transconductance coefficient (A/V²).
    pub k_gain: f64,
    /// Channel-length modulation (1/V).
    pub lambda: f64,
}

impl MosfetParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.v_th > 0.0 && self.v_th < 3.0) {
            return Err(Error::Validation(format!("v_th = {} outside (0, 3) V", self.v_th)));
        }
        if !(self.k_gain > 0.0) {
            return Err(Error::Validation("k_gain must be positive".into()));
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::Validation("lambda must be non-negative".into()));
        }
        Ok(())
    }

    /// Saturation current at zero drain bias, (k/2)·(v_gs − v_th)².
    pub fn saturation_current(&self, v_gs: f64) -> f64 {
        let vov = (v_gs - self.v_th).max(0.0);
        0.5 * self.k_gain * vov * vov
    }

    /// On-resistance used for reverse conduction at gate bias `v_gs`.
    pub fn reverse_resistance(&self, v_gs: f64) -> f64 {
        let vov = v_gs - self.v_th;
        if vov <= 0.0 {
            f64::INFINITY
        } else {
            1.0 / (self.k_gain * vov)
        }
    }
}

/// Drain current of the square-law n-MOSFET. For `v_ds < 0` the device
/// conducts in reverse through a fixed deep-triode on-resistance.
pub fn mosfet_current(p: &MosfetParams, v_gs: f64, v_ds: f64) -> f64 {
    let vov = v_gs - p.v_th;
    if vov <= 0.0 || v_ds == 0.0 {
        return 0.0;
    }
    if v_ds < 0.0 {
        return v_ds / p.reverse_resistance(v_gs);
    }
    let clm = 1.0 + p.lambda * v_ds;
    if v_ds < vov {
        p.k_gain * (vov * v_ds - 0.5 * v_ds * v_ds) * clm
    } else {
        0.5 * p.k_gain * vov * vov * clm
    }
}

/// Gate bias whose saturation current equals `i_cc`.
pub fn gate_for_compliance(p: &MosfetParams, i_cc: f64) -> Result<f64> {
    if !(1e-6..=1e-3).contains(&i_cc) {
        return Err(Error::ComplianceRange(i_cc));
    }
    Ok(p.v_th + (2.0 * i_cc / p.k_gain).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesSolution {
    pub current: f64,
    pub v_mem: f64,
    pub v_ds: f64,
}

/// Solves the memristor/transistor series node by bisection on the
/// memristor voltage.
pub fn solve_series(
    model: &CompactModel,
    dev: &CompactState,
    v_applied: f64,
    v_gate: f64,
    p: &MosfetParams,
) -> Result<SeriesSolution> {
    if v_applied == 0.0 || v_gate <= p.v_th {
        return Ok(SeriesSolution {
            current: 0.0,
            v_mem: 0.0,
            v_ds: v_applied,
        });
    }
    // f(v_mem) = I_mem(v_mem) − I_fet(v_applied − v_mem) is increasing in v_mem
    let f = |v_mem: f64| model.conduct(dev, v_mem) - mosfet_current(p, v_gate, v_applied - v_mem);
    let (mut lo, mut hi) = if v_applied > 0.0 { (0.0, v_applied) } else { (v_applied, 0.0) };
    let (f_lo, f_hi) = (f(lo), f(hi));
    if f_lo > 0.0 || f_hi < 0.0 {
        return Err(Error::NoBracket { v_applied });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    // pick the end with the smaller KCL residual
    let v_mem = if f(lo).abs() <= f(hi).abs() { lo } else { hi };
    let current = model.conduct(dev, v_mem);
    Ok(SeriesSolution {
        current,
        v_mem,
        v_ds: v_applied - v_mem,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PulseKind {
    Program,
    Erase,
    Read,
}

impl PulseKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            PulseKind::Program => "program",
            PulseKind::Erase => "erase",
            PulseKind::Read => "read",
        }
    }
}

/// A trapezoidal drain pulse with its gate bias. `width` is the flat top;
/// the edges add `rise` and `fall`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pulse {
    pub v_drain: f64,
    pub v_gate: f64,
    pub width: f64,
    pub rise: f64,
    pub fall: f64,
    pub kind: PulseKind,
}

/// Default edge time of program and erase pulses (s).
pub const DEFAULT_EDGE: f64 = 10e-6;

impl Pulse {
    pub fn program(v_drain: f64, v_gate: f64, width: f64) -> Self {
        Self { v_drain, v_gate, width, rise: DEFAULT_EDGE, fall: DEFAULT_EDGE, kind: PulseKind::Program }
    }

    pub fn erase(v_drain: f64, width: f64) -> Self {
        Self { v_drain, v_gate: ERASE_GATE, width, rise: DEFAULT_EDGE, fall: DEFAULT_EDGE, kind: PulseKind::Erase }
    }

    pub fn read(v_gate: f64, width: f64) -> Self {
        Self { v_drain: READ_VOLTAGE, v_gate, width, rise: 0.0, fall: 0.0, kind: PulseKind::Read }
    }

    pub fn duration(&self) -> f64 {
        self.rise + self.width + self.fall
    }

    /// Applied drain voltage at time `t` from the pulse start.
    pub fn voltage_at(&self, t: f64) -> f64 {
        if t < 0.0 || t > self.duration() {
            0.0
        } else if t < self.rise {
            self.v_drain * t / self.rise
        } else if t <= self.rise + self.width {
            self.v_drain
        } else {
            self.v_drain * (self.duration() - t) / self.fall
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PulseOutcome {
    /// Source energy delivered during the pulse (J).
    pub energy: f64,
    /// Largest |current| observed (A).
    pub peak_current: f64,
    pub substeps: usize,
}

/// Applies one pulse through the series circuit, re-solving the node
/// voltage at every integration substep.
pub fn apply_pulse(
    model: &CompactModel,
    dev: &CompactState,
    pulse: &Pulse,
    p: &MosfetParams,
) -> Result<(CompactState, PulseOutcome)> {
    let mut state = *dev;
    let mut outcome = PulseOutcome::default();
    let segments = [
        (0.0, pulse.rise, pulse.rise / EDGE_SAMPLES),
        (pulse.rise, pulse.width, f64::INFINITY),
        (pulse.rise + pulse.width, pulse.fall, pulse.fall / EDGE_SAMPLES),
    ];
    let mut failure = None;
    for (t0, len, max_h) in segments {
        if len <= 0.0 {
            continue;
        }
        let mut peak = outcome.peak_current;
        let (next, stats) = model.integrate(&state, len, model.t_amb(), max_h, |s, t| {
            let v_app = pulse.voltage_at(t0 + t);
            match solve_series(model, s, v_app, pulse.v_gate, p) {
                Ok(sol) => {
                    peak = peak.max(sol.current.abs());
                    DrivePoint { v_mem: sol.v_mem, current: sol.current, source_power: sol.current * v_app }
                }
                Err(e) => {
                    failure.get_or_insert(e);
                    DrivePoint { v_mem: 0.0, current: 0.0, source_power: 0.0 }
                }
            }
        });
        if let Some(e) = failure.take() {
            return Err(e);
        }
        outcome.peak_current = peak;
        outcome.energy += stats.energy;
        outcome.substeps += stats.substeps;
        state = next;
    }
    state.t_loc = model.t_amb();
    Ok((state, outcome))
}

/// Read current at 0.2 V with the given gate; never changes the state.
pub fn read_current(model: &CompactModel, dev: &CompactState, v_gate: f64, p: &MosfetParams) -> Result<f64> {
    Ok(solve_series(model, dev, READ_VOLTAGE, v_gate, p)?.current)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseTrain {
    pub pulses: Vec<Pulse>,
    /// Scheme tag, e.g. `ispp_ramp`.
    pub scheme: String,
    /// Amplitude increment between consecutive pulses (V), zero if fixed.
    pub step: f64,
}

impl PulseTrain {
    pub fn len(&self) -> usize {
        self.pulses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pulses.is_empty()
    }

    /// CSV with columns index, kind, v_drain, v_gate, width_s, rise_s, fall_s.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,kind,v_drain,v_gate,width_s,rise_s,fall_s\n");
        for (i, p) in self.pulses.iter().enumerate() {
            out.push_str(&format!(
                "{i},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
                p.kind.as_str(),
                p.v_drain,
                p.v_gate,
                p.width,
                p.rise,
                p.fall
            ));
        }
        out
    }

    pub fn from_csv(text: &str, scheme: &str) -> Result<Self> {
        let mut pulses = Vec::new();
        for (n, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 7 {
                return Err(Error::Config(format!("pulse csv line {}: expected 7 columns", n + 1)));
            }
            let num = |i: usize| -> Result<f64> {
                cols[i].trim().parse().map_err(|_| Error::BadParameterValue {
                    key: format!("line {} column {i}", n + 1),
                    value: cols[i].to_string(),
                })
            };
            let kind = match cols[1].trim() {
                "program" => PulseKind::Program,
                "erase" => PulseKind::Erase,
                "read" => PulseKind::Read,
                other => return Err(Error::Config(format!("unknown pulse kind `{other}`"))),
            };
            pulses.push(Pulse { kind, v_drain: num(2)?, v_gate: num(3)?, width: num(4)?, rise: num(5)?, fall: num(6)? });
        }
        Ok(PulseTrain { pulses, scheme: scheme.to_string(), step: 0.0 })
    }
}

/// Named pulse-train recipes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrainSpec {
    /// 0 → 3 V staircase of 0.5 ms pulses at a fixed gate.
    IsppRamp { step: f64, v_gate: f64 },
    /// 60 × −0.5 V, 0.5 ms at the erase gate.
    EraseFixed,
    /// Single erase pulses stepping from `start` towards `cap`.
    EraseRamp { start: f64, step: f64, cap: f64 },
    /// Drain staircase of 1 ms pulses at a fixed gate.
    Scheme1Ramp { start: f64, stop: f64, step: f64, v_gate: f64 },
    Read { width: f64, v_gate: f64 },
}

impl TrainSpec {
    pub fn name(&self) -> &'static str {
        match self {
            TrainSpec::IsppRamp { .. } => "ispp_ramp",
            TrainSpec::EraseFixed => "erase_fixed",
            TrainSpec::EraseRamp { .. } => "erase_ramp",
            TrainSpec::Scheme1Ramp { .. } => "scheme1_ramp",
            TrainSpec::Read { .. } => "read",
        }
    }
}

impl fmt::Display for TrainSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Descriptor names with their documented defaults.
impl FromStr for TrainSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ispp_ramp" => Ok(TrainSpec::IsppRamp { step: 0.1, v_gate: ASCA_READ_GATE }),
            "erase_fixed" => Ok(TrainSpec::EraseFixed),
            "erase_ramp" => Ok(TrainSpec::EraseRamp { start: -0.5, step: -0.1, cap: -1.5 }),
            "scheme1_ramp" => Ok(TrainSpec::Scheme1Ramp { start: 1.5, stop: 3.0, step: 0.1, v_gate: ASCA_READ_GATE }),
            "read" => Ok(TrainSpec::Read { width: 0.5e-3, v_gate: ASCA_READ_GATE }),
            other => Err(Error::UnknownTrain(other.to_string())),
        }
    }
}

/// Evenly spaced staircase from `start` to `stop` inclusive; amplitudes are
/// computed from the index so no rounding error accumulates.
pub fn staircase(start: f64, stop: f64, step: f64) -> Vec<f64> {
    if step == 0.0 || (stop - start) * step < 0.0 {
        return vec![start];
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    (0..=n).map(|k| start + k as f64 * step).collect()
}

pub fn make_train(spec: &TrainSpec) -> PulseTrain {
    let (pulses, step): (Vec<Pulse>, f64) = match *spec {
        TrainSpec::IsppRamp { step, v_gate } => (
            staircase(0.0, 3.0, step).into_iter().map(|v| Pulse::program(v, v_gate, 0.5e-3)).collect(),
            step,
        ),
        TrainSpec::EraseFixed => ((0..60).map(|_| Pulse::erase(-0.5, 0.5e-3)).collect(), 0.0),
        TrainSpec::EraseRamp { start, step, cap } => (
            staircase(start, cap, step).into_iter().map(|v| Pulse::erase(v, 0.5e-3)).collect(),
            step,
        ),
        TrainSpec::Scheme1Ramp { start, stop, step, v_gate } => (
            staircase(start, stop, step).into_iter().map(|v| Pulse::program(v, v_gate, 1e-3)).collect(),
            step,
        ),
        TrainSpec::Read { width, v_gate } => (vec![Pulse::read(v_gate, width)], 0.0),
    };
    PulseTrain { pulses, scheme: spec.name().to_string(), step }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{Calibration, SampleName};

    fn fet() -> MosfetParams {
        Calibration::default_shipped().mosfet()
    }

    #[test]
    fn threshold_and_zero_drain() {
        let p = fet();
        assert_eq!(mosfet_current(&p, p.v_th, 1.0), 0.0);
        assert_eq!(mosfet_current(&p, 3.0, 0.0), 0.0);
    }

    #[test]
    fn saturation_hand_arithmetic() {
        let p = MosfetParams { v_th: 1.0, k_gain: 0.1, lambda: 0.0 };
        let i = mosfet_current(&p, 1.5, 2.0);
        assert!((i - 12.5e-3).abs() < 1e-15);
    }

    #[test]
    fn continuous_at_triode_boundary() {
        let p = MosfetParams { v_th: 1.2, k_gain: 2e-3, lambda: 0.05 };
        let vov = 0.7;
        let below = mosfet_current(&p, 1.2 + vov, vov - 1e-12);
        let above = mosfet_current(&p, 1.2 + vov, vov + 1e-12);
        assert!((below - above).abs() < 1e-12);
    }

    #[test]
    fn compliance_round_trip() {
        let p = fet();
        for i_cc in [1e-6, 10e-6, 100e-6, 250e-6, 1e-3] {
            let vg = gate_for_compliance(&p, i_cc).unwrap();
            let back = p.saturation_current(vg);
            assert!(((back - i_cc) / i_cc).abs() < 1e-6);
        }
        let vg = gate_for_compliance(&p, 1e-6).unwrap();
        assert!(vg - p.v_th < 0.1);
        assert!(gate_for_compliance(&p, 2e-3).is_err());
        assert!(gate_for_compliance(&p, 0.5e-6).is_err());
    }

    #[test]
    fn compliance_gates_in_instrument_range() {
        let p = fet();
        for i_cc in [10e-6, 250e-6] {
            let vg = gate_for_compliance(&p, i_cc).unwrap();
            assert!((0.0..=5.0).contains(&vg), "{vg}");
        }
    }

    #[test]
    fn erase_gate_is_not_limiting() {
        let p = fet();
        assert!(p.saturation_current(ERASE_GATE) >= 1e-3);
    }

    #[test]
    fn erase_fixed_train() {
        let t = make_train(&"erase_fixed".parse().unwrap());
        assert_eq!(t.len(), 60);
        assert!(t.pulses.iter().all(|p| p.v_drain == -0.5 && p.width == 0.5e-3 && p.v_gate == ERASE_GATE));
    }

    #[test]
    fn ispp_ramp_train() {
        let t = make_train(&TrainSpec::IsppRamp { step: 0.1, v_gate: 1.4 });
        assert_eq!(t.len(), 31);
        for (k, p) in t.pulses.iter().enumerate() {
            assert!((p.v_drain - 0.1 * k as f64).abs() < 1e-12);
            assert_eq!(p.width, 0.5e-3);
        }
        assert!((t.pulses[30].v_drain - 3.0).abs() < 1e-12);
    }

    #[test]
    fn scheme1_and_read_trains() {
        let t = make_train(&"scheme1_ramp".parse().unwrap());
        assert_eq!(t.pulses.first().unwrap().v_drain, 1.5);
        assert!((t.pulses.last().unwrap().v_drain - 3.0).abs() < 1e-12);
        assert!(t.pulses.iter().all(|p| p.width == 1e-3));
        let r = make_train(&"read".parse().unwrap());
        assert_eq!(r.len(), 1);
        assert_eq!(r.pulses[0].v_drain, READ_VOLTAGE);
        assert_eq!(r.pulses[0].v_gate, ASCA_READ_GATE);
    }

    #[test]
    fn unknown_descriptor() {
        assert!(matches!("zigzag".parse::<TrainSpec>(), Err(Error::UnknownTrain(_))));
    }

    #[test]
    fn train_csv_roundtrip() {
        let t = make_train(&"erase_ramp".parse().unwrap());
        let back = PulseTrain::from_csv(&t.to_csv(), "erase_ramp").unwrap();
        assert_eq!(back.pulses, t.pulses);
    }

    fn model() -> CompactModel {
        CompactModel::new(Calibration::default_shipped().preset(SampleName::NPs))
    }

    #[test]
    fn series_gate_off() {
        let m = model();
        let dev = m.with_tip(m.preset.material, 6e-9);
        let sol = solve_series(&m, &dev, 1.0, 0.0, &fet()).unwrap();
        assert_eq!(sol.current, 0.0);
        assert_eq!(sol.v_ds, 1.0);
    }

    #[test]
    fn series_kcl_and_split() {
        let m = model();
        let p = fet();
        for phi in [1e-9, 6e-9, 20e-9] {
            for v in [-1.0, -0.3, 0.2, 0.8, 2.5] {
                let dev = m.with_tip(m.preset.material, phi);
                let sol = solve_series(&m, &dev, v, 1.5, &p).unwrap();
                let i_fet = mosfet_current(&p, 1.5, sol.v_ds);
                let tol = 1e-12 * sol.current.abs().max(1e-9);
                assert!((sol.current - i_fet).abs() < tol, "phi {phi} v {v}");
                assert!((sol.v_mem + sol.v_ds - v).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn series_deep_triode_matches_memristor_alone() {
        let m = model();
        let dev = m.with_tip(m.preset.material, 2e-9);
        let p = MosfetParams { k_gain: 10.0, ..fet() };
        let sol = solve_series(&m, &dev, 0.2, 5.0, &p).unwrap();
        let alone = m.conduct(&dev, 0.2);
        assert!(((sol.current - alone) / alone).abs() < 0.01);
    }

    #[test]
    fn series_compliance_limit() {
        let m = model();
        let p = fet();
        let dev = m.with_tip(m.preset.material, m.preset.geometry.phi_max);
        let vg = gate_for_compliance(&p, 50e-6).unwrap();
        let sol = solve_series(&m, &dev, 3.0, vg, &p).unwrap();
        let sat = p.saturation_current(vg) * (1.0 + p.lambda * sol.v_ds);
        assert!(((sol.current - sat) / sat).abs() < 0.02);
    }

    #[test]
    fn pulse_waveform_edges() {
        let p = Pulse { v_drain: 1.0, v_gate: 3.0, width: 1e-6, rise: 0.1e-6, fall: 0.1e-6, kind: PulseKind::Program };
        assert_eq!(p.voltage_at(0.0), 0.0);
        assert!((p.voltage_at(0.05e-6) - 0.5).abs() < 1e-12);
        assert_eq!(p.voltage_at(0.5e-6), 1.0);
        assert!((p.voltage_at(1.15e-6) - 0.5).abs() < 1e-9);
        assert_eq!(p.voltage_at(2e-6), 0.0);
    }
}
