//! Multilevel programming protocols for the 1T1M cell: open-loop ISPP and
//! the adaptive state control algorithm (ASCA) with its zone-dependent
//! schemes, erase stages and audit reports.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::circuit::{
    apply_pulse, gate_for_compliance, make_train, read_current, MosfetParams, Pulse, PulseKind, TrainSpec,
    ASCA_READ_GATE, READ_VOLTAGE,
};
use crate::compact::{CompactModel, CompactState};
use crate::error::{Error, Result};

/// HRS threshold and lower edge of Zone 1 (A).
pub const HRS_CEILING: f64 = 10e-6;
/// Lower edge of Zone 2 (A).
pub const ZONE2_FLOOR: f64 = 50e-6;
/// Lower edge of Zone 3 (A).
pub const ZONE3_FLOOR: f64 = 120e-6;
/// Width of verify-read pulses (s).
pub const READ_WIDTH: f64 = 0.5e-3;
/// Erase-restart budget of one ASCA run.
pub const MAX_RESTARTS: usize = 20;
/// Program-pulse budget of one ASCA attempt.
const MAX_PULSES_PER_ATTEMPT: usize = 400;
/// Highest gate bias the tester can apply (V).
pub const MAX_GATE: f64 = 5.0;
/// Scheme 1 and 2 gate increment (V).
pub const GATE_STEP: f64 = 0.004;
/// Scheme 3 per-pulse gate increment (V).
pub const GATE_STEP_FINE: f64 = 0.0015;
/// Smallest gate increment a retry may back off to (V).
pub const GATE_STEP_FLOOR: f64 = 0.001;
/// Extra pulses at the Stage B cap before the erase gives up.
const STAGE_B_CAP_REPEATS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Zone {
    BelowRange,
    Zone1,
    Zone2,
    Zone3,
}

/// Left-closed partition of the read current: [0, 10) µA, [10, 50) µA,
/// [50, 120) µA and [120 µA, ∞).
pub fn classify_zone(i_read: f64) -> Zone {
    if i_read < HRS_CEILING {
        Zone::BelowRange
    } else if i_read < ZONE2_FLOOR {
        Zone::Zone1
    } else if i_read < ZONE3_FLOOR {
        Zone::Zone2
    } else {
        Zone::Zone3
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetLevel {
    pub index: usize,
    /// Read-current target at 0.2 V (A); zero for the HRS level.
    pub i_target: f64,
    /// Acceptance half-width (A). For the HRS level this is the ceiling.
    pub band_halfwidth: f64,
}

impl TargetLevel {
    /// A single LRS target with the plain 5 % band.
    pub fn standalone(i_target: f64) -> Self {
        Self { index: 1, i_target, band_halfwidth: 0.05 * i_target }
    }

    pub fn is_hrs(&self) -> bool {
        self.i_target == 0.0
    }

    pub fn lower(&self) -> f64 {
        if self.is_hrs() {
            0.0
        } else {
            self.i_target - self.band_halfwidth
        }
    }

    pub fn upper(&self) -> f64 {
        if self.is_hrs() {
            self.band_halfwidth
        } else {
            self.i_target + self.band_halfwidth
        }
    }

    pub fn contains(&self, i_read: f64) -> bool {
        if self.is_hrs() {
            i_read < self.band_halfwidth
        } else {
            (i_read - self.i_target).abs() <= self.band_halfwidth
        }
    }

    pub fn zone(&self) -> Zone {
        classify_zone(self.i_target)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSchedule {
    pub n_levels: usize,
    pub i_min: f64,
    pub i_max: f64,
    pub spacing: Spacing,
    pub levels: Vec<TargetLevel>,
}

impl LevelSchedule {
    /// Level 0 is the HRS (read below `i_min`); LRS level k sits at
    /// `i_min + k·(i_max − i_min)/(n − 1)`, so the top level lands on
    /// `i_max`. Half-widths are min(5 % of target, 45 % of the spacing).
    pub fn linear(n_levels: usize, i_min: f64, i_max: f64) -> Result<Self> {
        if ![16, 32, 64].contains(&n_levels) {
            return Err(Error::Config(format!("n_levels must be 16, 32 or 64, got {n_levels}")));
        }
        if i_min < HRS_CEILING * (1.0 - 1e-12) || !(i_max > i_min) {
            return Err(Error::Config(format!("need 10 uA <= i_min < i_max, got {i_min:e}, {i_max:e}")));
        }
        let spacing = (i_max - i_min) / (n_levels - 1) as f64;
        let mut levels = vec![TargetLevel { index: 0, i_target: 0.0, band_halfwidth: i_min }];
        for k in 1..n_levels {
            let i_target = i_min + k as f64 * spacing;
            levels.push(TargetLevel { index: k, i_target, band_halfwidth: (0.05 * i_target).min(0.45 * spacing) });
        }
        Ok(Self { n_levels, i_min, i_max, spacing: Spacing::Linear, levels })
    }

    pub fn standard(n_levels: usize) -> Result<Self> {
        Self::linear(n_levels, 10e-6, 200e-6)
    }

    pub fn lrs(&self) -> &[TargetLevel] {
        &self.levels[1..]
    }
}

/// The parts of a 1T1M cell the protocols need besides the device state.
#[derive(Debug, Clone, PartialEq)]
pub struct Circuit {
    pub model: CompactModel,
    pub fet: MosfetParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReadProtocol {
    /// Gate at 3.0 V.
    Asca,
    /// Gate at the programming compliance setting.
    Ispp { v_gate: f64 },
}

impl ReadProtocol {
    pub fn gate(&self) -> f64 {
        match *self {
            ReadProtocol::Asca => ASCA_READ_GATE,
            ReadProtocol::Ispp { v_gate } => v_gate,
        }
    }
}

/// Verify read at 0.2 V. Reads never change the device state.
pub fn read_out(dev: &CompactState, circuit: &Circuit, protocol: ReadProtocol) -> Result<f64> {
    read_current(&circuit.model, dev, protocol.gate(), &circuit.fet)
}

/// Which part of a protocol issued a pulse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Ispp,
    Scheme1,
    Scheme2,
    Scheme3,
    EraseStageA,
    EraseStageB,
    Verify,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub phase: Phase,
    pub pulse: Pulse,
    /// Read current for read pulses.
    pub read_a: Option<f64>,
    /// Source energy of this pulse (J).
    pub energy_j: f64,
}

/// Accumulates the pulse trace of one protocol run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub entries: Vec<TraceEntry>,
}

impl Trace {
    pub fn energy(&self) -> f64 {
        self.entries.iter().map(|e| e.energy_j).sum()
    }

    fn program(&self) -> usize {
        self.entries.iter().filter(|e| e.pulse.kind == PulseKind::Program).count()
    }
}

fn apply(dev: &CompactState, circuit: &Circuit, pulse: Pulse, phase: Phase, trace: &mut Trace) -> Result<CompactState> {
    let (next, out) = apply_pulse(&circuit.model, dev, &pulse, &circuit.fet)?;
    trace.entries.push(TraceEntry { phase, pulse, read_a: None, energy_j: out.energy });
    Ok(next)
}

fn verify(dev: &CompactState, circuit: &Circuit, protocol: ReadProtocol, phase: Phase, trace: &mut Trace) -> Result<f64> {
    let i = read_out(dev, circuit, protocol)?;
    let pulse = Pulse::read(protocol.gate(), READ_WIDTH);
    trace.entries.push(TraceEntry { phase, pulse, read_a: Some(i), energy_j: i * READ_VOLTAGE * READ_WIDTH });
    Ok(i)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EraseScheme {
    /// Stage A only: the fixed 60-pulse train.
    Fixed,
    /// Stage A followed by the Stage B amplitude ramp.
    Adaptive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EraseReport {
    pub success: bool,
    pub pulses: usize,
    pub reads: usize,
    pub final_read: f64,
}

/// Erases towards the HRS (read below 10 µA).
pub fn erase(
    dev: &CompactState,
    circuit: &Circuit,
    scheme: EraseScheme,
    protocol: ReadProtocol,
    trace: &mut Trace,
) -> Result<(CompactState, EraseReport)> {
    let mut s = *dev;
    let mut report = EraseReport { success: false, pulses: 0, reads: 0, final_read: f64::NAN };
    for pulse in make_train(&TrainSpec::EraseFixed).pulses {
        s = apply(&s, circuit, pulse, Phase::EraseStageA, trace)?;
        report.pulses += 1;
    }
    let mut i = verify(&s, circuit, protocol, Phase::EraseStageA, trace)?;
    report.reads += 1;
    if scheme == EraseScheme::Adaptive && i >= HRS_CEILING {
        let ramp = make_train(&"erase_ramp".parse()?).pulses;
        let cap = *ramp.last().expect("non-empty ramp");
        let stage_b = ramp.into_iter().chain(std::iter::repeat_n(cap, STAGE_B_CAP_REPEATS));
        for pulse in stage_b {
            s = apply(&s, circuit, pulse, Phase::EraseStageB, trace)?;
            report.pulses += 1;
            i = verify(&s, circuit, protocol, Phase::EraseStageB, trace)?;
            report.reads += 1;
            if i < HRS_CEILING {
                break;
            }
        }
    }
    report.final_read = i;
    report.success = i < HRS_CEILING;
    Ok((s, report))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    EraseFailure,
    AttemptCap,
    OvershootLoop,
}

/// Pulse parameters of one ASCA attempt.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeParams {
    pub drain_start: f64,
    pub drain_stop: f64,
    pub drain_step: f64,
    /// Gate bias at the start of the attempt (V).
    pub base_gate: f64,
    /// Scheme 1 and Scheme 2 gate increment (V).
    pub gate_step: f64,
    /// Scheme 3 per-pulse gate increment (V).
    pub gate_step_fine: f64,
}

impl SchemeParams {
    /// Defaults for a target: 1.5 → 3 V drain staircase in 0.1 V steps at
    /// the gate whose compliance is 1.1 × target.
    pub fn for_target(target: &TargetLevel, fet: &MosfetParams) -> Result<Self> {
        Ok(Self {
            drain_start: 1.5,
            drain_stop: 3.0,
            drain_step: 0.1,
            base_gate: gate_for_compliance(fet, (1.1 * target.i_target).clamp(1e-6, 1e-3))?,
            gate_step: GATE_STEP,
            gate_step_fine: GATE_STEP_FINE,
        })
    }

    /// Back-off before a retry: drain start and step × 0.8 (floors 1 V and
    /// 10 mV) and gate increments halved (floor 10 mV). The base gate moves
    /// to the compliance `scale` × its present one (`scale` clamped to
    /// [0.5, 0.97]); with `scale >= 1` it drops by half the new increment
    /// instead, or rises when that would reach the threshold, so a retry
    /// never repeats its predecessor.
    pub fn backed_off(&self, fet: &MosfetParams, scale: f64) -> Self {
        let gate_step = (0.5 * self.gate_step).max(GATE_STEP_FLOOR);
        let base_gate = if scale < 1.0 {
            let i_cc = fet.saturation_current(self.base_gate) * scale.clamp(0.5, 0.97);
            gate_for_compliance(fet, i_cc.max(1e-6)).unwrap_or(self.base_gate - 0.5 * gate_step)
        } else {
            let dec = 0.5 * gate_step;
            let lowered = self.base_gate - dec;
            if lowered > fet.v_th + 1e-3 { lowered } else { self.base_gate + dec }
        };
        Self {
            drain_start: (0.8 * self.drain_start).max(1.0),
            drain_stop: self.drain_stop,
            drain_step: (0.8 * self.drain_step).max(0.01),
            base_gate,
            gate_step,
            gate_step_fine: (0.5 * self.gate_step_fine).max(GATE_STEP_FLOOR),
        }
    }

    fn ramp(&self) -> Vec<f64> {
        crate::circuit::staircase(self.drain_start, self.drain_stop, self.drain_step)
    }
}

/// Audit record of one programming operation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgramReport {
    pub target: TargetLevel,
    pub outcome: Outcome,
    pub pulses_applied: usize,
    pub erases_performed: usize,
    pub final_read: f64,
    /// Parameters of every attempt, in order.
    pub attempts: Vec<SchemeParams>,
    pub trace: Trace,
    pub energy_j: f64,
}

impl ProgramReport {
    fn finish(target: TargetLevel, outcome: Outcome, erases: usize, final_read: f64, attempts: Vec<SchemeParams>, trace: Trace) -> Self {
        Self {
            target,
            outcome,
            pulses_applied: trace.program(),
            erases_performed: erases,
            final_read,
            attempts,
            energy_j: trace.energy(),
            trace,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// Result of one scheme step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    InBand,
    Below,
    Overshoot,
    /// The scheme cannot raise the drive any further.
    Exhausted,
}

fn judge(i: f64, target: &TargetLevel) -> StepOutcome {
    if target.contains(i) {
        StepOutcome::InBand
    } else if i > target.upper() {
        StepOutcome::Overshoot
    } else {
        StepOutcome::Below
    }
}

/// Position inside an attempt: current gate and next drain index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeCursor {
    pub gate: f64,
    pub drain_index: usize,
}

impl SchemeCursor {
    pub fn start(params: &SchemeParams) -> Self {
        Self { gate: params.base_gate, drain_index: 0 }
    }

    fn drain(&self, ramp: &[f64]) -> f64 {
        ramp[self.drain_index.min(ramp.len() - 1)]
    }
}

/// Scheme 1: next drain pulse of the staircase at the state's gate, then a
/// verify read. An exhausted staircase raises the gate and restarts it.
pub fn scheme1(
    dev: &mut CompactState,
    circuit: &Circuit,
    target: &TargetLevel,
    params: &SchemeParams,
    cursor: &mut SchemeCursor,
    trace: &mut Trace,
) -> Result<(StepOutcome, f64)> {
    let ramp = params.ramp();
    if cursor.drain_index >= ramp.len() {
        if cursor.gate + params.gate_step > MAX_GATE {
            return Ok((StepOutcome::Exhausted, f64::NAN));
        }
        cursor.gate += params.gate_step;
        cursor.drain_index = 0;
    }
    let pulse = Pulse::program(cursor.drain(&ramp), cursor.gate, 1e-3);
    *dev = apply(dev, circuit, pulse, Phase::Scheme1, trace)?;
    cursor.drain_index += 1;
    let i = verify(dev, circuit, ReadProtocol::Asca, Phase::Scheme1, trace)?;
    Ok((judge(i, target), i))
}

/// Scheme 2: three drain pulses at the current gate, one verify read, then
/// the gate is raised for the next group.
pub fn scheme2(
    dev: &mut CompactState,
    circuit: &Circuit,
    target: &TargetLevel,
    params: &SchemeParams,
    cursor: &mut SchemeCursor,
    trace: &mut Trace,
) -> Result<(StepOutcome, f64)> {
    if cursor.gate > MAX_GATE {
        return Ok((StepOutcome::Exhausted, f64::NAN));
    }
    let ramp = params.ramp();
    for _ in 0..3 {
        let pulse = Pulse::program(cursor.drain(&ramp), cursor.gate, 1e-3);
        *dev = apply(dev, circuit, pulse, Phase::Scheme2, trace)?;
        cursor.drain_index += 1;
    }
    let i = verify(dev, circuit, ReadProtocol::Asca, Phase::Scheme2, trace)?;
    cursor.gate += params.gate_step;
    Ok((judge(i, target), i))
}

/// Scheme 3: as Scheme 2, with the gate incremented after every drain pulse.
pub fn scheme3(
    dev: &mut CompactState,
    circuit: &Circuit,
    target: &TargetLevel,
    params: &SchemeParams,
    cursor: &mut SchemeCursor,
    trace: &mut Trace,
) -> Result<(StepOutcome, f64)> {
    if cursor.gate > MAX_GATE {
        return Ok((StepOutcome::Exhausted, f64::NAN));
    }
    let ramp = params.ramp();
    for _ in 0..3 {
        let pulse = Pulse::program(cursor.drain(&ramp), cursor.gate, 1e-3);
        *dev = apply(dev, circuit, pulse, Phase::Scheme3, trace)?;
        cursor.drain_index += 1;
        cursor.gate += params.gate_step_fine;
    }
    let i = verify(dev, circuit, ReadProtocol::Asca, Phase::Scheme3, trace)?;
    Ok((judge(i, target), i))
}

/// Runs the ASCA flowchart towards `target`. The scheme for each step is
/// chosen from the zone of the latest read; an overshoot erases the device
/// and restarts with backed-off parameters.
pub fn asca_program(dev: &CompactState, circuit: &Circuit, target: &TargetLevel) -> Result<(CompactState, ProgramReport)> {
    let mut s = *dev;
    let mut trace = Trace::default();
    let mut erases = 0;
    let mut attempts = Vec::new();
    let mut i = verify(&s, circuit, ReadProtocol::Asca, Phase::Verify, &mut trace)?;

    if target.is_hrs() {
        let outcome = if target.contains(i) {
            Outcome::Success
        } else {
            let (next, rep) = erase(&s, circuit, EraseScheme::Adaptive, ReadProtocol::Asca, &mut trace)?;
            s = next;
            erases += 1;
            i = rep.final_read;
            if rep.success { Outcome::Success } else { Outcome::EraseFailure }
        };
        return Ok((s, ProgramReport::finish(*target, outcome, erases, i, attempts, trace)));
    }

    let mut params = SchemeParams::for_target(target, &circuit.fet)?;
    let mut all_overshoots = true;
    loop {
        if i > target.upper() || (!attempts.is_empty() && i >= HRS_CEILING) {
            // above band, or a restart that must begin from the HRS
            let (next, rep) = erase(&s, circuit, EraseScheme::Adaptive, ReadProtocol::Asca, &mut trace)?;
            s = next;
            erases += 1;
            i = rep.final_read;
            if !rep.success {
                return Ok((s, ProgramReport::finish(*target, Outcome::EraseFailure, erases, i, attempts, trace)));
            }
        }
        attempts.push(params);
        let mut cursor = SchemeCursor::start(&params);
        let mut pulses = 0;
        let step = loop {
            let (outcome, read) = match classify_zone(i) {
                Zone::BelowRange | Zone::Zone1 => scheme1(&mut s, circuit, target, &params, &mut cursor, &mut trace)?,
                Zone::Zone2 => scheme2(&mut s, circuit, target, &params, &mut cursor, &mut trace)?,
                Zone::Zone3 => scheme3(&mut s, circuit, target, &params, &mut cursor, &mut trace)?,
            };
            if outcome == StepOutcome::Exhausted {
                break outcome;
            }
            i = read;
            pulses += 1;
            if outcome != StepOutcome::Below || pulses >= MAX_PULSES_PER_ATTEMPT {
                break outcome;
            }
        };
        match step {
            StepOutcome::InBand => {
                return Ok((s, ProgramReport::finish(*target, Outcome::Success, erases, i, attempts, trace)));
            }
            StepOutcome::Overshoot => {}
            _ => all_overshoots = false,
        }
        if attempts.len() > MAX_RESTARTS {
            let outcome = if all_overshoots { Outcome::OvershootLoop } else { Outcome::AttemptCap };
            return Ok((s, ProgramReport::finish(*target, outcome, erases, i, attempts, trace)));
        }
        let scale = if step == StepOutcome::Overshoot { target.i_target / i } else { 1.0 };
        params = params.backed_off(&circuit.fet, scale);
    }
}

/// ISPP: 0 → 3 V staircase of 0.5 ms pulses at the compliance gate, one
/// read after every pulse, no verify loop.
pub fn ispp_program(dev: &CompactState, circuit: &Circuit, i_cc: f64) -> Result<(CompactState, ProgramReport)> {
    ispp_program_with_step(dev, circuit, i_cc, 0.1)
}

pub fn ispp_program_with_step(dev: &CompactState, circuit: &Circuit, i_cc: f64, step: f64) -> Result<(CompactState, ProgramReport)> {
    if !(10e-6 * (1.0 - 1e-12)..=250e-6 * (1.0 + 1e-12)).contains(&i_cc) {
        return Err(Error::ComplianceRange(i_cc));
    }
    let v_gate = gate_for_compliance(&circuit.fet, i_cc)?;
    let protocol = ReadProtocol::Ispp { v_gate };
    let target = TargetLevel::standalone(i_cc);
    let mut trace = Trace::default();
    let mut s = *dev;
    let mut i = 0.0;
    for pulse in make_train(&TrainSpec::IsppRamp { step, v_gate }).pulses {
        s = apply(&s, circuit, pulse, Phase::Ispp, &mut trace)?;
        i = verify(&s, circuit, protocol, Phase::Ispp, &mut trace)?;
    }
    let outcome = if target.contains(i) { Outcome::Success } else { Outcome::AttemptCap };
    Ok((s, ProgramReport::finish(target, outcome, 0, i, vec![], trace)))
}

/// One ISPP program followed by the fixed erase train; an erase that leaves
/// the read at or above 10 µA turns the outcome into `EraseFailure`.
pub fn ispp_cycle(dev: &CompactState, circuit: &Circuit, i_cc: f64) -> Result<(CompactState, ProgramReport, EraseReport)> {
    let (s, mut report) = ispp_program(dev, circuit, i_cc)?;
    let protocol = ReadProtocol::Ispp { v_gate: gate_for_compliance(&circuit.fet, i_cc)? };
    let (s, erased) = erase(&s, circuit, EraseScheme::Fixed, protocol, &mut report.trace)?;
    report.erases_performed += 1;
    report.energy_j = report.trace.energy();
    if !erased.success {
        report.outcome = Outcome::EraseFailure;
    }
    Ok((s, report, erased))
}

/// Per-level statistics over the successful repeats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelAggregate {
    pub level_index: usize,
    pub i_target: f64,
    pub mean: f64,
    pub sd: f64,
    pub cv: f64,
    pub success_rate: f64,
    pub mean_pulses: f64,
    pub mean_energy: f64,
    pub min_read: f64,
    pub max_read: f64,
}

pub fn aggregate(level: &TargetLevel, reports: &[ProgramReport]) -> LevelAggregate {
    let ok: Vec<f64> = reports.iter().filter(|r| r.outcome == Outcome::Success).map(|r| r.final_read).collect();
    let n = ok.len() as f64;
    let mean = if ok.is_empty() { f64::NAN } else { ok.iter().sum::<f64>() / n };
    let sd = if ok.len() < 2 { 0.0 } else { (ok.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() };
    let total = reports.len().max(1) as f64;
    LevelAggregate {
        level_index: level.index,
        i_target: level.i_target,
        mean,
        sd,
        cv: if mean > 0.0 { sd / mean } else { 0.0 },
        success_rate: n / total,
        mean_pulses: reports.iter().map(|r| r.pulses_applied as f64).sum::<f64>() / total,
        mean_energy: reports.iter().map(|r| r.energy_j).sum::<f64>() / total,
        min_read: ok.iter().copied().fold(f64::INFINITY, f64::min),
        max_read: ok.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    }
}

/// Aggregate CSV: level_index, i_target_A, mean_A, sd_A, cv, success_rate,
/// mean_pulses, mean_energy_J.
pub fn aggregate_csv(rows: &[LevelAggregate]) -> String {
    let mut out = String::from("level_index,i_target_A,mean_A,sd_A,cv,success_rate,mean_pulses,mean_energy_J\n");
    for r in rows {
        out.push_str(&format!(
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
            r.level_index, r.i_target, r.mean, r.sd, r.cv, r.success_rate, r.mean_pulses, r.mean_energy
        ));
    }
    out
}

/// Programs every level of `schedule` `repeats` times on one device. Each
/// LRS repeat starts a new cycle, runs ASCA and is followed by an erase;
/// the HRS level is verified by an erase.
pub fn run_schedule<R: Rng + ?Sized>(
    dev: &CompactState,
    circuit: &Circuit,
    schedule: &LevelSchedule,
    repeats: usize,
    rng: &mut R,
) -> Result<(CompactState, Vec<ProgramReport>)> {
    if repeats == 0 {
        return Err(Error::Config("repeats must be at least 1".into()));
    }
    let mut s = *dev;
    let mut reports = Vec::with_capacity(schedule.n_levels * repeats);
    for level in &schedule.levels {
        for _ in 0..repeats {
            s = circuit.model.begin_cycle(&s, rng);
            let (next, mut report) = asca_program(&s, circuit, level)?;
            s = next;
            if !level.is_hrs() {
                let (next, rep) = erase(&s, circuit, EraseScheme::Adaptive, ReadProtocol::Asca, &mut Trace::default())?;
                s = next;
                if !rep.success && report.outcome == Outcome::Success {
                    report.outcome = Outcome::EraseFailure;
                }
            }
            reports.push(report);
        }
    }
    Ok((s, reports))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zone_examples() {
        assert_eq!(classify_zone(30e-6), Zone::Zone1);
        assert_eq!(classify_zone(120e-6), Zone::Zone3);
        assert_eq!(classify_zone(9e-6), Zone::BelowRange);
        assert_eq!(classify_zone(10e-6), Zone::Zone1);
        assert_eq!(classify_zone(50e-6), Zone::Zone2);
    }

    #[test]
    fn schedule_bands_are_disjoint() {
        for n in [16, 32, 64] {
            let s = LevelSchedule::standard(n).unwrap();
            assert_eq!(s.levels.len(), n);
            for w in s.levels.windows(2) {
                assert!(w[1].i_target > w[0].i_target);
                assert!(w[0].upper() < w[1].lower());
            }
            assert!((s.levels[n - 1].i_target - 200e-6).abs() < 1e-15);
        }
        assert!(LevelSchedule::standard(8).is_err());
    }

    #[test]
    fn band_rule() {
        let s = LevelSchedule::standard(64).unwrap();
        let spacing = 190e-6 / 63.0;
        for l in s.lrs() {
            let expect = (0.05 * l.i_target).min(0.45 * spacing);
            assert_eq!(l.band_halfwidth, expect);
        }
    }

    #[test]
    fn backoff_always_changes_something() {
        let fet = crate::params::Calibration::default_shipped().mosfet();
        let mut p = SchemeParams::for_target(&TargetLevel::standalone(13e-6), &fet).unwrap();
        for k in 0..100 {
            let q = p.backed_off(&fet, if k % 2 == 0 { 0.9 } else { 1.0 });
            assert_ne!(p, q);
            p = q;
        }
    }
}
