//! Protocol fixtures shared by the integration tests.
#![allow(dead_code)]

use cbram::circuit::{apply_pulse, PulseKind};
use cbram::compact::{CompactModel, CompactState};
use cbram::params::{load_preset, sample_device_instance, Overrides, SampleName};
use cbram::programming::{Circuit, Phase, ProgramReport};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn circuit(name: SampleName) -> Circuit {
    let preset = load_preset(name, &Overrides::new()).unwrap();
    let fet = cbram::params::Calibration::default_shipped().mosfet();
    Circuit { model: CompactModel::new(preset), fet }
}

pub fn device(c: &Circuit, seed: u64, phi_tip: Option<f64>) -> CompactState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mat = sample_device_instance(&c.model.preset, &mut rng);
    let s = match phi_tip {
        Some(phi) => c.model.with_tip(mat, phi),
        None => c.model.pristine(mat),
    };
    c.model.begin_cycle(&s, &mut rng)
}

pub fn is_erase(phase: Phase) -> bool {
    matches!(phase, Phase::EraseStageA | Phase::EraseStageB)
}

/// Walks a trace and fails on a program pulse issued while the latest read
/// was above the band and no erase pulse has followed it.
pub fn no_program_after_overshoot(report: &ProgramReport) -> Result<(), String> {
    let mut pending = false;
    for (k, e) in report.trace.entries.iter().enumerate() {
        match e.pulse.kind {
            PulseKind::Read => pending = e.read_a.is_some_and(|i| i > report.target.upper()) && !is_erase(e.phase),
            PulseKind::Erase => pending = false,
            PulseKind::Program if pending => return Err(format!("program pulse {k} follows an above-band read")),
            PulseKind::Program => {}
        }
    }
    Ok(())
}

/// Scheme 2 and Scheme 3 interleave exactly three drain pulses per read.
pub fn group_ratio_holds(report: &ProgramReport) -> Result<(), String> {
    for phase in [Phase::Scheme2, Phase::Scheme3] {
        let mut run = 0;
        for e in report.trace.entries.iter().filter(|e| e.phase == phase) {
            match e.pulse.kind {
                PulseKind::Program => run += 1,
                PulseKind::Read => {
                    if run != 3 {
                        return Err(format!("{phase:?}: {run} pulses before a read"));
                    }
                    run = 0;
                }
                PulseKind::Erase => return Err("erase pulse inside a scheme".into()),
            }
        }
        if run != 0 {
            return Err(format!("{phase:?}: trailing pulses without a read"));
        }
    }
    Ok(())
}

/// Replays the non-read pulses from `start` and compares every per-pulse
/// energy with the trace; the total must equal the sum of the trace.
pub fn energy_is_consistent(c: &Circuit, start: &CompactState, report: &ProgramReport) -> Result<(), String> {
    let mut s = *start;
    let mut total = 0.0;
    for e in &report.trace.entries {
        if e.pulse.kind != PulseKind::Read {
            let (next, out) = apply_pulse(&c.model, &s, &e.pulse, &c.fet).map_err(|e| e.to_string())?;
            if (out.energy - e.energy_j).abs() > 1e-9 * out.energy.abs().max(1e-30) {
                return Err(format!("pulse energy {} vs trace {}", out.energy, e.energy_j));
            }
            s = next;
        }
        total += e.energy_j;
    }
    if (total - report.energy_j).abs() > 1e-9 * total.abs() {
        return Err(format!("report energy {} vs trace sum {total}", report.energy_j));
    }
    Ok(())
}
