//! Closed-loop programming of every level of a 16-level schedule.

use cbram::compact::CompactModel;
use cbram::params::{Calibration, SampleName};
use cbram::programming::{asca_program, classify_zone, Circuit, LevelSchedule};

fn main() -> cbram::Result<()> {
    let cal = Calibration::default_shipped();
    let preset = cal.preset(SampleName::NPs).without_variability();
    let c = Circuit { model: CompactModel::new(preset.clone()), fet: cal.mosfet() };
    let schedule = LevelSchedule::standard(16)?;
    for level in schedule.levels.iter().skip(1) {
        let (_, rep) = asca_program(&c.model.pristine(preset.material), &c, level)?;
        println!(
            "level {:2} target {:6.1} uA ({:?}): {:?}, read {:6.2} uA, {:3} pulses, {} erases, {:.2e} J",
            level.index,
            level.i_target * 1e6,
            classify_zone(level.i_target),
            rep.outcome,
            rep.final_read * 1e6,
            rep.pulses_applied,
            rep.erases_performed,
            rep.energy_j
        );
    }
    Ok(())
}
