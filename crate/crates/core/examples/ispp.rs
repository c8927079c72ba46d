//! Open-loop ISPP at a few compliance settings, then the fixed erase.

use cbram::circuit::ASCA_READ_GATE;
use cbram::compact::CompactModel;
use cbram::params::{Calibration, SampleName};
use cbram::programming::{erase, ispp_program, Circuit, EraseScheme, ReadProtocol, Trace};

fn main() -> cbram::Result<()> {
    let cal = Calibration::default_shipped();
    let preset = cal.preset(SampleName::NPs).without_variability();
    let c = Circuit { model: CompactModel::new(preset.clone()), fet: cal.mosfet() };
    println!("gate for reads after the erase: {ASCA_READ_GATE} V");
    for i_cc in [20e-6, 60e-6, 120e-6, 180e-6, 240e-6] {
        let (s, rep) = ispp_program(&c.model.pristine(preset.material), &c, i_cc)?;
        let (_, er) = erase(&s, &c, EraseScheme::Fixed, ReadProtocol::Asca, &mut Trace::default())?;
        println!(
            "i_cc {:5.0} uA: {:2} pulses, read {:6.1} uA, erased: {}",
            i_cc * 1e6,
            rep.pulses_applied,
            rep.final_read * 1e6,
            er.success
        );
    }
    Ok(())
}
