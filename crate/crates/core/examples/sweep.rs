//! DC hysteresis of the nominal NPs device on the lumped model.

use cbram::compact::CompactModel;
use cbram::params::{Calibration, SampleName};
use cbram::sweep::{dc_sweep, DcSweepSpec};

fn main() -> cbram::Result<()> {
    let cal = Calibration::default_shipped();
    let preset = cal.preset(SampleName::NPs).without_variability();
    let model = CompactModel::new(preset.clone());
    let spec = DcSweepSpec::from_defaults(cal.sweep_defaults());
    let sweep = dc_sweep(&model, &model.pristine(preset.material), &spec, &cal.mosfet())?;
    let s = sweep.summary;
    println!("SET onset   {:?} V", s.v_set);
    println!("RESET       {:?} V", s.v_reset);
    println!("R_LRS {:.3e} ohm, R_HRS {:.3e} ohm, window {:.2e}", s.r_lrs(), s.r_hrs(), s.window());
    for p in sweep.points.iter().step_by(40) {
        println!("{:+.3} V  {:+.3e} A", p.v_applied, p.current);
    }
    Ok(())
}
