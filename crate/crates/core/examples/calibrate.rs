//! Evaluates the calibration targets of both presets.

use cbram::bench::{evaluate_targets, Context, Experiment, ExperimentConfig};
use cbram::params::{Calibration, SampleName};

fn main() -> cbram::Result<()> {
    for name in SampleName::ALL {
        let mut cfg = ExperimentConfig::new(Experiment::Calibrate, name);
        cfg.n_devices = 30;
        let ctx = Context::new(&cfg, Calibration::default_shipped())?;
        println!("{name:?}");
        for r in evaluate_targets(&ctx, &ctx.preset)? {
            println!("  {:<28} {:>12.4e}  [{}, {}]  {}", r.target.name, r.value.unwrap_or(f64::NAN), r.target.lo, r.target.hi, r.passed);
        }
    }
    Ok(())
}
