//! 24 h bake at 423 K of 16 and 64 programmed levels on both samples.

use cbram::bench::{run, Experiment, ExperimentConfig};
use cbram::params::{Calibration, SampleName};

fn main() -> cbram::Result<()> {
    for name in SampleName::ALL {
        for levels in [16, 64] {
            let mut cfg = ExperimentConfig::new(Experiment::Retention, name);
            cfg.schedule.levels = levels;
            let out = run(&cfg, Calibration::default_shipped())?;
            println!("{name:?} {levels:2} levels: {}", out.checks[0].detail);
        }
    }
    Ok(())
}
