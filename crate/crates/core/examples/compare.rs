//! ISPP against ASCA: distinct levels and erase failures at high current.
//!
//! Uses 10 repeats instead of the default 50 to keep the run short.

use cbram::bench::{run, Experiment, ExperimentConfig};
use cbram::params::{Calibration, SampleName};

fn main() -> cbram::Result<()> {
    let mut cfg = ExperimentConfig::new(Experiment::Compare, SampleName::NPs);
    cfg.schedule.repeats = 10;
    let out = run(&cfg, Calibration::default_shipped())?;
    for c in &out.checks {
        println!("{:<20} {}", c.name, c.detail);
    }
    Ok(())
}
