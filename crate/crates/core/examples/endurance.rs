//! Repeated DC cycles on one device with cycle-to-cycle barrier jitter.

use cbram::bench::{run, Experiment, ExperimentConfig};
use cbram::params::{Calibration, SampleName};

fn main() -> cbram::Result<()> {
    let mut cfg = ExperimentConfig::new(Experiment::Endurance, SampleName::R);
    cfg.schedule.cycles = 20;
    let out = run(&cfg, Calibration::default_shipped())?;
    let table = String::from_utf8_lossy(&out.artifact("endurance.csv").expect("endurance table").bytes).into_owned();
    print!("{table}");
    for c in &out.checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    Ok(())
}
