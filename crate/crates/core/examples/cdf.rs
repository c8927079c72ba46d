//! LRS/HRS resistance spread over 150 devices of each sample.

use cbram::bench::{run, Experiment, ExperimentConfig};
use cbram::params::{Calibration, SampleName};

fn main() -> cbram::Result<()> {
    let out = run(&ExperimentConfig::new(Experiment::Cdf, SampleName::NPs), Calibration::default_shipped())?;
    for c in &out.checks {
        println!("{:<22} {:<5} {}", c.name, c.passed, c.detail);
    }
    Ok(())
}
