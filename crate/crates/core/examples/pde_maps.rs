//! Field maps of a SET/RESET sweep on the axisymmetric solver.
//!
//! Runs on a 32x64 grid so it finishes in well under a minute; pass
//! `--grid 64x128` to the `cbram pde-maps` subcommand for the full grid.

use cbram::bench::{execute, Experiment, ExperimentConfig};
use cbram::params::SampleName;

fn main() -> cbram::Result<()> {
    let mut cfg = ExperimentConfig::new(Experiment::PdeMaps, SampleName::NPs);
    cfg.schedule.grid = [32, 64];
    cfg.output_dir = "out/pde_maps".into();
    let (out, manifest) = execute(&cfg)?;
    for name in manifest.outputs.keys() {
        println!("{}", cfg.output_dir.join(name).display());
    }
    println!("{}", out.summary);
    Ok(())
}
