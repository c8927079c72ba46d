//! Runs an experiment to disk, then replays its manifest.

use cbram::bench::{execute, replay, Experiment, ExperimentConfig, RunManifest};
use cbram::params::SampleName;

fn main() -> cbram::Result<()> {
    let mut cfg = ExperimentConfig::new(Experiment::Cdf, SampleName::R);
    cfg.n_devices = 40;
    cfg.seed = 7;
    cfg.output_dir = "out/replay".into();
    execute(&cfg)?;
    let manifest = RunManifest::from_file(&cfg.output_dir.join("manifest.json"))?;
    let report = replay(&manifest)?;
    for (name, recorded, replayed) in &report.files {
        println!("{:<24} {}  {}", name, &recorded[..12], if recorded == replayed { "match" } else { "DIFFERS" });
    }
    println!("all match: {}", report.all_match());
    Ok(())
}
