use std::path::PathBuf;
use std::process::ExitCode;

use cbram::bench::{execute, replay, Engine, Experiment, ExperimentConfig, RunManifest};
use cbram::params::{parse_override, SampleName};
use cbram::Error;
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Conductive-bridge memristor simulator: hysteresis, statistics and
/// multilevel programming experiments. Each run writes CSV/JSON outputs and
/// a manifest.json that `replay` can verify byte for byte.
///
/// Exit codes: 0 success, 2 configuration or I/O error, 3 acceptance check
/// failed under --check (or replay mismatch), 1 simulation failure.
#[derive(Parser)]
#[command(name = "cbram", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// DC hysteresis sweep of the nominal device.
    Sweep(RunArgs),
    /// Field maps along a PDE sweep.
    PdeMaps(RunArgs),
    /// LRS/HRS resistance CDFs over a device population.
    Cdf(RunArgs),
    /// SET time against pulse amplitude.
    Kinetics(RunArgs),
    /// Incremental-step-pulse programming levels and erase failures.
    Ispp(RunArgs),
    /// Adaptive state control programming of a level schedule.
    Asca(RunArgs),
    /// Programmed levels under a bake.
    Retention(RunArgs),
    /// Consecutive DC cycles on one device.
    Endurance(RunArgs),
    /// ISPP against ASCA on one population.
    Compare(RunArgs),
    /// Evaluate the calibration targets and write a calibration file.
    Calibrate(RunArgs),
    /// Re-run a manifest and compare output checksums.
    Replay {
        manifest: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum EngineArg {
    Compact,
    Pde,
}

#[derive(Args)]
struct RunArgs {
    /// Sample preset: R or NPs.
    #[arg(long)]
    preset: Option<String>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    devices: Option<usize>,
    /// Level count (asca, retention, compare) or compliance settings (ispp).
    #[arg(long)]
    levels: Option<usize>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    cycles: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    /// Pulse amplitudes in volts, comma separated.
    #[arg(long, value_delimiter = ',')]
    amplitudes: Option<Vec<f64>>,
    /// Bake horizon in hours.
    #[arg(long)]
    hours: Option<f64>,
    /// Field-solver grid as NRxNZ.
    #[arg(long)]
    grid: Option<String>,
    #[arg(long, value_enum)]
    engine: Option<EngineArg>,
    /// Cycle-to-cycle barrier jitter on or off.
    #[arg(long)]
    jitter: Option<bool>,
    /// Parameter override key=value (repeatable).
    #[arg(long = "param", value_name = "KEY=VALUE")]
    params: Vec<String>,
    /// Calibration file instead of the shipped one.
    #[arg(long)]
    calibration: Option<PathBuf>,
    /// Experiment configuration file (TOML); flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, env = "CBRAM_OUT")]
    out: Option<PathBuf>,
    /// Exit 3 if any acceptance check fails.
    #[arg(long)]
    check: bool,
}

impl RunArgs {
    fn config(&self, experiment: Experiment) -> Result<ExperimentConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => {
                let cfg = ExperimentConfig::from_file(path)?;
                if cfg.experiment != experiment {
                    return Err(Error::Config(format!("{} configures `{}`, not `{experiment}`", path.display(), cfg.experiment)));
                }
                cfg
            }
            None => ExperimentConfig::new(experiment, SampleName::NPs),
        };
        if let Some(p) = &self.preset {
            let name: SampleName = p.parse()?;
            if self.config.is_none() {
                cfg = ExperimentConfig::new(experiment, name);
            } else {
                cfg.preset = name;
            }
        }
        let s = &mut cfg.schedule;
        macro_rules! set {
            ($dst:expr, $src:expr) => {
                if let Some(v) = $src.clone() {
                    $dst = v;
                }
            };
        }
        set!(s.levels, self.levels);
        set!(s.repeats, self.repeats);
        set!(s.cycles, self.cycles);
        set!(s.trials, self.trials);
        set!(s.amplitudes, self.amplitudes);
        set!(s.hours, self.hours);
        set!(s.jitter, self.jitter);
        if let Some(g) = &self.grid {
            s.grid = parse_grid(g)?;
        }
        set!(cfg.seed, self.seed);
        set!(cfg.n_devices, self.devices);
        if let Some(e) = self.engine {
            cfg.engine = match e {
                EngineArg::Compact => Engine::Compact,
                EngineArg::Pde => Engine::Pde,
            };
        }
        for kv in &self.params {
            let (k, v) = parse_override(kv)?;
            cfg.overrides.insert(k, v);
        }
        if self.calibration.is_some() {
            cfg.calibration = self.calibration.clone();
        }
        set!(cfg.output_dir, self.out);
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_grid(text: &str) -> Result<[usize; 2], Error> {
    let bad = || Error::Config(format!("grid `{text}` is not NRxNZ"));
    let (a, b) = text.split_once(['x', 'X']).ok_or_else(bad)?;
    Ok([a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?])
}

fn exit_for(err: &Error) -> ExitCode {
    match err {
        Error::Config(_)
        | Error::Io { .. }
        | Error::Validation(_)
        | Error::Calibration(_)
        | Error::UnknownPreset(_)
        | Error::UnknownParameter(_)
        | Error::BadParameterValue { .. }
        | Error::ComplianceRange(_) => ExitCode::from(2),
        _ => ExitCode::from(1),
    }
}

fn run(experiment: Experiment, args: &RunArgs) -> Result<ExitCode, Error> {
    let cfg = args.config(experiment)?;
    let (out, manifest) = execute(&cfg)?;
    for c in &out.checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    println!("{} files in {} ({:.2} s)", manifest.outputs.len(), cfg.output_dir.display(), manifest.wall_clock_s);
    Ok(if args.check && !out.all_passed() { ExitCode::from(3) } else { ExitCode::SUCCESS })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Replay { manifest } => RunManifest::from_file(manifest).and_then(|m| replay(&m)).map(|report| {
            for (name, recorded, replayed) in &report.files {
                println!("{} {name}", if recorded == replayed { "match" } else { "DIFFER" });
            }
            if report.all_match() { ExitCode::SUCCESS } else { ExitCode::from(3) }
        }),
        Command::Sweep(a) => run(Experiment::Sweep, a),
        Command::PdeMaps(a) => run(Experiment::PdeMaps, a),
        Command::Cdf(a) => run(Experiment::Cdf, a),
        Command::Kinetics(a) => run(Experiment::Kinetics, a),
        Command::Ispp(a) => run(Experiment::Ispp, a),
        Command::Asca(a) => run(Experiment::Asca, a),
        Command::Retention(a) => run(Experiment::Retention, a),
        Command::Endurance(a) => run(Experiment::Endurance, a),
        Command::Compare(a) => run(Experiment::Compare, a),
        Command::Calibrate(a) => run(Experiment::Calibrate, a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_for(&e)
        }
    }
}
