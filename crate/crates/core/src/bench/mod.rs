//! Experiment harness: configurations, seeded device streams, run manifests
//! and byte-stable outputs.

mod calibrate;
mod experiments;
pub mod stats;

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::params::{Calibration, Overrides, SampleName, SamplePreset};

pub use calibrate::{calibration_targets, evaluate_targets, TargetReport};
pub use experiments::{ispp_statistics, AscaStats, IsppStats};

/// Name of the manifest written next to every run's outputs.
pub const MANIFEST_FILE: &str = "manifest.json";
pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Sweep,
    PdeMaps,
    Cdf,
    Kinetics,
    Ispp,
    Asca,
    Retention,
    Endurance,
    Compare,
    Calibrate,
}

impl Experiment {
    pub const ALL: [Experiment; 10] = [
        Experiment::Sweep,
        Experiment::PdeMaps,
        Experiment::Cdf,
        Experiment::Kinetics,
        Experiment::Ispp,
        Experiment::Asca,
        Experiment::Retention,
        Experiment::Endurance,
        Experiment::Compare,
        Experiment::Calibrate,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Experiment::Sweep => "sweep",
            Experiment::PdeMaps => "pde_maps",
            Experiment::Cdf => "cdf",
            Experiment::Kinetics => "kinetics",
            Experiment::Ispp => "ispp",
            Experiment::Asca => "asca",
            Experiment::Retention => "retention",
            Experiment::Endurance => "endurance",
            Experiment::Compare => "compare",
            Experiment::Calibrate => "calibrate",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.replace('-', "_");
        Experiment::ALL
            .into_iter()
            .find(|e| e.as_str() == key)
            .ok_or_else(|| Error::Config(format!("unknown experiment `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    Compact,
    Pde,
}

/// Experiment-specific knobs. Unused fields are ignored by experiments that
/// do not need them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    /// Level count (asca, retention) or number of compliance settings (ispp).
    pub levels: usize,
    pub repeats: usize,
    /// Recorded DC cycles (endurance).
    pub cycles: usize,
    /// Erase-failure trials above 150 µA (ispp, compare).
    pub trials: usize,
    /// Pulse amplitudes (V); empty means the calibrated window.
    pub amplitudes: Vec<f64>,
    pub width: f64,
    pub rise: f64,
    /// Retention horizon (h).
    pub hours: f64,
    /// Bake temperature (K).
    pub bake_temperature: f64,
    /// Field-solver grid (n_r, n_z).
    pub grid: [usize; 2],
    /// Cycle-to-cycle barrier jitter.
    pub jitter: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub preset: SampleName,
    pub seed: u64,
    pub n_devices: usize,
    pub engine: Engine,
    pub schedule: Schedule,
    pub overrides: Overrides,
    /// Calibration file; the shipped calibration when absent.
    pub calibration: Option<PathBuf>,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    /// Defaults for `experiment` on `preset`.
    pub fn new(experiment: Experiment, preset: SampleName) -> Self {
        use Experiment::*;
        let n_devices = match experiment {
            Cdf => 150,
            Ispp | Compare => 100,
            Calibrate => 50,
            _ => 1,
        };
        let repeats = match experiment {
            Asca | Ispp | Compare => 50,
            _ => 1,
        };
        let levels = match (experiment, preset) {
            (Retention, SampleName::R) => 16,
            _ => 64,
        };
        Self {
            experiment,
            preset,
            seed: 1,
            n_devices,
            engine: if experiment == PdeMaps { Engine::Pde } else { Engine::Compact },
            schedule: Schedule {
                levels,
                repeats,
                cycles: 50,
                trials: 100,
                amplitudes: Vec::new(),
                width: 1e-6,
                rise: 0.1e-6,
                hours: 24.0,
                bake_temperature: 423.15,
                grid: [64, 128],
                jitter: experiment == Endurance,
            },
            overrides: Overrides::new(),
            calibration: None,
            output_dir: PathBuf::from("out"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.schedule;
        let bad = |m: String| Err(Error::Config(m));
        if self.n_devices == 0 {
            return bad("n_devices must be at least 1".into());
        }
        if s.repeats == 0 || s.cycles == 0 {
            return bad("repeats and cycles must be at least 1".into());
        }
        if matches!(self.experiment, Experiment::Asca | Experiment::Retention | Experiment::Compare)
            && ![16, 32, 64].contains(&s.levels)
        {
            return bad(format!("levels must be 16, 32 or 64, got {}", s.levels));
        }
        if self.experiment == Experiment::Ispp && s.levels < 2 {
            return bad("ispp needs at least 2 compliance settings".into());
        }
        if !(s.width > 0.0 && s.rise >= 0.0 && s.rise < s.width) {
            return bad(format!("bad pulse shape width={} rise={}", s.width, s.rise));
        }
        if !(s.hours >= 0.0 && s.bake_temperature >= 300.0) {
            return bad(format!("bad bake {} h at {} K", s.hours, s.bake_temperature));
        }
        if s.grid[0] < 16 || s.grid[1] < 16 {
            return bad(format!("grid {:?} below 16 nodes per axis", s.grid));
        }
        if self.experiment == Experiment::PdeMaps && self.engine != Engine::Pde {
            return bad("pde_maps runs on the pde engine".into());
        }
        Ok(())
    }

    /// Reads a TOML configuration; missing keys take the defaults of the
    /// named experiment.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let mut cfg = Self::new(file.experiment.parse()?, file.preset.as_deref().unwrap_or("NPs").parse()?);
        file.apply(&mut cfg)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    experiment: String,
    preset: Option<String>,
    seed: Option<u64>,
    n_devices: Option<usize>,
    engine: Option<Engine>,
    calibration: Option<PathBuf>,
    output_dir: Option<PathBuf>,
    #[serde(default)]
    overrides: Overrides,
    #[serde(default)]
    schedule: ScheduleFile,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScheduleFile {
    levels: Option<usize>,
    repeats: Option<usize>,
    cycles: Option<usize>,
    trials: Option<usize>,
    amplitudes: Option<Vec<f64>>,
    width: Option<f64>,
    rise: Option<f64>,
    hours: Option<f64>,
    bake_temperature: Option<f64>,
    grid: Option<[usize; 2]>,
    jitter: Option<bool>,
}

impl ConfigFile {
    fn apply(self, cfg: &mut ExperimentConfig) -> Result<()> {
        macro_rules! take {
            ($dst:expr, $src:expr) => {
                if let Some(v) = $src {
                    $dst = v;
                }
            };
        }
        take!(cfg.seed, self.seed);
        take!(cfg.n_devices, self.n_devices);
        take!(cfg.engine, self.engine);
        take!(cfg.output_dir, self.output_dir);
        cfg.calibration = self.calibration;
        cfg.overrides = self.overrides;
        let s = self.schedule;
        let d = &mut cfg.schedule;
        take!(d.levels, s.levels);
        take!(d.repeats, s.repeats);
        take!(d.cycles, s.cycles);
        take!(d.trials, s.trials);
        take!(d.amplitudes, s.amplitudes);
        take!(d.width, s.width);
        take!(d.rise, s.rise);
        take!(d.hours, s.hours);
        take!(d.bake_temperature, s.bake_temperature);
        take!(d.grid, s.grid);
        take!(d.jitter, s.jitter);
        Ok(())
    }
}

/// Seed of the stream for one (experiment, device, cycle) triple.
pub fn derive_seed(master: u64, experiment: &str, device: u64, cycle: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(experiment.as_bytes());
    h.update([0u8]);
    h.update(device.to_le_bytes());
    h.update(cycle.to_le_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest is 32 bytes"))
}

pub fn stream(master: u64, experiment: &str, device: u64, cycle: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, experiment, device, cycle))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// One data file produced by a run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

/// A named acceptance threshold evaluated on a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Self { name: name.to_string(), passed, detail: detail.into() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub artifacts: Vec<Artifact>,
    pub checks: Vec<Check>,
    /// Machine-readable summary, also written as `<experiment>_summary.json`.
    pub summary: serde_json::Value,
}

impl RunOutput {
    pub fn artifact(&self, name: &str) -> Option<&Artifact> {
        self.artifacts.iter().find(|a| a.name == name)
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Identification stamped on every output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stamp {
    pub manifest: String,
    pub experiment: Experiment,
    pub preset: SampleName,
    pub seed: u64,
    pub calibration_version: String,
    pub code_version: String,
}

impl Stamp {
    /// Leading comment line of CSV outputs.
    pub fn csv_line(&self) -> String {
        format!(
            "# manifest={} experiment={} preset={} seed={} calibration={} code={}\n",
            self.manifest, self.experiment, self.preset, self.seed, self.calibration_version, self.code_version
        )
    }
}

/// Everything an experiment needs besides its configuration.
pub struct Context {
    pub cfg: ExperimentConfig,
    pub calibration: Calibration,
    /// The configured preset with overrides applied.
    pub preset: SamplePreset,
    pub stamp: Stamp,
}

impl Context {
    pub fn new(cfg: &ExperimentConfig, calibration: Calibration) -> Result<Self> {
        cfg.validate()?;
        let preset = calibration.preset(cfg.preset).with_overrides(&cfg.overrides)?;
        let stamp = Stamp {
            manifest: MANIFEST_FILE.to_string(),
            experiment: cfg.experiment,
            preset: cfg.preset,
            seed: cfg.seed,
            calibration_version: calibration.version().to_string(),
            code_version: CODE_VERSION.to_string(),
        };
        Ok(Self { cfg: cfg.clone(), calibration, preset, stamp })
    }

    pub(crate) fn csv(&self, name: &str, body: String) -> Artifact {
        let mut text = self.stamp.csv_line();
        text.push_str(&body);
        Artifact { name: name.to_string(), bytes: text.into_bytes() }
    }

    pub(crate) fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<Artifact> {
        #[derive(Serialize)]
        struct Stamped<'a, T> {
            stamp: &'a Stamp,
            #[serde(flatten)]
            body: &'a T,
        }
        let mut text = serde_json::to_string_pretty(&Stamped { stamp: &self.stamp, body: value })?;
        text.push('\n');
        Ok(Artifact { name: name.to_string(), bytes: text.into_bytes() })
    }

    pub(crate) fn stream(&self, tag: &str, device: u64, cycle: u64) -> ChaCha8Rng {
        stream(self.cfg.seed, tag, device, cycle)
    }
}

/// Loads the calibration a configuration refers to.
pub fn load_calibration(cfg: &ExperimentConfig) -> Result<(Calibration, String)> {
    match &cfg.calibration {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            Ok((Calibration::from_toml_str(&text)?, sha256_hex(text.as_bytes())))
        }
        None => Ok((Calibration::default_shipped(), sha256_hex(crate::params::DEFAULT_CALIBRATION.as_bytes()))),
    }
}

/// Runs an experiment in memory.
pub fn run(cfg: &ExperimentConfig, calibration: Calibration) -> Result<RunOutput> {
    let ctx = Context::new(cfg, calibration)?;
    let mut out = match cfg.experiment {
        Experiment::Sweep => experiments::run_sweep(&ctx)?,
        Experiment::PdeMaps => experiments::run_pde_maps(&ctx)?,
        Experiment::Cdf => experiments::run_cdf(&ctx)?,
        Experiment::Kinetics => experiments::run_kinetics(&ctx)?,
        Experiment::Ispp => experiments::run_ispp(&ctx)?,
        Experiment::Asca => experiments::run_asca(&ctx)?,
        Experiment::Retention => experiments::run_retention(&ctx)?,
        Experiment::Endurance => experiments::run_endurance(&ctx)?,
        Experiment::Compare => experiments::run_compare(&ctx)?,
        Experiment::Calibrate => calibrate::run_calibrate(&ctx)?,
    };
    let summary = ctx.json(&format!("{}_summary.json", cfg.experiment), &out.summary)?;
    out.artifacts.push(summary);
    out.artifacts.sort_by(|a, b| a.name.cmp(&b.name));
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: ExperimentConfig,
    pub calibration_version: String,
    /// SHA-256 of the calibration text in effect.
    pub calibration_sha256: String,
    pub code_version: String,
    pub wall_clock_s: f64,
    /// SHA-256 of every data output, by file name.
    pub outputs: BTreeMap<String, String>,
    pub checks: Vec<Check>,
}

impl RunManifest {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

/// Runs `cfg`, writes its outputs and manifest into `cfg.output_dir`.
pub fn execute(cfg: &ExperimentConfig) -> Result<(RunOutput, RunManifest)> {
    cfg.validate()?;
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (calibration, cal_sha) = load_calibration(cfg)?;
    let version = calibration.version().to_string();
    let started = Instant::now();
    let out = run(cfg, calibration)?;
    let wall = started.elapsed().as_secs_f64();
    let mut outputs = BTreeMap::new();
    for a in &out.artifacts {
        let path = dir.join(&a.name);
        fs::write(&path, &a.bytes).map_err(|e| Error::io(&path, e))?;
        outputs.insert(a.name.clone(), sha256_hex(&a.bytes));
    }
    let manifest = RunManifest {
        config: cfg.clone(),
        calibration_version: version,
        calibration_sha256: cal_sha,
        code_version: CODE_VERSION.to_string(),
        wall_clock_s: wall,
        outputs,
        checks: out.checks.clone(),
    };
    let path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest)? + "\n";
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok((out, manifest))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    /// (file, recorded checksum, replayed checksum)
    pub files: Vec<(String, String, String)>,
}

impl ReplayReport {
    pub fn all_match(&self) -> bool {
        !self.files.is_empty() && self.files.iter().all(|(_, a, b)| a == b)
    }
}

/// Re-runs a manifest in memory and compares checksums file by file.
pub fn replay(manifest: &RunManifest) -> Result<ReplayReport> {
    let (calibration, cal_sha) = load_calibration(&manifest.config)?;
    if cal_sha != manifest.calibration_sha256 {
        return Err(Error::Config(format!(
            "calibration checksum {cal_sha} differs from the recorded {}",
            manifest.calibration_sha256
        )));
    }
    let out = run(&manifest.config, calibration)?;
    let replayed: BTreeMap<String, String> =
        out.artifacts.iter().map(|a| (a.name.clone(), sha256_hex(&a.bytes))).collect();
    let mut names: Vec<&String> = manifest.outputs.keys().chain(replayed.keys()).collect();
    names.sort();
    names.dedup();
    let files = names
        .into_iter()
        .map(|n| {
            let get = |m: &BTreeMap<String, String>| m.get(n).cloned().unwrap_or_default();
            (n.clone(), get(&manifest.outputs), get(&replayed))
        })
        .collect();
    Ok(ReplayReport { files })
}

/// Fixed-width exponential format used in every CSV (17 significant digits).
pub(crate) fn e17(x: f64) -> String {
    format!("{x:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_depends_on_every_index() {
        let base = derive_seed(7, "cdf", 3, 1);
        assert_eq!(base, derive_seed(7, "cdf", 3, 1));
        for other in [derive_seed(8, "cdf", 3, 1), derive_seed(7, "asca", 3, 1), derive_seed(7, "cdf", 4, 1), derive_seed(7, "cdf", 3, 2)] {
            assert_ne!(base, other);
        }
    }

    #[test]
    fn zero_devices_is_a_config_error() {
        let mut cfg = ExperimentConfig::new(Experiment::Cdf, SampleName::R);
        cfg.n_devices = 0;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn config_file_fills_defaults() {
        let cfg = ExperimentConfig::from_toml_str(
            "experiment = \"asca\"\npreset = \"NPs\"\nseed = 7\n[schedule]\nrepeats = 3\n[overrides]\ne_drift = 1.01\n",
        )
        .unwrap();
        assert_eq!(cfg.schedule.levels, 64);
        assert_eq!(cfg.schedule.repeats, 3);
        assert_eq!(cfg.overrides["e_drift"], 1.01);
        assert!(ExperimentConfig::from_toml_str("experiment = \"asca\"\nbogus = 1\n").is_err());
    }

    #[test]
    fn experiment_names_round_trip() {
        for e in Experiment::ALL {
            assert_eq!(e.as_str().parse::<Experiment>().unwrap(), e);
        }
        assert_eq!("pde-maps".parse::<Experiment>().unwrap(), Experiment::PdeMaps);
    }
}
