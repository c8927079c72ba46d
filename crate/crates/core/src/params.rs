//! Physical constants, material and geometry parameters, and the two sample
//! presets (reference `R` and Pt-nanoparticle `NPs`).
//!
//! Energies are stored in eV; every other quantity is SI. The default values
//! live in `data/calibration.toml`, which is embedded at build time and can be
//! replaced at run time with [`Calibration::from_toml_str`].

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::circuit::MosfetParams;
use crate::error::{Error, Result};

/// Boltzmann constant in eV/K.
pub const BOLTZMANN_EV: f64 = 8.617_333_262e-5;
/// Boltzmann constant in J/K.
pub const BOLTZMANN_J: f64 = 1.380_649e-23;
/// Elementary charge in C.
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;

/// Schema tag expected in the `[meta]` section of a calibration file.
pub const CALIBRATION_SCHEMA: &str = "cbram-calibration/1";

/// The calibration shipped with the crate.
pub const DEFAULT_CALIBRATION: &str = include_str!("../data/calibration.toml");

/// Energy barriers are clamped into this open interval (eV).
pub const ENERGY_BOUNDS: (f64, f64) = (0.0, 5.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    /// Ambient temperature (K).
    pub t_amb: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self { t_amb: 300.0 }
    }
}

impl PhysicalConstants {
    pub const fn k_b_ev(&self) -> f64 {
        BOLTZMANN_EV
    }
    pub const fn k_b_j(&self) -> f64 {
        BOLTZMANN_J
    }
    pub const fn q(&self) -> f64 {
        ELEMENTARY_CHARGE
    }
    /// Thermal energy k_B·T in eV.
    pub fn thermal_ev(&self, temperature: f64) -> f64 {
        BOLTZMANN_EV * temperature
    }
}

/// Material parameters of the filament growth law and the heat/current
/// equations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialParams {
    /// Ion-hopping barrier (eV).
    pub e_drift: f64,
    /// Diffusion barrier (eV).
    pub e_diff: f64,
    /// Thermophoresis activation energy (eV).
    pub e_s: f64,
    /// Barrier-lowering factor multiplying q·psi.
    pub alpha: f64,
    /// Drift prefactor (m/s).
    pub a_drift: f64,
    /// Diffusion prefactor (m²/s).
    pub b_diff: f64,
    /// Thermo-diffusion prefactor (m³/s).
    pub c_thermo: f64,
    /// Filament conductivity (S/m).
    pub sigma_cf: f64,
    /// Oxide conductivity (S/m).
    pub sigma_ox: f64,
    /// Pt nanoparticle plane conductivity (S/m), used only with `np_present`.
    pub sigma_np: f64,
    pub kth_cf: f64,
    pub kth_ox: f64,
    /// Mass density (kg/m³).
    pub rho_m: f64,
    /// Specific heat (J/kg·K).
    pub c_p: f64,
    /// Lumped thermal resistance of the switching region at `phi_be` (K/W).
    pub r_th: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometryParams {
    pub t_ox: f64,
    pub electrode_side: f64,
    /// Filament diameter at the bottom electrode at SET completion (m).
    pub phi_be: f64,
    /// Filament diameter at the top electrode (m).
    pub phi_te: f64,
    pub phi_min: f64,
    pub phi_max: f64,
    pub np_diameter: f64,
    /// Nanoparticle areal density (1/m²).
    pub np_density: f64,
    pub np_present: bool,
}

impl GeometryParams {
    /// Fraction of the plane covered by nanoparticles.
    pub fn np_fill_fraction(&self) -> f64 {
        if !self.np_present {
            return 0.0;
        }
        let r = 0.5 * self.np_diameter;
        (self.np_density * std::f64::consts::PI * r * r).min(1.0)
    }
}

/// Gaussian dispersion of the barriers, device-to-device and cycle-to-cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariabilityParams {
    pub sd_e_drift_dev: f64,
    pub sd_e_diff_dev: f64,
    pub sd_e_drift_cyc: f64,
    pub sd_e_diff_cyc: f64,
}

impl VariabilityParams {
    pub const NONE: VariabilityParams = VariabilityParams {
        sd_e_drift_dev: 0.0,
        sd_e_diff_dev: 0.0,
        sd_e_drift_cyc: 0.0,
        sd_e_diff_cyc: 0.0,
    };
}

/// Conduction and thermal closure of the lumped device model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConductionParams {
    /// Gap resistance prefactor (Ω).
    pub r0_gap: f64,
    /// Tunnelling decay length (m).
    pub g0: f64,
    /// Rectification asymmetry of the gap term (1/V).
    pub chi: f64,
    /// Largest rupture gap (m).
    pub gap_max: f64,
    /// Exponent of the thermal-resistance scaling `r_th·(phi_be/phi_tip)^p`.
    pub thermal_exponent: f64,
    /// Tip diameter below which the thermal scaling saturates (m).
    pub phi_th_min: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SampleName {
    R,
    NPs,
}

impl SampleName {
    pub const ALL: [SampleName; 2] = [SampleName::R, SampleName::NPs];

    pub fn as_str(&self) -> &'static str {
        match self {
            SampleName::R => "R",
            SampleName::NPs => "NPs",
        }
    }
}

impl fmt::Display for SampleName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SampleName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "R" | "r" => Ok(SampleName::R),
            "NPs" | "nps" | "NPS" => Ok(SampleName::NPs),
            other => Err(Error::UnknownPreset(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePreset {
    pub name: SampleName,
    pub constants: PhysicalConstants,
    pub material: MaterialParams,
    pub geometry: GeometryParams,
    pub variability: VariabilityParams,
    pub conduction: ConductionParams,
}

/// Pulse-amplitude window over which the SET-time slope is fitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KineticsWindow {
    pub amplitudes: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepDefaults {
    pub v_peak_pos: f64,
    pub v_peak_neg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Meta {
    schema: String,
    version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SampleSection {
    material: MaterialParams,
    geometry: GeometryParams,
    variability: VariabilityParams,
    conduction: ConductionParams,
    kinetics: KineticsWindow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CalibrationFile {
    meta: Meta,
    constants: PhysicalConstants,
    mosfet: MosfetParams,
    sweep: SweepDefaults,
    #[serde(rename = "R")]
    r: SampleSection,
    #[serde(rename = "NPs")]
    nps: SampleSection,
}

/// A parsed calibration file: both sample presets plus the transistor and
/// stimulus defaults they were calibrated against.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    file: CalibrationFile,
}

impl Calibration {
    pub fn default_shipped() -> Self {
        Self::from_toml_str(DEFAULT_CALIBRATION).expect("shipped calibration is valid")
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: CalibrationFile =
            toml::from_str(text).map_err(|e| Error::Calibration(e.to_string()))?;
        if file.meta.schema != CALIBRATION_SCHEMA {
            return Err(Error::Calibration(format!(
                "schema `{}` is not `{CALIBRATION_SCHEMA}`",
                file.meta.schema
            )));
        }
        let cal = Calibration { file };
        for name in SampleName::ALL {
            cal.preset(name).validate()?;
        }
        cal.mosfet().validate()?;
        Ok(cal)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(&self.file).expect("calibration serializes")
    }

    pub fn version(&self) -> &str {
        &self.file.meta.version
    }

    pub fn set_version(&mut self, version: impl Into<String>) {
        self.file.meta.version = version.into();
    }

    pub fn mosfet(&self) -> MosfetParams {
        self.file.mosfet
    }

    pub fn sweep_defaults(&self) -> &SweepDefaults {
        &self.file.sweep
    }

    pub fn kinetics_window(&self, name: SampleName) -> &KineticsWindow {
        &self.section(name).kinetics
    }

    fn section(&self, name: SampleName) -> &SampleSection {
        match name {
            SampleName::R => &self.file.r,
            SampleName::NPs => &self.file.nps,
        }
    }

    fn section_mut(&mut self, name: SampleName) -> &mut SampleSection {
        match name {
            SampleName::R => &mut self.file.r,
            SampleName::NPs => &mut self.file.nps,
        }
    }

    pub fn preset(&self, name: SampleName) -> SamplePreset {
        let s = self.section(name);
        SamplePreset {
            name,
            constants: self.file.constants,
            material: s.material,
            geometry: s.geometry,
            variability: s.variability,
            conduction: s.conduction,
        }
    }

    /// Writes a (validated) preset back into the calibration.
    pub fn store_preset(&mut self, preset: &SamplePreset) -> Result<()> {
        preset.validate()?;
        let s = self.section_mut(preset.name);
        s.material = preset.material;
        s.geometry = preset.geometry;
        s.variability = preset.variability;
        s.conduction = preset.conduction;
        Ok(())
    }

    pub fn set_kinetics_window(&mut self, name: SampleName, amplitudes: Vec<f64>) {
        self.section_mut(name).kinetics.amplitudes = amplitudes;
    }
}

/// Parameter overrides, keyed by field name (`E_drift`, `sigma_cf`, ...) or
/// by `section.field` (`material.e_drift`). Keys are case-insensitive.
pub type Overrides = BTreeMap<String, f64>;

/// Parses `key=value` pairs as given on the command line.
pub fn parse_override(arg: &str) -> Result<(String, f64)> {
    let (key, value) = arg
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("expected key=value, got `{arg}`")))?;
    let key = key.trim();
    let parsed: f64 = value.trim().parse().map_err(|_| Error::BadParameterValue {
        key: key.to_string(),
        value: value.to_string(),
    })?;
    Ok((key.to_string(), parsed))
}

/// Loads a preset from the shipped calibration and applies overrides.
pub fn load_preset(name: SampleName, overrides: &Overrides) -> Result<SamplePreset> {
    Calibration::default_shipped()
        .preset(name)
        .with_overrides(overrides)
}

/// Draws one device instance: barriers perturbed by the device-to-device
/// spread and clamped into the allowed energy range.
pub fn sample_device_instance<R: Rng + ?Sized>(preset: &SamplePreset, rng: &mut R) -> MaterialParams {
    let v = &preset.variability;
    let mut m = preset.material;
    m.e_drift = perturb(m.e_drift, v.sd_e_drift_dev, rng);
    m.e_diff = perturb(m.e_diff, v.sd_e_diff_dev, rng);
    m
}

/// Adds a N(0, sd) draw and clamps into [`ENERGY_BOUNDS`]. Exactly one
/// normal variate is consumed, even when `sd == 0`.
pub(crate) fn perturb<R: Rng + ?Sized>(value: f64, sd: f64, rng: &mut R) -> f64 {
    let z: f64 = Normal::new(0.0, 1.0).expect("unit normal").sample(rng);
    if sd == 0.0 {
        return value;
    }
    clamp_energy(value + sd * z)
}

pub(crate) fn clamp_energy(e: f64) -> f64 {
    let lo = ENERGY_BOUNDS.0 + 1e-6;
    let hi = ENERGY_BOUNDS.1 - 1e-6;
    e.clamp(lo, hi)
}

impl SamplePreset {
    pub fn with_overrides(&self, overrides: &Overrides) -> Result<SamplePreset> {
        if overrides.is_empty() {
            self.validate()?;
            return Ok(self.clone());
        }
        let mut value = toml::Value::try_from(self).map_err(|e| Error::Calibration(e.to_string()))?;
        let root = value.as_table_mut().expect("preset is a table");
        for (key, v) in overrides {
            apply_override(root, key, *v)?;
        }
        let out: SamplePreset = value
            .try_into()
            .map_err(|e: toml::de::Error| Error::Calibration(e.to_string()))?;
        out.validate()?;
        Ok(out)
    }

    /// Checks every documented invariant; the error names the one violated.
    pub fn validate(&self) -> Result<()> {
        let m = &self.material;
        let g = &self.geometry;
        let v = &self.variability;
        let c = &self.conduction;
        let fail = |msg: String| Err(Error::Validation(msg));
        if !(self.constants.t_amb > 0.0) {
            return fail("t_amb must be positive".into());
        }
        for (key, e) in [("E_drift", m.e_drift), ("E_diff", m.e_diff), ("E_s", m.e_s)] {
            if !(e > ENERGY_BOUNDS.0 && e < ENERGY_BOUNDS.1) {
                return fail(format!("{key} = {e} eV outside (0, 5) eV"));
            }
        }
        for (key, x) in [
            ("alpha", m.alpha),
            ("A", m.a_drift),
            ("B", m.b_diff),
            ("sigma_cf", m.sigma_cf),
            ("sigma_ox", m.sigma_ox),
            ("sigma_np", m.sigma_np),
            ("kth_cf", m.kth_cf),
            ("kth_ox", m.kth_ox),
            ("rho_m", m.rho_m),
            ("C_p", m.c_p),
            ("R_th", m.r_th),
        ] {
            if !(x > 0.0 && x.is_finite()) {
                return fail(format!("{key} = {x} must be strictly positive"));
            }
        }
        if !(m.c_thermo >= 0.0) {
            return fail(format!("C = {} must be non-negative", m.c_thermo));
        }
        if m.sigma_cf < 1e6 * m.sigma_ox {
            return fail("sigma_cf must exceed sigma_ox by at least 6 orders of magnitude".into());
        }
        if !(g.t_ox > 0.0) {
            return fail("t_ox must be positive".into());
        }
        if !(0.0 < g.phi_min && g.phi_min < g.phi_be && g.phi_be <= g.phi_max && g.phi_max < g.electrode_side) {
            return fail("require 0 < phi_min < phi_be <= phi_max < electrode_side".into());
        }
        if !(g.phi_te > 0.0 && g.phi_te <= g.phi_max) {
            return fail("require 0 < phi_te <= phi_max".into());
        }
        if g.np_present && !(g.np_diameter > 0.0 && g.np_density > 0.0) {
            return fail("nanoparticle diameter and density must be positive".into());
        }
        for (key, sd) in [
            ("sd_E_drift_dev", v.sd_e_drift_dev),
            ("sd_E_diff_dev", v.sd_e_diff_dev),
            ("sd_E_drift_cyc", v.sd_e_drift_cyc),
            ("sd_E_diff_cyc", v.sd_e_diff_cyc),
        ] {
            if !(sd >= 0.0) {
                return fail(format!("{key} = {sd} must be non-negative"));
            }
        }
        if !(c.r0_gap > 0.0 && c.g0 > 0.0) {
            return fail("R0_gap and g0 must be positive".into());
        }
        // keeps the gap resistance positive for |v| <= 10 V
        if !(c.chi >= 0.0 && c.chi < 0.1) {
            return fail(format!("chi = {} must lie in [0, 0.1)", c.chi));
        }
        if !(c.gap_max > 0.0 && c.gap_max < g.t_ox) {
            return fail("gap_max must lie in (0, t_ox)".into());
        }
        if !(c.thermal_exponent >= 0.0) {
            return fail("thermal_exponent must be non-negative".into());
        }
        if !(c.phi_th_min > 0.0) {
            return fail("phi_th_min must be positive".into());
        }
        Ok(())
    }

    /// The same preset with all barrier dispersion switched off.
    pub fn without_variability(&self) -> SamplePreset {
        let mut p = self.clone();
        p.variability = VariabilityParams::NONE;
        p
    }
}

fn normalize(key: &str) -> String {
    key.trim().to_ascii_lowercase()
}

/// Aliases for conventional symbols whose field names differ.
fn alias(field: &str) -> &str {
    match field {
        "a" => "a_drift",
        "b" => "b_diff",
        "c" => "c_thermo",
        "t_amb" => "t_amb",
        other => other,
    }
}

fn apply_override(root: &mut toml::value::Table, key: &str, value: f64) -> Result<()> {
    let norm = normalize(key);
    let (section, field) = match norm.split_once('.') {
        Some((s, f)) => (Some(s.to_string()), alias(f).to_string()),
        None => (None, alias(&norm).to_string()),
    };
    let mut hits = Vec::new();
    for (sec_name, sec) in root.iter() {
        if let Some(want) = &section {
            if want != sec_name {
                continue;
            }
        }
        if let Some(table) = sec.as_table() {
            if table.contains_key(&field) {
                hits.push(sec_name.clone());
            }
        }
    }
    let sec_name = match hits.as_slice() {
        [one] => one.clone(),
        _ => return Err(Error::UnknownParameter(key.to_string())),
    };
    let table = root
        .get_mut(&sec_name)
        .and_then(|t| t.as_table_mut())
        .expect("section exists");
    let slot = table.get_mut(&field).expect("field exists");
    *slot = match slot {
        toml::Value::Boolean(_) => toml::Value::Boolean(value != 0.0),
        _ => toml::Value::Float(value),
    };
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn no_overrides() -> Overrides {
        Overrides::new()
    }

    #[test]
    fn published_barriers() {
        let nps = load_preset(SampleName::NPs, &no_overrides()).unwrap();
        let r = load_preset(SampleName::R, &no_overrides()).unwrap();
        assert_eq!(nps.material.e_drift, 1.0);
        assert_eq!(nps.material.e_diff, 1.1);
        assert_eq!(r.material.e_drift, 1.3);
        assert_eq!(r.material.e_diff, 1.25);
        assert!(nps.material.e_drift < r.material.e_drift);
        assert!(nps.material.e_diff < r.material.e_diff);
    }

    #[test]
    fn shipped_geometry() {
        let p = load_preset(SampleName::NPs, &no_overrides()).unwrap();
        assert_eq!(p.geometry.t_ox, 40e-9);
        assert_eq!(p.geometry.electrode_side, 100e-6);
        assert_eq!(p.geometry.phi_be, 6e-9);
        assert_eq!(p.geometry.np_diameter, 3e-9);
        assert_eq!(p.geometry.np_density, 2e16);
        assert!(p.geometry.np_present);
        let r = load_preset(SampleName::R, &no_overrides()).unwrap();
        assert!(!r.geometry.np_present);
        assert_eq!(r.geometry.np_fill_fraction(), 0.0);
    }

    #[test]
    fn variability_ordering() {
        let nps = load_preset(SampleName::NPs, &no_overrides()).unwrap().variability;
        let r = load_preset(SampleName::R, &no_overrides()).unwrap().variability;
        assert!(nps.sd_e_drift_dev <= r.sd_e_drift_dev);
        assert!(nps.sd_e_diff_dev <= r.sd_e_diff_dev);
        assert!(nps.sd_e_drift_cyc <= r.sd_e_drift_cyc);
        assert!(nps.sd_e_diff_cyc <= r.sd_e_diff_cyc);
    }

    #[test]
    fn negative_energy_rejected() {
        let mut o = no_overrides();
        o.insert("E_drift".into(), -1.0);
        let err = load_preset(SampleName::NPs, &o).unwrap_err();
        assert!(matches!(err, Error::Validation(ref m) if m.contains("E_drift")), "{err}");
    }

    #[test]
    fn unknown_key_rejected() {
        let mut o = no_overrides();
        o.insert("flux_capacitor".into(), 1.0);
        assert!(matches!(
            load_preset(SampleName::R, &o),
            Err(Error::UnknownParameter(_))
        ));
    }

    #[test]
    fn unknown_name_rejected() {
        assert!(matches!("Q".parse::<SampleName>(), Err(Error::UnknownPreset(_))));
    }

    #[test]
    fn overrides_apply() {
        let mut o = no_overrides();
        o.insert("E_drift".into(), 0.95);
        o.insert("geometry.t_ox".into(), 30e-9);
        o.insert("A".into(), 5.0);
        let p = load_preset(SampleName::NPs, &o).unwrap();
        assert_eq!(p.material.e_drift, 0.95);
        assert_eq!(p.geometry.t_ox, 30e-9);
        assert_eq!(p.material.a_drift, 5.0);
        assert_eq!(p.material.e_diff, 1.1);
    }

    #[test]
    fn load_is_pure() {
        let a = load_preset(SampleName::R, &no_overrides()).unwrap();
        let b = load_preset(SampleName::R, &no_overrides()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn calibration_roundtrips_through_text() {
        let cal = Calibration::default_shipped();
        let again = Calibration::from_toml_str(&cal.to_toml_string()).unwrap();
        assert_eq!(cal, again);
    }

    #[test]
    fn bad_schema_rejected() {
        let text = DEFAULT_CALIBRATION.replace(CALIBRATION_SCHEMA, "other/9");
        assert!(matches!(Calibration::from_toml_str(&text), Err(Error::Calibration(_))));
    }

    #[test]
    fn zero_sd_keeps_barrier() {
        let mut p = load_preset(SampleName::NPs, &no_overrides()).unwrap();
        p.variability = VariabilityParams::NONE;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = sample_device_instance(&p, &mut rng);
        assert_eq!(m.e_drift, p.material.e_drift);
        assert_eq!(m.e_diff, p.material.e_diff);
    }

    #[test]
    fn device_draw_is_deterministic() {
        let p = load_preset(SampleName::R, &no_overrides()).unwrap();
        let a = sample_device_instance(&p, &mut ChaCha8Rng::seed_from_u64(11));
        let b = sample_device_instance(&p, &mut ChaCha8Rng::seed_from_u64(11));
        assert_eq!(a, b);
    }

    #[test]
    fn device_draw_statistics() {
        // standard-error oracle: mean within 0.005 eV (≈10 SE), sd within 10%
        let mut p = load_preset(SampleName::NPs, &no_overrides()).unwrap();
        p.variability.sd_e_drift_dev = 0.05;
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n = 10_000;
        let draws: Vec<f64> = (0..n)
            .map(|_| sample_device_instance(&p, &mut rng).e_drift)
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((mean - 1.0).abs() < 0.005, "mean {mean}");
        assert!((var.sqrt() - 0.05).abs() < 0.005, "sd {}", var.sqrt());
    }

    #[test]
    fn clamping_keeps_energy_in_range() {
        let mut p = load_preset(SampleName::NPs, &no_overrides()).unwrap();
        p.variability.sd_e_drift_dev = 50.0;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let m = sample_device_instance(&p, &mut rng);
            assert!(m.e_drift > 0.0 && m.e_drift < 5.0);
        }
    }
}
