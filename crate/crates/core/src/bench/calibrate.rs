//! Target evaluation and the drift-prefactor fit.

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::experiments::onset_band;
use super::stats::{linear_fit, Moments};
use super::{Artifact, Check, Context, RunOutput};
use crate::compact::CompactModel;
use crate::error::Result;
use crate::params::{sample_device_instance, SampleName, SamplePreset};
use crate::sweep::{dc_sweep, DcSweepSpec};

const BISECTION_STEPS: usize = 24;

/// Acceptance band of one calibration target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetReport {
    pub target: Target,
    pub value: Option<f64>,
    pub passed: bool,
}

pub fn calibration_targets(name: SampleName) -> Vec<Target> {
    let t = |n: &str, lo: f64, hi: f64| Target { name: n.to_string(), lo, hi };
    let (lo, hi) = onset_band(name);
    let mut out = vec![
        t("set_onset_V", lo, hi),
        t("reset_V", -0.4, -0.2),
        t("read_window", 1e4, f64::INFINITY),
    ];
    if name == SampleName::NPs {
        out.push(t("lrs_cv", 0.0, 0.4));
        out.push(t("hrs_cv", 0.0, 0.4));
        out.push(t("kinetics_slope_abs_ns_per_V", 55.0, 220.0));
    }
    out
}

/// SET onset of the nominal device for `preset`.
fn nominal_onset(preset: &SamplePreset, ctx: &Context) -> Result<Option<f64>> {
    let model = CompactModel::new(preset.without_variability());
    let spec = DcSweepSpec::from_defaults(ctx.calibration.sweep_defaults());
    Ok(dc_sweep(&model, &model.pristine(preset.material), &spec, &ctx.calibration.mosfet())?.summary.v_set)
}

/// Measures every target on `preset` with the context's stimulus, seed and
/// population size.
pub fn evaluate_targets(ctx: &Context, preset: &SamplePreset) -> Result<Vec<TargetReport>> {
    let fet = ctx.calibration.mosfet();
    let spec = DcSweepSpec::from_defaults(ctx.calibration.sweep_defaults());
    let nominal = CompactModel::new(preset.without_variability());
    let sweep = dc_sweep(&nominal, &nominal.pristine(preset.material), &spec, &fet)?.summary;

    let model = CompactModel::new(preset.clone());
    let (mut lrs, mut hrs) = (Vec::new(), Vec::new());
    for d in 0..ctx.cfg.n_devices as u64 {
        let dev = model.pristine(sample_device_instance(preset, &mut ctx.stream("population", d, 0)));
        let dev = model.begin_cycle(&dev, &mut ctx.stream("cdf", d, 1));
        let s = dc_sweep(&model, &dev, &spec, &fet)?.summary;
        lrs.push(s.r_lrs());
        hrs.push(s.r_hrs());
    }

    let window = &ctx.calibration.kinetics_window(preset.name).amplitudes;
    let pristine = nominal.pristine(preset.material);
    let (xs, ys): (Vec<f64>, Vec<f64>) = window
        .iter()
        .filter_map(|&a| nominal.t_set(&pristine, a, ctx.cfg.schedule.width, ctx.cfg.schedule.rise).map(|t| (a, t * 1e9)))
        .unzip();
    let slope = linear_fit(&xs, &ys).map(|f| f.0.abs());

    let values = [
        sweep.v_set,
        sweep.v_reset,
        Some(sweep.window()),
        Some(Moments::of(&lrs).cv),
        Some(Moments::of(&hrs).cv),
        slope,
    ];
    Ok(calibration_targets(preset.name)
        .into_iter()
        .zip(values)
        .map(|(target, value)| {
            let passed = value.is_some_and(|v| v >= target.lo && v <= target.hi);
            TargetReport { target, value, passed }
        })
        .collect())
}

/// Moves ln(A) by bisection until the nominal onset sits inside its band.
fn fit_drift_prefactor(ctx: &Context, preset: &SamplePreset) -> Result<SamplePreset> {
    let (lo, hi) = onset_band(preset.name);
    let centre = 0.5 * (lo + hi);
    let base = preset.material.a_drift.ln();
    let (mut a, mut b) = (base - 5.0, base + 5.0);
    let mut p = preset.clone();
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (a + b);
        p.material.a_drift = mid.exp();
        match nominal_onset(&p, ctx)? {
            Some(v) if (lo..=hi).contains(&v) && (v - centre).abs() < 0.02 => break,
            // faster drift lowers the onset
            Some(v) if v < centre => b = mid,
            _ => a = mid,
        }
    }
    Ok(p)
}

pub(crate) fn run_calibrate(ctx: &Context) -> Result<RunOutput> {
    let before = evaluate_targets(ctx, &ctx.preset)?;
    let onset_ok = before.first().is_some_and(|r| r.passed);
    let (preset, after) = if onset_ok {
        (ctx.preset.clone(), before.clone())
    } else {
        let p = fit_drift_prefactor(ctx, &ctx.preset)?;
        let r = evaluate_targets(ctx, &p)?;
        (p, r)
    };
    let mut cal = ctx.calibration.clone();
    cal.store_preset(&preset)?;
    let toml = ctx.stamp.csv_line() + &cal.to_toml_string();
    let checks = after
        .iter()
        .map(|r| Check::new(&r.target.name, r.passed, format!("{:?} in [{}, {}]", r.value, r.target.lo, r.target.hi)))
        .collect();
    Ok(RunOutput {
        artifacts: vec![Artifact { name: "calibration.toml".into(), bytes: toml.into_bytes() }],
        checks,
        summary: json!({
            "refit": !onset_ok,
            "a_drift": preset.material.a_drift,
            "before": before,
            "after": after,
        }),
    })
}
