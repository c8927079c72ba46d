//! The experiments behind the figure data and acceptance runs.

use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::stats::{disjoint_chain, ecdf, linear_fit, Moments};
use super::{e17, Artifact, Check, Context, Engine, RunOutput};
use crate::circuit::{read_current, ASCA_READ_GATE, READ_VOLTAGE};
use crate::compact::{CompactModel, CompactState};
use crate::error::Result;
use crate::params::{sample_device_instance, SampleName, SamplePreset};
use crate::pde::sweep::field_dump_csv;
use crate::pde::{run_dc_sweep, PdeModel, SweepSpec};
use crate::programming::{
    aggregate, aggregate_csv, asca_program, erase, ispp_cycle, Circuit, EraseScheme, LevelSchedule, Outcome, ProgramReport, ReadProtocol,
    TargetLevel, Trace, Zone, HRS_CEILING,
};
use crate::sweep::{dc_sweep, DcSweepSpec, SweepSummary};

/// Stream tag shared by every experiment that draws device instances, so
/// protocols compared on one seed see the same population.
const POPULATION: &str = "population";
/// ISPP erase-failure trials draw compliance settings above this (A).
const ISPP_HIGH_CURRENT: f64 = 150e-6;

pub(crate) fn onset_band(name: SampleName) -> (f64, f64) {
    match name {
        SampleName::NPs => (0.4, 0.6),
        SampleName::R => (0.2, 0.4),
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(e17).unwrap_or_else(|| "NaN".into())
}

fn circuit(ctx: &Context) -> Circuit {
    Circuit { model: CompactModel::new(ctx.preset.clone()), fet: ctx.calibration.mosfet() }
}

/// Pristine devices drawn from the configured population.
fn population(ctx: &Context, model: &CompactModel) -> Vec<CompactState> {
    population_of(ctx, &ctx.preset, model)
}

fn population_of(ctx: &Context, preset: &SamplePreset, model: &CompactModel) -> Vec<CompactState> {
    (0..ctx.cfg.n_devices as u64)
        .map(|d| model.pristine(sample_device_instance(preset, &mut ctx.stream(POPULATION, d, 0))))
        .collect()
}

fn sweep_checks(name: SampleName, s: &SweepSummary) -> Vec<Check> {
    let (lo, hi) = onset_band(name);
    vec![
        Check::new("set_onset", s.v_set.is_some_and(|v| (lo..=hi).contains(&v)), format!("{:?} V in [{lo}, {hi}]", s.v_set)),
        Check::new("reset_voltage", s.v_reset.is_some_and(|v| (-0.4..=-0.2).contains(&v)), format!("{:?} V in [-0.4, -0.2]", s.v_reset)),
        Check::new("read_window", s.window() >= 1e4, format!("{:.3e} >= 1e4", s.window())),
    ]
}

fn sweep_summary_json(s: &SweepSummary) -> serde_json::Value {
    json!({
        "v_set": s.v_set,
        "v_reset": s.v_reset,
        "i_lrs": s.i_lrs,
        "i_hrs": s.i_hrs,
        "window": s.window(),
    })
}

pub(crate) fn run_sweep(ctx: &Context) -> Result<RunOutput> {
    match ctx.cfg.engine {
        Engine::Compact => {
            let c = circuit(ctx);
            let spec = DcSweepSpec::from_defaults(ctx.calibration.sweep_defaults());
            let dev = c.model.pristine(ctx.preset.material);
            let r = dc_sweep(&c.model, &dev, &spec, &c.fet)?;
            Ok(RunOutput {
                artifacts: vec![ctx.csv("sweep_trace.csv", r.to_csv())],
                checks: sweep_checks(ctx.cfg.preset, &r.summary),
                summary: json!({ "engine": "compact", "sweep": spec, "result": sweep_summary_json(&r.summary) }),
            })
        }
        Engine::Pde => {
            let [n_r, n_z] = ctx.cfg.schedule.grid;
            let model = PdeModel::new(ctx.preset.clone(), n_r, n_z)?;
            let spec = SweepSpec::from_defaults(ctx.calibration.sweep_defaults());
            let r = run_dc_sweep(&model, &spec, &model.initial_state(model.pristine_profile())?, &[])?;
            Ok(RunOutput {
                artifacts: vec![ctx.csv("sweep_trace.csv", r.to_csv())],
                checks: sweep_checks(ctx.cfg.preset, &r.summary),
                summary: json!({
                    "engine": "pde",
                    "grid": model.grid,
                    "sweep": spec,
                    "result": sweep_summary_json(&r.summary),
                }),
            })
        }
    }
}

/// Field maps during SET and RESET plus the sweep trace.
pub(crate) fn run_pde_maps(ctx: &Context) -> Result<RunOutput> {
    let [n_r, n_z] = ctx.cfg.schedule.grid;
    let model = PdeModel::new(ctx.preset.clone(), n_r, n_z)?;
    let spec = SweepSpec::from_defaults(ctx.calibration.sweep_defaults());
    let volts = spec.voltages();
    let up = (spec.v_peak_pos / spec.step).round() as usize;
    let find = |from: usize, v: f64| (from..volts.len()).find(|&k| (volts[k] - v).abs() < 1e-9);
    let mut at: Vec<usize> = [0.25, 0.5, 0.75]
        .iter()
        .filter_map(|&v| find(0, v * spec.v_peak_pos))
        .chain([up])
        .chain(find(2 * up, -0.3))
        .chain(find(2 * up, spec.v_peak_neg))
        .collect();
    at.sort_unstable();
    at.dedup();
    let r = run_dc_sweep(&model, &spec, &model.initial_state(model.pristine_profile())?, &at)?;
    let mut artifacts = vec![ctx.csv("sweep_trace.csv", r.to_csv())];
    for (k, d) in r.dumps.iter().enumerate() {
        artifacts.push(ctx.csv(&format!("field_{k:02}.csv"), field_dump_csv(&model, d)));
    }
    let maps: Vec<_> = r.dumps.iter().enumerate().map(|(k, d)| json!({ "file": format!("field_{k:02}.csv"), "v_applied": d.v_applied })).collect();
    Ok(RunOutput {
        artifacts,
        checks: Vec::new(),
        summary: json!({ "grid": model.grid, "maps": maps, "result": sweep_summary_json(&r.summary) }),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceCycle {
    pub device: usize,
    pub r_lrs: f64,
    pub r_hrs: f64,
    pub v_set: Option<f64>,
    pub v_reset: Option<f64>,
}

/// One SET/RESET cycle per device; LRS and HRS resistance at 0.2 V.
fn cdf_population(ctx: &Context, preset: &SamplePreset) -> Result<Vec<DeviceCycle>> {
    let model = CompactModel::new(preset.clone());
    let fet = ctx.calibration.mosfet();
    let spec = DcSweepSpec::from_defaults(ctx.calibration.sweep_defaults());
    let mut rows = Vec::with_capacity(ctx.cfg.n_devices);
    for (d, dev) in population_of(ctx, preset, &model).iter().enumerate() {
        let dev = model.begin_cycle(dev, &mut ctx.stream("cdf", d as u64, 1));
        let r = dc_sweep(&model, &dev, &spec, &fet)?;
        rows.push(DeviceCycle { device: d, r_lrs: r.summary.r_lrs(), r_hrs: r.summary.r_hrs(), v_set: r.summary.v_set, v_reset: r.summary.v_reset });
    }
    Ok(rows)
}

fn state_moments(rows: &[DeviceCycle]) -> (Moments, Moments) {
    let lrs: Vec<f64> = rows.iter().map(|r| r.r_lrs).collect();
    let hrs: Vec<f64> = rows.iter().map(|r| r.r_hrs).collect();
    (Moments::of(&lrs), Moments::of(&hrs))
}

pub(crate) fn run_cdf(ctx: &Context) -> Result<RunOutput> {
    let rows = cdf_population(ctx, &ctx.preset)?;
    let mut devices = String::from("device,R_LRS_ohm,R_HRS_ohm,V_set,V_reset\n");
    for r in &rows {
        let _ = writeln!(devices, "{},{},{},{},{}", r.device, e17(r.r_lrs), e17(r.r_hrs), opt(r.v_set), opt(r.v_reset));
    }
    let mut cdf = String::from("state,rank,resistance_ohm,cdf\n");
    for (state, xs) in [("LRS", rows.iter().map(|r| r.r_lrs).collect::<Vec<_>>()), ("HRS", rows.iter().map(|r| r.r_hrs).collect())] {
        for (k, (x, p)) in ecdf(&xs).into_iter().enumerate() {
            let _ = writeln!(cdf, "{state},{},{},{}", k + 1, e17(x), e17(p));
        }
    }
    let (ml, mh) = state_moments(&rows);
    let mut checks = Vec::new();
    let mut reference = serde_json::Value::Null;
    if ctx.cfg.preset == SampleName::NPs {
        checks.push(Check::new("lrs_cv", ml.cv < 0.4, format!("σ/μ(LRS) = {:.4} < 0.4", ml.cv)));
        checks.push(Check::new("hrs_cv", mh.cv < 0.4, format!("σ/μ(HRS) = {:.4} < 0.4", mh.cv)));
        // the reference sample on the same seed, without overrides
        let (rl, rh) = state_moments(&cdf_population(ctx, &ctx.calibration.preset(SampleName::R))?);
        checks.push(Check::new("improves_on_reference", ml.cv < rl.cv && mh.cv < rh.cv, format!("LRS {:.4} < {:.4}, HRS {:.4} < {:.4}", ml.cv, rl.cv, mh.cv, rh.cv)));
        reference = json!({ "lrs": rl, "hrs": rh });
    }
    Ok(RunOutput {
        artifacts: vec![ctx.csv("cdf_devices.csv", devices), ctx.csv("cdf.csv", cdf)],
        checks,
        summary: json!({ "n_devices": rows.len(), "lrs": ml, "hrs": mh, "reference_R": reference }),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KineticsFit {
    pub amplitudes: Vec<f64>,
    pub t_set: Vec<Option<f64>>,
    /// Fitted dt_set/dV over uncensored points (ns/V).
    pub slope_ns_per_v: Option<f64>,
    pub monotone: bool,
}

/// SET time per amplitude; `amplitudes` empty means the calibrated window.
pub(crate) fn kinetics_fit(ctx: &Context, preset: &SamplePreset, amplitudes: &[f64]) -> KineticsFit {
    let model = CompactModel::new(preset.clone());
    let s = &ctx.cfg.schedule;
    let amplitudes = if amplitudes.is_empty() { ctx.calibration.kinetics_window(preset.name).amplitudes.clone() } else { amplitudes.to_vec() };
    let pristine = model.pristine(preset.material);
    let t_set: Vec<Option<f64>> = amplitudes
        .iter()
        .enumerate()
        .map(|(k, &a)| {
            let dev = if s.jitter { model.begin_cycle(&pristine, &mut ctx.stream("kinetics", 0, k as u64 + 1)) } else { pristine };
            model.t_set(&dev, a, s.width, s.rise)
        })
        .collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = amplitudes.iter().zip(&t_set).filter_map(|(a, t)| t.map(|t| (*a, t * 1e9))).unzip();
    let monotone = ys.len() >= 2 && ys.windows(2).all(|w| w[1] < w[0]);
    KineticsFit { slope_ns_per_v: linear_fit(&xs, &ys).map(|f| f.0), amplitudes, t_set, monotone }
}

pub(crate) fn run_kinetics(ctx: &Context) -> Result<RunOutput> {
    let fit = kinetics_fit(ctx, &ctx.preset, &ctx.cfg.schedule.amplitudes);
    let mut table = String::from("amplitude_V,t_set_s,censored\n");
    for (a, t) in fit.amplitudes.iter().zip(&fit.t_set) {
        let _ = writeln!(table, "{},{},{}", e17(*a), opt(*t), t.is_none());
    }
    let mut checks = vec![Check::new("monotone", fit.monotone, "t_set strictly decreasing over uncensored amplitudes")];
    if ctx.cfg.preset == SampleName::NPs {
        let ok = fit.slope_ns_per_v.is_some_and(|s| (55.0..=220.0).contains(&s.abs()));
        checks.push(Check::new("slope_band", ok, format!("|slope| = {:?} ns/V in [55, 220]", fit.slope_ns_per_v.map(f64::abs))));
    } else {
        let nps = kinetics_fit(ctx, &ctx.calibration.preset(SampleName::NPs), &[]);
        let (r, n) = (fit.slope_ns_per_v.map(f64::abs), nps.slope_ns_per_v.map(f64::abs));
        let ok = matches!((r, n), (Some(r), Some(n)) if r < n);
        checks.push(Check::new("smaller_than_nps", ok, format!("|slope| {r:?} < NPs {n:?} ns/V")));
    }
    Ok(RunOutput { artifacts: vec![ctx.csv("kinetics.csv", table)], checks, summary: serde_json::to_value(&fit)? })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelRow {
    pub level: usize,
    pub i_target: f64,
    pub lower: f64,
    pub upper: f64,
    pub n: usize,
    pub n_success: usize,
    pub mean_i: f64,
    pub sd_i: f64,
    pub cv_i: f64,
    pub mean_r: f64,
    pub sd_r: f64,
    pub cv_r: f64,
    pub min_i: f64,
    pub max_i: f64,
    pub erase_failures: usize,
    pub mean_pulses: f64,
    pub mean_energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AscaStats {
    pub levels: Vec<LevelRow>,
    pub n_programs: usize,
    pub success_rate: f64,
    /// Successful programs whose final read left the band.
    pub out_of_band: usize,
    pub bands_disjoint: bool,
    pub distinct_levels: usize,
    pub zone3_erase_failure_rate: f64,
    pub mean_pulses: f64,
    pub mean_energy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProgramRow {
    pub level: usize,
    pub repeat: usize,
    pub device: usize,
    pub outcome: Outcome,
    pub final_read: f64,
    pub pulses: usize,
    pub erases: usize,
    pub attempts: usize,
    pub energy: f64,
}

fn level_row(level: &TargetLevel, reports: &[&ProgramReport]) -> LevelRow {
    let ok: Vec<f64> = reports.iter().filter(|r| r.outcome == Outcome::Success).map(|r| r.final_read).collect();
    let res: Vec<f64> = ok.iter().map(|i| READ_VOLTAGE / i).collect();
    let (mi, mr) = (Moments::of(&ok), Moments::of(&res));
    let n = reports.len().max(1) as f64;
    LevelRow {
        level: level.index,
        i_target: level.i_target,
        lower: level.lower(),
        upper: level.upper(),
        n: reports.len(),
        n_success: ok.len(),
        mean_i: mi.mean,
        sd_i: mi.sd,
        cv_i: mi.cv,
        mean_r: mr.mean,
        sd_r: mr.sd,
        cv_r: mr.cv,
        min_i: ok.iter().copied().fold(f64::INFINITY, f64::min),
        max_i: ok.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        erase_failures: reports.iter().filter(|r| r.outcome == Outcome::EraseFailure).count(),
        mean_pulses: reports.iter().map(|r| r.pulses_applied as f64).sum::<f64>() / n,
        mean_energy: reports.iter().map(|r| r.energy_j).sum::<f64>() / n,
    }
}

/// Programs every level `repeats` times, repeat r on device r mod n. Each
/// program starts a new cycle and LRS programs are followed by an erase.
pub(crate) fn asca_population(ctx: &Context, c: &Circuit, schedule: &LevelSchedule) -> Result<(Vec<ProgramRow>, Vec<ProgramReport>)> {
    let mut devices = population(ctx, &c.model);
    let mut cycles = vec![0u64; devices.len()];
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    for level in &schedule.levels {
        for repeat in 0..ctx.cfg.schedule.repeats {
            let d = repeat % devices.len();
            cycles[d] += 1;
            let s = c.model.begin_cycle(&devices[d], &mut ctx.stream("asca", d as u64, cycles[d]));
            let (mut s, mut report) = asca_program(&s, c, level)?;
            if !level.is_hrs() {
                let (next, rep) = erase(&s, c, EraseScheme::Adaptive, ReadProtocol::Asca, &mut Trace::default())?;
                s = next;
                if !rep.success && report.outcome == Outcome::Success {
                    report.outcome = Outcome::EraseFailure;
                }
            }
            devices[d] = s;
            rows.push(ProgramRow {
                level: level.index,
                repeat,
                device: d,
                outcome: report.outcome,
                final_read: report.final_read,
                pulses: report.pulses_applied,
                erases: report.erases_performed,
                attempts: report.attempts.len(),
                energy: report.energy_j,
            });
            reports.push(report);
        }
    }
    Ok((rows, reports))
}

pub(crate) fn asca_statistics(schedule: &LevelSchedule, reports: &[ProgramReport]) -> AscaStats {
    let levels: Vec<LevelRow> = schedule
        .levels
        .iter()
        .map(|l| level_row(l, &reports.iter().filter(|r| r.target.index == l.index).collect::<Vec<_>>()))
        .collect();
    let n = reports.len().max(1) as f64;
    let success = reports.iter().filter(|r| r.outcome == Outcome::Success).count();
    let out_of_band = reports.iter().filter(|r| r.outcome == Outcome::Success && !r.target.contains(r.final_read)).count();
    let bands: Vec<(f64, f64)> = levels.iter().filter(|l| l.n_success > 0).map(|l| (l.min_i, l.max_i)).collect();
    let bands_disjoint = levels.windows(2).all(|w| w[0].n_success == 0 || w[1].n_success == 0 || w[0].max_i < w[1].min_i);
    let zone3: Vec<&ProgramReport> = reports.iter().filter(|r| !r.target.is_hrs() && r.target.zone() == Zone::Zone3).collect();
    let z3_fail = zone3.iter().filter(|r| r.outcome == Outcome::EraseFailure).count();
    AscaStats {
        n_programs: reports.len(),
        success_rate: success as f64 / n,
        out_of_band,
        bands_disjoint,
        distinct_levels: disjoint_chain(&bands),
        zone3_erase_failure_rate: if zone3.is_empty() { 0.0 } else { z3_fail as f64 / zone3.len() as f64 },
        mean_pulses: reports.iter().map(|r| r.pulses_applied as f64).sum::<f64>() / n,
        mean_energy: reports.iter().map(|r| r.energy_j).sum::<f64>() / n,
        levels,
    }
}

fn level_csv(rows: &[LevelRow]) -> String {
    let mut out = String::from(
        "level,i_target_A,band_lo_A,band_hi_A,n,n_success,mean_I_A,sd_I_A,cv_I,mean_R_ohm,sd_R_ohm,cv_R,min_I_A,max_I_A,erase_failures,mean_pulses,mean_energy_J\n",
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.level,
            e17(r.i_target),
            e17(r.lower),
            e17(r.upper),
            r.n,
            r.n_success,
            e17(r.mean_i),
            e17(r.sd_i),
            e17(r.cv_i),
            e17(r.mean_r),
            e17(r.sd_r),
            e17(r.cv_r),
            e17(r.min_i),
            e17(r.max_i),
            r.erase_failures,
            e17(r.mean_pulses),
            e17(r.mean_energy)
        );
    }
    out
}

fn program_csv(rows: &[ProgramRow]) -> String {
    let mut out = String::from("level,repeat,device,outcome,final_read_A,pulses,erases,attempts,energy_J\n");
    for r in rows {
        let outcome = serde_json::to_value(r.outcome).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.level,
            r.repeat,
            r.device,
            outcome,
            e17(r.final_read),
            r.pulses,
            r.erases,
            r.attempts,
            e17(r.energy)
        );
    }
    out
}

fn asca_checks(st: &AscaStats, name: SampleName) -> Vec<Check> {
    let mut out = vec![
        Check::new("success_rate", st.success_rate >= 0.99, format!("{:.4} >= 0.99", st.success_rate)),
        Check::new("in_band", st.out_of_band == 0, format!("{} successes outside their band", st.out_of_band)),
        Check::new("bands_disjoint", st.bands_disjoint, "empirical per-level bands pairwise disjoint"),
    ];
    if name == SampleName::NPs {
        let worst = st.levels.iter().filter(|l| l.level > 0).map(|l| l.cv_i).fold(0.0, f64::max);
        out.push(Check::new("level_cv", worst < 0.05, format!("largest per-level σ/μ of read current {worst:.4} < 0.05")));
    }
    out
}

/// One JSON record per program attempt, traces included, after a stamp record.
fn reports_jsonl(ctx: &Context, reports: &[ProgramReport]) -> Result<String> {
    let mut out = serde_json::to_string(&json!({ "stamp": ctx.stamp }))? + "\n";
    for r in reports {
        out.push_str(&r.to_json()?);
        out.push('\n');
    }
    Ok(out)
}

pub(crate) fn run_asca(ctx: &Context) -> Result<RunOutput> {
    let c = circuit(ctx);
    let schedule = LevelSchedule::standard(ctx.cfg.schedule.levels)?;
    let (rows, reports) = asca_population(ctx, &c, &schedule)?;
    let st = asca_statistics(&schedule, &reports);
    let aggregates: Vec<_> = schedule
        .levels
        .iter()
        .map(|l| aggregate(l, &reports.iter().filter(|r| r.target.index == l.index).cloned().collect::<Vec<_>>()))
        .collect();
    Ok(RunOutput {
        artifacts: vec![
            ctx.csv("asca_programs.csv", program_csv(&rows)),
            ctx.csv("asca_levels.csv", aggregate_csv(&aggregates)),
            ctx.csv("asca_level_stats.csv", level_csv(&st.levels)),
            Artifact { name: "asca_reports.jsonl".into(), bytes: reports_jsonl(ctx, &reports)?.into_bytes() },
        ],
        checks: asca_checks(&st, ctx.cfg.preset),
        summary: json!({ "schedule": schedule, "stats": st }),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsppSetting {
    pub i_cc: f64,
    pub reads: Vec<f64>,
    /// Every repeat was erased by the fixed train afterwards.
    pub erasable: bool,
    pub mean_pulses: f64,
    pub mean_energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EraseTrial {
    pub trial: usize,
    pub device: usize,
    pub i_cc: f64,
    pub read: f64,
    pub erase_read: f64,
    pub erased: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsppStats {
    pub settings: Vec<IsppSetting>,
    pub distinct_levels: usize,
    pub trials: Vec<EraseTrial>,
    /// Fixed-erase failure rate after programming beyond 150 µA.
    pub high_current_failure_rate: f64,
    pub mean_pulses: f64,
    pub mean_energy: f64,
}

/// ISPP on `levels` compliance settings spread over [10, 250] µA with
/// `repeats` each, plus the high-current erase trials.
pub fn ispp_statistics(ctx: &Context) -> Result<IsppStats> {
    let c = circuit(ctx);
    let pop = population(ctx, &c.model);
    let s = &ctx.cfg.schedule;
    let mut settings = Vec::with_capacity(s.levels);
    let mut trial = 0u64;
    for k in 0..s.levels {
        let i_cc = 10e-6 + k as f64 * 240e-6 / (s.levels - 1) as f64;
        let mut setting = IsppSetting { i_cc, reads: Vec::new(), erasable: true, mean_pulses: 0.0, mean_energy: 0.0 };
        for _ in 0..s.repeats {
            let d = (trial % pop.len() as u64) as usize;
            let dev = c.model.begin_cycle(&pop[d], &mut ctx.stream("ispp", d as u64, trial + 1));
            let (_, rep, er) = ispp_cycle(&dev, &c, i_cc)?;
            setting.reads.push(rep.final_read);
            setting.erasable &= er.success;
            setting.mean_pulses += rep.pulses_applied as f64 / s.repeats as f64;
            setting.mean_energy += rep.energy_j / s.repeats as f64;
            trial += 1;
        }
        settings.push(setting);
    }
    let bands: Vec<(f64, f64)> = settings
        .iter()
        .filter(|x| x.erasable)
        .map(|x| (x.reads.iter().copied().fold(f64::INFINITY, f64::min), x.reads.iter().copied().fold(f64::NEG_INFINITY, f64::max)))
        .collect();
    let mut trials = Vec::with_capacity(s.trials);
    for t in 0..s.trials {
        let d = t % pop.len();
        let mut rng = ctx.stream("ispp_erase", d as u64, t as u64 + 1);
        let dev = c.model.begin_cycle(&pop[d], &mut rng);
        let i_cc = rng.random_range(ISPP_HIGH_CURRENT * (1.0 + 1e-9)..=250e-6);
        let (_, rep, er) = ispp_cycle(&dev, &c, i_cc)?;
        trials.push(EraseTrial { trial: t, device: d, i_cc, read: rep.final_read, erase_read: er.final_read, erased: er.success });
    }
    let failures = trials.iter().filter(|t| !t.erased).count();
    let n = settings.len().max(1) as f64;
    Ok(IsppStats {
        distinct_levels: disjoint_chain(&bands),
        high_current_failure_rate: if trials.is_empty() { 0.0 } else { failures as f64 / trials.len() as f64 },
        mean_pulses: settings.iter().map(|x| x.mean_pulses).sum::<f64>() / n,
        mean_energy: settings.iter().map(|x| x.mean_energy).sum::<f64>() / n,
        settings,
        trials,
    })
}

fn ispp_artifacts(ctx: &Context, st: &IsppStats) -> Vec<Artifact> {
    let mut reads = String::from("setting,i_cc_A,repeat,read_A,erasable\n");
    for (k, s) in st.settings.iter().enumerate() {
        for (r, i) in s.reads.iter().enumerate() {
            let _ = writeln!(reads, "{k},{},{r},{},{}", e17(s.i_cc), e17(*i), s.erasable);
        }
    }
    let mut trials = String::from("trial,device,i_cc_A,read_A,erase_read_A,erased\n");
    for t in &st.trials {
        let _ = writeln!(trials, "{},{},{},{},{},{}", t.trial, t.device, e17(t.i_cc), e17(t.read), e17(t.erase_read), t.erased);
    }
    vec![ctx.csv("ispp_settings.csv", reads), ctx.csv("ispp_erase_trials.csv", trials)]
}

fn ispp_checks(st: &IsppStats) -> Vec<Check> {
    vec![
        Check::new("ispp_distinct", st.distinct_levels <= 32, format!("{} distinct levels <= 32", st.distinct_levels)),
        Check::new(
            "ispp_erase_failure",
            st.high_current_failure_rate >= 0.5,
            format!("{:.3} failure rate above 150 uA >= 0.5 over {} trials", st.high_current_failure_rate, st.trials.len()),
        ),
    ]
}

pub(crate) fn run_ispp(ctx: &Context) -> Result<RunOutput> {
    let st = ispp_statistics(ctx)?;
    Ok(RunOutput {
        artifacts: ispp_artifacts(ctx, &st),
        checks: ispp_checks(&st),
        summary: json!({
            "distinct_levels": st.distinct_levels,
            "high_current_failure_rate": st.high_current_failure_rate,
            "mean_pulses": st.mean_pulses,
            "mean_energy": st.mean_energy,
        }),
    })
}

/// Both protocols on one population and seed base.
pub(crate) fn run_compare(ctx: &Context) -> Result<RunOutput> {
    let c = circuit(ctx);
    let schedule = LevelSchedule::standard(ctx.cfg.schedule.levels)?;
    let (_, reports) = asca_population(ctx, &c, &schedule)?;
    let asca = asca_statistics(&schedule, &reports);
    let ispp = ispp_statistics(ctx)?;
    let mut erase = String::from("protocol,target_A,trials,erase_failures,rate\n");
    for l in asca.levels.iter().filter(|l| l.level > 0) {
        let _ = writeln!(erase, "asca,{},{},{},{}", e17(l.i_target), l.n, l.erase_failures, e17(l.erase_failures as f64 / l.n.max(1) as f64));
    }
    for s in &ispp.settings {
        let n = s.reads.len();
        let _ = writeln!(erase, "ispp,{},{},{},{}", e17(s.i_cc), n, if s.erasable { 0 } else { 1 }, if s.erasable { e17(0.0) } else { "NaN".into() });
    }
    let mut checks = vec![
        Check::new("asca_distinct", asca.distinct_levels == schedule.n_levels, format!("{} == {}", asca.distinct_levels, schedule.n_levels)),
        Check::new("asca_zone3_erase", asca.zone3_erase_failure_rate < 0.05, format!("{:.3} < 0.05", asca.zone3_erase_failure_rate)),
    ];
    checks.extend(ispp_checks(&ispp));
    let mut artifacts = vec![ctx.csv("compare_erase.csv", erase), ctx.csv("compare_asca_levels.csv", level_csv(&asca.levels))];
    artifacts.extend(ispp_artifacts(ctx, &ispp));
    Ok(RunOutput {
        artifacts,
        checks,
        summary: json!({
            "asca": {
                "distinct_levels": asca.distinct_levels,
                "success_rate": asca.success_rate,
                "zone3_erase_failure_rate": asca.zone3_erase_failure_rate,
                "mean_energy_per_level": asca.mean_energy,
                "mean_pulses": asca.mean_pulses,
            },
            "ispp": {
                "distinct_levels": ispp.distinct_levels,
                "high_current_failure_rate": ispp.high_current_failure_rate,
                "mean_energy_per_level": ispp.mean_energy,
                "mean_pulses": ispp.mean_pulses,
            },
        }),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetentionLevel {
    pub level: usize,
    pub i0: f64,
    pub max_drift: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Logarithmic read times: 1 s, 2 s, 4 s, ... capped at the horizon.
fn read_times(horizon: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut t: f64 = 1.0;
    if horizon > 0.0 {
        loop {
            out.push(t.min(horizon));
            if t >= horizon {
                break;
            }
            t *= 2.0;
        }
    }
    out
}

/// Programs each level on the nominal device, then bakes it.
pub(crate) fn run_retention(ctx: &Context) -> Result<RunOutput> {
    let preset = ctx.preset.without_variability();
    let c = Circuit { model: CompactModel::new(preset.clone()), fet: ctx.calibration.mosfet() };
    let schedule = LevelSchedule::standard(ctx.cfg.schedule.levels)?;
    let horizon = ctx.cfg.schedule.hours * 3600.0;
    let bake = ctx.cfg.schedule.bake_temperature;
    let times = read_times(horizon);
    let mut traces = String::from("level,t_s,I_A,rel_change\n");
    let mut levels = Vec::new();
    for level in &schedule.levels {
        let (s, _) = asca_program(&c.model.pristine(preset.material), &c, level)?;
        let i0 = read_current(&c.model, &s, ASCA_READ_GATE, &c.fet)?;
        let _ = writeln!(traces, "{},{},{},{}", level.index, e17(0.0), e17(i0), e17(0.0));
        let mut st = s;
        let mut now = 0.0;
        let mut worst: f64 = 0.0;
        let mut stays_hrs = i0 < HRS_CEILING;
        for &t in &times {
            st = c.model.retention_step(&st, bake, t - now);
            now = t;
            let i = read_current(&c.model, &st, ASCA_READ_GATE, &c.fet)?;
            let rel = (i - i0).abs() / i0;
            worst = worst.max(rel);
            stays_hrs &= i < HRS_CEILING;
            let _ = writeln!(traces, "{},{},{},{}", level.index, e17(t), e17(i), e17(rel));
        }
        let (tolerance, pass) = if level.is_hrs() {
            (f64::NAN, stays_hrs)
        } else {
            let tol = 0.05f64.min(level.band_halfwidth / i0);
            (tol, worst <= tol)
        };
        levels.push(RetentionLevel { level: level.index, i0, max_drift: worst, tolerance, pass });
    }
    let mut table = String::from("level,I0_A,max_rel_drift,tolerance,pass\n");
    for l in &levels {
        let _ = writeln!(table, "{},{},{},{},{}", l.level, e17(l.i0), e17(l.max_drift), e17(l.tolerance), l.pass);
    }
    let passing = levels.iter().filter(|l| l.pass).count();
    let all = passing == levels.len();
    let expect_all = ctx.cfg.preset == SampleName::NPs || schedule.n_levels <= 16;
    Ok(RunOutput {
        artifacts: vec![ctx.csv("retention_traces.csv", traces), ctx.csv("retention_levels.csv", table)],
        checks: vec![Check::new(
            "retention",
            all == expect_all,
            format!("{passing}/{} levels within tolerance; expected {}", levels.len(), if expect_all { "all" } else { "some failures" }),
        )],
        summary: json!({ "levels": schedule.n_levels, "passing": passing, "hours": ctx.cfg.schedule.hours, "bake_temperature": bake }),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleRow {
    pub cycle: usize,
    pub v_set: Option<f64>,
    pub v_reset: Option<f64>,
    pub i_lrs: f64,
    pub i_hrs: f64,
}

/// A forming sweep, then `cycles` recorded DC cycles on one device.
pub(crate) fn run_endurance(ctx: &Context) -> Result<RunOutput> {
    let c = circuit(ctx);
    let spec = DcSweepSpec::from_defaults(ctx.calibration.sweep_defaults());
    let dev = population(ctx, &c.model)[0];
    let mut s = dc_sweep(&c.model, &dev, &spec, &c.fet)?.final_state;
    let mut rows = Vec::new();
    for k in 1..=ctx.cfg.schedule.cycles {
        if ctx.cfg.schedule.jitter {
            s = c.model.begin_cycle(&s, &mut ctx.stream("endurance", 0, k as u64));
        }
        let r = dc_sweep(&c.model, &s, &spec, &c.fet)?;
        s = r.final_state;
        rows.push(CycleRow { cycle: k, v_set: r.summary.v_set, v_reset: r.summary.v_reset, i_lrs: r.summary.i_lrs, i_hrs: r.summary.i_hrs });
    }
    let mut table = String::from("cycle,V_set,V_reset,I_LRS_A,I_HRS_A,window\n");
    for r in &rows {
        let _ = writeln!(table, "{},{},{},{},{},{}", r.cycle, opt(r.v_set), opt(r.v_reset), e17(r.i_lrs), e17(r.i_hrs), e17(r.i_lrs / r.i_hrs));
    }
    let vs: Vec<f64> = rows.iter().filter_map(|r| r.v_set).collect();
    let vr: Vec<f64> = rows.iter().filter_map(|r| r.v_reset).collect();
    let (ms, mr) = (Moments::of(&vs), Moments::of(&vr));
    let last = rows.last().map(|r| r.i_lrs / r.i_hrs).unwrap_or(f64::NAN);
    let min_window = rows.iter().map(|r| r.i_lrs / r.i_hrs).fold(f64::INFINITY, f64::min);
    Ok(RunOutput {
        artifacts: vec![ctx.csv("endurance.csv", table)],
        checks: vec![
            Check::new("window_retained", last >= 1e3, format!("final window {last:.3e} >= 1e3")),
            Check::new("reset_spread", mr.sd > ms.sd, format!("sd(V_reset) = {:.4} > sd(V_set) = {:.4}", mr.sd, ms.sd)),
        ],
        summary: json!({ "cycles": rows.len(), "v_set": ms, "v_reset": mr, "final_window": last, "min_window": min_window }),
    })
}
