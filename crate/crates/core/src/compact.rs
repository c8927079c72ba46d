//! Lumped stochastic memristor model used by the programming algorithms.
//!
//! The filament is a truncated cone whose TE-side diameter is fixed and whose
//! BE-side tip evolves with the growth law of [`crate::pde::flux`]. A rupture
//! gap in front of the tip carries the high-resistance state: it closes when
//! drift wins and reopens once the tip has dissolved down to `phi_min`.
//! Temperature is algebraic in the dissipated power.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::params::{perturb, ConductionParams, MaterialParams, SamplePreset};
use crate::pde::flux::{filament_rate, FluxComponents};

/// Substep cap per integration call; the final substep absorbs any remainder.
const MAX_SUBSTEPS: usize = 2_000_000;
/// Largest relative change of the tip diameter per substep.
const MAX_PHI_FRACTION: f64 = 0.02;
/// Largest gap change per substep, as a fraction of `g0`.
const MAX_GAP_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompactState {
    /// BE-side tip diameter (m).
    pub phi_tip: f64,
    /// Rupture gap (m); zero in the metallic LRS.
    pub gap: f64,
    /// Hot-spot temperature (K).
    pub t_loc: f64,
    /// Barriers in effect for the current cycle.
    pub mat_eff: MaterialParams,
    /// Device-level material draw, kept across cycles.
    pub mat_dev: MaterialParams,
    pub cycle_count: u64,
}

/// What the drive closure reports at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DrivePoint {
    /// Voltage across the memristor (V).
    pub v_mem: f64,
    /// Current through the memristor (A).
    pub current: f64,
    /// Power delivered by the source (W).
    pub source_power: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepStats {
    pub substeps: usize,
    /// ∫ source_power dt over the interval (J).
    pub energy: f64,
}

/// The lumped model for one sample preset.
#[derive(Debug, Clone, PartialEq)]
pub struct CompactModel {
    pub preset: SamplePreset,
}

impl CompactModel {
    pub fn new(preset: SamplePreset) -> Self {
        Self { preset }
    }

    fn conduction(&self) -> &ConductionParams {
        &self.preset.conduction
    }

    pub fn t_amb(&self) -> f64 {
        self.preset.constants.t_amb
    }

    /// Freshly built device in the high-resistance state.
    pub fn pristine(&self, mat_dev: MaterialParams) -> CompactState {
        CompactState {
            phi_tip: self.preset.geometry.phi_min,
            gap: self.conduction().gap_max,
            t_loc: self.t_amb(),
            mat_eff: mat_dev,
            mat_dev,
            cycle_count: 0,
        }
    }

    /// Device with a closed gap and the given tip diameter.
    pub fn with_tip(&self, mat_dev: MaterialParams, phi_tip: f64) -> CompactState {
        let g = &self.preset.geometry;
        CompactState {
            phi_tip: phi_tip.clamp(g.phi_min, g.phi_max),
            gap: 0.0,
            ..self.pristine(mat_dev)
        }
    }

    /// Truncated-cone resistance between the TE-side diameter and the tip.
    pub fn cone_resistance(&self, phi_tip: f64, gap: f64) -> f64 {
        let g = &self.preset.geometry;
        let length = g.t_ox - gap;
        4.0 * length / (self.preset.material.sigma_cf * PI * g.phi_te * phi_tip)
    }

    /// Gap resistance; zero for a closed gap, rectifying through `chi`.
    pub fn gap_resistance(&self, gap: f64, v_mem: f64) -> f64 {
        let c = self.conduction();
        if gap <= 0.0 {
            return 0.0;
        }
        c.r0_gap * (gap / c.g0).exp_m1() / (1.0 + c.chi * v_mem)
    }

    pub fn resistance(&self, state: &CompactState, v_mem: f64) -> f64 {
        self.cone_resistance(state.phi_tip, state.gap) + self.gap_resistance(state.gap, v_mem)
    }

    pub fn conduct(&self, state: &CompactState, v_mem: f64) -> f64 {
        if v_mem == 0.0 {
            return 0.0;
        }
        v_mem / self.resistance(state, v_mem)
    }

    /// Thermal resistance seen by the hot spot for a given tip diameter.
    pub fn thermal_resistance(&self, phi_tip: f64) -> f64 {
        let g = &self.preset.geometry;
        let c = self.conduction();
        let ratio = g.phi_be / phi_tip.max(c.phi_th_min);
        self.preset.material.r_th * ratio.powf(c.thermal_exponent)
    }

    pub fn hot_spot_temperature(&self, phi_tip: f64, power: f64, ambient: f64) -> f64 {
        ambient + self.thermal_resistance(phi_tip) * power.max(0.0)
    }

    /// Growth-law components at the tip for a given drive.
    pub fn tip_rate(&self, state: &CompactState, v_mem: f64, temperature: f64, ambient: f64) -> FluxComponents {
        let dt = temperature - ambient;
        let half = 0.5 * self.preset.geometry.t_ox;
        let grad = (dt / half, dt / half);
        // the dissolution closures see at least the thermal floor diameter
        let phi = state.phi_tip.max(self.conduction().phi_th_min);
        filament_rate(phi, v_mem, temperature, grad, &state.mat_eff)
    }

    /// Constant-voltage update over `dt` at room ambient.
    pub fn update(&self, state: &CompactState, v_mem: f64, dt: f64) -> (CompactState, StepStats) {
        self.integrate(state, dt, self.t_amb(), f64::INFINITY, |s, _| {
            let i = self.conduct(s, v_mem);
            DrivePoint {
                v_mem,
                current: i,
                source_power: i * v_mem,
            }
        })
    }

    /// Zero-bias bake at `ambient` for `dt`.
    pub fn retention_step(&self, state: &CompactState, ambient: f64, dt: f64) -> CompactState {
        if dt <= 0.0 {
            return *state;
        }
        let (mut s, _) = self.integrate(state, dt, ambient, f64::INFINITY, |_, _| DrivePoint {
            v_mem: 0.0,
            current: 0.0,
            source_power: 0.0,
        });
        s.t_loc = ambient;
        s
    }

    /// Starts a new switching cycle: cycle-level barrier offsets are
    /// re-drawn around the retained device-level values.
    pub fn begin_cycle<R: Rng + ?Sized>(&self, state: &CompactState, rng: &mut R) -> CompactState {
        let v = &self.preset.variability;
        let mut s = *state;
        s.mat_eff = s.mat_dev;
        s.mat_eff.e_drift = perturb(s.mat_dev.e_drift, v.sd_e_drift_cyc, rng);
        s.mat_eff.e_diff = perturb(s.mat_dev.e_diff, v.sd_e_diff_cyc, rng);
        s.cycle_count += 1;
        s
    }

    /// Adaptive explicit integration of the state over `dt`.
    ///
    /// `drive(state, t)` returns the memristor voltage and current for the
    /// current state at time `t` since the start of the interval; it is
    /// re-evaluated every substep, so circuit feedback (compliance) is
    /// honoured. `max_substep` bounds the substep for time-varying drives.
    pub fn integrate<F>(
        &self,
        state: &CompactState,
        dt: f64,
        ambient: f64,
        max_substep: f64,
        mut drive: F,
    ) -> (CompactState, StepStats)
    where
        F: FnMut(&CompactState, f64) -> DrivePoint,
    {
        let mut s = *state;
        let mut stats = StepStats::default();
        if dt <= 0.0 {
            return (s, stats);
        }
        let g = &self.preset.geometry;
        let c = self.conduction();
        let mut t = 0.0;
        while t < dt {
            let p = drive(&s, t);
            let temp = self.hot_spot_temperature(s.phi_tip, p.current * p.v_mem, ambient);
            s.t_loc = temp;
            let mut rate = self.tip_rate(&s, p.v_mem, temp, ambient).total;
            if s.gap > 0.0 && rate < 0.0 {
                // an open gap screens the bias seen by the dissolving tip
                let screened = p.v_mem * (1.0 - s.gap / c.gap_max).max(0.0);
                rate = self.tip_rate(&s, screened, temp, ambient).total.min(0.0);
            }
            let remaining = dt - t;
            let mut h = remaining.min(max_substep);
            if rate != 0.0 {
                let limit = if s.gap > 0.0 {
                    MAX_GAP_FRACTION * c.g0 / rate.abs()
                } else {
                    let pinned = s.phi_tip >= g.phi_max && rate > 0.0;
                    if pinned { f64::INFINITY } else { MAX_PHI_FRACTION * s.phi_tip / rate.abs() }
                };
                h = h.min(limit);
            }
            if stats.substeps + 1 >= MAX_SUBSTEPS {
                h = remaining;
            }
            // guard against float stagnation
            if t + h <= t {
                h = remaining;
            }
            self.advance_geometry(&mut s, rate * h);
            stats.energy += p.source_power * h;
            stats.substeps += 1;
            t += h;
        }
        (s, stats)
    }

    /// Applies a diameter increment `delta` (m): positive closes the gap then
    /// widens the tip, negative narrows the tip then opens the gap.
    fn advance_geometry(&self, s: &mut CompactState, delta: f64) {
        let g = &self.preset.geometry;
        let gap_max = self.conduction().gap_max;
        if delta > 0.0 {
            if s.gap > 0.0 {
                let closed = s.gap - delta;
                if closed > 0.0 {
                    s.gap = closed;
                } else {
                    s.gap = 0.0;
                    s.phi_tip = (s.phi_tip - closed).min(g.phi_max);
                }
            } else {
                s.phi_tip = (s.phi_tip + delta).min(g.phi_max);
            }
        } else if delta < 0.0 {
            if s.gap > 0.0 {
                s.gap = (s.gap - delta).min(gap_max);
            } else {
                let narrowed = s.phi_tip + delta;
                if narrowed >= g.phi_min {
                    s.phi_tip = narrowed;
                } else {
                    s.phi_tip = g.phi_min;
                    s.gap = (g.phi_min - narrowed).min(gap_max);
                }
            }
        }
    }

    /// Time to SET (gap reaching zero) under a trapezoidal pulse of
    /// amplitude `v_pulse` applied directly to the memristor, or `None` when
    /// the gap does not close within the pulse.
    pub fn t_set(&self, state: &CompactState, v_pulse: f64, width: f64, rise: f64) -> Option<f64> {
        if v_pulse <= 0.0 || width <= 0.0 {
            return None;
        }
        if state.gap <= 0.0 {
            return Some(0.0);
        }
        let waveform = |t: f64| {
            if rise > 0.0 && t < rise {
                v_pulse * t / rise
            } else {
                v_pulse
            }
        };
        // fixed sampling grid, then bisect the crossing interval
        let n = 2000usize;
        let h = width / n as f64;
        let mut s = *state;
        for k in 0..n {
            let t0 = k as f64 * h;
            let (next, _) = self.integrate(&s, h, self.t_amb(), h / 8.0, |st, t| {
                let v = waveform(t0 + t);
                let i = self.conduct(st, v);
                DrivePoint { v_mem: v, current: i, source_power: i * v }
            });
            if next.gap <= 0.0 {
                let (mut lo, mut hi) = (0.0, h);
                for _ in 0..40 {
                    let mid = 0.5 * (lo + hi);
                    let (probe, _) = self.integrate(&s, mid, self.t_amb(), h / 8.0, |st, t| {
                        let v = waveform(t0 + t);
                        let i = self.conduct(st, v);
                        DrivePoint { v_mem: v, current: i, source_power: i * v }
                    });
                    if probe.gap <= 0.0 {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                return Some(t0 + hi);
            }
            s = next;
        }
        None
    }
}

/// Flat `key = value` snapshot of a state, SI units, for resumable runs.
pub fn state_to_record(state: &CompactState) -> String {
    let mut out = String::new();
    let mut put = |k: &str, v: String| {
        out.push_str(k);
        out.push_str(" = ");
        out.push_str(&v);
        out.push('\n');
    };
    put("phi_tip", format!("{:.16e}", state.phi_tip));
    put("gap", format!("{:.16e}", state.gap));
    put("t_loc", format!("{:.16e}", state.t_loc));
    put("cycle_count", state.cycle_count.to_string());
    for (prefix, m) in [("eff", &state.mat_eff), ("dev", &state.mat_dev)] {
        put(&format!("{prefix}.e_drift"), format!("{:.16e}", m.e_drift));
        put(&format!("{prefix}.e_diff"), format!("{:.16e}", m.e_diff));
    }
    out
}

/// Restores a state written by [`state_to_record`]; material fields other
/// than the barriers come from `base`.
pub fn state_from_record(text: &str, base: &MaterialParams) -> crate::Result<CompactState> {
    use crate::Error;
    let mut s = CompactState {
        phi_tip: f64::NAN,
        gap: f64::NAN,
        t_loc: f64::NAN,
        mat_eff: *base,
        mat_dev: *base,
        cycle_count: 0,
    };
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("bad state line `{line}`")))?;
        let (k, v) = (k.trim(), v.trim());
        let bad = || Error::BadParameterValue { key: k.to_string(), value: v.to_string() };
        if k == "cycle_count" {
            s.cycle_count = v.parse().map_err(|_| bad())?;
            continue;
        }
        let x: f64 = v.parse().map_err(|_| bad())?;
        match k {
            "phi_tip" => s.phi_tip = x,
            "gap" => s.gap = x,
            "t_loc" => s.t_loc = x,
            "eff.e_drift" => s.mat_eff.e_drift = x,
            "eff.e_diff" => s.mat_eff.e_diff = x,
            "dev.e_drift" => s.mat_dev.e_drift = x,
            "dev.e_diff" => s.mat_dev.e_diff = x,
            _ => return Err(Error::UnknownParameter(k.to_string())),
        }
    }
    if s.phi_tip.is_nan() || s.gap.is_nan() || s.t_loc.is_nan() {
        return Err(Error::Config("state record misses phi_tip, gap or t_loc".into()));
    }
    Ok(s)
}
