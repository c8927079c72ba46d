//! Side-by-side SET sweep on the field solver and the lumped model.

use serde::{Deserialize, Serialize};

use super::model::PdeModel;
use super::sweep::{hold, SweepSpec};
use crate::compact::{CompactModel, DrivePoint};
use crate::error::{Error, Result};
use crate::params::SamplePreset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TipComparison {
    pub v_applied: Vec<f64>,
    /// Diameter at the bottom electrode from the field solver (m).
    pub phi_pde: Vec<f64>,
    /// Lumped tip diameter (m).
    pub phi_compact: Vec<f64>,
    /// Device voltages after clipping (V).
    pub v_pde: Vec<f64>,
    pub v_compact: Vec<f64>,
}

impl TipComparison {
    /// Largest |compact − pde| / pde over all sample points.
    pub fn max_deviation(&self) -> f64 {
        self.phi_pde
            .iter()
            .zip(&self.phi_compact)
            .map(|(p, c)| (c - p).abs() / p)
            .fold(0.0, f64::max)
    }
}

/// Runs the rising and falling positive branches of `spec` on both engines
/// from a connected cone with tip `phi_tip0`, with an ideal current clip.
///
/// The tip node of the field solver sits on the isothermal bottom
/// electrode, so the lumped model is run with zero thermal resistance.
pub fn lumped_vs_pde(preset: &SamplePreset, n_r: usize, n_z: usize, phi_tip0: f64, spec: &SweepSpec) -> Result<TipComparison> {
    let spec = SweepSpec { v_peak_neg: 0.0, ..*spec };
    spec.validate()?;
    let pde = PdeModel::new(preset.clone(), n_r, n_z)?;
    let mut lumped_preset = preset.clone();
    lumped_preset.material.r_th = 0.0;
    let compact = CompactModel::new(lumped_preset);
    let mut field = pde.initial_state(pde.cone_profile(phi_tip0))?;
    let mut lumped = compact.with_tip(preset.material, phi_tip0);
    let dwell = spec.step / spec.rate;
    let mut out = TipComparison { v_applied: Vec::new(), phi_pde: Vec::new(), phi_compact: Vec::new(), v_pde: Vec::new(), v_compact: Vec::new() };
    for v in spec.voltages() {
        let cap = (v > 0.0).then_some(spec.i_cc);
        let (next, _, _) = hold(&pde, &field, v, cap, dwell).map_err(|e| Error::AtVoltage { voltage: v, source: Box::new(e) })?;
        field = next;
        let (next, _) = compact.integrate(&lumped, dwell, compact.t_amb(), f64::INFINITY, |st, _| {
            let i = compact.conduct(st, v);
            let v_mem = if i > spec.i_cc { v * spec.i_cc / i } else { v };
            let current = i.min(spec.i_cc);
            DrivePoint { v_mem, current, source_power: current * v_mem }
        });
        lumped = next;
        out.v_applied.push(v);
        out.phi_pde.push(field.phi[0]);
        out.phi_compact.push(lumped.phi_tip);
        out.v_pde.push(field.psi[pde.grid.node(0, pde.grid.n_z - 1)]);
        let i = compact.conduct(&lumped, v);
        out.v_compact.push(if cap.is_some() && i > spec.i_cc { v * spec.i_cc / i } else { v });
    }
    Ok(out)
}
