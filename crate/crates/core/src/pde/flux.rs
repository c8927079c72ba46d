//! The filament-diameter growth law: field-assisted drift, Fickian
//! dissolution and Soret thermo-diffusion.

use crate::params::{MaterialParams, BOLTZMANN_EV};

/// The three contributions to dφ/dt and their sum (all m/s).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FluxComponents {
    pub total: f64,
    pub drift: f64,
    pub diffusion: f64,
    pub thermo: f64,
}

/// Soret coefficient S(T) = E_s / (2·k_B·T²), in 1/K.
pub fn soret_coefficient(e_s: f64, temperature: f64) -> f64 {
    e_s / (2.0 * BOLTZMANN_EV * temperature * temperature)
}

/// Rate of change of the filament diameter at one location.
///
/// `psi_local` is the potential drop (V) available to ions reaching this
/// location, `temperature` the local temperature (K) and `grad_t` the
/// temperature gradient components (∂T/∂r, ∂T/∂z) in K/m, oriented so a
/// positive sum drives ions out of the filament.
///
/// Drift is counted from the zero-field hopping rate, so it vanishes at
/// `psi_local = 0`, and it follows the sign of the bias: reverse bias pulls
/// ions back out of the filament. Diffusion and thermo-diffusion are always
/// dissolutive.
pub fn filament_rate(
    phi: f64,
    psi_local: f64,
    temperature: f64,
    grad_t: (f64, f64),
    mat: &MaterialParams,
) -> FluxComponents {
    debug_assert!(phi > 0.0 && temperature > 0.0);
    let kt = BOLTZMANN_EV * temperature;
    let lowered = (-(mat.e_drift - mat.alpha * psi_local.abs()) / kt).exp();
    let zero_field = (-mat.e_drift / kt).exp();
    let drift = psi_local.signum() * mat.a_drift * (lowered - zero_field);
    let diffusion = -mat.b_diff / phi * (-mat.e_diff / kt).exp();
    let thermo = -mat.c_thermo / phi * soret_coefficient(mat.e_s, temperature) * (grad_t.0 + grad_t.1);
    FluxComponents {
        total: drift + diffusion + thermo,
        drift,
        diffusion,
        thermo,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{load_preset, Overrides, SampleName};

    fn nps() -> MaterialParams {
        load_preset(SampleName::NPs, &Overrides::new()).unwrap().material
    }

    #[test]
    fn drift_equals_prefactor_when_barrier_cancelled() {
        let m = nps();
        let psi = m.e_drift / m.alpha;
        let f = filament_rate(3e-9, psi, 350.0, (0.0, 0.0), &m);
        assert!((f.drift - m.a_drift).abs() <= 1e-12 * m.a_drift);
    }

    #[test]
    fn no_gradient_no_thermo() {
        let f = filament_rate(3e-9, 0.4, 350.0, (0.0, 0.0), &nps());
        assert_eq!(f.thermo, 0.0);
    }

    #[test]
    fn zero_bias_is_pure_diffusion() {
        let m = nps();
        let t = 300.0;
        let phi = 2e-9;
        let f = filament_rate(phi, 0.0, t, (0.0, 0.0), &m);
        let expect = m.b_diff / phi * (-m.e_diff / (BOLTZMANN_EV * t)).exp();
        assert_eq!(f.drift, 0.0);
        assert!(((f.total.abs() - expect) / expect).abs() < 1e-12);
    }

    #[test]
    fn drift_is_odd_in_bias() {
        let m = nps();
        let fwd = filament_rate(3e-9, 0.5, 600.0, (0.0, 0.0), &m);
        let rev = filament_rate(3e-9, -0.5, 600.0, (0.0, 0.0), &m);
        assert!(fwd.drift > 0.0);
        assert_eq!(rev.drift, -fwd.drift);
        assert!(rev.total < 0.0);
    }

    #[test]
    fn diffusion_linear_in_prefactor() {
        let mut m = nps();
        let a = filament_rate(3e-9, 0.0, 423.15, (0.0, 0.0), &m).diffusion;
        m.b_diff *= 2.0;
        let b = filament_rate(3e-9, 0.0, 423.15, (0.0, 0.0), &m).diffusion;
        assert!((b / a - 2.0).abs() < 1e-14);
    }
}
