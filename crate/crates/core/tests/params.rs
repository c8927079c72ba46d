use cbram::params::{load_preset, parse_override, sample_device_instance, Calibration, Overrides, SampleName};
use cbram::Error;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn presets_differ_only_where_the_samples_differ() {
    let r = load_preset(SampleName::R, &Overrides::new()).unwrap();
    let n = load_preset(SampleName::NPs, &Overrides::new()).unwrap();
    assert_eq!(r.geometry.t_ox, n.geometry.t_ox);
    assert!(n.material.e_drift < r.material.e_drift);
    assert!(n.variability.sd_e_drift_dev < r.variability.sd_e_drift_dev);
}

#[test]
fn override_parsing() {
    assert_eq!(parse_override("material.alpha=0.9").unwrap(), ("material.alpha".to_string(), 0.9));
    assert!(parse_override("alpha").is_err());
    assert!(parse_override("alpha=fast").is_err());
}

#[test]
fn invalid_overrides_are_refused() {
    let mut o = Overrides::new();
    o.insert("t_ox".into(), -1.0);
    assert!(load_preset(SampleName::R, &o).is_err());
    let mut o = Overrides::new();
    o.insert("frobnicate".into(), 1.0);
    assert!(matches!(load_preset(SampleName::R, &o), Err(Error::UnknownParameter(_))));
}

#[test]
fn shipped_calibration_is_versioned() {
    let cal = Calibration::default_shipped();
    assert_eq!(cal.version(), "1.0.0");
    let back = Calibration::from_toml_str(&cal.to_toml_string()).unwrap();
    assert_eq!(back.preset(SampleName::NPs), cal.preset(SampleName::NPs));
}

proptest! {
    #[test]
    fn override_lands_on_its_field(alpha in 0.1f64..2.0, b in 1e-10f64..1e-8) {
        let mut o = Overrides::new();
        o.insert("alpha".into(), alpha);
        o.insert("material.b_diff".into(), b);
        let p = load_preset(SampleName::NPs, &o).unwrap();
        prop_assert_eq!(p.material.alpha, alpha);
        prop_assert_eq!(p.material.b_diff, b);
    }

    #[test]
    fn device_draws_stay_positive(seed in any::<u64>()) {
        let p = load_preset(SampleName::R, &Overrides::new()).unwrap();
        let m = sample_device_instance(&p, &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert!(m.e_drift > 0.0 && m.e_diff > 0.0);
        prop_assert_eq!(m.a_drift, p.material.a_drift);
    }
}
