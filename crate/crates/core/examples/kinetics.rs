//! SET time against pulse amplitude for a pristine NPs device.

use cbram::compact::CompactModel;
use cbram::params::{Calibration, SampleName};

fn main() {
    let cal = Calibration::default_shipped();
    for name in SampleName::ALL {
        let preset = cal.preset(name).without_variability();
        let model = CompactModel::new(preset.clone());
        let dev = model.pristine(preset.material);
        println!("{name:?}");
        for &v in &cal.kinetics_window(name).amplitudes {
            match model.t_set(&dev, v, 1e-6, 0.1e-6) {
                Some(t) => println!("  {v:.2} V  {:7.1} ns", t * 1e9),
                None => println!("  {v:.2} V  no SET within the pulse"),
            }
        }
    }
}
