//! Axisymmetric self-consistent solver for filament growth, current
//! continuity and Joule heating.

pub mod compare;
pub mod fields;
pub mod flux;
pub mod grid;
pub mod heat;
pub mod linalg;
pub mod model;
pub mod sweep;

pub use fields::FieldState;
pub use grid::AxiGrid;
pub use model::PdeModel;
pub use sweep::{run_dc_sweep, SweepSpec};
