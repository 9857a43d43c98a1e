//! Harmonic lattice dynamics: force constants, dynamical matrix, phonon
//! modes, Bose populations, smeared density of states and the rigid-body
//! decomposition of eigenvectors.

mod crystal;
mod dos;
mod force_constants;
mod grid;
mod modes;
mod rigid;

pub use crystal::{Atom, CrystalModel};
pub use dos::{dos_from_grid, phonon_dos, trapezoid, DosCurve, FrequencyAxis, MoleculeDos};
pub use grid::kpoint_grid;
pub use force_constants::{DynamicalMatrix, FcRecord, ForceConstantSet};
pub use modes::{bose_population, phonon_modes, PhononGrid, PhononMode, QPoint};
pub use rigid::{rigid_body_decomposition, RigidBasis, RigidWeights};

/// Unit-area broadening kernel exp(-x²/σ²)/(σ√π); σ is a breadth, not a
/// standard deviation.
#[inline]
pub fn gaussian(x: f64, sigma: f64) -> f64 {
    (-(x * x) / (sigma * sigma)).exp() / (sigma * std::f64::consts::PI.sqrt())
}

/// e^{2πi q·l} for fractional q and integer cell l.
#[inline]
pub fn bloch_phase(q: &crate::Vec3, cell: [i32; 3]) -> crate::C64 {
    let arg = 2.0 * std::f64::consts::PI * (q[0] * cell[0] as f64 + q[1] * cell[1] as f64 + q[2] * cell[2] as f64);
    crate::C64::from_polar(1.0, arg)
}
