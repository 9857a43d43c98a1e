//! Direct (one-phonon) spin-lattice relaxation of molecular spin crystals.
//!
//! The pipeline is: a spin Hamiltonian ([`hamiltonian`]) built from spin
//! centres ([`spin`]), harmonic phonons over the Brillouin zone
//! ([`lattice`]), Cartesian spin-Hamiltonian derivatives projected onto
//! normal modes ([`coupling`]), and a non-secular Redfield generator whose
//! slowest population mode gives the relaxation time ([`redfield`]).
//! [`sweep`] orchestrates parameter sweeps and convergence studies, and
//! [`toy`] builds synthetic mass-spring crystals for desk-scale runs.
//!
//! Internal units: energies and frequencies in cm⁻¹, lengths in Å, masses in
//! amu, fields in Tesla, temperatures in K, times in ps. See [`units`].

pub mod coupling;
pub mod error;
pub mod hamiltonian;
pub mod lattice;
pub mod linalg;
pub mod redfield;
pub mod spin;
pub mod sweep;
pub mod toy;
pub mod units;

pub use error::{Error, Result};

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;
/// Dense complex matrix.
pub type CMat = faer::Mat<C64>;
/// Real 3×3 tensor (g, hyperfine, dipolar and their derivatives).
pub type Tensor3 = nalgebra::Matrix3<f64>;
/// Real Cartesian 3-vector.
pub type Vec3 = nalgebra::Vector3<f64>;
