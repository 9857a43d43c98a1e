//! Unit system and physical constants.
//!
//! Every constant is derived from CODATA 2018 SI values rather than typed in
//! as a rounded literal, so the conversion chain is auditable.

use serde::{Deserialize, Serialize};

/// CODATA 2018 SI constants.
pub mod si {
    pub const PLANCK: f64 = 6.626_070_15e-34;
    pub const HBAR: f64 = PLANCK / (2.0 * std::f64::consts::PI);
    pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
    pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
    pub const BOLTZMANN: f64 = 1.380_649e-23;
    pub const BOHR_MAGNETON: f64 = 9.274_010_078_3e-24;
    pub const NUCLEAR_MAGNETON: f64 = 5.050_783_746_1e-27;
    pub const ATOMIC_MASS: f64 = 1.660_539_066_60e-27;
    /// μ₀/4π in T·m/A.
    pub const MU0_OVER_4PI: f64 = 1.000_000_000_55e-7;
    pub const ANGSTROM: f64 = 1e-10;
}

/// Energy of one wavenumber (1 cm⁻¹) in joules: h·c·100.
pub const JOULE_PER_CM1: f64 = si::PLANCK * si::SPEED_OF_LIGHT * 100.0;

/// Bohr magneton in cm⁻¹/T.
pub const BOHR_MAGNETON_CM1_PER_T: f64 = si::BOHR_MAGNETON / JOULE_PER_CM1;

/// Nuclear magneton in cm⁻¹/T.
pub const NUCLEAR_MAGNETON_CM1_PER_T: f64 = si::NUCLEAR_MAGNETON / JOULE_PER_CM1;

/// Boltzmann constant in cm⁻¹/K.
pub const KB_CM1_PER_K: f64 = si::BOLTZMANN / JOULE_PER_CM1;

/// Angular frequency (rad/ps) of one wavenumber: 2π·c·100·1e-12.
pub const ANGULAR_FREQUENCY_PER_CM1: f64 =
    2.0 * std::f64::consts::PI * si::SPEED_OF_LIGHT * 100.0 * 1e-12;

/// sqrt(ħ / (ω m)) in Å when ω is in cm⁻¹ and m in amu.
pub fn zero_point_length_a() -> f64 {
    let omega_per_cm1 = ANGULAR_FREQUENCY_PER_CM1 * 1e12; // rad/s
    (si::HBAR / (omega_per_cm1 * si::ATOMIC_MASS)).sqrt() / si::ANGSTROM
}

/// μ₀μ_B²/4π expressed in cm⁻¹·Å³.
pub fn dipolar_prefactor_cm1_a3() -> f64 {
    si::MU0_OVER_4PI * si::BOHR_MAGNETON * si::BOHR_MAGNETON
        / si::ANGSTROM.powi(3)
        / JOULE_PER_CM1
}

/// Factor turning sqrt(eigenvalue in eV/(Å²·amu)) into a frequency in cm⁻¹.
pub fn force_constant_to_cm1() -> f64 {
    let omega = (si::ELEMENTARY_CHARGE / (si::ANGSTROM * si::ANGSTROM * si::ATOMIC_MASS)).sqrt();
    omega / (ANGULAR_FREQUENCY_PER_CM1 * 1e12)
}

pub const PS_PER_MS: f64 = 1e9;
pub const PS_PER_S: f64 = 1e12;

/// Snapshot of the unit conventions, embedded in run metadata.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitSystem {
    pub bohr_magneton_cm1_per_t: f64,
    pub nuclear_magneton_cm1_per_t: f64,
    pub kb_cm1_per_k: f64,
    pub angular_frequency_per_cm1: f64,
    pub zero_point_length_a: f64,
    pub dipolar_prefactor_cm1_a3: f64,
    pub force_constant_to_cm1: f64,
}

impl Default for UnitSystem {
    fn default() -> Self {
        Self {
            bohr_magneton_cm1_per_t: BOHR_MAGNETON_CM1_PER_T,
            nuclear_magneton_cm1_per_t: NUCLEAR_MAGNETON_CM1_PER_T,
            kb_cm1_per_k: KB_CM1_PER_K,
            angular_frequency_per_cm1: ANGULAR_FREQUENCY_PER_CM1,
            zero_point_length_a: zero_point_length_a(),
            dipolar_prefactor_cm1_a3: dipolar_prefactor_cm1_a3(),
            force_constant_to_cm1: force_constant_to_cm1(),
        }
    }
}

/// cm⁻¹ → rad/ps.
pub fn cm1_to_rad_per_ps(x: f64) -> f64 {
    x * ANGULAR_FREQUENCY_PER_CM1
}

/// rad/ps → cm⁻¹.
pub fn rad_per_ps_to_cm1(x: f64) -> f64 {
    x / ANGULAR_FREQUENCY_PER_CM1
}
