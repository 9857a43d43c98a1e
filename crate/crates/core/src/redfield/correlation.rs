use crate::error::invalid;
use crate::lattice::{bose_population, gaussian};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    Gaussian,
}

/// One-phonon correlation function with a smeared energy-conservation delta.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhononCorrelation {
    /// cm⁻¹.
    pub sigma: f64,
    /// K.
    pub temperature: f64,
    pub kernel: Kernel,
}

impl PhononCorrelation {
    pub fn new(sigma: f64, temperature: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(invalid(format!("smearing must be positive, got {sigma}")));
        }
        if !(temperature >= 0.0) || !temperature.is_finite() {
            return Err(invalid(format!("temperature must be non-negative, got {temperature}")));
        }
        Ok(Self { sigma, temperature, kernel: Kernel::Gaussian })
    }

    pub fn occupation(&self, omega_mode: f64) -> f64 {
        bose_population(omega_mode, self.temperature).unwrap_or(0.0)
    }

    /// G(ω_ij, ω) = n̄ gauss(ω - ω_ij) + (n̄+1) gauss(ω + ω_ij); ω_ij = E_i - E_j.
    pub fn value(&self, omega_ij: f64, omega_mode: f64) -> f64 {
        let n = self.occupation(omega_mode);
        self.value_with_occupation(omega_ij, omega_mode, n)
    }

    pub(crate) fn value_with_occupation(&self, omega_ij: f64, omega_mode: f64, n: f64) -> f64 {
        match self.kernel {
            Kernel::Gaussian => {
                n * gaussian(omega_mode - omega_ij, self.sigma) + (n + 1.0) * gaussian(omega_mode + omega_ij, self.sigma)
            }
        }
    }
}

/// G for a mode at `omega_mode`; zero for non-positive mode frequencies.
pub fn phonon_correlation_value(pc: &PhononCorrelation, omega_ij: f64, omega_mode: f64) -> f64 {
    if !(omega_mode > 0.0) {
        return 0.0;
    }
    pc.value(omega_ij, omega_mode)
}
