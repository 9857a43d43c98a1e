//! Shared helpers for the Redfield unit tests.

use rand::Rng;

use crate::hamiltonian::SpinHamiltonian;
use crate::units::si;
use crate::{CMat, C64};

/// Golden-rule population transfer rate c → a (ps⁻¹) for one harmonic mode
/// coupled through (∂H/∂Q)·Q with Q = √(ħ/2ωm)(b + b†), evaluated in SI
/// units. `v` is the matrix element in cm⁻¹ for the amplitude √(ħ/ωm),
/// so the physical element is v/√2. The δ is the unit-area Gaussian
/// exp(-x²/σ²)/(σ√π) in cm⁻¹.
pub fn golden_rule_rate(e_from: f64, e_to: f64, v: C64, omega: f64, sigma: f64, temperature: f64) -> f64 {
    let j_per_cm1 = si::PLANCK * si::SPEED_OF_LIGHT * 100.0;
    let n = if temperature > 0.0 {
        1.0 / ((omega * j_per_cm1 / (si::BOLTZMANN * temperature)).exp() - 1.0)
    } else {
        0.0
    };
    let w = v.norm() / 2f64.sqrt() * j_per_cm1;
    let delta = |x_cm1: f64| (-(x_cm1 / sigma).powi(2)).exp() / (sigma * std::f64::consts::PI.sqrt()) / j_per_cm1;
    let released = e_from - e_to;
    let per_s = 2.0 * std::f64::consts::PI / si::HBAR
        * w
        * w
        * ((n + 1.0) * delta(released - omega) + n * delta(released + omega));
    per_s * 1e-12
}

pub fn diagonal_hamiltonian(energies: &[f64]) -> SpinHamiltonian {
    let d = energies.len();
    let m = CMat::from_fn(d, d, |a, b| if a == b { C64::new(energies[a], 0.0) } else { C64::new(0.0, 0.0) });
    SpinHamiltonian::from_matrix(m).unwrap()
}

pub fn random_hermitian(d: usize, scale: f64, rng: &mut impl Rng) -> CMat {
    let mut m = CMat::zeros(d, d);
    for a in 0..d {
        m[(a, a)] = C64::new(scale * (2.0 * rng.gen::<f64>() - 1.0), 0.0);
        for b in a + 1..d {
            let z = C64::new(2.0 * rng.gen::<f64>() - 1.0, 2.0 * rng.gen::<f64>() - 1.0) * scale;
            m[(a, b)] = z;
            m[(b, a)] = z.conj();
        }
    }
    m
}

/// Sorted random levels with every pairwise gap distinct by at least `sep`.
pub fn random_levels(d: usize, span: f64, sep: f64, rng: &mut impl Rng) -> Vec<f64> {
    loop {
        let mut e: Vec<f64> = (0..d).map(|_| span * rng.gen::<f64>()).collect();
        e.sort_by(f64::total_cmp);
        let mut gaps: Vec<f64> = Vec::new();
        for a in 0..d {
            for b in a + 1..d {
                gaps.push(e[b] - e[a]);
            }
        }
        gaps.sort_by(f64::total_cmp);
        if gaps[0] > sep && gaps.windows(2).all(|w| w[1] - w[0] > sep) {
            return e;
        }
    }
}
