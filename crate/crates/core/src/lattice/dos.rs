use rayon::prelude::*;

use crate::error::invalid;
use crate::Result;

use super::{gaussian, CrystalModel, ForceConstantSet, PhononGrid, RigidBasis};

/// Uniform frequency axis in cm⁻¹.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyAxis {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl FrequencyAxis {
    pub fn points(&self) -> Vec<f64> {
        let n = ((self.max - self.min) / self.step).floor() as usize + 1;
        (0..n).map(|k| self.min + k as f64 * self.step).collect()
    }

    /// 6σ below the lowest mode to 6σ above the highest, in steps of σ/10,
    /// so that the Gaussians of the Γ acoustic modes are not truncated.
    pub fn covering(grid: &PhononGrid, sigma: f64) -> Self {
        let lowest = grid.modes().map(|m| m.omega).fold(0.0, f64::min);
        let min = ((lowest - 6.0 * sigma) / (sigma / 10.0)).floor() * (sigma / 10.0);
        Self { min, max: grid.max_frequency() + 6.0 * sigma, step: sigma / 10.0 }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MoleculeDos {
    pub molecule: usize,
    pub total: Vec<f64>,
    pub trans: Vec<f64>,
    pub rot: Vec<f64>,
    pub intra: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DosCurve {
    pub freqs: Vec<f64>,
    pub total: Vec<f64>,
    pub molecules: Vec<MoleculeDos>,
    pub sigma: f64,
    pub mesh: [usize; 3],
    pub imaginary_modes: usize,
}

impl DosCurve {
    /// Trapezoidal integral of the total density.
    pub fn area(&self) -> f64 {
        trapezoid(&self.freqs, &self.total)
    }

    /// Translation, rotation and intra-molecular densities summed over molecules.
    pub fn decomposition(&self) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let n = self.freqs.len();
        let mut t = vec![0.0; n];
        let mut r = vec![0.0; n];
        let mut i = vec![0.0; n];
        for m in &self.molecules {
            for k in 0..n {
                t[k] += m.trans[k];
                r[k] += m.rot[k];
                i[k] += m.intra[k];
            }
        }
        (t, r, i)
    }
}

/// Trapezoid-rule integral of y over x.
pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2).zip(y.windows(2)).map(|(xw, yw)| 0.5 * (xw[1] - xw[0]) * (yw[0] + yw[1])).sum()
}

/// DOS(ω) = (1/N_q) Σ_{αq} gauss(ω - ω_{αq}; σ) with per-molecule
/// rigid-body partial densities.
pub fn phonon_dos(fc: &ForceConstantSet, crystal: &CrystalModel, mesh: [usize; 3], sigma: f64) -> Result<DosCurve> {
    let grid = PhononGrid::compute(fc, mesh, &super::kpoint_grid(mesh)?)?;
    dos_from_grid(&grid, crystal, sigma, None)
}

pub fn dos_from_grid(
    grid: &PhononGrid,
    crystal: &CrystalModel,
    sigma: f64,
    axis: Option<FrequencyAxis>,
) -> Result<DosCurve> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(invalid(format!("smearing must be positive, got {sigma}")));
    }
    if grid.points.is_empty() {
        return Err(invalid("empty q-point grid"));
    }
    let axis = axis.unwrap_or_else(|| FrequencyAxis::covering(grid, sigma));
    if !(axis.step > 0.0) || axis.max < axis.min {
        return Err(invalid("frequency axis must have positive step and max ≥ min"));
    }
    let freqs = axis.points();
    let nf = freqs.len();
    let bases = crystal
        .molecules()
        .into_iter()
        .map(|(id, _)| RigidBasis::new(crystal, id))
        .collect::<Result<Vec<_>>>()?;
    let nm = bases.len();
    let window = 6.0 * sigma;
    let inv_nq = 1.0 / grid.n_q() as f64;

    // Layout: [total | (mol_total, trans, rot, intra) per molecule], each nf long.
    let width = nf * (1 + 4 * nm);
    let acc = grid
        .points
        .par_iter()
        .fold(
            || vec![0.0; width],
            |mut acc, point| {
                for mode in &point.modes {
                    let w = mode.omega;
                    let lo = (((w - window - axis.min) / axis.step).floor().max(0.0)) as usize;
                    let hi = ((((w + window - axis.min) / axis.step).ceil()) as isize).min(nf as isize - 1);
                    if hi < lo as isize {
                        continue;
                    }
                    let weights: Vec<_> = bases.iter().map(|b| b.weights(&mode.eigvec)).collect();
                    for k in lo..=hi as usize {
                        let g = gaussian(freqs[k] - w, sigma) * inv_nq;
                        acc[k] += g;
                        for (m, wt) in weights.iter().enumerate() {
                            let base = nf * (1 + 4 * m);
                            acc[base + k] += g * wt.share;
                            acc[base + nf + k] += g * wt.trans;
                            acc[base + 2 * nf + k] += g * wt.rot;
                            acc[base + 3 * nf + k] += g * wt.intra;
                        }
                    }
                }
                acc
            },
        )
        .reduce(
            || vec![0.0; width],
            |mut a, b| {
                a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
                a
            },
        );
    let molecules = bases
        .iter()
        .enumerate()
        .map(|(m, b)| {
            let base = nf * (1 + 4 * m);
            MoleculeDos {
                molecule: b.molecule,
                total: acc[base..base + nf].to_vec(),
                trans: acc[base + nf..base + 2 * nf].to_vec(),
                rot: acc[base + 2 * nf..base + 3 * nf].to_vec(),
                intra: acc[base + 3 * nf..base + 4 * nf].to_vec(),
            }
        })
        .collect();
    Ok(DosCurve {
        freqs,
        total: acc[..nf].to_vec(),
        molecules,
        sigma,
        mesh: grid.mesh,
        imaginary_modes: grid.imaginary_count(),
    })
}
