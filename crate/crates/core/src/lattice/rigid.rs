use crate::error::invalid;
use crate::{Result, Vec3};

use super::{CrystalModel, PhononMode};

/// Orthonormal mass-weighted rigid-body displacement patterns of one molecule.
#[derive(Debug, Clone)]
pub struct RigidBasis {
    pub molecule: usize,
    pub atoms: Vec<usize>,
    /// Each vector has length 3·atoms.len(), ordered like `atoms`.
    pub translations: Vec<Vec<f64>>,
    pub rotations: Vec<Vec<f64>>,
}

/// Squared projections of one mode onto one molecule. `share` is the
/// molecule's part of |L|², and trans + rot + intra = share.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidWeights {
    pub trans: f64,
    pub rot: f64,
    pub intra: f64,
    pub share: f64,
}

const RANK_TOL: f64 = 1e-8;

fn orthonormalize_against(v: &mut [f64], basis: &[Vec<f64>]) -> f64 {
    // Two passes keep the result orthogonal to working precision.
    for _ in 0..2 {
        for b in basis {
            let c: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
        }
    }
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

impl RigidBasis {
    pub fn new(crystal: &CrystalModel, molecule: usize) -> Result<Self> {
        let atoms = crystal.molecule_atoms(molecule);
        if atoms.is_empty() {
            return Err(invalid(format!("molecule {molecule} has no atoms")));
        }
        let n = atoms.len();
        let masses: Vec<f64> = atoms.iter().map(|&k| crystal.atoms[k].mass).collect();
        let total: f64 = masses.iter().sum();
        let pos: Vec<Vec3> = atoms.iter().map(|&k| crystal.cartesian(k)).collect();
        let com = pos.iter().zip(&masses).fold(Vec3::zeros(), |acc, (r, m)| acc + r * *m) / total;

        let mut translations = Vec::with_capacity(3);
        for u in 0..3 {
            let mut v = vec![0.0; 3 * n];
            for k in 0..n {
                v[3 * k + u] = (masses[k] / total).sqrt();
            }
            translations.push(v);
        }

        let length_scale = pos.iter().map(|r| (r - com).norm()).fold(0.0, f64::max).max(1e-12);
        let mut rotations: Vec<Vec<f64>> = Vec::with_capacity(3);
        for u in 0..3 {
            let axis = Vec3::ith(u, 1.0);
            let mut v = vec![0.0; 3 * n];
            for k in 0..n {
                let d = axis.cross(&(pos[k] - com)) * masses[k].sqrt();
                for s in 0..3 {
                    v[3 * k + s] = d[s];
                }
            }
            let raw = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            let mut all = translations.clone();
            all.extend(rotations.iter().cloned());
            let norm = orthonormalize_against(&mut v, &all);
            let reference = raw.max(total.sqrt() * length_scale);
            if norm > RANK_TOL * reference {
                v.iter_mut().for_each(|x| *x /= norm);
                rotations.push(v);
            }
        }
        Ok(Self { molecule, atoms, translations, rotations })
    }

    pub fn weights(&self, eigvec: &[crate::C64]) -> RigidWeights {
        let block: Vec<crate::C64> =
            self.atoms.iter().flat_map(|&k| (0..3).map(move |s| eigvec[3 * k + s])).collect();
        let share: f64 = block.iter().map(|z| z.norm_sqr()).sum();
        let proj = |basis: &[Vec<f64>]| -> f64 {
            basis
                .iter()
                .map(|b| b.iter().zip(&block).map(|(x, z)| z * *x).sum::<crate::C64>().norm_sqr())
                .sum()
        };
        let trans = proj(&self.translations);
        let rot = proj(&self.rotations);
        let intra = (share - trans - rot).max(0.0);
        RigidWeights { trans, rot, intra, share }
    }
}

/// Splits the molecule's share of `mode` into translation, rotation and
/// intra-molecular parts.
pub fn rigid_body_decomposition(mode: &PhononMode, crystal: &CrystalModel, molecule: usize) -> Result<RigidWeights> {
    if mode.eigvec.len() != 3 * crystal.n_atoms() {
        return Err(invalid(format!(
            "eigenvector length {} does not match {} atoms",
            mode.eigvec.len(),
            crystal.n_atoms()
        )));
    }
    Ok(RigidBasis::new(crystal, molecule)?.weights(&mode.eigvec))
}
