use rayon::prelude::*;

use crate::error::invalid;
use crate::linalg;
use crate::units::{force_constant_to_cm1, KB_CM1_PER_K};
use crate::{Error, Result, Vec3, C64};

use super::ForceConstantSet;

/// One phonon branch at one q-point.
#[derive(Debug, Clone, PartialEq)]
pub struct PhononMode {
    /// Fractional reciprocal coordinates.
    pub q: Vec3,
    pub branch: usize,
    /// cm⁻¹; negative when the mode is imaginary.
    pub omega: f64,
    /// Mass-weighted eigenvector of D(q), unit norm, length 3N.
    pub eigvec: Vec<C64>,
    pub imaginary: bool,
}

impl PhononMode {
    pub fn is_stable(&self) -> bool {
        !self.imaginary
    }

    /// Copy with ω multiplied by `factor` and the eigenvector unchanged.
    pub fn with_scaled_frequency(&self, factor: f64) -> Self {
        Self { omega: self.omega * factor, ..self.clone() }
    }
}

/// Modes on all q-points of a grid, in grid order.
#[derive(Debug, Clone)]
pub struct QPoint {
    pub q: Vec3,
    pub modes: Vec<PhononMode>,
    pub asymmetry: f64,
}

#[derive(Debug, Clone)]
pub struct PhononGrid {
    pub mesh: [usize; 3],
    pub points: Vec<QPoint>,
}

impl PhononGrid {
    pub fn compute(fc: &ForceConstantSet, mesh: [usize; 3], qpoints: &[Vec3]) -> Result<Self> {
        let points = qpoints
            .par_iter()
            .map(|q| {
                let dm = fc.dynamical_matrix(q);
                let modes = modes_from_matrix(&dm.matrix, q, fc.masses(), fc.weighted_scale())?;
                Ok(QPoint { q: *q, modes, asymmetry: dm.asymmetry })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { mesh, points })
    }

    pub fn n_q(&self) -> usize {
        self.points.len()
    }

    pub fn modes(&self) -> impl Iterator<Item = &PhononMode> {
        self.points.iter().flat_map(|p| p.modes.iter())
    }

    pub fn imaginary_count(&self) -> usize {
        self.modes().filter(|m| m.imaginary).count()
    }

    pub fn max_frequency(&self) -> f64 {
        self.modes().map(|m| m.omega).fold(0.0, f64::max)
    }

    pub fn with_scaled_frequencies(&self, factor: f64) -> Self {
        Self {
            mesh: self.mesh,
            points: self
                .points
                .iter()
                .map(|p| QPoint {
                    q: p.q,
                    modes: p.modes.iter().map(|m| m.with_scaled_frequency(factor)).collect(),
                    asymmetry: p.asymmetry,
                })
                .collect(),
        }
    }
}

/// Mass-weighted unit translations along x, y, z.
fn translations(masses: &[f64]) -> Vec<Vec<f64>> {
    let total: f64 = masses.iter().sum();
    (0..3)
        .map(|u| {
            let mut t = vec![0.0; 3 * masses.len()];
            for (i, m) in masses.iter().enumerate() {
                t[3 * i + u] = (m / total).sqrt();
            }
            t
        })
        .collect()
}

/// At Γ with the sum rule satisfied, returns eigenpairs with the three
/// translations split off as exact zeros; the rest of the spectrum comes
/// from D restricted to their orthogonal complement.
fn deflated_gamma(d: &crate::CMat, masses: &[f64], fc_scale: f64, context: &str) -> Result<Option<(Vec<f64>, crate::CMat)>> {
    let n = d.nrows();
    if n < 3 || masses.len() * 3 != n {
        return Ok(None);
    }
    let t = translations(masses);
    let scale = linalg::max_abs(d).max(fc_scale);
    for tu in &t {
        let x: Vec<C64> = tu.iter().map(|v| C64::new(*v, 0.0)).collect();
        let r = linalg::matvec(d, &x).iter().fold(0.0f64, |m, z| m.max(z.norm()));
        if r > 1e-10 * scale {
            return Ok(None);
        }
    }
    if n == 3 {
        let vecs = crate::CMat::from_fn(3, 3, |r, k| C64::new(t[k][r], 0.0));
        return Ok(Some((vec![0.0; 3], vecs)));
    }
    let mut basis: Vec<Vec<f64>> = t.clone();
    for k in 0..n {
        if basis.len() == n {
            break;
        }
        let mut v = vec![0.0; n];
        v[k] = 1.0;
        for _ in 0..2 {
            for b in &basis {
                let c: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.1 {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
    }
    let c = crate::CMat::from_fn(n, n - 3, |i, j| C64::new(basis[j + 3][i], 0.0));
    let reduced = linalg::hermitian_part(&(c.adjoint() * d * &c));
    let (lambda, y) = linalg::hermitian_eigen(&reduced, context)?;
    let rest = &c * &y;
    let mut pairs: Vec<(f64, Vec<C64>)> = t.iter().map(|tu| (0.0, tu.iter().map(|v| C64::new(*v, 0.0)).collect())).collect();
    for (k, &l) in lambda.iter().enumerate() {
        pairs.push((l, (0..n).map(|r| rest[(r, k)]).collect()));
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let vals = pairs.iter().map(|p| p.0).collect();
    let vecs = crate::CMat::from_fn(n, n, |r, k| pairs[k].1[r]);
    Ok(Some((vals, vecs)))
}

fn modes_from_matrix(d: &crate::CMat, q: &Vec3, masses: &[f64], fc_scale: f64) -> Result<Vec<PhononMode>> {
    let context = format!("dynamical matrix at q = ({}, {}, {})", q[0], q[1], q[2]);
    let eigen_err = |_| Error::Eigen { context: context.clone() };
    let deflated = if q.iter().all(|x| *x == 0.0) { deflated_gamma(d, masses, fc_scale, &context).map_err(eigen_err)? } else { None };
    let (lambda, vecs) = match deflated {
        Some(x) => x,
        None => linalg::hermitian_eigen(d, &context).map_err(eigen_err)?,
    };
    let conv = force_constant_to_cm1();
    let scale = lambda.iter().fold(0.0f64, |m, l| m.max(l.abs()));
    let tol = 1e-12 * scale;
    Ok(lambda
        .iter()
        .enumerate()
        .map(|(b, &l)| {
            let imaginary = l < -tol;
            let omega = if imaginary { -conv * (-l).sqrt() } else { conv * l.max(0.0).sqrt() };
            if imaginary {
                log::warn!("imaginary mode at q = {:?}, branch {b}: {omega:.4} cm⁻¹", q.as_slice());
            }
            PhononMode {
                q: *q,
                branch: b,
                omega,
                eigvec: (0..vecs.nrows()).map(|r| vecs[(r, b)]).collect(),
                imaginary,
            }
        })
        .collect())
}

/// Frequencies (cm⁻¹, ascending) and eigenvectors of D(q).
pub fn phonon_modes(fc: &ForceConstantSet, q: &Vec3) -> Result<Vec<PhononMode>> {
    let dm = fc.dynamical_matrix(q);
    modes_from_matrix(&dm.matrix, q, fc.masses(), fc.weighted_scale())
}

/// n̄ = 1/(exp(ħω/k_BT) - 1); zero at T = 0.
pub fn bose_population(omega: f64, temperature: f64) -> Result<f64> {
    if !(omega > 0.0) {
        return Err(invalid(format!("Bose population needs ω > 0, got {omega}")));
    }
    if !(temperature >= 0.0) {
        return Err(invalid(format!("temperature must be non-negative, got {temperature}")));
    }
    if temperature == 0.0 {
        return Ok(0.0);
    }
    Ok(1.0 / (omega / (KB_CM1_PER_K * temperature)).exp_m1())
}
