use std::collections::BTreeMap;

use crate::error::invalid;
use crate::linalg;
use crate::{CMat, Error, Result, Vec3};

use super::bloch_phase;

/// Φ(0 i s; l j t) in eV/Å²: atom `i` of the reference cell along `s`,
/// atom `j` of cell `l` along `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FcRecord {
    pub cell: [i32; 3],
    pub i: usize,
    pub s: usize,
    pub j: usize,
    pub t: usize,
    pub value: f64,
}

#[derive(Debug, Clone)]
pub struct ForceConstantSet {
    masses: Vec<f64>,
    records: Vec<FcRecord>,
    /// Mass-weighted entries grouped by cell: (row, col, Φ/√(mᵢmⱼ)).
    by_cell: BTreeMap<[i32; 3], Vec<(usize, usize, f64)>>,
}

/// D(q) after Hermitian symmetrization, with the pre-symmetrization
/// asymmetry kept as a diagnostic.
#[derive(Debug, Clone)]
pub struct DynamicalMatrix {
    pub matrix: CMat,
    pub asymmetry: f64,
}

impl ForceConstantSet {
    pub fn new(masses: Vec<f64>, records: Vec<FcRecord>) -> Result<Self> {
        if masses.is_empty() {
            return Err(invalid("force constants need atomic masses"));
        }
        for (k, m) in masses.iter().enumerate() {
            if !(*m > 0.0) || !m.is_finite() {
                return Err(invalid(format!("mass of atom {k} is {m}")));
            }
        }
        let n = masses.len();
        let mut by_cell: BTreeMap<[i32; 3], Vec<(usize, usize, f64)>> = BTreeMap::new();
        for (k, r) in records.iter().enumerate() {
            if r.i >= n || r.j >= n || r.s > 2 || r.t > 2 {
                return Err(invalid(format!("force-constant record {k} has an index out of range")));
            }
            if !r.value.is_finite() {
                return Err(Error::NonFinite(format!("force-constant record {k}")));
            }
            by_cell.entry(r.cell).or_default().push((
                3 * r.i + r.s,
                3 * r.j + r.t,
                r.value / (masses[r.i] * masses[r.j]).sqrt(),
            ));
        }
        Ok(Self { masses, records, by_cell })
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn records(&self) -> &[FcRecord] {
        &self.records
    }

    pub fn n_atoms(&self) -> usize {
        self.masses.len()
    }

    pub fn n_branches(&self) -> usize {
        3 * self.masses.len()
    }

    /// Σ_{l,j} Φ(0 i s; l j t) for every (i, s, t), indexed [3i+s][t].
    pub fn sum_rule_rows(&self) -> Vec<[f64; 3]> {
        let mut rows = vec![[0.0; 3]; self.n_branches()];
        for r in &self.records {
            rows[3 * r.i + r.s][r.t] += r.value;
        }
        rows
    }

    /// Largest absolute translational sum-rule violation (eV/Å²).
    pub fn sum_rule_residual(&self) -> f64 {
        self.sum_rule_rows().iter().flatten().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Adjusts the on-site blocks Φ(0 i; 0 i) so that every row sums to
    /// zero; all other records are left untouched.
    pub fn enforce_acoustic_sum_rule(&self) -> Self {
        let rows = self.sum_rule_rows();
        let mut records = self.records.clone();
        let n = self.n_atoms();
        let mut fixed = vec![[false; 3]; 3 * n];
        for r in records.iter_mut() {
            if r.cell == [0, 0, 0] && r.i == r.j && !fixed[3 * r.i + r.s][r.t] {
                r.value -= rows[3 * r.i + r.s][r.t];
                fixed[3 * r.i + r.s][r.t] = true;
            }
        }
        for i in 0..n {
            for s in 0..3 {
                for t in 0..3 {
                    let resid = rows[3 * i + s][t];
                    if !fixed[3 * i + s][t] && resid != 0.0 {
                        records.push(FcRecord { cell: [0, 0, 0], i, s, j: i, t, value: -resid });
                    }
                }
            }
        }
        Self::new(self.masses.clone(), records).expect("sum-rule enforcement keeps records valid")
    }

    /// Largest mass-weighted entry Φ/√(mᵢmⱼ); a magnitude reference for D(q).
    pub fn weighted_scale(&self) -> f64 {
        self.by_cell.values().flatten().fold(0.0, |m, e| m.max(e.2.abs()))
    }

    /// Mass-weighted D(q) = Σ_l Φ(0; l)/√(mᵢmⱼ) e^{iq·R_l}, before symmetrization.
    pub fn raw_dynamical_matrix(&self, q: &Vec3) -> CMat {
        let n = self.n_branches();
        let mut d = CMat::zeros(n, n);
        for (cell, entries) in &self.by_cell {
            let phase = bloch_phase(q, *cell);
            for &(r, c, v) in entries {
                d[(r, c)] += phase * v;
            }
        }
        d
    }

    pub fn dynamical_matrix(&self, q: &Vec3) -> DynamicalMatrix {
        let raw = self.raw_dynamical_matrix(q);
        let asymmetry = linalg::hermiticity_residual(&raw);
        DynamicalMatrix { matrix: linalg::hermitian_part(&raw), asymmetry }
    }

    /// Same force constants with every value multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let records = self.records.iter().map(|r| FcRecord { value: r.value * factor, ..*r }).collect();
        Self::new(self.masses.clone(), records).expect("scaling keeps records valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toy::{generate_toy_crystal, ToySpec};

    fn toy() -> ForceConstantSet {
        generate_toy_crystal(&ToySpec::vanadyl_like_electron_only()).unwrap().force_constants
    }

    #[test]
    fn sum_rule_enforcement_restores_acoustic_modes() {
        let fc = toy();
        assert!(fc.sum_rule_residual() < 1e-12);
        // Drift of the on-site blocks, symmetric in (s, t).
        let mut records = fc.records().to_vec();
        for r in records.iter_mut().filter(|r| r.cell == [0; 3] && r.i == r.j) {
            r.value += 1e-3 * ((r.i + r.s + r.t) % 5) as f64;
        }
        let broken = ForceConstantSet::new(fc.masses().to_vec(), records).unwrap();
        assert!(broken.sum_rule_residual() > 1e-6);
        let fixed = broken.enforce_acoustic_sum_rule();
        assert!(fixed.sum_rule_residual() < 1e-12);
        let gamma = crate::lattice::phonon_modes(&fixed, &Vec3::zeros()).unwrap();
        for m in &gamma[..3] {
            assert!(m.omega.abs() < 1e-6, "{}", m.omega);
        }
        assert!(gamma[3].omega > 1.0);
        let drifted = crate::lattice::phonon_modes(&broken, &Vec3::zeros()).unwrap();
        assert!(drifted[..3].iter().any(|m| m.omega.abs() > 1e-3));
    }

    #[test]
    fn dynamical_matrix_symmetries() {
        let fc = toy();
        for q in [Vec3::new(0.1, -0.2, 0.3), Vec3::new(0.5, 0.25, -0.375)] {
            let dq = fc.dynamical_matrix(&q);
            assert!(dq.asymmetry < 1e-10 * linalg::max_abs(&dq.matrix));
            let dm = fc.dynamical_matrix(&-q);
            let n = fc.n_branches();
            for i in 0..n {
                for j in 0..n {
                    assert!((dm.matrix[(i, j)] - dq.matrix[(i, j)].conj()).norm() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn rejects_bad_records() {
        let bad = vec![FcRecord { cell: [0; 3], i: 2, s: 0, j: 0, t: 0, value: 1.0 }];
        assert!(ForceConstantSet::new(vec![1.0, 1.0], bad).is_err());
        let nan = vec![FcRecord { cell: [0; 3], i: 0, s: 0, j: 0, t: 0, value: f64::NAN }];
        assert!(ForceConstantSet::new(vec![1.0], nan).is_err());
    }
}
