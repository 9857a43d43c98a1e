use crate::error::invalid;
use crate::{Error, Result, Vec3};

#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub label: String,
    /// amu.
    pub mass: f64,
    /// Fractional coordinates; molecules are stored unwrapped, so values
    /// outside [0, 1) are allowed.
    pub frac: Vec3,
    pub molecule: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrystalModel {
    /// Rows are the lattice vectors a, b, c in Å.
    pub cell: nalgebra::Matrix3<f64>,
    pub atoms: Vec<Atom>,
}

impl CrystalModel {
    pub fn new(cell: nalgebra::Matrix3<f64>, atoms: Vec<Atom>) -> Result<Self> {
        let c = Self { cell, atoms };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let det = self.cell.determinant();
        if !det.is_finite() || det.abs() < 1e-8 {
            return Err(Error::Singular(format!("cell volume {det:.3e} Å³")));
        }
        if self.atoms.is_empty() {
            return Err(invalid("crystal has no atoms"));
        }
        for (k, a) in self.atoms.iter().enumerate() {
            if !(a.mass > 0.0) || !a.mass.is_finite() {
                return Err(invalid(format!("atom {k} ({}) has non-positive mass {}", a.label, a.mass)));
            }
            if a.frac.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("position of atom {k}")));
            }
        }
        Ok(())
    }

    pub fn n_atoms(&self) -> usize {
        self.atoms.len()
    }

    pub fn masses(&self) -> Vec<f64> {
        self.atoms.iter().map(|a| a.mass).collect()
    }

    /// R_l = l₁a + l₂b + l₃c.
    pub fn lattice_vector(&self, cell: [i32; 3]) -> Vec3 {
        self.cell.transpose() * Vec3::new(cell[0] as f64, cell[1] as f64, cell[2] as f64)
    }

    pub fn frac_to_cart(&self, frac: &Vec3) -> Vec3 {
        self.cell.transpose() * frac
    }

    pub fn cartesian(&self, atom: usize) -> Vec3 {
        self.frac_to_cart(&self.atoms[atom].frac)
    }

    /// Cartesian position of `atom` in the replica at `cell`.
    pub fn cartesian_in_cell(&self, atom: usize, cell: [i32; 3]) -> Vec3 {
        self.cartesian(atom) + self.lattice_vector(cell)
    }

    /// Atom indices grouped by molecule id, ordered by id.
    pub fn molecules(&self) -> Vec<(usize, Vec<usize>)> {
        let mut map = std::collections::BTreeMap::<usize, Vec<usize>>::new();
        for (k, a) in self.atoms.iter().enumerate() {
            map.entry(a.molecule).or_default().push(k);
        }
        map.into_iter().collect()
    }

    pub fn molecule_atoms(&self, molecule: usize) -> Vec<usize> {
        (0..self.atoms.len()).filter(|&k| self.atoms[k].molecule == molecule).collect()
    }
}
