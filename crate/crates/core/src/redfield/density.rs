use crate::hamiltonian::SpinHamiltonian;
use crate::linalg;
use crate::{CMat, Error, Result, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Basis {
    Product,
    Eigen,
}

#[derive(Debug, Clone)]
pub struct DensityMatrix {
    pub matrix: CMat,
    pub basis: Basis,
    pub time_ps: f64,
}

impl DensityMatrix {
    pub fn product(matrix: CMat) -> Self {
        Self { matrix, basis: Basis::Product, time_ps: 0.0 }
    }

    pub fn eigen(matrix: CMat) -> Self {
        Self { matrix, basis: Basis::Eigen, time_ps: 0.0 }
    }

    pub fn at(mut self, time_ps: f64) -> Self {
        self.time_ps = time_ps;
        self
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> C64 {
        linalg::trace(&self.matrix)
    }

    pub fn hermiticity_residual(&self) -> f64 {
        linalg::hermiticity_residual(&self.matrix)
    }

    /// Smallest eigenvalue of the Hermitian part (positivity monitor).
    pub fn min_eigenvalue(&self) -> Result<f64> {
        let (vals, _) = linalg::hermitian_eigen(&linalg::hermitian_part(&self.matrix), "density matrix")?;
        Ok(vals.first().copied().unwrap_or(0.0))
    }

    pub fn populations(&self) -> Vec<f64> {
        (0..self.dim()).map(|a| self.matrix[(a, a)].re).collect()
    }

    pub fn to_product_basis(&self, h: &SpinHamiltonian) -> Result<Self> {
        self.check_dim(h)?;
        Ok(match self.basis {
            Basis::Product => self.clone(),
            Basis::Eigen => Self { matrix: h.to_product_basis(&self.matrix), basis: Basis::Product, time_ps: self.time_ps },
        })
    }

    pub fn to_eigenbasis(&self, h: &SpinHamiltonian) -> Result<Self> {
        self.check_dim(h)?;
        Ok(match self.basis {
            Basis::Eigen => self.clone(),
            Basis::Product => Self { matrix: h.to_eigenbasis(&self.matrix), basis: Basis::Eigen, time_ps: self.time_ps },
        })
    }

    fn check_dim(&self, h: &SpinHamiltonian) -> Result<()> {
        if self.dim() != h.dim() {
            return Err(Error::InvalidInput(format!(
                "density matrix of dimension {} does not match Hamiltonian of dimension {}",
                self.dim(),
                h.dim()
            )));
        }
        Ok(())
    }

    /// Row-major vectorization ρ_ab → index a·d + b.
    pub fn to_vec(&self) -> Vec<C64> {
        let d = self.dim();
        (0..d * d).map(|k| self.matrix[(k / d, k % d)]).collect()
    }

    pub fn from_vec(v: &[C64], d: usize, basis: Basis, time_ps: f64) -> Self {
        Self { matrix: CMat::from_fn(d, d, |a, b| v[a * d + b]), basis, time_ps }
    }
}
