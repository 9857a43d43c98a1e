//! Static spin Hamiltonian: Zeeman terms plus bilinear pair couplings,
//! point-dipole tensors and magnetization expectation values.

use crate::linalg::{self, hermitian_eigen, hermiticity_residual, max_abs};
use crate::redfield::{Basis, DensityMatrix};
use crate::spin::{SpinCenter, SpinKind, SpinOperators, SpinSystem};
use crate::units::dipolar_prefactor_cm1_a3;
use crate::{CMat, Error, Result, Tensor3, Vec3, C64};

/// Diagonalized spin Hamiltonian. Energies in cm⁻¹, ascending.
#[derive(Debug, Clone)]
pub struct SpinHamiltonian {
    pub matrix: CMat,
    pub energies: Vec<f64>,
    /// Eigenvectors as columns, product basis → eigenbasis.
    pub eigenvectors: CMat,
}

impl SpinHamiltonian {
    pub fn from_matrix(matrix: CMat) -> Result<Self> {
        let res = hermiticity_residual(&matrix);
        if res > 1e-12 * max_abs(&matrix).max(1.0) {
            return Err(Error::NotHermitian { context: "spin Hamiltonian".into(), residual: res });
        }
        let matrix = linalg::hermitian_part(&matrix);
        let (energies, eigenvectors) = hermitian_eigen(&matrix, "spin Hamiltonian")?;
        Ok(Self { matrix, energies, eigenvectors })
    }

    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    /// ω_ab = E_a - E_b in cm⁻¹.
    pub fn omega(&self, a: usize, b: usize) -> f64 {
        self.energies[a] - self.energies[b]
    }

    /// Operator expressed in the eigenbasis: U† O U.
    pub fn to_eigenbasis(&self, op: &CMat) -> CMat {
        linalg::rotate_into(op, &self.eigenvectors)
    }

    pub fn to_product_basis(&self, op: &CMat) -> CMat {
        linalg::rotate_out_of(op, &self.eigenvectors)
    }

    /// max |U E U† - H|.
    pub fn reconstruction_residual(&self) -> f64 {
        let n = self.dim();
        let d = CMat::from_fn(n, n, |i, j| if i == j { C64::new(self.energies[i], 0.0) } else { C64::new(0.0, 0.0) });
        linalg::max_abs_diff(&self.to_product_basis(&d), &self.matrix)
    }

    /// Smallest nonzero level spacing (cm⁻¹); `None` if all levels coincide.
    pub fn smallest_gap(&self, tol: f64) -> Option<f64> {
        self.energies
            .windows(2)
            .map(|w| w[1] - w[0])
            .filter(|g| *g > tol)
            .fold(None, |acc, g| Some(acc.map_or(g, |a: f64| a.min(g))))
    }
}

/// β B·g·S for one centre.
pub fn zeeman_operator(ops: &SpinOperators, center: usize, beta: f64, field: &Vec3, g: &Tensor3) -> CMat {
    let d = ops.dim();
    let mut out = CMat::zeros(d, d);
    for v in 0..3 {
        let coef: f64 = (0..3).map(|u| field[u] * g[(u, v)]).sum::<f64>() * beta;
        if coef != 0.0 {
            linalg::axpy(&mut out, C64::new(coef, 0.0), ops.component(center, v));
        }
    }
    out
}

/// ½[S(i)·D·S(j) + S(j)·Dᵀ·S(i)], i.e. one pair term of the double sum.
pub fn bilinear_operator(ops: &SpinOperators, i: usize, j: usize, tensor: &Tensor3) -> CMat {
    let d = ops.dim();
    let mut out = CMat::zeros(d, d);
    for u in 0..3 {
        for v in 0..3 {
            let t = tensor[(u, v)];
            if t == 0.0 {
                continue;
            }
            let forward = ops.component(i, u) * ops.component(j, v);
            let backward = ops.component(j, v) * ops.component(i, u);
            linalg::axpy(&mut out, C64::new(0.5 * t, 0.0), &forward);
            linalg::axpy(&mut out, C64::new(0.5 * t, 0.0), &backward);
        }
    }
    out
}

/// Static Hamiltonian matrix in the product basis (no diagonalization).
pub fn hamiltonian_matrix(system: &SpinSystem, ops: &SpinOperators) -> Result<CMat> {
    if ops.dim() != system.dimension() || ops.n_centers() != system.centers.len() {
        return Err(Error::InvalidInput("spin operators do not match the spin system".into()));
    }
    system.validate()?;
    let d = ops.dim();
    let mut h = CMat::zeros(d, d);
    for (k, c) in system.centers.iter().enumerate() {
        if c.kind == SpinKind::Nuclear && !system.nuclear_zeeman {
            continue;
        }
        let z = zeeman_operator(ops, k, c.beta(), &system.field, &c.g);
        linalg::axpy(&mut h, C64::new(1.0, 0.0), &z);
    }
    for p in &system.couplings {
        let b = bilinear_operator(ops, p.i, p.j, &p.tensor);
        linalg::axpy(&mut h, C64::new(1.0, 0.0), &b);
    }
    Ok(h)
}

pub fn assemble_hamiltonian(system: &SpinSystem, ops: &SpinOperators) -> Result<SpinHamiltonian> {
    SpinHamiltonian::from_matrix(hamiltonian_matrix(system, ops)?)
}

/// Point-dipole tensor between two centres; `r` points from `ci` to `cj` (Å).
///
/// D = μ₀βᵢβⱼ/(4π r³) [gᵢᵀgⱼ - 3 (gᵢᵀr̂)(gⱼᵀr̂)ᵀ]
pub fn dipolar_tensor(ci: &SpinCenter, cj: &SpinCenter, r: &Vec3) -> Result<Tensor3> {
    let dist = r.norm();
    if !(dist > 0.1) {
        return Err(Error::Singular(format!(
            "centres {} and {} are {dist:.3e} Å apart",
            ci.id, cj.id
        )));
    }
    // The prefactor is tabulated for two Bohr magnetons.
    let mu_b = crate::units::BOHR_MAGNETON_CM1_PER_T;
    let scale = dipolar_prefactor_cm1_a3() * (ci.beta() / mu_b) * (cj.beta() / mu_b) / dist.powi(3);
    let rhat = r / dist;
    let a = ci.g.transpose() * rhat;
    let b = cj.g.transpose() * rhat;
    Ok((ci.g.transpose() * cj.g - 3.0 * a * b.transpose()) * scale)
}

/// ⟨S(i)⟩ = Tr ρ S(i) with the imaginary residual reported separately.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Magnetization {
    pub m: Vec3,
    pub imag_residual: f64,
}

/// ρ must be in the product basis; use [`DensityMatrix::to_product_basis`]
/// for eigenbasis states.
pub fn magnetization(rho: &DensityMatrix, ops: &SpinOperators, center: usize) -> Result<Magnetization> {
    if rho.basis != Basis::Product {
        return Err(Error::InvalidInput("magnetization needs a product-basis density matrix".into()));
    }
    if center >= ops.n_centers() {
        return Err(Error::InvalidInput(format!("no spin centre {center}")));
    }
    let tr = linalg::trace(&rho.matrix);
    if (tr - C64::new(1.0, 0.0)).norm() > 1e-8 {
        return Err(Error::InvalidInput(format!("density matrix trace {tr} is not 1")));
    }
    let herm = hermiticity_residual(&rho.matrix);
    if herm > 1e-8 {
        return Err(Error::NotHermitian { context: "density matrix".into(), residual: herm });
    }
    let mut m = Vec3::zeros();
    let mut imag = 0.0f64;
    for u in 0..3 {
        let s = ops.component(center, u);
        let d = s.nrows();
        let mut acc = C64::new(0.0, 0.0);
        for a in 0..d {
            for b in 0..d {
                acc += rho.matrix[(a, b)] * s[(b, a)];
            }
        }
        m[u] = acc.re;
        imag = imag.max(acc.im.abs());
    }
    Ok(Magnetization { m, imag_residual: imag })
}
