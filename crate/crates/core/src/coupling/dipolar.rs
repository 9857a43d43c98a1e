use crate::error::invalid;
use crate::lattice::CrystalModel;
use crate::spin::{SpinCenter, SpinSystem};
use crate::units::{dipolar_prefactor_cm1_a3, BOHR_MAGNETON_CM1_PER_T};
use crate::{Error, Result, Tensor3, Vec3};

use super::{CouplingDerivativeSet, DerivativeRecord, Provenance, TensorTarget};

/// ∂D/∂r_s with r = r_j - r_i.
fn d_dipolar_d_r(ci: &SpinCenter, cj: &SpinCenter, r: &Vec3, s: usize) -> Result<Tensor3> {
    let dist = r.norm();
    if !(dist > 0.1) {
        return Err(Error::Singular(format!("centres {} and {} are {dist:.3e} Å apart", ci.id, cj.id)));
    }
    let c = dipolar_prefactor_cm1_a3() * (ci.beta() / BOHR_MAGNETON_CM1_PER_T) * (cj.beta() / BOHR_MAGNETON_CM1_PER_T);
    let a = ci.g.transpose() * r;
    let b = cj.g.transpose() * r;
    let gg = ci.g.transpose() * cj.g;
    let da = ci.g.row(s).transpose();
    let db = cj.g.row(s).transpose();
    let r5 = dist.powi(5);
    let r7 = dist.powi(7);
    Ok((gg * (-3.0 * r[s] / r5) - (da * b.transpose() + a * db.transpose()) * (3.0 / r5)
        + a * b.transpose() * (15.0 * r[s] / r7))
        * c)
}

fn carrier(center: &SpinCenter) -> Result<(usize, [i32; 3])> {
    center
        .site
        .map(|s| (s.atom, s.cell))
        .ok_or_else(|| invalid(format!("centre {} has no carrier atom", center.id)))
}

/// ∂D^dip(i,j)/∂X for the carrier atom `atom` displaced along `s`. Moving
/// the carrier of j gives +∂D/∂r_s, moving that of i gives -∂D/∂r_s, and an
/// atom carrying both (or neither) gives zero.
pub fn dipolar_derivatives(
    system: &SpinSystem,
    crystal: &CrystalModel,
    pair: (usize, usize),
    atom: (usize, [i32; 3]),
    s: usize,
) -> Result<Tensor3> {
    let (i, j) = pair;
    if i >= system.centers.len() || j >= system.centers.len() || i == j || s > 2 {
        return Err(invalid(format!("bad dipolar pair ({i}, {j}) or direction {s}")));
    }
    if atom.0 >= crystal.n_atoms() {
        return Err(invalid(format!("atom {} not in crystal", atom.0)));
    }
    let (ci, cj) = (&system.centers[i], &system.centers[j]);
    let r = cj.position - ci.position;
    let d = d_dipolar_d_r(ci, cj, &r, s)?;
    let mut out = Tensor3::zeros();
    if carrier(cj)? == atom {
        out += d;
    }
    if carrier(ci)? == atom {
        out -= d;
    }
    Ok(out)
}

/// Analytic derivative records for every dipolar coupling of the system.
pub fn dipolar_derivative_set(system: &SpinSystem, crystal: &CrystalModel) -> Result<CouplingDerivativeSet> {
    let mut records = Vec::new();
    for p in system.couplings.iter().filter(|p| p.tag == crate::spin::CouplingTag::Dipolar) {
        let (ci, cj) = (&system.centers[p.i], &system.centers[p.j]);
        let (ai, li) = carrier(ci)?;
        let (aj, lj) = carrier(cj)?;
        if ai >= crystal.n_atoms() || aj >= crystal.n_atoms() {
            return Err(invalid(format!("dipolar pair ({}, {}) carried by an atom outside the crystal", p.i, p.j)));
        }
        let r = cj.position - ci.position;
        for s in 0..3 {
            let d = d_dipolar_d_r(ci, cj, &r, s)?;
            let target = TensorTarget::Dipolar(p.i, p.j);
            if (ai, li) == (aj, lj) {
                continue;
            }
            records.push(DerivativeRecord { target, atom: aj, s, cell: lj, tensor: d });
            records.push(DerivativeRecord { target, atom: ai, s, cell: li, tensor: -d });
        }
    }
    Ok(CouplingDerivativeSet::new(records, Provenance::Analytic))
}
