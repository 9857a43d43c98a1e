use super::pipeline::{Pipeline, PointParams, SweepContext};
use super::plan::{run_sweep, SweepAxis, SweepPlan, SweepResult};
use crate::coupling::{dipolar_derivative_set, CouplingDerivativeSet, DerivativeRecord, TensorTarget};
use crate::error::invalid;
use crate::hamiltonian::dipolar_tensor;
use crate::spin::{CouplingTag, SpinCenter, SpinKind, SpinSystem};
use crate::{Error, Result};

/// Chain of `cells` unit cells along lattice direction `axis`, one electron
/// spin on each carrier atom, coupled by point dipoles.
///
/// Every spin copies the g tensor of the first electronic centre of the
/// context. The ∂g/∂X records of that centre are mapped onto each carrier's
/// molecule by atom order and shifted to its cell. Nuclear spins and their
/// hyperfine couplings are dropped.
pub fn multi_spin_system(ctx: &SweepContext, carriers: &[usize], axis: usize, cells: usize) -> Result<SweepContext> {
    if cells == 0 || axis > 2 || carriers.is_empty() {
        return Err(invalid("need at least one cell, one carrier and an axis in 0..3"));
    }
    let crystal = &ctx.crystal;
    let template = ctx
        .system
        .centers
        .iter()
        .find(|c| c.kind == SpinKind::Electronic)
        .ok_or_else(|| invalid("context has no electronic spin to replicate"))?;
    let n_spins = carriers.len() * cells;
    let dim = 1usize.checked_shl(n_spins as u32).unwrap_or(usize::MAX);
    if n_spins >= usize::BITS as usize || dim > ctx.system.dimension_cap {
        return Err(Error::Capacity { dim, cap: ctx.system.dimension_cap });
    }
    let (template_atom, template_cell) = template.site.map(|s| (s.atom, s.cell)).unwrap_or((carriers[0], [0; 3]));
    let template_mol = crystal.atoms[template_atom].molecule;
    let template_atoms = crystal.molecule_atoms(template_mol);

    let mut centers = Vec::with_capacity(n_spins);
    let mut records = Vec::new();
    for c in 0..cells {
        let mut shift = [0i32; 3];
        shift[axis] = c as i32;
        for &carrier in carriers {
            if carrier >= crystal.n_atoms() {
                return Err(invalid(format!("carrier atom {carrier} not in crystal")));
            }
            let id = centers.len();
            let pos = crystal.cartesian_in_cell(carrier, shift);
            centers.push(SpinCenter::electronic(id, template.g).with_position(pos).with_site(carrier, shift));
            let atoms = crystal.molecule_atoms(crystal.atoms[carrier].molecule);
            if atoms.len() != template_atoms.len() {
                return Err(invalid("carrier molecules have different atom counts"));
            }
            for r in ctx.derivatives.records.iter().filter(|r| r.target == TensorTarget::G(template.id)) {
                let k = template_atoms
                    .iter()
                    .position(|&a| a == r.atom)
                    .ok_or_else(|| invalid(format!("g derivative on atom {} outside the spin's molecule", r.atom)))?;
                let cell = [0, 1, 2].map(|u| r.cell[u] - template_cell[u] + shift[u]);
                records.push(DerivativeRecord { target: TensorTarget::G(id), atom: atoms[k], cell, ..*r });
            }
        }
    }
    let mut system = SpinSystem::new(centers, ctx.system.field);
    system.dimension_cap = ctx.system.dimension_cap;
    for i in 0..n_spins {
        for j in i + 1..n_spins {
            let (ci, cj) = (&system.centers[i], &system.centers[j]);
            let d = dipolar_tensor(ci, cj, &(cj.position - ci.position))?;
            system = system.with_coupling(i, j, d, CouplingTag::Dipolar);
        }
    }
    system.validate()?;
    let dip = dipolar_derivative_set(&system, crystal)?;
    let derivatives = CouplingDerivativeSet::new(records, ctx.derivatives.provenance).merged(&dip);
    Ok(SweepContext { crystal: crystal.clone(), force_constants: ctx.force_constants.clone(), derivatives, system })
}

/// τ against spin count for chains of 1..=`max_cells` cells.
pub fn multi_spin_scaling(
    ctx: &SweepContext,
    carriers: &[usize],
    axis: usize,
    max_cells: usize,
    base: &PointParams,
) -> Result<SweepResult> {
    let values = (1..=max_cells).map(|c| (c * carriers.len()) as f64).collect();
    let plan = SweepPlan { replication_axis: axis, carriers: carriers.to_vec(), ..SweepPlan::new(SweepAxis::NSpins, values, base.clone()) };
    let pipeline = Pipeline::new(ctx.clone())?;
    run_sweep(&pipeline, &plan)
}
