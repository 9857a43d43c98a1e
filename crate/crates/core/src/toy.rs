//! Synthetic mass-spring crystals with planted spin-phonon derivatives.
//!
//! Springs are central (Φ = -k r̂r̂ᵀ between bonded atoms, with the
//! on-site blocks set to minus the sum of the bonds), so every generated
//! force-constant set satisfies the acoustic sum rule exactly.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::coupling::{CouplingDerivativeSet, DerivativeRecord, Provenance, TensorTarget};
use crate::error::invalid;
use crate::lattice::{Atom, CrystalModel, FcRecord, ForceConstantSet};
use crate::spin::{CouplingTag, Magneton, SpinCenter, SpinKind, SpinSystem};
use crate::{Result, Tensor3, Vec3};

/// Nuclear spin carried by the same atom as the electron.
#[derive(Debug, Clone, PartialEq)]
pub struct NuclearSpec {
    pub twice_i: u32,
    /// Scalar g entering β_N B·g·I; the conventional nuclear g factor
    /// enters with the opposite sign.
    pub g_n: f64,
    /// Hyperfine tensor, cm⁻¹.
    pub hyperfine: Tensor3,
    /// Scale of the synthetic ∂A/∂X, cm⁻¹/Å.
    pub da_scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToySpec {
    /// Orthorhombic lattice constants a, b, c (Å).
    pub lattice: [f64; 3],
    pub molecules_per_cell: usize,
    pub atoms_per_molecule: usize,
    /// Mass of the spin-carrying atom (amu).
    pub carrier_mass: f64,
    pub ligand_mass: f64,
    /// Carrier-ligand distance (Å).
    pub bond_length: f64,
    /// eV/Å².
    pub k_intra: f64,
    /// eV/Å².
    pub k_inter: f64,
    /// Inter-molecular springs connect atoms closer than this (Å).
    pub inter_cutoff: f64,
    pub g: Tensor3,
    /// Scale of the synthetic ∂g/∂X (per Å).
    pub dg_scale: f64,
    pub nuclear: Option<NuclearSpec>,
    /// Tesla.
    pub field: Vec3,
    pub seed: u64,
}

impl ToySpec {
    /// Two five-atom molecules per cell in the cell of the vanadyl crystal
    /// (a = 7.060, b = 7.935, c = 11.091 Å) with the simulated g and
    /// hyperfine tensors of that compound and an I = 7/2 ⁵¹V nucleus.
    pub fn vanadyl_like() -> Self {
        let a = Tensor3::from_diagonal(&Vec3::new(0.00354, 0.00396, 0.01396));
        Self {
            lattice: [7.060, 7.935, 11.091],
            molecules_per_cell: 2,
            atoms_per_molecule: 5,
            carrier_mass: 50.9440,
            ligand_mass: 15.999,
            bond_length: 1.9,
            k_intra: 5.0,
            k_inter: 0.003,
            inter_cutoff: 6.0,
            g: Tensor3::from_diagonal(&Vec3::new(1.9830, 1.9814, 1.9274)),
            dg_scale: 0.01,
            nuclear: Some(NuclearSpec { twice_i: 7, g_n: -1.47106, hyperfine: a, da_scale: 1e-3 }),
            field: Vec3::new(0.0, 0.0, 5.0),
            seed: 1,
        }
    }

    /// Same crystal with a bare electron spin (d = 2).
    pub fn vanadyl_like_electron_only() -> Self {
        Self { nuclear: None, ..Self::vanadyl_like() }
    }

    /// Simple cubic monatomic lattice with nearest and next-nearest springs.
    pub fn monatomic_cubic(a: f64, mass: f64, k: f64) -> Self {
        Self {
            lattice: [a, a, a],
            molecules_per_cell: 1,
            atoms_per_molecule: 1,
            carrier_mass: mass,
            ligand_mass: mass,
            bond_length: 1.0,
            k_intra: k,
            k_inter: k,
            inter_cutoff: a * 2f64.sqrt() * 1.01,
            g: Tensor3::identity() * 2.0023,
            dg_scale: 0.0,
            nuclear: None,
            field: Vec3::new(0.0, 0.0, 1.0),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("carrier mass", self.carrier_mass),
            ("ligand mass", self.ligand_mass),
            ("bond length", self.bond_length),
            ("intra-molecular spring", self.k_intra),
            ("inter-molecular spring", self.k_inter),
            ("inter-molecular cutoff", self.inter_cutoff),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if self.lattice.iter().any(|x| !(*x > 0.0)) {
            return Err(invalid("lattice constants must be positive"));
        }
        if self.molecules_per_cell == 0 || self.molecules_per_cell > 4 {
            return Err(invalid("molecules per cell must be between 1 and 4"));
        }
        if self.atoms_per_molecule == 0 {
            return Err(invalid("molecules need at least one atom"));
        }
        if self.dg_scale < 0.0 || self.nuclear.as_ref().is_some_and(|n| n.da_scale < 0.0) {
            return Err(invalid("derivative scales must be non-negative"));
        }
        Ok(())
    }
}

/// Generated fixture.
#[derive(Debug, Clone)]
pub struct ToyCrystal {
    pub crystal: CrystalModel,
    pub force_constants: ForceConstantSet,
    pub derivatives: CouplingDerivativeSet,
    pub spin_system: SpinSystem,
    /// Carrier atom index of each molecule.
    pub carriers: Vec<usize>,
}

impl ToyCrystal {
    pub fn into_parts(self) -> (CrystalModel, ForceConstantSet, CouplingDerivativeSet, SpinSystem) {
        (self.crystal, self.force_constants, self.derivatives, self.spin_system)
    }
}

const MOLECULE_SITES: [[f64; 3]; 4] = [[0.0, 0.0, 0.0], [0.5, 0.5, 0.5], [0.5, 0.0, 0.5], [0.0, 0.5, 0.5]];

/// Quasi-uniform directions on the unit sphere.
fn sphere_points(n: usize) -> Vec<Vec3> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|k| {
            let z = 1.0 - 2.0 * (k as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * k as f64;
            Vec3::new(r * phi.cos(), r * phi.sin(), z)
        })
        .collect()
}

fn random_rotation(rng: &mut ChaCha8Rng) -> nalgebra::Rotation3<f64> {
    let axis = nalgebra::Unit::new_normalize(Vec3::new(
        rng.gen::<f64>() - 0.5,
        rng.gen::<f64>() - 0.5,
        rng.gen::<f64>() - 0.5,
    ));
    nalgebra::Rotation3::from_axis_angle(&axis, rng.gen::<f64>() * std::f64::consts::PI)
}

/// Central-spring force constants for the bonds (i, j, cell, k) with
/// equilibrium geometry taken from the crystal.
pub fn central_spring_constants(crystal: &CrystalModel, bonds: &[(usize, usize, [i32; 3], f64)]) -> Result<ForceConstantSet> {
    let mut blocks: BTreeMap<([i32; 3], usize, usize), nalgebra::Matrix3<f64>> = BTreeMap::new();
    for &(i, j, cell, k) in bonds {
        let r = crystal.cartesian_in_cell(j, cell) - crystal.cartesian(i);
        let n = r.norm();
        if n < 1e-8 {
            return Err(invalid(format!("bond between atoms {i} and {j} has zero length")));
        }
        let rr = (r / n) * (r / n).transpose() * k;
        let neg = [-cell[0], -cell[1], -cell[2]];
        *blocks.entry((cell, i, j)).or_insert_with(nalgebra::Matrix3::zeros) -= rr;
        *blocks.entry((neg, j, i)).or_insert_with(nalgebra::Matrix3::zeros) -= rr;
        *blocks.entry(([0; 3], i, i)).or_insert_with(nalgebra::Matrix3::zeros) += rr;
        *blocks.entry(([0; 3], j, j)).or_insert_with(nalgebra::Matrix3::zeros) += rr;
    }
    let mut records = Vec::new();
    for ((cell, i, j), m) in blocks {
        for s in 0..3 {
            for t in 0..3 {
                if m[(s, t)] != 0.0 {
                    records.push(FcRecord { cell, i, s, j, t, value: m[(s, t)] });
                }
            }
        }
    }
    ForceConstantSet::new(crystal.masses(), records)
}

/// Builds the crystal, springs, synthetic derivatives and spin system.
pub fn generate_toy_crystal(spec: &ToySpec) -> Result<ToyCrystal> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let cell = nalgebra::Matrix3::from_diagonal(&Vec3::new(spec.lattice[0], spec.lattice[1], spec.lattice[2]));
    let inv = cell.try_inverse().expect("validated cell");
    let dirs = sphere_points(spec.atoms_per_molecule.saturating_sub(1));
    let mut atoms = Vec::new();
    let mut carriers = Vec::new();
    for m in 0..spec.molecules_per_cell {
        let rot = random_rotation(&mut rng);
        let center = Vec3::from(MOLECULE_SITES[m]);
        carriers.push(atoms.len());
        atoms.push(Atom { label: "M".into(), mass: spec.carrier_mass, frac: center, molecule: m });
        for d in &dirs {
            let offset = inv.transpose() * (rot * d * spec.bond_length);
            atoms.push(Atom { label: "L".into(), mass: spec.ligand_mass, frac: center + offset, molecule: m });
        }
    }
    let crystal = CrystalModel::new(cell, atoms)?;

    let n = crystal.n_atoms();
    let mut bonds = Vec::new();
    let reach = |a: f64| (spec.inter_cutoff.max(2.0 * spec.bond_length) / a).ceil() as i32 + 1;
    let (ra, rb, rc) = (reach(spec.lattice[0]), reach(spec.lattice[1]), reach(spec.lattice[2]));
    for i in 0..n {
        for j in 0..n {
            for l0 in -ra..=ra {
                for l1 in -rb..=rb {
                    for l2 in -rc..=rc {
                        let l = [l0, l1, l2];
                        // Each bond once: (i, j, l) and (j, i, -l) describe the same pair.
                        let keep = if i == j { l > [0; 3] } else { i < j };
                        if !keep {
                            continue;
                        }
                        let same_molecule = crystal.atoms[i].molecule == crystal.atoms[j].molecule && l == [0; 3];
                        let dist = (crystal.cartesian_in_cell(j, l) - crystal.cartesian(i)).norm();
                        if same_molecule {
                            bonds.push((i, j, l, spec.k_intra));
                        } else if dist < spec.inter_cutoff {
                            bonds.push((i, j, l, spec.k_inter));
                        }
                    }
                }
            }
        }
    }
    let force_constants = central_spring_constants(&crystal, &bonds)?;

    // Synthetic derivatives on the atoms of molecule 0 with zero atom sum per direction.
    let mol0 = crystal.molecule_atoms(0);
    let mut records = Vec::new();
    let mut planted = |target: TensorTarget, scale: f64, rng: &mut ChaCha8Rng| {
        if scale == 0.0 {
            return;
        }
        for s in 0..3 {
            let raw: Vec<Tensor3> =
                mol0.iter().map(|_| Tensor3::from_fn(|_, _| scale * (2.0 * rng.gen::<f64>() - 1.0))).collect();
            let mean = raw.iter().fold(Tensor3::zeros(), |a, t| a + t) / raw.len() as f64;
            for (k, &atom) in mol0.iter().enumerate() {
                records.push(DerivativeRecord { target, atom, s, cell: [0; 3], tensor: raw[k] - mean });
            }
        }
    };
    planted(TensorTarget::G(0), spec.dg_scale, &mut rng);
    if let Some(nuc) = &spec.nuclear {
        planted(TensorTarget::Hyperfine(0, 1), nuc.da_scale, &mut rng);
    }
    let derivatives = CouplingDerivativeSet::new(records, Provenance::Synthetic);

    let carrier_pos = crystal.cartesian(carriers[0]);
    let electron = SpinCenter::electronic(0, spec.g).with_position(carrier_pos).with_site(carriers[0], [0; 3]);
    let mut centers = vec![electron];
    let mut system_couplings = Vec::new();
    if let Some(nuc) = &spec.nuclear {
        let mut nucleus = SpinCenter::new(1, SpinKind::Nuclear, nuc.twice_i as f64 / 2.0, Tensor3::identity() * nuc.g_n)?
            .with_position(carrier_pos)
            .with_site(carriers[0], [0; 3]);
        nucleus.magneton = Magneton::Nuclear;
        centers.push(nucleus);
        system_couplings.push((0, 1, nuc.hyperfine));
    }
    let mut spin_system = SpinSystem::new(centers, spec.field);
    for (i, j, t) in system_couplings {
        spin_system = spin_system.with_coupling(i, j, t, CouplingTag::Hyperfine);
    }
    spin_system.validate()?;
    Ok(ToyCrystal { crystal, force_constants, derivatives, spin_system, carriers })
}

/// Linear chain along x with two atoms per cell joined by springs `k`
/// acting only on the longitudinal component.
pub fn diatomic_chain(m1: f64, m2: f64, k: f64, a: f64) -> Result<(CrystalModel, ForceConstantSet)> {
    if !(m1 > 0.0 && m2 > 0.0 && k > 0.0 && a > 0.0) {
        return Err(invalid("diatomic chain needs positive masses, spring and spacing"));
    }
    let cell = nalgebra::Matrix3::from_diagonal(&Vec3::new(a, 10.0 * a, 10.0 * a));
    let atoms = vec![
        Atom { label: "A".into(), mass: m1, frac: Vec3::zeros(), molecule: 0 },
        Atom { label: "B".into(), mass: m2, frac: Vec3::new(0.5, 0.0, 0.0), molecule: 1 },
    ];
    let crystal = CrystalModel::new(cell, atoms)?;
    let rec = |cell: [i32; 3], i: usize, j: usize, value: f64| FcRecord { cell, i, s: 0, j, t: 0, value };
    let records = vec![
        rec([0; 3], 0, 0, 2.0 * k),
        rec([0; 3], 1, 1, 2.0 * k),
        rec([0; 3], 0, 1, -k),
        rec([-1, 0, 0], 0, 1, -k),
        rec([0; 3], 1, 0, -k),
        rec([1, 0, 0], 1, 0, -k),
    ];
    Ok((crystal.clone(), ForceConstantSet::new(crystal.masses(), records)?))
}
