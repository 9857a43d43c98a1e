use std::collections::BTreeMap;

use crate::hamiltonian::SpinHamiltonian;
use crate::lattice::{bloch_phase, CrystalModel, PhononMode};
use crate::linalg;
use crate::spin::{SpinKind, SpinOperators, SpinSystem};
use crate::units::zero_point_length_a;
use crate::{CMat, Error, Result, Tensor3, Vec3, C64};

use super::{Channel, ChannelSet, CouplingDerivativeSet, TensorTarget};

/// Modes below this frequency (cm⁻¹) are skipped.
pub const DEFAULT_OMEGA_MIN: f64 = 0.01;

/// The two Hermitian standing-wave combinations of a travelling mode:
/// Cos = (O + O†)/2 and Sin = i(O - O†)/2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StandingWave {
    Cos,
    Sin,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionOptions {
    pub omega_min: f64,
    pub channels: ChannelSet,
}

impl Default for ProjectionOptions {
    fn default() -> Self {
        Self { omega_min: DEFAULT_OMEGA_MIN, channels: ChannelSet::all() }
    }
}

/// ∂T/∂Q_{αq} for every target touched by the derivative set, as complex
/// tensors (real part, imaginary part).
#[derive(Debug, Clone, PartialEq)]
pub struct ModeTensors {
    pub q_index: usize,
    pub q: Vec3,
    pub branch: usize,
    pub omega: f64,
    pub n_q: usize,
    pub tensors: Vec<(TensorTarget, Tensor3, Tensor3)>,
}

impl ModeTensors {
    /// Real tensors of one standing-wave component.
    pub fn wave(&self, wave: StandingWave) -> impl Iterator<Item = (TensorTarget, Tensor3)> + '_ {
        self.tensors.iter().map(move |(t, re, im)| match wave {
            StandingWave::Cos => (*t, *re),
            StandingWave::Sin => (*t, -*im),
        })
    }

    pub fn is_zero(&self) -> bool {
        self.tensors.iter().all(|(_, re, im)| re.iter().chain(im.iter()).all(|x| *x == 0.0))
    }
}

/// Derivative records grouped by target, ready for repeated projection.
#[derive(Debug, Clone)]
pub(crate) struct GroupedDerivatives {
    groups: Vec<(TensorTarget, Vec<(usize, usize, [i32; 3], Tensor3)>)>,
}

impl GroupedDerivatives {
    pub(crate) fn new(derivs: &CouplingDerivativeSet, channels: ChannelSet) -> Self {
        let mut map: BTreeMap<TensorTarget, Vec<_>> = BTreeMap::new();
        for r in derivs.records.iter().filter(|r| channels.contains(r.target.channel())) {
            map.entry(r.target).or_default().push((r.atom, r.s, r.cell, r.tensor));
        }
        Self { groups: map.into_iter().collect() }
    }

    pub(crate) fn targets(&self) -> Vec<TensorTarget> {
        self.groups.iter().map(|g| g.0).collect()
    }

    pub(crate) fn project(&self, mode: &PhononMode, q_index: usize, masses: &[f64], n_q: usize) -> ModeTensors {
        let amp0 = zero_point_length_a() / (n_q as f64 * mode.omega).sqrt();
        let mut tensors = Vec::with_capacity(self.groups.len());
        for (target, recs) in &self.groups {
            let mut re = Tensor3::zeros();
            let mut im = Tensor3::zeros();
            for &(atom, s, cell, t) in recs {
                let c = bloch_phase(&mode.q, cell) * mode.eigvec[3 * atom + s] * (amp0 / masses[atom].sqrt());
                re += t * c.re;
                im += t * c.im;
            }
            tensors.push((*target, re, im));
        }
        ModeTensors { q_index, q: mode.q, branch: mode.branch, omega: mode.omega, n_q, tensors }
    }
}

/// Complex ∂T/∂Q of one mode: Σ_l Σ_{is} √(ħ/(N_q ω m_i)) e^{iq·R_l} L_is ∂T/∂X^l_is.
/// Returns None for imaginary modes and modes below `omega_min`.
pub fn mode_tensors(
    derivs: &CouplingDerivativeSet,
    mode: &PhononMode,
    q_index: usize,
    masses: &[f64],
    n_q: usize,
    opts: &ProjectionOptions,
) -> Result<Option<ModeTensors>> {
    if n_q == 0 {
        return Err(Error::InvalidInput("N_q must be positive".into()));
    }
    if mode.eigvec.len() != 3 * masses.len() {
        return Err(Error::InvalidInput("eigenvector length does not match the number of atoms".into()));
    }
    if mode.imaginary || mode.omega < opts.omega_min {
        log::debug!("skipping mode q = {:?} branch {} at {:.4e} cm⁻¹", mode.q.as_slice(), mode.branch, mode.omega);
        return Ok(None);
    }
    Ok(Some(GroupedDerivatives::new(derivs, opts.channels).project(mode, q_index, masses, n_q)))
}

enum BasisOps {
    /// Operator = Σ_v (β Σ_u B_u T_uv) S_v.
    Zeeman { beta_field: Vec3, prod: [CMat; 3], eig: [CMat; 3] },
    /// Operator = Σ_uv T_uv ½(S_u(i)S_v(j) + S_v(j)S_u(i)).
    Pair { prod: Vec<CMat>, eig: Vec<CMat> },
}

/// Tensor-to-operator maps for a fixed set of targets, in both the product
/// basis and the eigenbasis of one Hamiltonian.
pub struct OperatorBasis {
    dim: usize,
    maps: BTreeMap<TensorTarget, BasisOps>,
}

impl OperatorBasis {
    pub fn new(
        system: &SpinSystem,
        ops: &SpinOperators,
        h: &SpinHamiltonian,
        targets: &[TensorTarget],
    ) -> Result<Self> {
        let d = ops.dim();
        if h.dim() != d {
            return Err(Error::InvalidInput("Hamiltonian and spin operators differ in dimension".into()));
        }
        let n = system.centers.len();
        let mut maps = BTreeMap::new();
        for &t in targets {
            let entry = match t {
                TensorTarget::G(i) => {
                    if i >= n {
                        return Err(Error::InvalidInput(format!("target {} references a missing centre", t.label())));
                    }
                    let c = &system.centers[i];
                    let beta = if c.kind == SpinKind::Nuclear && !system.nuclear_zeeman { 0.0 } else { c.beta() };
                    let prod = [0, 1, 2].map(|v| ops.component(i, v).clone());
                    let eig = [0, 1, 2].map(|v| h.to_eigenbasis(&prod[v]));
                    BasisOps::Zeeman { beta_field: system.field * beta, prod, eig }
                }
                TensorTarget::Hyperfine(i, j) | TensorTarget::Dipolar(i, j) => {
                    if i >= n || j >= n || i == j {
                        return Err(Error::InvalidInput(format!("target {} is not a valid pair", t.label())));
                    }
                    let mut prod = Vec::with_capacity(9);
                    for u in 0..3 {
                        for v in 0..3 {
                            let f = ops.component(i, u) * ops.component(j, v);
                            let b = ops.component(j, v) * ops.component(i, u);
                            prod.push(linalg::scale(&(&f + &b), C64::new(0.5, 0.0)));
                        }
                    }
                    let eig = prod.iter().map(|p| h.to_eigenbasis(p)).collect();
                    BasisOps::Pair { prod, eig }
                }
            };
            maps.insert(t, entry);
        }
        Ok(Self { dim: d, maps })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Σ over `tensors` of the spin operator placement of each tensor.
    pub fn operator(&self, tensors: impl IntoIterator<Item = (TensorTarget, Tensor3)>, eigenbasis: bool) -> Result<CMat> {
        let mut out = CMat::zeros(self.dim, self.dim);
        for (t, tensor) in tensors {
            let m = self
                .maps
                .get(&t)
                .ok_or_else(|| Error::InvalidInput(format!("no operator map for target {}", t.label())))?;
            match m {
                BasisOps::Zeeman { beta_field, prod, eig } => {
                    let mats = if eigenbasis { eig } else { prod };
                    for v in 0..3 {
                        let c: f64 = (0..3).map(|u| beta_field[u] * tensor[(u, v)]).sum();
                        if c != 0.0 {
                            linalg::axpy(&mut out, C64::new(c, 0.0), &mats[v]);
                        }
                    }
                }
                BasisOps::Pair { prod, eig } => {
                    let mats = if eigenbasis { eig } else { prod };
                    for u in 0..3 {
                        for v in 0..3 {
                            let c = tensor[(u, v)];
                            if c != 0.0 {
                                linalg::axpy(&mut out, C64::new(c, 0.0), &mats[3 * u + v]);
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

/// ∂H_s/∂Q for one standing-wave component of one mode, restricted to one channel.
#[derive(Debug, Clone)]
pub struct ModeCoupling {
    pub q_index: usize,
    pub q: Vec3,
    pub branch: usize,
    /// cm⁻¹.
    pub omega: f64,
    pub wave: StandingWave,
    pub channel: Channel,
    /// Product basis, cm⁻¹.
    pub operator: CMat,
    /// Eigenbasis of the spin Hamiltonian; None until rotated.
    pub v: Option<CMat>,
}

impl ModeCoupling {
    pub fn rotated(mut self, h: &SpinHamiltonian) -> Self {
        self.v = Some(h.to_eigenbasis(&self.operator));
        self
    }

    pub fn hermiticity_residual(&self) -> f64 {
        linalg::hermiticity_residual(&self.operator)
    }
}

/// Per-channel, per-standing-wave coupling operators of one mode, already
/// rotated into the eigenbasis of `h`. Zero operators are omitted; a skipped
/// mode yields an empty list.
#[allow(clippy::too_many_arguments)]
pub fn project_to_mode(
    derivs: &CouplingDerivativeSet,
    mode: &PhononMode,
    q_index: usize,
    crystal: &CrystalModel,
    n_q: usize,
    system: &SpinSystem,
    ops: &SpinOperators,
    h: &SpinHamiltonian,
    opts: &ProjectionOptions,
) -> Result<Vec<ModeCoupling>> {
    let Some(mt) = mode_tensors(derivs, mode, q_index, &crystal.masses(), n_q, opts)? else {
        return Ok(Vec::new());
    };
    let targets: Vec<_> = mt.tensors.iter().map(|t| t.0).collect();
    let basis = OperatorBasis::new(system, ops, h, &targets)?;
    let mut out = Vec::new();
    for wave in [StandingWave::Cos, StandingWave::Sin] {
        for ch in opts.channels.iter() {
            let parts: Vec<_> = mt.wave(wave).filter(|(t, _)| t.channel() == ch).collect();
            if parts.iter().all(|(_, t)| t.iter().all(|x| *x == 0.0)) {
                continue;
            }
            let operator = basis.operator(parts.iter().copied(), false)?;
            let v = basis.operator(parts.iter().copied(), true)?;
            out.push(ModeCoupling {
                q_index,
                q: mode.q,
                branch: mode.branch,
                omega: mode.omega,
                wave,
                channel: ch,
                operator,
                v: Some(v),
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::{assemble_hamiltonian, bilinear_operator, zeeman_operator};
    use crate::lattice::phonon_modes;
    use crate::spin::build_spin_operators;
    use crate::toy::{generate_toy_crystal, ToySpec};
    use rand::{Rng, SeedableRng};

    fn norm(mt: &ModeTensors) -> f64 {
        mt.tensors.iter().map(|(_, re, im)| re.norm_squared() + im.norm_squared()).sum::<f64>().sqrt()
    }

    #[test]
    fn pure_translation_does_not_couple() {
        let toy = generate_toy_crystal(&ToySpec::vanadyl_like()).unwrap();
        assert!(toy.derivatives.translation_residual() < 1e-15);
        let masses = toy.crystal.masses();
        let n = masses.len();
        let total: f64 = masses.iter().sum();
        let grouped = GroupedDerivatives::new(&toy.derivatives, ChannelSet::all());
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let random: Vec<C64> = (0..3 * n).map(|_| C64::new(rng.gen::<f64>() - 0.5, 0.0)).collect();
        let rn = random.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let reference = PhononMode {
            q: Vec3::zeros(),
            branch: 0,
            omega: 10.0,
            eigvec: random.iter().map(|z| z / rn).collect(),
            imaginary: false,
        };
        let scale = norm(&grouped.project(&reference, 0, &masses, 1));
        assert!(scale > 0.0);
        for u in 0..3 {
            let eigvec = (0..3 * n)
                .map(|k| if k % 3 == u { C64::new((masses[k / 3] / total).sqrt(), 0.0) } else { C64::new(0.0, 0.0) })
                .collect();
            let mode = PhononMode { eigvec, ..reference.clone() };
            let c = norm(&grouped.project(&mode, 0, &masses, 1));
            assert!(c < 1e-10 * scale, "{c} vs {scale}");
        }
    }

    #[test]
    fn operators_match_hamiltonian_terms() {
        let toy = generate_toy_crystal(&ToySpec::vanadyl_like()).unwrap();
        let sys = &toy.spin_system;
        let ops = build_spin_operators(sys).unwrap();
        let h = assemble_hamiltonian(sys, &ops).unwrap();
        let basis = OperatorBasis::new(sys, &ops, &h, &[TensorTarget::G(0), TensorTarget::Hyperfine(0, 1)]).unwrap();
        let t = Tensor3::new(0.3, -0.1, 0.05, 0.2, 0.7, -0.4, 0.0, 0.1, -0.2);
        let z = basis.operator([(TensorTarget::G(0), t)], false).unwrap();
        let direct = zeeman_operator(&ops, 0, sys.centers[0].beta(), &sys.field, &t);
        assert!(linalg::max_abs_diff(&z, &direct) < 1e-15);
        let a = basis.operator([(TensorTarget::Hyperfine(0, 1), t)], false).unwrap();
        assert!(linalg::max_abs_diff(&a, &bilinear_operator(&ops, 0, 1, &t)) < 1e-15);
        let a_eig = basis.operator([(TensorTarget::Hyperfine(0, 1), t)], true).unwrap();
        assert!(linalg::max_abs_diff(&a_eig, &h.to_eigenbasis(&a)) < 1e-14);
        assert!(basis.operator([(TensorTarget::Dipolar(0, 1), t)], false).is_err());
    }

    #[test]
    fn standing_waves_and_skips() {
        let toy = generate_toy_crystal(&ToySpec::vanadyl_like()).unwrap();
        let sys = &toy.spin_system;
        let ops = build_spin_operators(sys).unwrap();
        let h = assemble_hamiltonian(sys, &ops).unwrap();
        let opts = ProjectionOptions::default();
        let gamma = phonon_modes(&toy.force_constants, &Vec3::zeros()).unwrap();
        // Γ eigenvectors are real up to a global phase, so only one standing
        // wave survives per channel; acoustic zeros are skipped.
        assert!(project_to_mode(&toy.derivatives, &gamma[0], 0, &toy.crystal, 1, sys, &ops, &h, &opts).unwrap().is_empty());
        let q = Vec3::new(0.25, 0.0, 0.125);
        let modes = phonon_modes(&toy.force_constants, &q).unwrap();
        let cs = project_to_mode(&toy.derivatives, &modes[20], 3, &toy.crystal, 8, sys, &ops, &h, &opts).unwrap();
        assert!(!cs.is_empty());
        for c in &cs {
            assert!(c.hermiticity_residual() < 1e-15);
            let v = c.clone().rotated(&h).v.unwrap();
            assert!(linalg::max_abs_diff(&v, c.v.as_ref().unwrap()) < 1e-14);
        }
        let mt = mode_tensors(&toy.derivatives, &modes[20], 3, &toy.crystal.masses(), 8, &opts).unwrap().unwrap();
        let mt2 = mode_tensors(&toy.derivatives, &modes[20], 3, &toy.crystal.masses(), 32, &opts).unwrap().unwrap();
        // Amplitudes carry 1/√N_q.
        assert!((norm(&mt) / norm(&mt2) - 2.0).abs() < 1e-12);
    }
}
