use crate::error::invalid;
use crate::hamiltonian::SpinHamiltonian;
use crate::linalg;
use crate::units::{ANGULAR_FREQUENCY_PER_CM1, KB_CM1_PER_K};
use crate::{CMat, Error, Result, C64};

use super::{Basis, DensityMatrix, RedfieldTensor};

/// Blocks above this size are not fully diagonalized; only their slow
/// eigenpairs are computed.
pub const MAX_FULL_BLOCK: usize = 1024;
/// Eigenvector matrices with a larger 1-norm condition number switch to
/// scaling-and-squaring.
pub const MAX_CONDITION: f64 = 1e12;
/// Coherences oscillating slower than this multiple of the largest rate are
/// treated together with the populations.
const SLOW_FACTOR: f64 = 1e4;

/// ρ_ab(t) = e^{-iω_ab t} ρ_ab(0) in the eigenbasis.
pub fn unitary_evolution(rho0: &DensityMatrix, h: &SpinHamiltonian, t: f64) -> Result<DensityMatrix> {
    if rho0.basis != Basis::Eigen {
        return Err(invalid("unitary evolution expects a density matrix in the eigenbasis"));
    }
    if rho0.dim() != h.dim() {
        return Err(invalid("density matrix and Hamiltonian differ in dimension"));
    }
    let d = h.dim();
    let m = CMat::from_fn(d, d, |a, b| {
        rho0.matrix[(a, b)] * C64::from_polar(1.0, -ANGULAR_FREQUENCY_PER_CM1 * h.omega(a, b) * t)
    });
    Ok(DensityMatrix { matrix: m, basis: Basis::Eigen, time_ps: rho0.time_ps + t })
}

/// exp(-H/k_BT)/Z in the eigenbasis.
pub fn equilibrium_state(h: &SpinHamiltonian, temperature: f64) -> Result<DensityMatrix> {
    if !(temperature > 0.0) {
        return Err(invalid(format!("equilibrium state needs T > 0, got {temperature}")));
    }
    let d = h.dim();
    let e0 = h.energies.first().copied().unwrap_or(0.0);
    let w: Vec<f64> = h.energies.iter().map(|e| (-(e - e0) / (KB_CM1_PER_K * temperature)).exp()).collect();
    let z: f64 = w.iter().sum();
    let mut m = CMat::zeros(d, d);
    for a in 0..d {
        m[(a, a)] = C64::new(w[a] / z, 0.0);
    }
    Ok(DensityMatrix::eigen(m))
}

/// One eigenpair of the generator with the eigenvector embedded in the full
/// d² space.
#[derive(Debug, Clone)]
pub struct Eigenmode {
    pub value: C64,
    pub vector: Vec<C64>,
}

#[derive(Debug, Clone)]
enum BlockSolver {
    Eigen { values: Vec<C64>, vectors: CMat, inverse: CMat },
    Expm { generator: CMat },
    Unavailable,
}

#[derive(Debug, Clone)]
struct PropBlock {
    indices: Vec<usize>,
    solver: BlockSolver,
}

/// exp(Lt) for L = R - iκ diag(ω_ab), via block eigendecompositions.
///
/// Populations and near-degenerate coherences ("slow" indices) are
/// separated from fast coherences by a Schur complement so that relaxation
/// rates many orders of magnitude below the Larmor frequencies keep full
/// relative precision.
#[derive(Debug, Clone)]
pub struct Propagator {
    dim: usize,
    blocks: Vec<PropBlock>,
    slow_modes: Vec<Eigenmode>,
    /// Blocks that fell back to scaling-and-squaring.
    pub fallback_blocks: usize,
    /// True when at least one block could not be fully diagonalized.
    pub slow_only: bool,
    pub rate_scale: f64,
}

fn union_find_blocks(l: &CMat) -> Vec<Vec<usize>> {
    let n = l.nrows();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for i in 0..n {
        for j in 0..n {
            if i != j && l[(i, j)] != C64::new(0.0, 0.0) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups = std::collections::BTreeMap::<usize, Vec<usize>>::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }
    groups.into_values().collect()
}

fn submatrix(m: &CMat, rows: &[usize], cols: &[usize]) -> CMat {
    CMat::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

fn normalize_columns(v: &mut CMat) {
    for j in 0..v.ncols() {
        let n: f64 = (0..v.nrows()).map(|i| v[(i, j)].norm_sqr()).sum::<f64>().sqrt();
        if n > 0.0 {
            for i in 0..v.nrows() {
                v[(i, j)] /= n;
            }
        }
    }
}

/// Eigenpairs of a block after removing the mean diagonal frequency, which
/// keeps the small real parts accurate when all oscillation rates are equal.
fn shifted_eigen(l: &CMat, context: &str) -> Result<(Vec<C64>, CMat)> {
    let n = l.nrows();
    let shift = (0..n).map(|k| l[(k, k)].im).sum::<f64>() / n.max(1) as f64;
    let mut m = l.clone();
    for k in 0..n {
        m[(k, k)] -= C64::new(0.0, shift);
    }
    let (mut vals, mut vecs) = linalg::general_eigen(&m, context)?;
    for v in vals.iter_mut() {
        *v += C64::new(0.0, shift);
    }
    normalize_columns(&mut vecs);
    Ok((vals, vecs))
}

impl Propagator {
    pub fn new(r: &RedfieldTensor) -> Result<Self> {
        let d = r.dim;
        let rate_scale = r.max_rate();
        let omegas = r.omegas();
        let is_slow = |g: usize| {
            let w = (ANGULAR_FREQUENCY_PER_CM1 * omegas[g]).abs();
            omegas[g].abs() <= super::DEGENERACY_TOL || w < SLOW_FACTOR * rate_scale
        };
        let mut blocks = Vec::new();
        let mut slow_modes = Vec::new();
        let mut fallback_blocks = 0;
        let mut slow_only = false;
        for (idx, l_full) in r.blocks.iter().zip(r.generator_blocks()) {
            for local in union_find_blocks(&l_full) {
                let global: Vec<usize> = local.iter().map(|&k| idx[k]).collect();
                let l = submatrix(&l_full, &local, &local);
                let n = local.len();
                let s: Vec<usize> = (0..n).filter(|&k| is_slow(global[k])).collect();
                let f: Vec<usize> = (0..n).filter(|&k| !is_slow(global[k])).collect();
                let context = format!("generator block of size {n}");

                // Eigenpairs in local ordering; slow ones first.
                let (values, vectors, n_slow) = if s.is_empty() || f.is_empty() {
                    if n > MAX_FULL_BLOCK && !f.is_empty() {
                        slow_only = true;
                        blocks.push(PropBlock { indices: global, solver: BlockSolver::Unavailable });
                        continue;
                    }
                    let (vals, vecs) = shifted_eigen(&l, &context)?;
                    let ns = if f.is_empty() { n } else { 0 };
                    (vals, vecs, ns)
                } else {
                    let l_ff = submatrix(&l, &f, &f);
                    let l_fs = submatrix(&l, &f, &s);
                    let l_sf = submatrix(&l, &s, &f);
                    let l_ss = submatrix(&l, &s, &s);
                    let z = linalg::solve(&l_ff, &l_fs);
                    let schur = &l_ss - &l_sf * &z;
                    let (mu, y) = linalg::general_eigen(&schur, "slow generator block")?;
                    let mut slow_vecs = CMat::zeros(n, s.len());
                    let xf = -(&z * &y);
                    for k in 0..s.len() {
                        for (i, &si) in s.iter().enumerate() {
                            slow_vecs[(si, k)] = y[(i, k)];
                        }
                        for (i, &fi) in f.iter().enumerate() {
                            slow_vecs[(fi, k)] = xf[(i, k)];
                        }
                    }
                    normalize_columns(&mut slow_vecs);
                    if n > MAX_FULL_BLOCK {
                        slow_only = true;
                        for k in 0..s.len() {
                            slow_modes.push(Eigenmode {
                                value: mu[k],
                                vector: embed(d, &global, (0..n).map(|i| slow_vecs[(i, k)])),
                            });
                        }
                        blocks.push(PropBlock { indices: global, solver: BlockSolver::Unavailable });
                        continue;
                    }
                    let (all_vals, all_vecs) = linalg::general_eigen(&l, &context)?;
                    let mut order: Vec<usize> = (0..n).collect();
                    order.sort_by(|&a, &b| all_vals[b].norm().total_cmp(&all_vals[a].norm()));
                    let fast: Vec<usize> = order[..f.len()].to_vec();
                    let mut vals = mu.clone();
                    let mut vecs = CMat::zeros(n, n);
                    for k in 0..s.len() {
                        for i in 0..n {
                            vecs[(i, k)] = slow_vecs[(i, k)];
                        }
                    }
                    for (c, &k) in fast.iter().enumerate() {
                        vals.push(all_vals[k]);
                        for i in 0..n {
                            vecs[(i, s.len() + c)] = all_vecs[(i, k)];
                        }
                    }
                    normalize_columns(&mut vecs);
                    (vals, vecs, s.len())
                };
                for k in 0..n_slow {
                    slow_modes.push(Eigenmode {
                        value: values[k],
                        vector: embed(d, &global, (0..n).map(|i| vectors[(i, k)])),
                    });
                }
                let cond = linalg::condition_number(&vectors);
                let solver = if cond.is_finite() && cond <= MAX_CONDITION {
                    BlockSolver::Eigen { inverse: linalg::inverse(&vectors), values, vectors }
                } else {
                    log::warn!("generator block of size {n} has eigenvector condition {cond:.2e}; using scaling and squaring");
                    fallback_blocks += 1;
                    BlockSolver::Expm { generator: l }
                };
                blocks.push(PropBlock { indices: global, solver });
            }
        }
        Ok(Self { dim: d, blocks, slow_modes, fallback_blocks, slow_only, rate_scale })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Eigenpairs of the population/degenerate-coherence sector.
    pub fn slow_modes(&self) -> &[Eigenmode] {
        &self.slow_modes
    }

    /// Index into `slow_modes` of the stationary mode (smallest |λ|).
    pub fn stationary_index(&self) -> Option<usize> {
        (0..self.slow_modes.len()).min_by(|&a, &b| {
            self.slow_modes[a].value.norm().total_cmp(&self.slow_modes[b].value.norm())
        })
    }

    /// Trace-normalized null-space state of the generator.
    pub fn stationary_state(&self) -> Result<DensityMatrix> {
        let k = self.stationary_index().ok_or_else(|| Error::Numerical("generator has no slow sector".into()))?;
        let v = &self.slow_modes[k].vector;
        let d = self.dim;
        let tr: C64 = (0..d).map(|a| v[a * d + a]).sum();
        if tr.norm() < 1e-300 {
            return Err(Error::Numerical("stationary mode is traceless".into()));
        }
        let scaled: Vec<C64> = v.iter().map(|x| x / tr).collect();
        let mut rho = DensityMatrix::from_vec(&scaled, d, Basis::Eigen, f64::INFINITY);
        rho.matrix = linalg::hermitian_part(&rho.matrix);
        Ok(rho)
    }

    /// ρ(t) = exp(Lt) ρ(0) in the Schrödinger picture for each requested time
    /// (ps, ascending, ≥ 0).
    pub fn propagate(&self, rho0: &DensityMatrix, times: &[f64]) -> Result<Vec<DensityMatrix>> {
        if rho0.basis != Basis::Eigen || rho0.dim() != self.dim {
            return Err(invalid("propagation expects a density matrix in the eigenbasis of matching dimension"));
        }
        if times.iter().any(|t| !(*t >= 0.0) || !t.is_finite()) || times.windows(2).any(|w| w[1] < w[0]) {
            return Err(invalid("propagation times must be finite, non-negative and ascending"));
        }
        if self.slow_only {
            return Err(Error::Numerical(
                "generator too large for full diagonalization; only slow eigenpairs are available".into(),
            ));
        }
        let d = self.dim;
        let x0 = rho0.to_vec();
        let mut coeffs: Vec<Option<Vec<C64>>> = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let xb: Vec<C64> = b.indices.iter().map(|&g| x0[g]).collect();
            coeffs.push(match &b.solver {
                BlockSolver::Eigen { inverse, .. } => Some(linalg::matvec(inverse, &xb)),
                _ => None,
            });
        }
        let mut out = Vec::with_capacity(times.len());
        for &t in times {
            let mut x = vec![C64::new(0.0, 0.0); d * d];
            for (b, c) in self.blocks.iter().zip(&coeffs) {
                let xb: Vec<C64> = match (&b.solver, c) {
                    (BlockSolver::Eigen { values, vectors, .. }, Some(c)) => {
                        let e: Vec<C64> = values.iter().zip(c).map(|(l, ck)| (l * t).exp() * ck).collect();
                        linalg::matvec(vectors, &e)
                    }
                    (BlockSolver::Expm { generator }, _) => {
                        let xb0: Vec<C64> = b.indices.iter().map(|&g| x0[g]).collect();
                        let p = linalg::expm(&linalg::scale(generator, C64::new(t, 0.0)));
                        linalg::matvec(&p, &xb0)
                    }
                    _ => unreachable!("unavailable blocks are rejected above"),
                };
                for (k, &g) in b.indices.iter().enumerate() {
                    x[g] = xb[k];
                }
            }
            out.push(DensityMatrix::from_vec(&x, d, Basis::Eigen, rho0.time_ps + t));
        }
        Ok(out)
    }

    /// The one-step propagator exp(L·dt) as a dense d²×d² matrix.
    pub fn step_matrix(&self, dt: f64) -> Result<CMat> {
        if self.slow_only {
            return Err(Error::Numerical("generator too large for a dense propagator".into()));
        }
        let n = self.dim * self.dim;
        let mut p = CMat::zeros(n, n);
        for b in &self.blocks {
            let m = match &b.solver {
                BlockSolver::Eigen { values, vectors, inverse } => {
                    let mut scaled = vectors.clone();
                    for (k, l) in values.iter().enumerate() {
                        let e = (l * dt).exp();
                        for i in 0..scaled.nrows() {
                            scaled[(i, k)] *= e;
                        }
                    }
                    &scaled * inverse
                }
                BlockSolver::Expm { generator } => linalg::expm(&linalg::scale(generator, C64::new(dt, 0.0))),
                BlockSolver::Unavailable => unreachable!(),
            };
            for (i, &gi) in b.indices.iter().enumerate() {
                for (j, &gj) in b.indices.iter().enumerate() {
                    p[(gi, gj)] = m[(i, j)];
                }
            }
        }
        Ok(p)
    }
}

fn embed(d: usize, global: &[usize], values: impl Iterator<Item = C64>) -> Vec<C64> {
    let mut v = vec![C64::new(0.0, 0.0); d * d];
    for (k, x) in values.enumerate() {
        v[global[k]] = x;
    }
    v
}

/// Evolves ρ(0) under R and returns the states in the interaction picture,
/// ρ^I_ab(t) = e^{iω_ab t} ρ_ab(t), so that R = 0 leaves ρ unchanged. The
/// dynamics itself uses the full generator, including non-secular phases.
pub fn propagate(rho0: &DensityMatrix, r: &RedfieldTensor, times: &[f64]) -> Result<Vec<DensityMatrix>> {
    let states = Propagator::new(r)?.propagate(rho0, times)?;
    let d = r.dim;
    Ok(states
        .into_iter()
        .zip(times)
        .map(|(mut rho, &t)| {
            for a in 0..d {
                for b in 0..d {
                    let w = ANGULAR_FREQUENCY_PER_CM1 * (r.energies[a] - r.energies[b]);
                    rho.matrix[(a, b)] *= C64::from_polar(1.0, w * t);
                }
            }
            rho
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::Channel;
    use crate::redfield::test_support::*;
    use crate::redfield::{PhononCorrelation, RedfieldBuilder, RedfieldOptions};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_state(d: usize, rng: &mut impl Rng) -> DensityMatrix {
        let a = CMat::from_fn(d, d, |_, _| C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
        let mut m = &a * a.adjoint();
        let tr = linalg::trace(&m);
        for i in 0..d {
            for j in 0..d {
                m[(i, j)] /= tr;
            }
        }
        DensityMatrix::eigen(m)
    }

    /// One mode exactly resonant with each transition, narrow enough that
    /// no mode touches another transition.
    fn balanced_tensor(e: &[f64], t: f64, secular: bool, rng: &mut impl Rng) -> RedfieldTensor {
        let d = e.len();
        let h = diagonal_hamiltonian(e);
        let pc = PhononCorrelation::new(1e-4, t).unwrap();
        let mut b = RedfieldBuilder::new(&h, pc, RedfieldOptions { secular, ..Default::default() }).unwrap();
        for a in 0..d {
            for c in a + 1..d {
                b.add(Channel::Zeeman, e[c] - e[a], &random_hermitian(d, 1e-3, rng)).unwrap();
            }
        }
        b.finish()
    }

    #[test]
    fn zero_tensor_is_identity_in_interaction_picture() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let e = random_levels(3, 5.0, 0.1, &mut rng);
        let h = diagonal_hamiltonian(&e);
        let r = RedfieldTensor::zero(&h, false);
        let rho0 = random_state(3, &mut rng);
        let out = propagate(&rho0, &r, &[0.0, 1.0, 100.0]).unwrap();
        for rho in &out {
            assert!(linalg::max_abs_diff(&rho.matrix, &rho0.matrix) < 1e-13);
        }
        // The Schrödinger picture is plain unitary evolution.
        let s = Propagator::new(&r).unwrap().propagate(&rho0, &[7.5]).unwrap();
        let u = unitary_evolution(&rho0, &h, 7.5).unwrap();
        assert!(linalg::max_abs_diff(&s[0].matrix, &u.matrix) < 1e-13);
    }

    #[test]
    fn relaxes_to_boltzmann() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let t = 8.0;
        for secular in [true, false] {
            let e = random_levels(4, 12.0, 0.05, &mut rng);
            let r = balanced_tensor(&e, t, secular, &mut rng);
            let prop = Propagator::new(&r).unwrap();
            let slowest = prop
                .slow_modes()
                .iter()
                .map(|m| m.value.re.abs())
                .filter(|x| *x > 1e-12 * prop.rate_scale)
                .fold(f64::INFINITY, f64::min);
            let eq = equilibrium_state(&diagonal_hamiltonian(&e), t).unwrap();
            let rho = prop.propagate(&random_state(4, &mut rng), &[60.0 / slowest]).unwrap().pop().unwrap();
            for (p, q) in rho.populations().iter().zip(eq.populations()) {
                assert!((p - q).abs() < 1e-6, "{p} vs {q}");
            }
            let st = prop.stationary_state().unwrap();
            assert!(linalg::max_abs_diff(&st.matrix, &eq.matrix) < 1e-8);
        }
    }

    #[test]
    fn step_matrix_composes() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let e = random_levels(3, 6.0, 0.1, &mut rng);
        let r = balanced_tensor(&e, 5.0, false, &mut rng);
        let prop = Propagator::new(&r).unwrap();
        let p1 = prop.step_matrix(0.5).unwrap();
        let p2 = prop.step_matrix(1.0).unwrap();
        assert!(linalg::max_abs_diff(&(&p1 * &p1), &p2) < 1e-12);
        assert!(prop.propagate(&random_state(3, &mut rng), &[1.0, 0.5]).is_err());
    }
}
