use std::collections::BTreeMap;

use crate::coupling::{Channel, ChannelSet, ModeCoupling, DEFAULT_OMEGA_MIN};
use crate::error::invalid;
use crate::hamiltonian::SpinHamiltonian;
use crate::units::ANGULAR_FREQUENCY_PER_CM1;
use crate::{CMat, Error, Result, C64};

use super::PhononCorrelation;

/// Default tolerance (cm⁻¹) below which two transition frequencies count as equal.
pub const DEGENERACY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RedfieldOptions {
    pub secular: bool,
    pub channels: ChannelSet,
    pub degeneracy_tol: f64,
    /// Modes farther than this many σ from every transition frequency are
    /// dropped; their Gaussian weight is below e^{-49}.
    pub screening_sigmas: f64,
    pub omega_min: f64,
}

impl Default for RedfieldOptions {
    fn default() -> Self {
        Self {
            secular: false,
            channels: ChannelSet::all(),
            degeneracy_tol: DEGENERACY_TOL,
            screening_sigmas: 7.0,
            omega_min: DEFAULT_OMEGA_MIN,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct AssemblyStats {
    /// Operators that entered the sums.
    pub used: usize,
    /// Operators dropped because no transition was within the screening window.
    pub screened: usize,
    /// Operators of modes below the frequency floor.
    pub skipped: usize,
}

impl std::ops::AddAssign for AssemblyStats {
    fn add_assign(&mut self, o: Self) {
        self.used += o.used;
        self.screened += o.screened;
        self.skipped += o.skipped;
    }
}

/// Redfield superoperator in the Hamiltonian eigenbasis, acting on the
/// row-major vectorization ρ_ab → a·d + b, in ps⁻¹.
///
/// Elements are stored as dense blocks over a partition of the d² indices:
/// one block when non-secular, one block per transition-frequency cluster
/// when secular.
#[derive(Debug, Clone)]
pub struct RedfieldTensor {
    pub dim: usize,
    /// cm⁻¹.
    pub energies: Vec<f64>,
    pub secular: bool,
    pub blocks: Vec<Vec<usize>>,
    pub total: Vec<CMat>,
    pub partials: BTreeMap<Channel, Vec<CMat>>,
    pub stats: AssemblyStats,
    position: Vec<(usize, usize)>,
}

fn omega_matrix(energies: &[f64]) -> Vec<f64> {
    let d = energies.len();
    (0..d * d).map(|k| energies[k / d] - energies[k % d]).collect()
}

/// Partition of the vectorized indices: clusters of equal ω_ab when
/// secular, everything in one block otherwise.
fn index_blocks(energies: &[f64], secular: bool, tol: f64) -> Vec<Vec<usize>> {
    let d = energies.len();
    if !secular {
        return vec![(0..d * d).collect()];
    }
    let w = omega_matrix(energies);
    let mut idx: Vec<usize> = (0..d * d).collect();
    idx.sort_by(|&x, &y| w[x].total_cmp(&w[y]).then(x.cmp(&y)));
    let mut blocks: Vec<Vec<usize>> = Vec::new();
    let mut last = f64::NEG_INFINITY;
    for k in idx {
        if blocks.is_empty() || w[k] - last > tol {
            blocks.push(Vec::new());
        }
        last = w[k];
        blocks.last_mut().unwrap().push(k);
    }
    for b in blocks.iter_mut() {
        b.sort_unstable();
    }
    blocks.sort_by_key(|b| b[0]);
    blocks
}

fn positions(blocks: &[Vec<usize>], n: usize) -> Vec<(usize, usize)> {
    let mut pos = vec![(usize::MAX, usize::MAX); n];
    for (bi, b) in blocks.iter().enumerate() {
        for (li, &g) in b.iter().enumerate() {
            pos[g] = (bi, li);
        }
    }
    pos
}

impl RedfieldTensor {
    pub fn zero(h: &SpinHamiltonian, secular: bool) -> Self {
        let blocks = index_blocks(&h.energies, secular, DEGENERACY_TOL);
        let total = blocks.iter().map(|b| CMat::zeros(b.len(), b.len())).collect();
        let position = positions(&blocks, h.dim() * h.dim());
        Self {
            dim: h.dim(),
            energies: h.energies.clone(),
            secular,
            blocks,
            total,
            partials: BTreeMap::new(),
            stats: AssemblyStats::default(),
            position,
        }
    }

    pub fn super_dim(&self) -> usize {
        self.dim * self.dim
    }

    /// R_{ab,cd} with ab = a·d+b and cd = c·d+d'.
    pub fn element(&self, row: usize, col: usize) -> C64 {
        let (br, lr) = self.position[row];
        let (bc, lc) = self.position[col];
        if br != bc {
            return C64::new(0.0, 0.0);
        }
        self.total[br][(lr, lc)]
    }

    pub fn dense(&self) -> CMat {
        let n = self.super_dim();
        let mut m = CMat::zeros(n, n);
        for (b, idx) in self.blocks.iter().enumerate() {
            for (i, &gi) in idx.iter().enumerate() {
                for (j, &gj) in idx.iter().enumerate() {
                    m[(gi, gj)] = self.total[b][(i, j)];
                }
            }
        }
        m
    }

    /// ω_ab in cm⁻¹ for every vectorized index.
    pub fn omegas(&self) -> Vec<f64> {
        omega_matrix(&self.energies)
    }

    /// Blocks of the generator R - iκ diag(ω_ab), in ps⁻¹.
    pub fn generator_blocks(&self) -> Vec<CMat> {
        let w = self.omegas();
        self.blocks
            .iter()
            .zip(&self.total)
            .map(|(idx, r)| {
                let mut l = r.clone();
                for (k, &g) in idx.iter().enumerate() {
                    l[(k, k)] -= C64::new(0.0, ANGULAR_FREQUENCY_PER_CM1 * w[g]);
                }
                l
            })
            .collect()
    }

    /// Full generator as one dense matrix.
    pub fn generator(&self) -> CMat {
        let mut l = self.dense();
        for (k, w) in self.omegas().iter().enumerate() {
            l[(k, k)] -= C64::new(0.0, ANGULAR_FREQUENCY_PER_CM1 * w);
        }
        l
    }

    /// R applied to a density matrix in the eigenbasis.
    pub fn apply(&self, rho: &CMat) -> CMat {
        let d = self.dim;
        let mut out = CMat::zeros(d, d);
        for (b, idx) in self.blocks.iter().enumerate() {
            for (i, &gi) in idx.iter().enumerate() {
                let mut acc = C64::new(0.0, 0.0);
                for (j, &gj) in idx.iter().enumerate() {
                    acc += self.total[b][(i, j)] * rho[(gj / d, gj % d)];
                }
                out[(gi / d, gi % d)] = acc;
            }
        }
        out
    }

    /// max_cd |Σ_a R_{aa,cd}|: zero when R conserves the trace.
    pub fn trace_residual(&self) -> f64 {
        let d = self.dim;
        (0..d * d)
            .map(|cd| (0..d).map(|a| self.element(a * d + a, cd)).sum::<C64>().norm())
            .fold(0.0, f64::max)
    }

    /// max |R_{ab,cd} - conj(R_{ba,dc})|: zero when R maps Hermitian
    /// matrices to Hermitian matrices.
    pub fn hermiticity_residual(&self) -> f64 {
        let d = self.dim;
        let swap = |k: usize| (k % d) * d + k / d;
        let mut m = 0.0f64;
        for (b, idx) in self.blocks.iter().enumerate() {
            for (i, &gi) in idx.iter().enumerate() {
                for (j, &gj) in idx.iter().enumerate() {
                    m = m.max((self.total[b][(i, j)] - self.element(swap(gi), swap(gj)).conj()).norm());
                }
            }
        }
        m
    }

    /// Largest |R| element (ps⁻¹).
    pub fn max_rate(&self) -> f64 {
        self.total.iter().map(crate::linalg::max_abs).fold(0.0, f64::max)
    }

    /// The contribution of a single channel as a tensor of its own.
    pub fn channel_only(&self, ch: Channel) -> Self {
        self.combined(&[(ch, 1.0)])
    }

    /// Σ_ch scale_ch · R_ch over the listed channels.
    pub fn combined(&self, scales: &[(Channel, f64)]) -> Self {
        let mut total: Vec<CMat> = self.blocks.iter().map(|b| CMat::zeros(b.len(), b.len())).collect();
        for (ch, s) in scales {
            if let Some(parts) = self.partials.get(ch) {
                for (t, p) in total.iter_mut().zip(parts) {
                    crate::linalg::axpy(t, C64::new(*s, 0.0), p);
                }
            }
        }
        Self { total, partials: BTreeMap::new(), ..self.clone() }
    }

    /// Population-transfer rate c → a (ps⁻¹), i.e. R_{aa,cc}.
    pub fn transfer_rate(&self, from: usize, to: usize) -> f64 {
        let d = self.dim;
        self.element(to * d + to, from * d + from).re
    }
}

struct ChannelAcc {
    x: CMat,
    y: CMat,
    /// Dense K[(ac),(db)] for the non-secular path.
    k: Option<CMat>,
    /// Σ P_ac V_db + V_ac Q_db per stored element, secular path.
    entries: Vec<Vec<C64>>,
    a_buf: CMat,
    b_buf: CMat,
    pending: usize,
    /// Secular path: buffered (P, V, Q) triples.
    triples: Vec<(CMat, CMat, CMat)>,
}

/// Incremental assembly of a Redfield tensor from coupling operators.
///
/// R_{ab,cd} = (π/2) Σ_m [V_ac V_db (G(ω_ac) + G(ω_bd))
///             - δ_bd Σ_j V_aj V_jc G(ω_jc) - δ_ac Σ_j V_dj V_jb G(ω_jd)]
///
/// Each operator is its own term, so only same-channel, same-mode products
/// appear.
pub struct RedfieldBuilder {
    d: usize,
    energies: Vec<f64>,
    omega: Vec<f64>,
    levels: Vec<f64>,
    pc: PhononCorrelation,
    opts: RedfieldOptions,
    blocks: Vec<Vec<usize>>,
    accs: BTreeMap<Channel, ChannelAcc>,
    stats: AssemblyStats,
    chunk: usize,
}

impl RedfieldBuilder {
    pub fn new(h: &SpinHamiltonian, pc: PhononCorrelation, opts: RedfieldOptions) -> Result<Self> {
        if !(opts.degeneracy_tol >= 0.0) || !(opts.screening_sigmas > 0.0) {
            return Err(invalid("degeneracy tolerance and screening window must be positive"));
        }
        let d = h.dim();
        let omega = omega_matrix(&h.energies);
        let mut levels: Vec<f64> = omega.iter().map(|w| w.abs()).collect();
        levels.sort_by(f64::total_cmp);
        levels.dedup_by(|a, b| (*a - *b).abs() <= 1e-12);
        let blocks = index_blocks(&h.energies, opts.secular, opts.degeneracy_tol);
        let chunk = (4096 * 64 / (d * d).max(1)).clamp(16, 512);
        Ok(Self {
            d,
            energies: h.energies.clone(),
            omega,
            levels,
            pc,
            opts,
            blocks,
            accs: BTreeMap::new(),
            stats: AssemblyStats::default(),
            chunk,
        })
    }

    pub fn stats(&self) -> AssemblyStats {
        self.stats
    }

    /// True when some transition lies within the screening window of a mode at `omega`.
    pub fn in_window(&self, omega: f64) -> bool {
        let w = self.opts.screening_sigmas * self.pc.sigma;
        let i = self.levels.partition_point(|x| *x < omega);
        let near = |k: usize| self.levels.get(k).is_some_and(|x| (x - omega).abs() <= w);
        near(i) || (i > 0 && near(i - 1))
    }

    pub fn add_coupling(&mut self, c: &ModeCoupling) -> Result<()> {
        let v = c.v.as_ref().ok_or_else(|| {
            Error::InvalidInput(format!(
                "coupling for branch {} at q = {:?} has not been rotated into the eigenbasis",
                c.branch,
                c.q.as_slice()
            ))
        })?;
        self.add(c.channel, c.omega, v)
    }

    /// Adds one Hermitian coupling operator `v` (eigenbasis, cm⁻¹) of a mode at `omega`.
    pub fn add(&mut self, channel: Channel, omega: f64, v: &CMat) -> Result<()> {
        let d = self.d;
        if v.nrows() != d || v.ncols() != d {
            return Err(invalid(format!("coupling operator is {}×{}, expected {d}×{d}", v.nrows(), v.ncols())));
        }
        if !self.opts.channels.contains(channel) {
            return Ok(());
        }
        if !(omega >= self.opts.omega_min) {
            self.stats.skipped += 1;
            return Ok(());
        }
        if !self.in_window(omega) {
            self.stats.screened += 1;
            return Ok(());
        }
        self.stats.used += 1;
        let n = self.pc.occupation(omega);
        let g = CMat::from_fn(d, d, |a, c| {
            C64::new(self.pc.value_with_occupation(self.omega[a * d + c], omega, n), 0.0)
        });
        // P_ac = V_ac G(ω_ac); Q_db = V_db G(ω_bd).
        let p = CMat::from_fn(d, d, |a, c| v[(a, c)] * g[(a, c)]);
        let q = CMat::from_fn(d, d, |dd, b| v[(dd, b)] * g[(b, dd)]);
        let secular = self.opts.secular;
        let chunk = self.chunk;
        let n_entries: Vec<usize> = self.blocks.iter().map(|b| b.len() * b.len()).collect();
        let acc = self.accs.entry(channel).or_insert_with(|| ChannelAcc {
            x: CMat::zeros(d, d),
            y: CMat::zeros(d, d),
            k: if secular { None } else { Some(CMat::zeros(d * d, d * d)) },
            entries: if secular { n_entries.iter().map(|&n| vec![C64::new(0.0, 0.0); n]).collect() } else { Vec::new() },
            a_buf: if secular { CMat::zeros(0, 0) } else { CMat::zeros(d * d, 2 * chunk) },
            b_buf: if secular { CMat::zeros(0, 0) } else { CMat::zeros(d * d, 2 * chunk) },
            pending: 0,
            triples: Vec::new(),
        });
        acc.x += v * &p;
        acc.y += &q * v;
        if secular {
            acc.triples.push((p, v.clone(), q));
            if acc.triples.len() >= chunk {
                flush_secular(acc, &self.blocks, d);
            }
        } else {
            let col = 2 * acc.pending;
            for a in 0..d {
                for c in 0..d {
                    let k = a * d + c;
                    acc.a_buf[(k, col)] = p[(a, c)];
                    acc.a_buf[(k, col + 1)] = v[(a, c)];
                    acc.b_buf[(k, col)] = v[(a, c)];
                    acc.b_buf[(k, col + 1)] = q[(a, c)];
                }
            }
            acc.pending += 1;
            if acc.pending == chunk {
                flush_dense(acc);
            }
        }
        Ok(())
    }

    pub fn finish(mut self) -> RedfieldTensor {
        let d = self.d;
        let pref = std::f64::consts::FRAC_PI_2 * ANGULAR_FREQUENCY_PER_CM1;
        let mut partials = BTreeMap::new();
        for (ch, acc) in self.accs.iter_mut() {
            if self.opts.secular {
                flush_secular(acc, &self.blocks, d);
            } else {
                flush_dense(acc);
            }
            let mut mats = Vec::with_capacity(self.blocks.len());
            for (bi, idx) in self.blocks.iter().enumerate() {
                let n = idx.len();
                let mut m = CMat::zeros(n, n);
                for (i, &row) in idx.iter().enumerate() {
                    let (a, b) = (row / d, row % d);
                    for (j, &col) in idx.iter().enumerate() {
                        let (c, dd) = (col / d, col % d);
                        let mut val = match &acc.k {
                            Some(k) => k[(a * d + c, dd * d + b)],
                            None => acc.entries[bi][i * n + j],
                        };
                        if b == dd {
                            val -= acc.x[(a, c)];
                        }
                        if a == c {
                            val -= acc.y[(dd, b)];
                        }
                        m[(i, j)] = val * pref;
                    }
                }
                mats.push(m);
            }
            partials.insert(*ch, mats);
        }
        let total: Vec<CMat> = self
            .blocks
            .iter()
            .enumerate()
            .map(|(bi, b)| {
                let mut t = CMat::zeros(b.len(), b.len());
                for mats in partials.values() {
                    t += &mats[bi];
                }
                t
            })
            .collect();
        let position = positions(&self.blocks, d * d);
        RedfieldTensor {
            dim: d,
            energies: self.energies,
            secular: self.opts.secular,
            blocks: self.blocks,
            total,
            partials,
            stats: self.stats,
            position,
        }
    }
}

fn flush_dense(acc: &mut ChannelAcc) {
    if acc.pending == 0 {
        return;
    }
    let cols = 2 * acc.pending;
    let a = acc.a_buf.subcols(0, cols);
    let b = acc.b_buf.subcols(0, cols);
    let k = acc.k.as_mut().expect("dense accumulator");
    faer::linalg::matmul::matmul(
        k.as_mut(),
        faer::Accum::Add,
        a,
        b.transpose(),
        C64::new(1.0, 0.0),
        faer::Par::Seq,
    );
    acc.pending = 0;
}

fn flush_secular(acc: &mut ChannelAcc, blocks: &[Vec<usize>], d: usize) {
    if acc.triples.is_empty() {
        return;
    }
    for (bi, idx) in blocks.iter().enumerate() {
        let n = idx.len();
        let entries = &mut acc.entries[bi];
        for (i, &row) in idx.iter().enumerate() {
            let (a, b) = (row / d, row % d);
            for (j, &col) in idx.iter().enumerate() {
                let (c, dd) = (col / d, col % d);
                let mut s = C64::new(0.0, 0.0);
                for (p, v, q) in &acc.triples {
                    s += p[(a, c)] * v[(dd, b)] + v[(a, c)] * q[(dd, b)];
                }
                entries[i * n + j] += s;
            }
        }
    }
    acc.triples.clear();
}

/// Assembles R from couplings already rotated into the eigenbasis of `h`.
pub fn assemble_redfield(
    couplings: &[ModeCoupling],
    h: &SpinHamiltonian,
    pc: &PhononCorrelation,
    opts: &RedfieldOptions,
) -> Result<RedfieldTensor> {
    let mut b = RedfieldBuilder::new(h, *pc, *opts)?;
    for c in couplings {
        b.add_coupling(c)?;
    }
    Ok(b.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::redfield::test_support::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn single_mode(energies: &[f64], v: &CMat, omega: f64, sigma: f64, t: f64, secular: bool) -> RedfieldTensor {
        let h = diagonal_hamiltonian(energies);
        let pc = PhononCorrelation::new(sigma, t).unwrap();
        let mut b = RedfieldBuilder::new(&h, pc, RedfieldOptions { secular, ..Default::default() }).unwrap();
        b.add(Channel::Zeeman, omega, v).unwrap();
        b.finish()
    }

    #[test]
    fn population_rates_follow_golden_rule() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for case in 0..40 {
            let d = 2 + case % 2;
            let e = random_levels(d, 10.0, 0.05, &mut rng);
            let v = random_hermitian(d, 0.01, &mut rng);
            let omega = e[d - 1] - e[0] + rng.gen_range(-0.5..0.5);
            let (sigma, t) = (rng.gen_range(0.3..2.0), rng.gen_range(0.5..50.0));
            for secular in [false, true] {
                let r = single_mode(&e, &v, omega, sigma, t, secular);
                for c in 0..d {
                    for a in 0..d {
                        if a == c {
                            continue;
                        }
                        let oracle = golden_rule_rate(e[c], e[a], v[(a, c)], omega, sigma, t);
                        let got = r.transfer_rate(c, a);
                        assert!((got - oracle).abs() <= 1e-10 * oracle.abs(), "case {case}: {got} vs {oracle}");
                    }
                }
            }
        }
    }

    #[test]
    fn trace_and_hermiticity_preserved() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let e = random_levels(4, 8.0, 0.05, &mut rng);
        let h = diagonal_hamiltonian(&e);
        for secular in [false, true] {
            let pc = PhononCorrelation::new(1.0, 10.0).unwrap();
            let mut b = RedfieldBuilder::new(&h, pc, RedfieldOptions { secular, ..Default::default() }).unwrap();
            for k in 0..30 {
                let ch = Channel::ALL[k % 3];
                b.add(ch, rng.gen_range(0.5..9.0), &random_hermitian(4, 0.02, &mut rng)).unwrap();
            }
            let r = b.finish();
            assert!(r.max_rate() > 0.0);
            assert!(r.trace_residual() < 1e-13 * r.max_rate(), "{}", r.trace_residual());
            assert!(r.hermiticity_residual() < 1e-13 * r.max_rate(), "{}", r.hermiticity_residual());
        }
    }

    #[test]
    fn secular_blocks_match_full_tensor() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let e = random_levels(3, 6.0, 0.1, &mut rng);
        let v = random_hermitian(3, 0.05, &mut rng);
        let full = single_mode(&e, &v, 3.0, 2.0, 5.0, false);
        let sec = single_mode(&e, &v, 3.0, 2.0, 5.0, true);
        let n = full.super_dim();
        let w = full.omegas();
        for i in 0..n {
            for j in 0..n {
                let expect = if (w[i] - w[j]).abs() <= DEGENERACY_TOL { full.element(i, j) } else { C64::new(0.0, 0.0) };
                assert!((sec.element(i, j) - expect).norm() < 1e-15);
            }
        }
        // Populations and coherences are decoupled under the secular approximation.
        assert_eq!(sec.element(1, 0), C64::new(0.0, 0.0));
    }

    #[test]
    fn detailed_balance_on_resonance() {
        let e = [0.0, 4.0];
        let v = CMat::from_fn(2, 2, |a, b| if a != b { C64::new(0.01, 0.0) } else { C64::new(0.0, 0.0) });
        let t = 3.0;
        let r = single_mode(&e, &v, 4.0, 0.05, t, true);
        let ratio = r.transfer_rate(0, 1) / r.transfer_rate(1, 0);
        let boltzmann = (-4.0 / (crate::units::KB_CM1_PER_K * t)).exp();
        assert!((ratio / boltzmann - 1.0).abs() < 1e-10);
    }

    #[test]
    fn channel_partials_sum_to_total() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let e = random_levels(3, 5.0, 0.1, &mut rng);
        let h = diagonal_hamiltonian(&e);
        let pc = PhononCorrelation::new(1.0, 20.0).unwrap();
        let mut b = RedfieldBuilder::new(&h, pc, RedfieldOptions::default()).unwrap();
        let vz = random_hermitian(3, 0.02, &mut rng);
        let vh = random_hermitian(3, 0.01, &mut rng);
        b.add(Channel::Zeeman, 2.5, &vz).unwrap();
        b.add(Channel::Hyperfine, 3.5, &vh).unwrap();
        let r = b.finish();
        let sum = r.combined(&[(Channel::Zeeman, 1.0), (Channel::Hyperfine, 1.0)]);
        assert!(crate::linalg::max_abs_diff(&sum.dense(), &r.dense()) < 1e-16);
        // Scaling an operator by c scales its partial tensor by c².
        let mut b2 = RedfieldBuilder::new(&h, pc, RedfieldOptions::default()).unwrap();
        b2.add(Channel::Zeeman, 2.5, &crate::linalg::scale(&vz, C64::new(3.0, 0.0))).unwrap();
        let r2 = b2.finish();
        let expect = r.channel_only(Channel::Zeeman).combined(&[]);
        assert_eq!(expect.max_rate(), 0.0);
        let nine = r.combined(&[(Channel::Zeeman, 9.0)]);
        assert!(crate::linalg::max_abs_diff(&nine.dense(), &r2.dense()) < 1e-12 * r2.max_rate());
    }

    #[test]
    fn far_modes_are_screened() {
        let e = [0.0, 4.0];
        let v = CMat::from_fn(2, 2, |a, b| if a != b { C64::new(0.01, 0.0) } else { C64::new(0.0, 0.0) });
        let h = diagonal_hamiltonian(&e);
        let pc = PhononCorrelation::new(1.0, 10.0).unwrap();
        let mut b = RedfieldBuilder::new(&h, pc, RedfieldOptions::default()).unwrap();
        b.add(Channel::Zeeman, 200.0, &v).unwrap();
        b.add(Channel::Zeeman, 0.001, &v).unwrap();
        b.add(Channel::Dipolar, 4.0, &CMat::zeros(3, 3)).unwrap_err();
        let stats = b.stats();
        assert_eq!((stats.used, stats.screened, stats.skipped), (0, 1, 1));
        assert_eq!(b.finish().max_rate(), 0.0);
    }
}
