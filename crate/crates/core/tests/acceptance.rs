//! Acceptance suite: one line per criterion, non-zero exit on any failure.
//! Run with `cargo test --test acceptance`.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spinrelax_core::coupling::{
    fit_derivative_scan, mode_tensors, Channel, ChannelSet, CouplingDerivativeSet, DerivativeRecord, DerivativeScan,
    ProjectionOptions, Provenance, TensorTarget, DEFAULT_REJECTION,
};
use spinrelax_core::hamiltonian::SpinHamiltonian;
use spinrelax_core::lattice::{
    kpoint_grid, phonon_dos, phonon_modes, rigid_body_decomposition, FcRecord, ForceConstantSet, PhononGrid,
    PhononMode,
};
use spinrelax_core::linalg;
use spinrelax_core::redfield::{
    Basis, DensityMatrix, PhononCorrelation, Propagator, RedfieldBuilder, RedfieldOptions, RedfieldTensor,
};
use spinrelax_core::sweep::{converge, multi_spin_system, Pipeline, PointParams, SweepContext};
use spinrelax_core::toy::{diatomic_chain, generate_toy_crystal, ToySpec};
use spinrelax_core::{CMat, Tensor3, Vec3, C64};

type Outcome = Result<String, String>;

// Physical constants for the independent oracles, SI (CODATA 2018 exact values).
const H: f64 = 6.626_070_15e-34;
const C_LIGHT: f64 = 299_792_458.0;
const K_B: f64 = 1.380_649e-23;
const AMU: f64 = 1.660_539_066_60e-27;
const EV: f64 = 1.602_176_634e-19;

fn joule_per_cm1() -> f64 {
    H * C_LIGHT * 100.0
}

fn kb_cm1() -> f64 {
    K_B / joule_per_cm1()
}

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn context(spec: &ToySpec) -> (SweepContext, Vec<usize>) {
    let toy = generate_toy_crystal(spec).expect("toy crystal");
    let carriers = toy.carriers.clone();
    let (crystal, force_constants, derivatives, system) = toy.into_parts();
    (SweepContext { crystal, force_constants, derivatives, system }, carriers)
}

fn params(mesh: usize) -> PointParams {
    PointParams { mesh: [mesh; 3], exp_fit: false, per_channel: false, ..PointParams::default() }
}

fn tau(pipeline: &Pipeline, p: &PointParams) -> Result<f64, String> {
    pipeline.evaluate(p).map(|r| r.relaxation.tau_ms).map_err(|e| e.to_string())
}

fn diagonal(e: &[f64]) -> SpinHamiltonian {
    let d = e.len();
    SpinHamiltonian::from_matrix(CMat::from_fn(d, d, |a, b| {
        if a == b {
            C64::new(e[a], 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    }))
    .expect("diagonal Hamiltonian")
}

fn random_hermitian(d: usize, scale: f64, rng: &mut impl Rng) -> CMat {
    let mut m = CMat::zeros(d, d);
    for a in 0..d {
        m[(a, a)] = C64::new(scale * rng.gen_range(-1.0..1.0), 0.0);
        for b in a + 1..d {
            let z = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * scale;
            m[(a, b)] = z;
            m[(b, a)] = z.conj();
        }
    }
    m
}

fn random_state(d: usize, rng: &mut impl Rng) -> DensityMatrix {
    let a = CMat::from_fn(d, d, |_, _| C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
    let m = &a * a.adjoint();
    let tr = linalg::trace(&m);
    DensityMatrix::eigen(linalg::scale(&m, C64::new(1.0, 0.0) / tr))
}

/// Sorted levels whose pairwise gaps all differ from each other by more than `sep`.
fn distinct_gap_levels(d: usize, span: f64, sep: f64, rng: &mut impl Rng) -> Vec<f64> {
    loop {
        let mut e: Vec<f64> = (0..d).map(|_| span * rng.gen::<f64>()).collect();
        e.sort_by(f64::total_cmp);
        let mut gaps: Vec<f64> = (0..d).flat_map(|a| (a + 1..d).map(move |b| (a, b))).map(|(a, b)| e[b] - e[a]).collect();
        gaps.sort_by(f64::total_cmp);
        if gaps[0] > sep && gaps.windows(2).all(|w| w[1] - w[0] > sep) {
            return e;
        }
    }
}

/// Fermi golden rule for one harmonic mode with Q = √(ħ/2ωm)(b + b†),
/// all in SI; `v` is the cm⁻¹ matrix element for amplitude √(ħ/ωm).
fn golden_rule_si(e_from: f64, e_to: f64, v: C64, omega: f64, sigma: f64, t: f64) -> f64 {
    let j = joule_per_cm1();
    let hbar = H / (2.0 * std::f64::consts::PI);
    let omega_j = omega * j;
    let n = 1.0 / ((omega_j / (K_B * t)).exp() - 1.0);
    let coupling = v.norm() * j / 2f64.sqrt();
    let sigma_j = sigma * j;
    let delta = |x_j: f64| (-(x_j / sigma_j).powi(2)).exp() / (sigma_j * std::f64::consts::PI.sqrt());
    let de = (e_from - e_to) * j;
    let rate_per_s = 2.0 * std::f64::consts::PI / hbar
        * coupling
        * coupling
        * ((n + 1.0) * delta(de - omega_j) + n * delta(de + omega_j));
    rate_per_s * 1e-12
}

fn golden_rule_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    let mut rates = 0;
    for case in 0..100 {
        let d = if case < 50 { 2 } else { 3 };
        let e = distinct_gap_levels(d, 8.0, 0.05, &mut rng);
        let h = diagonal(&e);
        let v = random_hermitian(d, 0.03, &mut rng);
        let sigma = rng.gen_range(0.3..2.0);
        let t = rng.gen_range(1.0..100.0);
        let gap = e[d - 1] - e[0];
        let omega = (gap * rng.gen_range(0.3..1.2)).max(0.2);
        let pc = PhononCorrelation::new(sigma, t).map_err(|e| e.to_string())?;
        let opts = RedfieldOptions { secular: case % 2 == 0, screening_sigmas: 40.0, ..Default::default() };
        let mut b = RedfieldBuilder::new(&h, pc, opts).map_err(|e| e.to_string())?;
        b.add(Channel::Zeeman, omega, &v).map_err(|e| e.to_string())?;
        let r = b.finish();
        for from in 0..d {
            for to in 0..d {
                if from == to {
                    continue;
                }
                let want = golden_rule_si(e[from], e[to], v[(to, from)], omega, sigma, t);
                let got = r.transfer_rate(from, to);
                if want < 1e-300 {
                    continue;
                }
                worst = worst.max((got - want).abs() / want);
                rates += 1;
            }
        }
    }
    ensure(worst <= 1e-10, format!("{rates} rates in 100 systems, worst relative error {worst:.2e} (limit 1e-10)"))
}

fn detailed_balance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let sigma = 1e-4;
    let mut worst: f64 = 0.0;
    let dims = [2, 3, 4, 6, 8, 12, 16];
    let mut states = 0;
    for &d in dims.iter().cycle().take(20) {
        let e = distinct_gap_levels(d, 12.0, 20.0 * sigma, &mut rng);
        let t = rng.gen_range(2.0..40.0);
        let h = diagonal(&e);
        let pc = PhononCorrelation::new(sigma, t).map_err(|e| e.to_string())?;
        let mut b = RedfieldBuilder::new(&h, pc, RedfieldOptions { secular: true, ..Default::default() })
            .map_err(|e| e.to_string())?;
        // One Einstein mode resonant with every transition.
        for a in 0..d {
            for c in a + 1..d {
                b.add(Channel::ALL[(a + c) % 3], e[c] - e[a], &random_hermitian(d, 2e-3, &mut rng))
                    .map_err(|e| e.to_string())?;
            }
        }
        let r = b.finish();
        let prop = Propagator::new(&r).map_err(|e| e.to_string())?;
        let slowest = prop
            .slow_modes()
            .iter()
            .map(|m| m.value.re.abs())
            .filter(|x| *x > 1e-12 * prop.rate_scale)
            .fold(f64::INFINITY, f64::min);
        let w: Vec<f64> = e.iter().map(|x| (-(x - e[0]) / (kb_cm1() * t)).exp()).collect();
        let z: f64 = w.iter().sum();
        let rho = prop
            .propagate(&random_state(d, &mut rng), &[80.0 / slowest])
            .map_err(|e| e.to_string())?
            .pop()
            .expect("one state");
        for a in 0..d {
            for c in 0..d {
                let want = if a == c { w[a] / z } else { 0.0 };
                worst = worst.max((rho.matrix[(a, c)] - C64::new(want, 0.0)).norm());
            }
        }
        states += 1;
    }
    ensure(
        worst <= 1e-6,
        format!("{states} random initial states, d = 2..16, worst element deviation {worst:.2e} (limit 1e-6)"),
    )
}

fn temperature_law() -> Outcome {
    let (ctx, _) = context(&ToySpec::vanadyl_like());
    let pipeline = Pipeline::new(ctx).map_err(|e| e.to_string())?;
    let base = PointParams { sigma: 1.0, ..params(16) };
    let temps = [100.0, 200.0, 400.0, 1000.0];
    let mut taus = Vec::new();
    let mut gap = 0.0;
    for &t in &temps {
        let r = pipeline.evaluate(&PointParams { temperature: t, ..base.clone() }).map_err(|e| e.to_string())?;
        gap = r.hamiltonian.energies.last().unwrap() - r.hamiltonian.energies[0];
        taus.push(r.relaxation.tau_ms);
    }
    let lx: Vec<f64> = temps.iter().map(|t| t.ln()).collect();
    let ly: Vec<f64> = taus.iter().map(|t| t.ln()).collect();
    let mx = lx.iter().sum::<f64>() / 4.0;
    let my = ly.iter().sum::<f64>() / 4.0;
    let slope = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>()
        / lx.iter().map(|a| (a - mx).powi(2)).sum::<f64>();
    let ratio = kb_cm1() * temps[0] / gap;
    ensure(
        (slope + 1.0).abs() <= 0.05 && ratio >= 10.0,
        format!("16^3 grid, 100-1000 K: slope {slope:.4} (limit -1 ± 0.05), k_BT/gap at 100 K = {ratio:.1}"),
    )
}

fn low_temperature_plateau() -> Outcome {
    let mut details = Vec::new();
    let mut ok = true;
    for (name, spec) in [("electron", ToySpec::vanadyl_like_electron_only()), ("electron+nucleus", ToySpec::vanadyl_like())] {
        let (ctx, _) = context(&spec);
        let pipeline = Pipeline::new(ctx).map_err(|e| e.to_string())?;
        let base = params(8);
        let lo = tau(&pipeline, &PointParams { temperature: 0.05, ..base.clone() })?;
        let hi = tau(&pipeline, &PointParams { temperature: 0.1, ..base.clone() })?;
        let h = pipeline.evaluate(&PointParams { temperature: 0.1, ..base }).map_err(|e| e.to_string())?.hamiltonian;
        let gap = h.energies.last().unwrap() - h.energies[0];
        let ratio = lo / hi;
        ok &= (ratio - 1.0).abs() <= 0.01 && gap > 20.0 * kb_cm1() * 0.1;
        details.push(format!("{name}: tau(0.05 K)/tau(0.1 K) = {ratio:.6}, gap/k_BT = {:.0}", gap / (kb_cm1() * 0.1)));
    }
    ensure(ok, details.join("; "))
}

fn max_rel_diff(a: &RedfieldTensor, b: &RedfieldTensor, factor: f64) -> f64 {
    let (da, db) = (a.dense(), b.dense());
    let scale = linalg::max_abs(&db) * factor;
    let scaled = linalg::scale(&db, C64::new(factor, 0.0));
    linalg::max_abs_diff(&da, &scaled) / scale
}

fn quadratic_scaling() -> Outcome {
    let (full, carriers) = context(&ToySpec::vanadyl_like());
    let (electron, _) = context(&ToySpec::vanadyl_like_electron_only());
    let chain = multi_spin_system(&electron, &carriers[..1], 0, 2).map_err(|e| e.to_string())?;
    let mut worst_tensor: f64 = 0.0;
    let mut worst_tau: f64 = 0.0;
    let mut worst_other: f64 = 0.0;
    for (ctx, ch) in [(full.clone(), Channel::Zeeman), (full, Channel::Hyperfine), (chain, Channel::Dipolar)] {
        let pipeline = Pipeline::new(ctx).map_err(|e| e.to_string())?;
        let base = params(4);
        let r1 = pipeline.evaluate(&base).map_err(|e| e.to_string())?.tensor;
        let secular = PointParams { secular: true, channels: ChannelSet::only(ch), ..base.clone() };
        let t1 = tau(&pipeline, &secular)?;
        for c in [0.5, 2.0, 3.0] {
            let mut scales = [1.0; 3];
            scales[ch.index()] = c;
            let rc = pipeline.evaluate(&PointParams { coupling_scales: scales, ..base.clone() }).map_err(|e| e.to_string())?.tensor;
            worst_tensor = worst_tensor.max(max_rel_diff(&rc.channel_only(ch), &r1.channel_only(ch), c * c));
            for other in Channel::ALL.into_iter().filter(|o| *o != ch && r1.partials.contains_key(o)) {
                worst_other = worst_other.max(max_rel_diff(&rc.channel_only(other), &r1.channel_only(other), 1.0));
            }
            let tc = tau(&pipeline, &PointParams { coupling_scales: scales, ..secular.clone() })?;
            worst_tau = worst_tau.max((tc * c * c / t1 - 1.0).abs());
        }
    }
    ensure(
        worst_tensor <= 1e-12 && worst_tau <= 1e-12 && worst_other <= 1e-12,
        format!(
            "zeeman, hyperfine, dipolar at c = 0.5, 2, 3: channel tensor vs c^2 {worst_tensor:.1e}, \
             tau vs 1/c^2 {worst_tau:.1e}, other channels {worst_other:.1e} (limit 1e-12)"
        ),
    )
}

fn lattice_dynamics() -> Outcome {
    // Closed form for the diatomic chain, evaluated from SI constants.
    let (m1, m2, k, a) = (12.0, 31.0, 3.7, 2.5);
    let (_, fc) = diatomic_chain(m1, m2, k, a).map_err(|e| e.to_string())?;
    let to_cm1 = |w2: f64| (w2 * EV / (1e-20 * AMU)).sqrt() / (2.0 * std::f64::consts::PI * C_LIGHT * 100.0);
    let mut worst_chain: f64 = 0.0;
    for step in 0..64 {
        let q = -0.5 + (step as f64 + 0.5) / 64.0;
        let modes = phonon_modes(&fc, &Vec3::new(q, 0.0, 0.0)).map_err(|e| e.to_string())?;
        let mut w: Vec<f64> = modes.iter().map(|m| m.omega).collect();
        w.sort_by(f64::total_cmp);
        let s = 1.0 / m1 + 1.0 / m2;
        let root = (s * s - 4.0 * (std::f64::consts::PI * q).sin().powi(2) / (m1 * m2)).sqrt();
        for (got, want) in w[4..].iter().zip([to_cm1(k * (s - root)), to_cm1(k * (s + root))]) {
            worst_chain = worst_chain.max((got / want - 1.0).abs());
        }
    }

    // Γ after sum-rule enforcement on a crystal whose on-site terms were perturbed.
    let (ctx, _) = context(&ToySpec::vanadyl_like());
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let records: Vec<FcRecord> = ctx
        .force_constants
        .records()
        .iter()
        .map(|r| {
            if r.cell == [0; 3] && r.i == r.j && r.s == r.t {
                FcRecord { value: r.value + rng.gen_range(-0.05..0.05), ..*r }
            } else {
                *r
            }
        })
        .collect();
    let broken = ForceConstantSet::new(ctx.force_constants.masses().to_vec(), records).map_err(|e| e.to_string())?;
    let fixed = broken.enforce_acoustic_sum_rule();
    let mut w: Vec<f64> =
        phonon_modes(&fixed, &Vec3::zeros()).map_err(|e| e.to_string())?.iter().map(|m| m.omega.abs()).collect();
    w.sort_by(f64::total_cmp);
    let acoustic = w[2];

    let mut herm: f64 = 0.0;
    let mut tr: f64 = 0.0;
    for _ in 0..20 {
        let q = Vec3::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5));
        let d = ctx.force_constants.raw_dynamical_matrix(&q);
        let dm = ctx.force_constants.raw_dynamical_matrix(&-q);
        let conj = CMat::from_fn(d.nrows(), d.ncols(), |i, j| d[(i, j)].conj());
        herm = herm.max(linalg::hermiticity_residual(&d));
        tr = tr.max(linalg::max_abs_diff(&dm, &conj));
    }
    ensure(
        worst_chain <= 1e-8 && acoustic < 1e-6 && herm <= 1e-10 && tr <= 1e-10,
        format!(
            "chain dispersion {worst_chain:.1e} (limit 1e-8); Gamma acoustic {acoustic:.1e} cm-1 (limit 1e-6, \
             residual before enforcement {:.1e} eV/A^2); D hermiticity {herm:.1e}, D(-q) - D(q)* {tr:.1e} (limit 1e-10)",
            broken.sum_rule_residual()
        ),
    )
}

fn dos_properties() -> Outcome {
    let (cubic, _) = context(&ToySpec::monatomic_cubic(4.0, 50.0, 0.03));
    let d = phonon_dos(&cubic.force_constants, &cubic.crystal, [32; 3], 1.0).map_err(|e| e.to_string())?;
    let (x, y): (Vec<f64>, Vec<f64>) =
        d.freqs.iter().zip(&d.total).filter(|(w, _)| (3.0..=8.0).contains(*w)).map(|(w, g)| (w.ln(), g.ln())).unzip();
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let slope = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / x.iter().map(|a| (a - mx).powi(2)).sum::<f64>();

    let (ctx, _) = context(&ToySpec::vanadyl_like());
    let dv = phonon_dos(&ctx.force_constants, &ctx.crystal, [8; 3], 1.0).map_err(|e| e.to_string())?;
    let n3 = 3.0 * ctx.crystal.n_atoms() as f64;
    let area_err = (dv.area() / n3 - 1.0).abs();
    let area_cubic = (d.area() / 3.0 - 1.0).abs();

    let grid = PhononGrid::compute(&ctx.force_constants, [4; 3], &kpoint_grid([4; 3]).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let n_mol = ctx.crystal.atoms.iter().map(|a| a.molecule).max().unwrap_or(0) + 1;
    let mut worst_weight: f64 = 0.0;
    for m in grid.modes() {
        let mut sum = 0.0;
        for mol in 0..n_mol {
            let w = rigid_body_decomposition(m, &ctx.crystal, mol).map_err(|e| e.to_string())?;
            sum += w.trans + w.rot + w.intra;
        }
        worst_weight = worst_weight.max((sum - 1.0).abs());
    }
    ensure(
        (slope - 2.0).abs() <= 0.2 && area_err <= 1e-3 && area_cubic <= 1e-3 && worst_weight <= 1e-8,
        format!(
            "cubic 32^3, sigma 1: low-frequency slope {slope:.3} (limit 2 ± 0.2); area error {:.1e} / {:.1e} \
             (limit 1e-3); per-mode weight sum error {worst_weight:.1e} over {} modes (limit 1e-8)",
            area_err,
            area_cubic,
            grid.modes().count()
        ),
    )
}

fn translation_null() -> Outcome {
    let (ctx, _) = context(&ToySpec::vanadyl_like());
    let masses = ctx.crystal.masses();
    let n = masses.len();
    let total: f64 = masses.iter().sum();
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    // Random derivatives on every atom and a few neighbouring cells, with the
    // last record of each (target, direction) chosen to satisfy the atom sum.
    let targets = [TensorTarget::G(0), TensorTarget::Hyperfine(0, 1)];
    let mut records = Vec::new();
    for target in targets {
        for s in 0..3 {
            let mut sum = Tensor3::zeros();
            for atom in 0..n {
                for cell in [[0, 0, 0], [1, 0, 0], [0, -1, 1]] {
                    let t = Tensor3::from_fn(|_, _| rng.gen_range(-0.01..0.01));
                    sum += t;
                    records.push(DerivativeRecord { target, atom, s, cell, tensor: t });
                }
            }
            records.push(DerivativeRecord { target, atom: 0, s, cell: [0, 0, 0], tensor: -sum });
        }
    }
    let derivs = CouplingDerivativeSet::new(records, Provenance::Synthetic);
    let opts = ProjectionOptions::default();
    let norm = |mode: &PhononMode| -> Result<f64, String> {
        Ok(mode_tensors(&derivs, mode, 0, &masses, 1, &opts)
            .map_err(|e| e.to_string())?
            .map(|mt| mt.tensors.iter().map(|(_, c, s)| c.norm_squared() + s.norm_squared()).sum::<f64>().sqrt())
            .unwrap_or(0.0))
    };
    let mut worst: f64 = 0.0;
    for trial in 0..5 {
        let random: Vec<C64> = (0..3 * n).map(|_| C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)).collect();
        let rn = random.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let reference =
            PhononMode { q: Vec3::zeros(), branch: 0, omega: 10.0, eigvec: random.iter().map(|z| z / rn).collect(), imaginary: false };
        let scale = norm(&reference)?;
        if !(scale > 0.0) {
            return Err(format!("trial {trial}: reference mode does not couple"));
        }
        for u in 0..3 {
            let eigvec = (0..3 * n)
                .map(|k| if k % 3 == u { C64::new((masses[k / 3] / total).sqrt(), 0.0) } else { C64::new(0.0, 0.0) })
                .collect();
            worst = worst.max(norm(&PhononMode { eigvec, ..reference.clone() })? / scale);
        }
    }
    ensure(
        worst < 1e-10,
        format!(
            "translation residual of the set {:.1e}; pure-translation coupling relative to random modes {worst:.1e} (limit 1e-10)",
            derivs.translation_residual()
        ),
    )
}

fn convergence_protocol() -> Outcome {
    let (ctx, _) = context(&ToySpec::vanadyl_like());
    let pipeline = Pipeline::new(ctx).map_err(|e| e.to_string())?;
    let report = converge(&pipeline, &params(4), &[1.0], &[4, 8, 16], 0.02).map_err(|e| e.to_string())?;
    let changes: Vec<f64> = report.steps.iter().filter_map(|s| s.rel_change).collect();
    let ok = changes.len() == 2 && changes[1] < changes[0] && changes[1] < 0.02;
    ensure(
        ok,
        format!(
            "sigma 1 cm-1: 4^3 -> 8^3 {:.2}%, 8^3 -> 16^3 {:.2}% (decreasing, final limit 2%)",
            100.0 * changes.first().copied().unwrap_or(f64::NAN),
            100.0 * changes.get(1).copied().unwrap_or(f64::NAN)
        ),
    )
}

/// Standard error of the linear coefficient by the normal equations.
fn oracle_std_error(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let xmax = xs.iter().map(|x| x.abs()).fold(0.0, f64::max);
    let n = xs.len();
    let x = DMatrix::from_fn(n, 5, |r, c| (xs[r] / xmax).powi(c as i32));
    let y = DVector::from_column_slice(ys);
    let xtx = x.transpose() * &x;
    let inv = xtx.clone().cholesky().expect("positive definite").inverse();
    let coef = &inv * (x.transpose() * &y);
    let resid = &y - &x * &coef;
    let s2 = resid.norm_squared() / (n - 5) as f64;
    (coef[1] / xmax, (s2 * inv[(1, 1)]).sqrt() / xmax)
}

fn derivative_fitting() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    let xs: Vec<f64> = (0..10).map(|k| -0.01 + 0.02 * k as f64 / 9.0).collect();
    let xmax = 0.01;

    let mut worst_clean: f64 = 0.0;
    for _ in 0..100 {
        let coeffs: Vec<[f64; 5]> = (0..9).map(|_| std::array::from_fn(|_| rng.gen_range(-5.0..5.0))).collect();
        let points = xs
            .iter()
            .map(|&x| {
                let t = Tensor3::from_fn(|u, v| {
                    let c = coeffs[3 * u + v];
                    c[0] + c[1] * x + c[2] * x * x / xmax + c[3] * x.powi(3) / xmax.powi(2) + c[4] * x.powi(4) / xmax.powi(3)
                });
                (x, t)
            })
            .collect();
        let scan = DerivativeScan { target: TensorTarget::G(0), atom: 0, s: 0, cell: [0; 3], points };
        let fit = fit_derivative_scan(&scan, DEFAULT_REJECTION).map_err(|e| e.to_string())?;
        for u in 0..3 {
            for v in 0..3 {
                worst_clean = worst_clean.max((fit.tensor[(u, v)] - coeffs[3 * u + v][1]).abs());
            }
        }
    }

    let mut mismatches = 0;
    let mut false_negatives = 0;
    let mut rejected = 0;
    let mut high_snr = 0;
    for _ in 0..1000 {
        let p1: [f64; 9] = std::array::from_fn(|_| {
            let m = 10f64.powf(rng.gen_range(-1.0..1.0));
            if rng.gen::<bool>() {
                m
            } else {
                -m
            }
        });
        let snr: [f64; 9] = std::array::from_fn(|_| 10f64.powf(rng.gen_range(0.0..4.0)));
        let noise: Vec<[f64; 9]> = xs
            .iter()
            .map(|_| {
                std::array::from_fn(|c| {
                    // Box-Muller normal deviate scaled to the requested SNR.
                    let (a, b): (f64, f64) = (rng.gen_range(1e-300..1.0), rng.gen());
                    (-2.0 * a.ln()).sqrt() * (2.0 * std::f64::consts::PI * b).cos() * p1[c].abs() * xmax / snr[c]
                })
            })
            .collect();
        let ys: Vec<[f64; 9]> =
            xs.iter().zip(&noise).map(|(x, e)| std::array::from_fn(|c| 0.3 + p1[c] * x + 40.0 * x * x + e[c])).collect();
        let points = xs.iter().zip(&ys).map(|(x, y)| (*x, Tensor3::from_fn(|u, v| y[3 * u + v]))).collect();
        let scan = DerivativeScan { target: TensorTarget::G(0), atom: 0, s: 0, cell: [0; 3], points };
        let fit = fit_derivative_scan(&scan, DEFAULT_REJECTION).map_err(|e| e.to_string())?;
        for c in 0..9 {
            let comp = fit.components[c / 3][c % 3];
            let column: Vec<f64> = ys.iter().map(|y| y[c]).collect();
            let (p, se) = oracle_std_error(&xs, &column);
            let ratio = se / p.abs();
            let should_reject = ratio > DEFAULT_REJECTION;
            let borderline = (ratio / DEFAULT_REJECTION - 1.0).abs() < 1e-9;
            if comp.rejected != should_reject && !borderline {
                mismatches += 1;
            }
            if comp.rejected != (fit.tensor[(c / 3, c % 3)] == 0.0) {
                mismatches += 1;
            }
            if comp.rejected {
                rejected += 1;
            }
            if snr[c] > 100.0 {
                high_snr += 1;
                if comp.rejected {
                    false_negatives += 1;
                }
            }
        }
    }
    ensure(
        worst_clean <= 1e-10 && mismatches == 0 && false_negatives == 0 && rejected > 0,
        format!(
            "noiseless p1 error {worst_clean:.1e} (limit 1e-10); 1000 noisy scans: {rejected} of 9000 components \
             zeroed, {mismatches} disagreements with the 7% rule, {false_negatives} of {high_snr} SNR>100 components zeroed"
        ),
    )
}

fn conservation() -> Outcome {
    let (full, carriers) = context(&ToySpec::vanadyl_like());
    let (electron, _) = context(&ToySpec::vanadyl_like_electron_only());
    let chain = multi_spin_system(&electron, &carriers[..1], 0, 2).map_err(|e| e.to_string())?;
    let systems = [
        ("electron+nucleus", full.clone(), params(4)),
        ("hyperfine secular", full, PointParams { secular: true, channels: ChannelSet::only(Channel::Hyperfine), ..params(4) }),
        ("electron", electron, params(4)),
        ("dipolar pair", chain, params(4)),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(1111);
    let mut lines = Vec::new();
    let mut ok = true;
    for (name, ctx, p) in systems {
        let pipeline = Pipeline::new(ctx).map_err(|e| e.to_string())?;
        let r = pipeline.evaluate(&p).map_err(|e| e.to_string())?;
        let d = r.hamiltonian.dim();
        let prop = Propagator::new(&r.tensor).map_err(|e| e.to_string())?;
        let tau_ps = r.relaxation.tau_ms * 1e9;
        // 2^20 steps spanning ten relaxation times.
        let dt = 10.0 * tau_ps / (1u64 << 20) as f64;
        let mut m = prop.step_matrix(dt).map_err(|e| e.to_string())?;
        for _ in 0..20 {
            m = &m * &m;
        }
        let rho0 = random_state(d, &mut rng);
        let x = linalg::matvec(&m, &rho0.to_vec());
        let rho = DensityMatrix::from_vec(&x, d, Basis::Eigen, 0.0);
        let trace_drift = (rho.trace() - C64::new(1.0, 0.0)).norm();
        let herm = rho.hermiticity_residual();
        ok &= trace_drift < 1e-8 && herm < 1e-8;
        lines.push(format!("{name} (d = {d}): trace {trace_drift:.1e}, hermiticity {herm:.1e}"));
    }
    ensure(ok, format!("2^20 steps over 10 tau; {} (limit 1e-8)", lines.join("; ")))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, u64); 11] = [
        ("golden-rule oracle", golden_rule_oracle, 10),
        ("detailed balance", detailed_balance, 30),
        ("inverse-temperature law", temperature_law, 300),
        ("zero-temperature plateau", low_temperature_plateau, 120),
        ("quadratic coupling scaling", quadratic_scaling, 60),
        ("lattice dynamics", lattice_dynamics, 10),
        ("density of states", dos_properties, 180),
        ("translational invariance", translation_null, 10),
        ("convergence protocol", convergence_protocol, 600),
        ("derivative fitting", derivative_fitting, 30),
        ("conservation", conservation, 60),
    ];
    let mut failed = 0;
    for (k, (name, run, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let in_budget = elapsed <= Duration::from_secs(*budget);
        let (pass, detail) = match outcome {
            Ok(d) => (in_budget, d),
            Err(d) => (false, d),
        };
        if !pass {
            failed += 1;
        }
        println!(
            "{} {:>2} {name}: {detail} [{:.1} s of {budget} s]",
            if pass { "PASS" } else { "FAIL" },
            k + 1,
            elapsed.as_secs_f64()
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
