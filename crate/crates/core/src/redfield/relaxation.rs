use crate::error::invalid;
use crate::hamiltonian::{assemble_hamiltonian, SpinHamiltonian};
use crate::linalg;
use crate::spin::{SpinKind, SpinOperators, SpinSystem};
use crate::units::PS_PER_MS;
use crate::{CMat, Result, C64};

use super::{equilibrium_state, DensityMatrix, Propagator, RedfieldTensor};

#[derive(Debug, Clone)]
pub enum Observable {
    /// S_z of a centre.
    Sz(usize),
    /// Arbitrary Hermitian operator in the product basis.
    Matrix(CMat),
}

#[derive(Debug, Clone)]
pub struct RelaxationOptions {
    /// Defaults to S_z of the first electronic centre.
    pub observable: Option<Observable>,
    pub exp_fit: bool,
    pub n_times: usize,
    pub mismatch_tol: f64,
    pub rms_tol: f64,
}

impl Default for RelaxationOptions {
    fn default() -> Self {
        Self { observable: None, exp_fit: true, n_times: 40, mismatch_tol: 0.05, rms_tol: 0.02 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct RelaxationFlags {
    /// Slowest-mode and fitted τ differ by more than the tolerance.
    pub mismatch: bool,
    /// RMS residual of the exponential fit above threshold.
    pub non_exponential: bool,
    /// The exponential fit was not attempted.
    pub fit_skipped: bool,
    /// More than one numerically stationary mode.
    pub non_unique_stationary: bool,
    /// No decaying mode overlaps the observable.
    pub no_decay: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Relaxation {
    /// Headline τ from the slowest overlapping eigenmode (ms).
    pub tau_ms: f64,
    /// τ from the single-exponential fit (ms).
    pub tau_fit_ms: Option<f64>,
    pub eigenvalue: C64,
    pub overlap: f64,
    pub fit_rms: Option<f64>,
    pub trace_drift: Option<f64>,
    pub hermiticity_drift: Option<f64>,
    pub min_rho_eigenvalue: Option<f64>,
    pub flags: RelaxationFlags,
}

/// Equilibrium at temperature T of the Hamiltonian with the field reversed,
/// expressed in the eigenbasis of `h`.
pub fn field_inverted_state(
    system: &SpinSystem,
    ops: &SpinOperators,
    h: &SpinHamiltonian,
    temperature: f64,
) -> Result<DensityMatrix> {
    let reversed = assemble_hamiltonian(&system.with_field(-system.field), ops)?;
    let rho = equilibrium_state(&reversed, temperature)?;
    rho.to_product_basis(&reversed)?.to_eigenbasis(h)
}

fn observable_matrix(obs: &Observable, ops: &SpinOperators, system: &SpinSystem) -> Result<CMat> {
    match obs {
        Observable::Sz(i) => {
            if *i >= system.centers.len() {
                return Err(invalid(format!("observable centre {i} does not exist")));
            }
            Ok(ops.component(*i, 2).clone())
        }
        Observable::Matrix(m) => {
            if m.nrows() != ops.dim() || m.ncols() != ops.dim() {
                return Err(invalid("observable dimension does not match the spin system"));
            }
            Ok(m.clone())
        }
    }
}

fn golden_section(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > 1e-13 * (1.0 + lo.abs()) {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = f(x2);
        }
    }
    0.5 * (lo + hi)
}

/// Longitudinal relaxation time of `observable` under R.
///
/// The headline value is 1/|Re λ| of the decaying generator eigenmode whose
/// eigenvector overlaps most with the traceless part of the observable. The
/// cross-check fits M(t) = M_eq + (M₀ - M_eq)e^{-t/τ} after starting from
/// the field-reversed equilibrium state.
pub fn extract_relaxation_time(
    r: &RedfieldTensor,
    h: &SpinHamiltonian,
    ops: &SpinOperators,
    system: &SpinSystem,
    temperature: f64,
    opts: &RelaxationOptions,
) -> Result<Relaxation> {
    if r.dim != h.dim() || ops.dim() != h.dim() {
        return Err(invalid("Redfield tensor, Hamiltonian and operators differ in dimension"));
    }
    let d = h.dim();
    let obs = match &opts.observable {
        Some(o) => o.clone(),
        None => Observable::Sz(
            system
                .centers
                .iter()
                .position(|c| c.kind == SpinKind::Electronic)
                .ok_or_else(|| invalid("spin system has no electronic centre"))?,
        ),
    };
    let o_eig = h.to_eigenbasis(&observable_matrix(&obs, ops, system)?);
    let mut o_tl = o_eig.clone();
    let shift = linalg::trace(&o_eig) / d as f64;
    for a in 0..d {
        o_tl[(a, a)] -= shift;
    }
    let o_vec: Vec<C64> = (0..d * d).map(|k| o_tl[(k / d, k % d)]).collect();
    let o_norm = o_vec.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();

    let prop = Propagator::new(r)?;
    let modes = prop.slow_modes();
    let stationary = prop.stationary_index();
    let zero_tol = 1e-12 * prop.rate_scale;
    let mut flags = RelaxationFlags::default();
    let zeros = modes.iter().filter(|m| m.value.norm() <= zero_tol).count();
    if zeros > 1 {
        flags.non_unique_stationary = true;
        log::warn!("{zeros} numerically stationary modes; the steady state is not unique");
    }
    let mut best: Option<(usize, f64)> = None;
    for (k, m) in modes.iter().enumerate() {
        if Some(k) == stationary || m.value.norm() <= zero_tol || m.value.re >= 0.0 {
            continue;
        }
        let vn = m.vector.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let ov = if o_norm > 0.0 && vn > 0.0 {
            m.vector.iter().zip(&o_vec).map(|(x, o)| o.conj() * x).sum::<C64>().norm() / (o_norm * vn)
        } else {
            0.0
        };
        if best.map_or(true, |(_, b)| ov > b) {
            best = Some((k, ov));
        }
    }
    let (eigenvalue, overlap, tau_ps) = match best {
        Some((k, ov)) if ov > 1e-12 => (modes[k].value, ov, 1.0 / modes[k].value.re.abs()),
        _ => {
            flags.no_decay = true;
            (C64::new(0.0, 0.0), 0.0, f64::INFINITY)
        }
    };
    let tau_ms = tau_ps / PS_PER_MS;

    let mut out = Relaxation {
        tau_ms,
        tau_fit_ms: None,
        eigenvalue,
        overlap,
        fit_rms: None,
        trace_drift: None,
        hermiticity_drift: None,
        min_rho_eigenvalue: None,
        flags,
    };
    if !tau_ps.is_finite() || prop.slow_only || temperature <= 0.0 {
        out.flags.fit_skipped = true;
        return Ok(out);
    }

    let rho0 = field_inverted_state(system, ops, h, temperature)?;
    let n = opts.n_times.max(8);
    let times: Vec<f64> = (0..n).map(|k| tau_ps * 1e-2 * 500f64.powf(k as f64 / (n - 1) as f64)).collect();
    let mut all_times = vec![0.0];
    all_times.extend(&times);
    let states = prop.propagate(&rho0, &all_times)?;
    let expect = |rho: &DensityMatrix| -> f64 {
        let mut s = C64::new(0.0, 0.0);
        for a in 0..d {
            for b in 0..d {
                s += rho.matrix[(a, b)] * o_eig[(b, a)];
            }
        }
        s.re
    };
    let mut drift = 0.0f64;
    let mut herm = 0.0f64;
    let mut min_eig = f64::INFINITY;
    for s in &states {
        drift = drift.max((s.trace() - C64::new(1.0, 0.0)).norm());
        herm = herm.max(s.hermiticity_residual());
        min_eig = min_eig.min(s.min_eigenvalue()?);
    }
    out.trace_drift = Some(drift);
    out.hermiticity_drift = Some(herm);
    out.min_rho_eigenvalue = Some(min_eig);
    if min_eig < -1e-8 {
        log::warn!("density matrix eigenvalue {min_eig:.3e} below zero during propagation");
    }
    if !opts.exp_fit {
        out.flags.fit_skipped = true;
        return Ok(out);
    }
    let m_eq = expect(&prop.stationary_state()?);
    let m0 = expect(&states[0]);
    let scale = linalg::max_abs(&o_eig).max(1e-300);
    if (m0 - m_eq).abs() < 1e-12 * scale {
        out.flags.fit_skipped = true;
        log::warn!("initial and equilibrium expectation values coincide; no decay to fit");
        return Ok(out);
    }
    let y: Vec<f64> = states[1..].iter().map(|s| (expect(s) - m_eq) / (m0 - m_eq)).collect();
    let loss = |ln_tau: f64| -> f64 {
        let tau = ln_tau.exp();
        times.iter().zip(&y).map(|(t, yk)| (yk - (-t / tau).exp()).powi(2)).sum()
    };
    let ln_fit = golden_section(tau_ps.ln() - 100f64.ln(), tau_ps.ln() + 100f64.ln(), loss);
    let rms = (loss(ln_fit) / n as f64).sqrt();
    let tau_fit = ln_fit.exp();
    out.tau_fit_ms = Some(tau_fit / PS_PER_MS);
    out.fit_rms = Some(rms);
    out.flags.mismatch = (tau_fit / tau_ps - 1.0).abs() > opts.mismatch_tol;
    out.flags.non_exponential = rms > opts.rms_tol;
    if out.flags.mismatch || out.flags.non_exponential {
        log::warn!(
            "relaxation fit: slowest mode {:.6e} ms, fit {:.6e} ms, rms {rms:.3e}",
            tau_ms,
            tau_fit / PS_PER_MS
        );
    }
    Ok(out)
}
