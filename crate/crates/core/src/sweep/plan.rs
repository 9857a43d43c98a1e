use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::multi::multi_spin_system;
use super::pipeline::{Pipeline, PointParams, PointResult};
use crate::coupling::Channel;
use crate::error::invalid;
use crate::redfield::RelaxationFlags;
use crate::{Result, Vec3};

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Default relative-change threshold of the convergence protocol.
pub const DEFAULT_CONVERGENCE_THRESHOLD: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// |B| in T along the direction of the base field.
    FieldMagnitude,
    Temperature,
    /// n of an n×n×n grid.
    Qgrid,
    Sigma,
    NSpins,
    CouplingScale(Channel),
    FrequencyScale,
}

impl SweepAxis {
    pub fn name(&self) -> String {
        match self {
            SweepAxis::FieldMagnitude => "field_T".into(),
            SweepAxis::Temperature => "temperature_K".into(),
            SweepAxis::Qgrid => "qgrid_n".into(),
            SweepAxis::Sigma => "sigma_cm1".into(),
            SweepAxis::NSpins => "n_spins".into(),
            SweepAxis::CouplingScale(ch) => format!("{}_scale", ch.name()),
            SweepAxis::FrequencyScale => "frequency_scale".into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepPlan {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub base: PointParams,
    pub seed: u64,
    /// Lattice direction (0, 1, 2) along which cells are replicated on the
    /// `NSpins` axis.
    pub replication_axis: usize,
    /// Spin-carrying atoms of one cell, used by the `NSpins` axis.
    pub carriers: Vec<usize>,
}

impl SweepPlan {
    pub fn new(axis: SweepAxis, values: Vec<f64>, base: PointParams) -> Self {
        Self { axis, values, base, seed: 0, replication_axis: 0, carriers: Vec::new() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(invalid("sweep has no values"));
        }
        for &v in &self.values {
            if !v.is_finite() {
                return Err(invalid(format!("sweep value {v} is not finite")));
            }
            let positive = !matches!(self.axis, SweepAxis::CouplingScale(_) | SweepAxis::FieldMagnitude);
            if positive && v <= 0.0 {
                return Err(invalid(format!("{} must be positive, got {v}", self.axis.name())));
            }
            if matches!(self.axis, SweepAxis::Qgrid | SweepAxis::NSpins) && v.fract() != 0.0 {
                return Err(invalid(format!("{} must be an integer, got {v}", self.axis.name())));
            }
        }
        if self.axis == SweepAxis::NSpins {
            if self.carriers.is_empty() {
                return Err(invalid("spin-count sweeps need the carrier atoms of one cell"));
            }
            if self.replication_axis > 2 {
                return Err(invalid("replication axis must be 0, 1 or 2"));
            }
            if let Some(v) = self.values.iter().find(|v| (**v as usize) % self.carriers.len() != 0) {
                return Err(invalid(format!("{v} spins is not a multiple of {} spins per cell", self.carriers.len())));
            }
        }
        self.base.validate()
    }

    /// Parameters of point `value`.
    pub fn point(&self, value: f64) -> PointParams {
        let mut p = self.base.clone();
        match self.axis {
            SweepAxis::FieldMagnitude => {
                let n = p.field.norm();
                let dir = if n > 0.0 { p.field / n } else { Vec3::z() };
                p.field = dir * value;
            }
            SweepAxis::Temperature => p.temperature = value,
            SweepAxis::Qgrid => p.mesh = [value as usize; 3],
            SweepAxis::Sigma => p.sigma = value,
            SweepAxis::NSpins => {}
            SweepAxis::CouplingScale(ch) => p.coupling_scales[ch.index()] *= value,
            SweepAxis::FrequencyScale => p.frequency_scale *= value,
        }
        p
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub trace_drift: Option<f64>,
    pub hermiticity_drift: Option<f64>,
    pub min_rho_eigenvalue: Option<f64>,
    /// Modes left out as imaginary or below the frequency floor.
    pub skipped_modes: usize,
    pub imaginary_modes: usize,
    /// Re λ of the selected slow mode, ps⁻¹.
    pub rate_eigenvalue: Option<f64>,
    pub overlap: Option<f64>,
    pub tau_fit_ms: Option<f64>,
    pub fit_rms: Option<f64>,
    pub flags: RelaxationFlags,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub tau_total_ms: Option<f64>,
    /// Zeeman, hyperfine, dipolar.
    pub tau_channel_ms: [Option<f64>; 3],
    /// τ relative to the first row of the sweep.
    pub tau_ratio: Option<f64>,
    pub diagnostics: Diagnostics,
    pub error: Option<String>,
}

impl SweepRow {
    fn from_result(value: f64, r: &PointResult) -> Self {
        let x = &r.relaxation;
        Self {
            value,
            tau_total_ms: Some(x.tau_ms),
            tau_channel_ms: r.channel_tau_ms,
            tau_ratio: None,
            diagnostics: Diagnostics {
                trace_drift: x.trace_drift,
                hermiticity_drift: x.hermiticity_drift,
                min_rho_eigenvalue: x.min_rho_eigenvalue,
                skipped_modes: r.skipped_modes,
                imaginary_modes: r.imaginary_modes,
                rate_eigenvalue: Some(x.eigenvalue.re),
                overlap: Some(x.overlap),
                tau_fit_ms: x.tau_fit_ms,
                fit_rms: x.fit_rms,
                flags: x.flags,
            },
            error: None,
        }
    }

    fn failed(value: f64, message: String) -> Self {
        Self {
            value,
            tau_total_ms: None,
            tau_channel_ms: [None; 3],
            tau_ratio: None,
            diagnostics: Diagnostics {
                trace_drift: None,
                hermiticity_drift: None,
                min_rho_eigenvalue: None,
                skipped_modes: 0,
                imaginary_modes: 0,
                rate_eigenvalue: None,
                overlap: None,
                tau_fit_ms: None,
                fit_rms: None,
                flags: RelaxationFlags::default(),
            },
            error: Some(message),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepMetadata {
    pub axis: SweepAxis,
    pub mesh: [usize; 3],
    pub sigma_cm1: f64,
    pub temperature_k: f64,
    pub field_t: [f64; 3],
    pub channels: Vec<Channel>,
    pub secular: bool,
    pub seed: u64,
    pub code_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub metadata: SweepMetadata,
}

impl SweepResult {
    pub fn taus(&self) -> Vec<Option<f64>> {
        self.rows.iter().map(|r| r.tau_total_ms).collect()
    }

    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.error.is_some()).count()
    }
}

fn metadata(axis: SweepAxis, base: &PointParams, seed: u64) -> SweepMetadata {
    SweepMetadata {
        axis,
        mesh: base.mesh,
        sigma_cm1: base.sigma,
        temperature_k: base.temperature,
        field_t: [base.field.x, base.field.y, base.field.z],
        channels: base.channels.iter().collect(),
        secular: base.secular,
        seed,
        code_version: CODE_VERSION.to_string(),
    }
}

fn fill_ratios(rows: &mut [SweepRow]) {
    let first = rows.first().and_then(|r| r.tau_total_ms);
    for r in rows.iter_mut() {
        r.tau_ratio = match (first, r.tau_total_ms) {
            (Some(a), Some(b)) if a > 0.0 => Some(b / a),
            _ => None,
        };
    }
}

/// Evaluates every point of the plan. Points run in parallel and are
/// returned in plan order; a failing point is recorded in its row.
pub fn run_sweep(pipeline: &Pipeline, plan: &SweepPlan) -> Result<SweepResult> {
    plan.validate()?;
    let eval = |value: f64| -> Result<PointResult> {
        let p = plan.point(value);
        if plan.axis == SweepAxis::NSpins {
            let cells = value as usize / plan.carriers.len();
            let ctx = multi_spin_system(&pipeline.context, &plan.carriers, plan.replication_axis, cells)?;
            Pipeline::new(ctx)?.evaluate(&p)
        } else {
            pipeline.evaluate(&p)
        }
    };
    // Fill the shared caches first so parallel points never race to
    // compute the same grid.
    if plan.axis != SweepAxis::NSpins {
        let mut keys: Vec<([usize; 3], f64, f64)> = Vec::new();
        for &v in &plan.values {
            let p = plan.point(v);
            let key = (p.mesh, p.frequency_scale, p.omega_min);
            if !keys.contains(&key) {
                keys.push(key);
            }
        }
        for (mesh, scale, omega_min) in keys {
            if let Err(e) = pipeline.mode_tensors(mesh, scale, omega_min) {
                log::warn!("precomputing modes on the {mesh:?} grid failed: {e}");
            }
        }
    }
    let mut rows: Vec<SweepRow> = plan
        .values
        .par_iter()
        .map(|&v| match eval(v) {
            Ok(r) => SweepRow::from_result(v, &r),
            Err(e) => {
                log::warn!("sweep point {} = {v} failed: {e}", plan.axis.name());
                SweepRow::failed(v, e.to_string())
            }
        })
        .collect();
    fill_ratios(&mut rows);
    Ok(SweepResult { rows, metadata: metadata(plan.axis, &plan.base, plan.seed) })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationKind {
    /// Every derivative of one channel doubled.
    CouplingX2(Channel),
    /// Every phonon frequency multiplied by 0.8, eigenvectors unchanged.
    FreqX08,
}

/// Baseline and perturbed rows; `tau_ratio` of the second row is
/// τ(perturbed)/τ(baseline).
pub fn perturbation_study(pipeline: &Pipeline, base: &PointParams, kind: PerturbationKind) -> Result<SweepResult> {
    let (axis, factor) = match kind {
        PerturbationKind::CouplingX2(ch) => (SweepAxis::CouplingScale(ch), 2.0),
        PerturbationKind::FreqX08 => (SweepAxis::FrequencyScale, 0.8),
    };
    run_sweep(pipeline, &SweepPlan::new(axis, vec![1.0, factor], base.clone()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceStep {
    pub sigma_cm1: f64,
    pub n: usize,
    pub tau_ms: Option<f64>,
    /// |τ/τ_previous grid − 1|.
    pub rel_change: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub threshold: f64,
    pub steps: Vec<ConvergenceStep>,
    /// Per σ: the first grid whose change fell below the threshold, and τ there.
    pub converged: Vec<(f64, Option<usize>, Option<f64>)>,
    /// First σ whose converged τ differs from the previous σ by less than
    /// the threshold.
    pub sigma_converged: Option<f64>,
    pub code_version: String,
}

/// Nested protocol: for each σ (in the given order) refine the grid until
/// the relative change of τ drops below `threshold`, then move to the next σ.
pub fn converge(
    pipeline: &Pipeline,
    base: &PointParams,
    sigmas: &[f64],
    grids: &[usize],
    threshold: f64,
) -> Result<ConvergenceReport> {
    if sigmas.is_empty() || grids.is_empty() {
        return Err(invalid("convergence needs at least one σ and one grid"));
    }
    if !(threshold > 0.0) {
        return Err(invalid(format!("threshold must be positive, got {threshold}")));
    }
    let mut steps = Vec::new();
    let mut converged = Vec::new();
    let mut sigma_converged = None;
    let mut previous_sigma_tau: Option<f64> = None;
    for &sigma in sigmas {
        let mut prev: Option<f64> = None;
        let mut hit = (None, None);
        let mut last = None;
        for &n in grids {
            let p = PointParams { sigma, mesh: [n; 3], ..base.clone() };
            let step = match pipeline.evaluate(&p) {
                Ok(r) => {
                    let tau = r.relaxation.tau_ms;
                    let rel = prev.map(|t| (tau / t - 1.0).abs());
                    prev = Some(tau);
                    last = Some(tau);
                    ConvergenceStep { sigma_cm1: sigma, n, tau_ms: Some(tau), rel_change: rel, error: None }
                }
                Err(e) => ConvergenceStep { sigma_cm1: sigma, n, tau_ms: None, rel_change: None, error: Some(e.to_string()) },
            };
            let done = step.rel_change.is_some_and(|c| c < threshold);
            if done {
                hit = (Some(n), step.tau_ms);
            }
            steps.push(step);
            if done {
                break;
            }
        }
        converged.push((sigma, hit.0, hit.1));
        let tau_sigma = hit.1.or(last);
        if sigma_converged.is_none() {
            if let (Some(a), Some(b)) = (previous_sigma_tau, tau_sigma) {
                if hit.0.is_some() && (b / a - 1.0).abs() < threshold {
                    sigma_converged = Some(sigma);
                }
            }
        }
        previous_sigma_tau = tau_sigma;
    }
    Ok(ConvergenceReport { threshold, steps, converged, sigma_converged, code_version: CODE_VERSION.to_string() })
}
