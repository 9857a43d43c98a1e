use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use crate::coupling::{Channel, ChannelSet, CouplingDerivativeSet, ModeTensors, OperatorBasis, StandingWave};
use crate::coupling::DEFAULT_OMEGA_MIN;
use crate::error::invalid;
use crate::hamiltonian::{assemble_hamiltonian, SpinHamiltonian};
use crate::lattice::{kpoint_grid, CrystalModel, ForceConstantSet, PhononGrid};
use crate::redfield::{
    extract_relaxation_time, PhononCorrelation, RedfieldBuilder, RedfieldOptions, RedfieldTensor, Relaxation,
    RelaxationOptions,
};
use crate::spin::{build_spin_operators, SpinOperators, SpinSystem};
use crate::{Result, Vec3};

/// Everything a relaxation run needs besides the scanned parameters.
#[derive(Debug, Clone)]
pub struct SweepContext {
    pub crystal: CrystalModel,
    pub force_constants: ForceConstantSet,
    pub derivatives: CouplingDerivativeSet,
    pub system: SpinSystem,
}

/// Parameters of one relaxation evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct PointParams {
    /// Tesla.
    pub field: Vec3,
    /// K.
    pub temperature: f64,
    /// cm⁻¹.
    pub sigma: f64,
    pub mesh: [usize; 3],
    /// Multipliers of the zeeman, hyperfine and dipolar derivatives.
    pub coupling_scales: [f64; 3],
    pub frequency_scale: f64,
    pub channels: ChannelSet,
    pub secular: bool,
    pub exp_fit: bool,
    /// Also report τ for each channel on its own.
    pub per_channel: bool,
    pub omega_min: f64,
}

impl Default for PointParams {
    fn default() -> Self {
        Self {
            field: Vec3::new(0.0, 0.0, 5.0),
            temperature: 20.0,
            sigma: 1.0,
            mesh: [4, 4, 4],
            coupling_scales: [1.0; 3],
            frequency_scale: 1.0,
            channels: ChannelSet::all(),
            secular: false,
            exp_fit: true,
            per_channel: true,
            omega_min: DEFAULT_OMEGA_MIN,
        }
    }
}

impl PointParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return Err(invalid(format!("temperature must be positive, got {}", self.temperature)));
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(invalid(format!("sigma must be positive, got {}", self.sigma)));
        }
        if self.mesh.iter().any(|&n| n == 0) {
            return Err(invalid("grid dimensions must be ≥ 1"));
        }
        if !(self.frequency_scale > 0.0) || self.coupling_scales.iter().any(|c| !c.is_finite()) {
            return Err(invalid("frequency scale must be positive and coupling scales finite"));
        }
        if self.field.iter().any(|b| !b.is_finite()) {
            return Err(invalid("field must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct PointResult {
    pub relaxation: Relaxation,
    pub channel_tau_ms: [Option<f64>; 3],
    pub tensor: Arc<RedfieldTensor>,
    pub hamiltonian: SpinHamiltonian,
    pub imaginary_modes: usize,
    pub skipped_modes: usize,
}

type TensorKey = ([usize; 3], u64);

/// Cached stages: phonon grids per mesh and projected mode tensors per
/// (mesh, frequency scale). Field and temperature changes reuse both.
pub struct Pipeline {
    pub context: SweepContext,
    pub ops: SpinOperators,
    phonons: Mutex<HashMap<[usize; 3], Arc<PhononGrid>>>,
    tensors: Mutex<HashMap<TensorKey, Arc<(Vec<ModeTensors>, usize)>>>,
    pub use_cache: bool,
}

impl Pipeline {
    pub fn new(context: SweepContext) -> Result<Self> {
        // Points already run in parallel; sequential dense kernels keep
        // results bit-identical between runs.
        faer::set_global_parallelism(faer::Par::Seq);
        context.system.validate()?;
        context.crystal.validate()?;
        context.derivatives.validate(context.crystal.n_atoms(), Some(&context.system))?;
        if context.force_constants.n_atoms() != context.crystal.n_atoms() {
            return Err(invalid("force constants and crystal have different atom counts"));
        }
        let ops = build_spin_operators(&context.system)?;
        Ok(Self { context, ops, phonons: Mutex::new(HashMap::new()), tensors: Mutex::new(HashMap::new()), use_cache: true })
    }

    pub fn without_cache(mut self) -> Self {
        self.use_cache = false;
        self
    }

    pub fn phonons(&self, mesh: [usize; 3]) -> Result<Arc<PhononGrid>> {
        if self.use_cache {
            if let Some(g) = self.phonons.lock().unwrap().get(&mesh) {
                return Ok(g.clone());
            }
        }
        let grid = Arc::new(PhononGrid::compute(&self.context.force_constants, mesh, &kpoint_grid(mesh)?)?);
        if grid.imaginary_count() > 0 {
            log::warn!("{} imaginary modes on the {mesh:?} grid are excluded", grid.imaginary_count());
        }
        if self.use_cache {
            self.phonons.lock().unwrap().insert(mesh, grid.clone());
        }
        Ok(grid)
    }

    /// Projected ∂T/∂Q for every stable mode above the frequency floor,
    /// with the number of modes left out.
    pub fn mode_tensors(&self, mesh: [usize; 3], frequency_scale: f64, omega_min: f64) -> Result<Arc<(Vec<ModeTensors>, usize)>> {
        let key = (mesh, frequency_scale.to_bits() ^ omega_min.to_bits().rotate_left(17));
        if self.use_cache {
            if let Some(t) = self.tensors.lock().unwrap().get(&key) {
                return Ok(t.clone());
            }
        }
        let grid = self.phonons(mesh)?;
        let grouped = crate::coupling::project::GroupedDerivatives::new(&self.context.derivatives, ChannelSet::all());
        let masses = self.context.crystal.masses();
        let n_q = grid.n_q();
        let mut out = Vec::new();
        let mut skipped = 0;
        for (qi, point) in grid.points.iter().enumerate() {
            for mode in &point.modes {
                let mode = if frequency_scale == 1.0 { mode.clone() } else { mode.with_scaled_frequency(frequency_scale) };
                if mode.imaginary || mode.omega < omega_min {
                    skipped += 1;
                    continue;
                }
                let mt = grouped.project(&mode, qi, &masses, n_q);
                if !mt.is_zero() {
                    out.push(mt);
                }
            }
        }
        let entry = Arc::new((out, skipped));
        if self.use_cache {
            self.tensors.lock().unwrap().insert(key, entry.clone());
        }
        Ok(entry)
    }

    /// Assembles R for one parameter point.
    pub fn redfield(&self, p: &PointParams, h: &SpinHamiltonian, system: &SpinSystem) -> Result<(RedfieldTensor, usize)> {
        let tensors = self.mode_tensors(p.mesh, p.frequency_scale, p.omega_min)?;
        let pc = PhononCorrelation::new(p.sigma, p.temperature)?;
        let opts = RedfieldOptions { secular: p.secular, channels: p.channels, omega_min: p.omega_min, ..Default::default() };
        let targets = crate::coupling::project::GroupedDerivatives::new(&self.context.derivatives, p.channels).targets();
        let basis = OperatorBasis::new(system, &self.ops, h, &targets)?;
        let mut builder = RedfieldBuilder::new(h, pc, opts)?;
        for mt in tensors.0.iter() {
            if !builder.in_window(mt.omega) {
                continue;
            }
            for wave in [StandingWave::Cos, StandingWave::Sin] {
                for ch in p.channels.iter() {
                    let scale = p.coupling_scales[ch.index()];
                    let parts: Vec<_> = mt
                        .wave(wave)
                        .filter(|(t, m)| t.channel() == ch && m.iter().any(|x| *x != 0.0))
                        .map(|(t, m)| (t, m * scale))
                        .collect();
                    if parts.is_empty() || scale == 0.0 {
                        continue;
                    }
                    let v = basis.operator(parts, true)?;
                    builder.add(ch, mt.omega, &v)?;
                }
            }
        }
        Ok((builder.finish(), tensors.1))
    }

    /// Full evaluation of τ at one parameter point.
    pub fn evaluate(&self, p: &PointParams) -> Result<PointResult> {
        p.validate()?;
        let system = self.context.system.with_field(p.field);
        let h = assemble_hamiltonian(&system, &self.ops)?;
        let (r, skipped) = self.redfield(p, &h, &system)?;
        let ropts = RelaxationOptions { exp_fit: p.exp_fit, ..Default::default() };
        let relaxation = extract_relaxation_time(&r, &h, &self.ops, &system, p.temperature, &ropts)?;
        let mut channel_tau_ms = [None; 3];
        if p.per_channel {
            let quick = RelaxationOptions { exp_fit: false, ..Default::default() };
            for ch in Channel::ALL {
                if !p.channels.contains(ch) || r.partials.get(&ch).is_none() {
                    continue;
                }
                let rc = r.channel_only(ch);
                if rc.max_rate() == 0.0 {
                    continue;
                }
                channel_tau_ms[ch.index()] =
                    Some(extract_relaxation_time(&rc, &h, &self.ops, &system, p.temperature, &quick)?.tau_ms);
            }
        }
        let imaginary_modes = self.phonons(p.mesh)?.imaginary_count();
        Ok(PointResult {
            relaxation,
            channel_tau_ms,
            tensor: Arc::new(r),
            hamiltonian: h,
            imaginary_modes,
            skipped_modes: skipped,
        })
    }
}
