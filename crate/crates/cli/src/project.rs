//! Project configuration and loading of a complete model from disk.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use spinrelax_core::coupling::{dipolar_derivative_set, Channel, ChannelSet, CouplingDerivativeSet, Provenance, DEFAULT_REJECTION};
use spinrelax_core::hamiltonian::dipolar_tensor;
use spinrelax_core::lattice::{CrystalModel, ForceConstantSet};
use spinrelax_core::spin::{CouplingTag, Magneton, SpinCenter, SpinKind, SpinSystem, DEFAULT_DIMENSION_CAP};
use spinrelax_core::sweep::{PointParams, SweepAxis, SweepContext, SweepPlan};
use spinrelax_core::{Tensor3, Vec3};

use crate::error::{CliError, CliResult};
use crate::formats::{self, CrystalDoc};

fn default_true() -> bool {
    true
}

fn default_cap() -> usize {
    DEFAULT_DIMENSION_CAP
}

fn default_rejection() -> f64 {
    DEFAULT_REJECTION
}

fn default_sum_rule_tolerance() -> f64 {
    1e-6
}

fn default_channels() -> Vec<Channel> {
    Channel::ALL.to_vec()
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

fn matrix(m: &[[f64; 3]; 3]) -> Tensor3 {
    Tensor3::from_fn(|r, c| m[r][c])
}

fn rows(t: &Tensor3) -> [[f64; 3]; 3] {
    [0, 1, 2].map(|r| [0, 1, 2].map(|c| t[(r, c)]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigUnits {
    pub field: String,
    pub temperature: String,
    pub frequency: String,
}

impl Default for ConfigUnits {
    fn default() -> Self {
        Self { field: "T".into(), temperature: "K".into(), frequency: "cm-1".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpinUnits {
    pub energy: String,
    pub length: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KindDoc {
    Electronic,
    Nuclear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MagnetonDoc {
    Bohr,
    Nuclear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TagDoc {
    Hyperfine,
    Dipolar,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CenterDoc {
    pub kind: KindDoc,
    pub s: f64,
    pub g: [[f64; 3]; 3],
    /// Carrier atom; the position is taken from the crystal.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub atom: Option<usize>,
    #[serde(default)]
    pub cell: [i32; 3],
    /// Å; only used without a carrier atom.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub magneton: Option<MagnetonDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingDoc {
    pub i: usize,
    pub j: usize,
    pub tensor: [[f64; 3]; 3],
    pub tag: TagDoc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpinSystemDoc {
    pub units: SpinUnits,
    pub centers: Vec<CenterDoc>,
    #[serde(default)]
    pub couplings: Vec<CouplingDoc>,
    #[serde(default = "default_true")]
    pub nuclear_zeeman: bool,
    #[serde(default = "default_cap")]
    pub dimension_cap: usize,
    /// Add point-dipole couplings and their analytic derivatives between
    /// all electronic centres.
    #[serde(default)]
    pub dipolar_from_geometry: bool,
}

impl SpinSystemDoc {
    pub fn from_system(sys: &SpinSystem) -> Self {
        let centers = sys
            .centers
            .iter()
            .map(|c| CenterDoc {
                kind: match c.kind {
                    SpinKind::Electronic => KindDoc::Electronic,
                    SpinKind::Nuclear => KindDoc::Nuclear,
                },
                s: c.s(),
                g: rows(&c.g),
                atom: c.site.map(|s| s.atom),
                cell: c.site.map_or([0; 3], |s| s.cell),
                position: if c.site.is_some() { None } else { Some([c.position.x, c.position.y, c.position.z]) },
                magneton: None,
            })
            .collect();
        let couplings = sys
            .couplings
            .iter()
            .filter(|p| p.tag != CouplingTag::Dipolar)
            .map(|p| CouplingDoc {
                i: p.i,
                j: p.j,
                tensor: rows(&p.tensor),
                tag: match p.tag {
                    CouplingTag::Hyperfine => TagDoc::Hyperfine,
                    CouplingTag::Dipolar => TagDoc::Dipolar,
                    CouplingTag::Custom => TagDoc::Custom,
                },
            })
            .collect();
        Self {
            units: SpinUnits { energy: "cm-1".into(), length: "angstrom".into() },
            centers,
            couplings,
            nuclear_zeeman: sys.nuclear_zeeman,
            dimension_cap: sys.dimension_cap,
            dipolar_from_geometry: sys.couplings.iter().any(|p| p.tag == CouplingTag::Dipolar),
        }
    }

    /// Builds the spin system at field `field`, plus the analytic dipolar
    /// derivatives when geometry-derived couplings are requested.
    pub fn build(&self, crystal: &CrystalModel, field: Vec3) -> CliResult<(SpinSystem, Option<CouplingDerivativeSet>)> {
        if self.units.energy != "cm-1" || self.units.length != "angstrom" {
            return Err(CliError::Validation(format!(
                "spin_system units must be cm-1/angstrom, found {}/{}",
                self.units.energy, self.units.length
            )));
        }
        let mut centers = Vec::with_capacity(self.centers.len());
        for (id, c) in self.centers.iter().enumerate() {
            let kind = match c.kind {
                KindDoc::Electronic => SpinKind::Electronic,
                KindDoc::Nuclear => SpinKind::Nuclear,
            };
            let mut center = SpinCenter::new(id, kind, c.s, matrix(&c.g))?;
            if let Some(m) = c.magneton {
                center.magneton = match m {
                    MagnetonDoc::Bohr => Magneton::Bohr,
                    MagnetonDoc::Nuclear => Magneton::Nuclear,
                };
            }
            center = match (c.atom, c.position) {
                (Some(_), Some(_)) => {
                    return Err(CliError::Validation(format!("centre {id}: give either 'atom' or 'position', not both")))
                }
                (Some(atom), None) => {
                    if atom >= crystal.n_atoms() {
                        return Err(CliError::Validation(format!("centre {id}: atom {atom} not in crystal")));
                    }
                    center.with_site(atom, c.cell).with_position(crystal.cartesian_in_cell(atom, c.cell))
                }
                (None, Some(p)) => center.with_position(Vec3::from(p)),
                (None, None) => center,
            };
            centers.push(center);
        }
        let mut sys = SpinSystem::new(centers, field);
        sys.nuclear_zeeman = self.nuclear_zeeman;
        sys.dimension_cap = self.dimension_cap;
        for p in &self.couplings {
            let tag = match p.tag {
                TagDoc::Hyperfine => CouplingTag::Hyperfine,
                TagDoc::Dipolar => CouplingTag::Dipolar,
                TagDoc::Custom => CouplingTag::Custom,
            };
            sys = sys.with_coupling(p.i, p.j, matrix(&p.tensor), tag);
        }
        sys.validate()?;
        if !self.dipolar_from_geometry {
            return Ok((sys, None));
        }
        let electrons: Vec<usize> =
            sys.centers.iter().filter(|c| c.kind == SpinKind::Electronic).map(|c| c.id).collect();
        for (k, &i) in electrons.iter().enumerate() {
            for &j in &electrons[k + 1..] {
                if sys.coupling(i, j, CouplingTag::Dipolar).is_some() {
                    continue;
                }
                let (ci, cj) = (&sys.centers[i], &sys.centers[j]);
                let d = dipolar_tensor(ci, cj, &(cj.position - ci.position))?;
                sys = sys.with_coupling(i, j, d, CouplingTag::Dipolar);
            }
        }
        sys.validate()?;
        let derivs = dipolar_derivative_set(&sys, crystal)?;
        Ok((sys, Some(derivs)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    /// Spin-carrying atoms of one cell (spin-count sweeps only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub carriers: Vec<usize>,
    #[serde(default)]
    pub replication_axis: usize,
}

impl SweepDoc {
    pub fn label(&self, k: usize) -> String {
        self.name.clone().unwrap_or_else(|| format!("sweep{k}_{}", self.axis.name()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectConfig {
    pub units: ConfigUnits,
    pub crystal: PathBuf,
    pub force_constants: PathBuf,
    #[serde(default)]
    pub derivatives: Vec<PathBuf>,
    /// Displacement scans, fitted on load.
    #[serde(default)]
    pub scans: Vec<PathBuf>,
    #[serde(default = "default_rejection")]
    pub rejection_threshold: f64,
    #[serde(default)]
    pub enforce_sum_rule: bool,
    /// eV/Å².
    #[serde(default = "default_sum_rule_tolerance")]
    pub sum_rule_tolerance: f64,
    pub spin_system: SpinSystemDoc,
    pub field: [f64; 3],
    pub temperature: f64,
    pub grid: [usize; 3],
    pub sigma: f64,
    #[serde(default = "default_channels")]
    pub channels: Vec<Channel>,
    #[serde(default)]
    pub secular: bool,
    #[serde(default)]
    pub sweeps: Vec<SweepDoc>,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

/// Parameters of a run after command-line overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub field: [f64; 3],
    pub temperature: f64,
    pub grid: [usize; 3],
    pub sigma: f64,
    pub channels: Vec<Channel>,
    pub secular: bool,
    pub seed: u64,
}

impl RunSettings {
    pub fn from_config(c: &ProjectConfig) -> Self {
        Self {
            field: c.field,
            temperature: c.temperature,
            grid: c.grid,
            sigma: c.sigma,
            channels: c.channels.clone(),
            secular: c.secular,
            seed: c.seed,
        }
    }

    pub fn channel_set(&self) -> CliResult<ChannelSet> {
        if self.channels.is_empty() {
            return Err(CliError::Validation("channel list is empty".into()));
        }
        Ok(self.channels.iter().fold(ChannelSet::none(), |s, c| s.with(*c)))
    }

    pub fn point_params(&self) -> CliResult<PointParams> {
        let p = PointParams {
            field: Vec3::from(self.field),
            temperature: self.temperature,
            sigma: self.sigma,
            mesh: self.grid,
            channels: self.channel_set()?,
            secular: self.secular,
            ..PointParams::default()
        };
        p.validate()?;
        Ok(p)
    }

    pub fn plan(&self, doc: &SweepDoc) -> CliResult<SweepPlan> {
        let plan = SweepPlan {
            seed: self.seed,
            carriers: doc.carriers.clone(),
            replication_axis: doc.replication_axis,
            ..SweepPlan::new(doc.axis, doc.values.clone(), self.point_params()?)
        };
        plan.validate()?;
        Ok(plan)
    }
}

/// SHA-256 of the canonical JSON of the configuration and the effective
/// settings, as lowercase hex.
pub fn config_hash(config: &ProjectConfig, settings: &RunSettings) -> String {
    let bytes = serde_json::to_vec(&(config, settings)).expect("config serializes");
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// A fully loaded and validated model.
#[derive(Debug, Clone)]
pub struct Project {
    pub path: PathBuf,
    pub config: ProjectConfig,
    pub crystal: CrystalModel,
    pub force_constants: ForceConstantSet,
    pub derivatives: CouplingDerivativeSet,
    pub system: SpinSystem,
}

impl Project {
    pub fn context(&self) -> SweepContext {
        SweepContext {
            crystal: self.crystal.clone(),
            force_constants: self.force_constants.clone(),
            derivatives: self.derivatives.clone(),
            system: self.system.clone(),
        }
    }

    /// Output directory, relative paths taken from the config location.
    pub fn output_dir(&self, overridden: Option<&Path>) -> PathBuf {
        match overridden {
            Some(p) => p.to_path_buf(),
            None => resolve(&self.path, &self.config.output),
        }
    }
}

fn resolve(config_path: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        config_path.parent().unwrap_or(Path::new(".")).join(p)
    }
}

fn check_units(path: &Path, u: &ConfigUnits) -> CliResult<()> {
    let want = ConfigUnits::default();
    if *u != want {
        return Err(CliError::Units {
            path: path.to_path_buf(),
            msg: format!(
                "config units must be field={}, temperature={}, frequency={}",
                want.field, want.temperature, want.frequency
            ),
        });
    }
    Ok(())
}

pub fn load_config(path: &Path) -> CliResult<ProjectConfig> {
    let config: ProjectConfig = formats::parse_json(path, &formats::read_to_string(path)?)?;
    check_units(path, &config.units)?;
    if !(config.rejection_threshold > 0.0) || !(config.sum_rule_tolerance > 0.0) {
        return Err(CliError::Validation("rejection_threshold and sum_rule_tolerance must be positive".into()));
    }
    Ok(config)
}

/// Reads the configuration and every file it references, checking all
/// invariants of the resulting model.
pub fn load_project(path: &Path) -> CliResult<Project> {
    let config = load_config(path)?;
    let crystal_path = resolve(path, &config.crystal);
    let doc: CrystalDoc = formats::parse_json(&crystal_path, &formats::read_to_string(&crystal_path)?)?;
    let crystal = doc.to_model(&crystal_path)?;

    let fc_path = resolve(path, &config.force_constants);
    let mut fc = formats::parse_force_constants(&fc_path, &formats::read_to_string(&fc_path)?, crystal.masses())?;
    let residual = fc.sum_rule_residual();
    if residual > config.sum_rule_tolerance {
        if !config.enforce_sum_rule {
            return Err(CliError::SumRule { path: fc_path, residual, tolerance: config.sum_rule_tolerance });
        }
        fc = fc.enforce_acoustic_sum_rule();
        log::info!("acoustic sum rule enforced (residual was {residual:.3e} eV/Å²)");
    }

    let mut derivatives = CouplingDerivativeSet::empty(Provenance::Fitted);
    for p in &config.derivatives {
        let p = resolve(path, p);
        derivatives = derivatives.merged(&formats::parse_derivatives(&p, &formats::read_to_string(&p)?)?);
    }
    for p in &config.scans {
        let p = resolve(path, p);
        let scans = formats::parse_scans(&p, &formats::read_to_string(&p)?)?;
        derivatives = derivatives.merged(&formats::fit_scans(&scans, config.rejection_threshold)?);
    }
    let (system, dipolar) = config.spin_system.build(&crystal, Vec3::from(config.field))?;
    if let Some(d) = dipolar {
        derivatives = derivatives.merged(&d);
    }
    derivatives.validate(crystal.n_atoms(), Some(&system))?;
    RunSettings::from_config(&config).point_params()?;
    for (k, s) in config.sweeps.iter().enumerate() {
        RunSettings::from_config(&config)
            .plan(s)
            .map_err(|e| CliError::Validation(format!("sweep '{}': {e}", s.label(k))))?;
    }
    Ok(Project { path: path.to_path_buf(), config, crystal, force_constants: fc, derivatives, system })
}
