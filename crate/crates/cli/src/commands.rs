//! Implementations of the subcommands. Each returns a short text summary
//! for the terminal; tables and sidecars go to the output directory.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use spinrelax_core::coupling::{coupling_norm_distribution, Channel, DEFAULT_OMEGA_MIN};
use spinrelax_core::lattice::{kpoint_grid, phonon_dos, phonon_modes, PhononGrid};
use spinrelax_core::sweep::{converge, perturbation_study, run_sweep, PerturbationKind, Pipeline, SweepAxis, SweepPlan};
use spinrelax_core::toy::{generate_toy_crystal, ToySpec};
use spinrelax_core::Vec3;

use crate::error::{CliError, CliResult};
use crate::formats::{self, CrystalDoc};
use crate::output::{self, num, opt, RunInfo, Table};
use crate::project::{
    config_hash, load_project, ConfigUnits, Project, ProjectConfig, RunSettings, SpinSystemDoc, SweepDoc,
};

/// Command-line values that take precedence over the configuration.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub grid: Option<[usize; 3]>,
    pub sigma: Option<f64>,
    pub temperature: Option<f64>,
    pub field: Option<[f64; 3]>,
    pub channels: Option<Vec<Channel>>,
    pub secular: Option<bool>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
}

impl Overrides {
    pub fn apply(&self, mut s: RunSettings) -> RunSettings {
        if let Some(g) = self.grid {
            s.grid = g;
        }
        if let Some(x) = self.sigma {
            s.sigma = x;
        }
        if let Some(t) = self.temperature {
            s.temperature = t;
        }
        if let Some(b) = self.field {
            s.field = b;
        }
        if let Some(c) = &self.channels {
            s.channels = c.clone();
        }
        if let Some(x) = self.secular {
            s.secular = x;
        }
        if let Some(x) = self.seed {
            s.seed = x;
        }
        s
    }
}

/// A loaded project with its effective settings and output stamp.
pub struct Session {
    pub project: Project,
    pub settings: RunSettings,
    pub out: PathBuf,
    pub hash: String,
}

impl Session {
    pub fn open(config: &Path, o: &Overrides) -> CliResult<Self> {
        let project = load_project(config)?;
        let settings = o.apply(RunSettings::from_config(&project.config));
        settings.point_params()?;
        let out = project.output_dir(o.out.as_deref());
        let hash = config_hash(&project.config, &settings);
        Ok(Self { project, settings, out, hash })
    }

    pub fn info(&self, command: &str) -> RunInfo {
        RunInfo::new(self.hash.clone(), command)
    }

    pub fn pipeline(&self) -> CliResult<Pipeline> {
        Ok(Pipeline::new(self.project.context())?)
    }
}

fn wrote(summary: &mut String, paths: &[&Path]) {
    for p in paths {
        let _ = writeln!(summary, "wrote {}", p.display());
    }
}

/// Modes on the configured grid, or along a straight path in reciprocal
/// space when `path` is given as "q1;q2;..." with fractional coordinates.
pub fn phonons(s: &Session, path: Option<&str>, points: usize) -> CliResult<String> {
    let fc = &s.project.force_constants;
    let info = s.info("phonons");
    let mut summary = String::new();
    match path {
        None => {
            let grid = PhononGrid::compute(fc, s.settings.grid, &kpoint_grid(s.settings.grid)?)?;
            let mut t = Table::new(&["q1", "q2", "q3", "branch", "omega_cm1", "imaginary"]);
            for p in &grid.points {
                for m in &p.modes {
                    t.push(vec![num(p.q.x), num(p.q.y), num(p.q.z), m.branch.to_string(), num(m.omega), m.imaginary.to_string()]);
                }
            }
            let f = output::write_table(&s.out, "phonons", &t, &info)?;
            let _ = writeln!(
                summary,
                "{} q-points, {} branches, max {:.3} cm-1, {} imaginary",
                grid.points.len(),
                fc.n_branches(),
                grid.max_frequency(),
                grid.imaginary_count()
            );
            wrote(&mut summary, &[&f]);
        }
        Some(spec) => {
            let nodes = parse_path(spec)?;
            if points < 2 {
                return Err(CliError::Usage("--points must be at least 2".into()));
            }
            let mut t = Table::new(&["distance", "q1", "q2", "q3", "branch", "omega_cm1", "imaginary"]);
            let mut dist = 0.0;
            for (k, w) in nodes.windows(2).enumerate() {
                for i in 0..points {
                    if k > 0 && i == 0 {
                        continue;
                    }
                    let f = i as f64 / (points - 1) as f64;
                    let q = w[0] + (w[1] - w[0]) * f;
                    let d = dist + (w[1] - w[0]).norm() * f;
                    for m in phonon_modes(fc, &q)? {
                        t.push(vec![num(d), num(q.x), num(q.y), num(q.z), m.branch.to_string(), num(m.omega), m.imaginary.to_string()]);
                    }
                }
                dist += (w[1] - w[0]).norm();
            }
            let f = output::write_table(&s.out, "bands", &t, &info)?;
            let _ = writeln!(summary, "{} segments, {} rows", nodes.len() - 1, t.rows.len());
            wrote(&mut summary, &[&f]);
        }
    }
    Ok(summary)
}

fn parse_path(spec: &str) -> CliResult<Vec<Vec3>> {
    let nodes = spec
        .split(';')
        .map(|p| parse_vec3(p).map(Vec3::from))
        .collect::<CliResult<Vec<_>>>()?;
    if nodes.len() < 2 {
        return Err(CliError::Usage("a band path needs at least two q-points".into()));
    }
    Ok(nodes)
}

pub fn parse_vec3(s: &str) -> CliResult<[f64; 3]> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::Usage(format!("'{s}' is not three comma-separated numbers")))?;
    let arr: [f64; 3] = v.try_into().map_err(|_| CliError::Usage(format!("'{s}' needs exactly three values")))?;
    if arr.iter().any(|x| !x.is_finite()) {
        return Err(CliError::Usage(format!("'{s}' contains a non-finite value")));
    }
    Ok(arr)
}

pub fn parse_grid(s: &str) -> CliResult<[usize; 3]> {
    let v: Vec<usize> = s
        .split(',')
        .map(|x| x.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::Usage(format!("'{s}' is not a grid like 16,16,16")))?;
    match v.as_slice() {
        [n] => Ok([*n; 3]),
        [a, b, c] => Ok([*a, *b, *c]),
        _ => Err(CliError::Usage(format!("'{s}' needs one or three values"))),
    }
}

pub fn parse_list(s: &str) -> CliResult<Vec<f64>> {
    s.split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|_| CliError::Usage(format!("'{x}' in '{s}' is not a number"))))
        .collect()
}

pub fn dos(s: &Session) -> CliResult<String> {
    let p = &s.project;
    let d = phonon_dos(&p.force_constants, &p.crystal, s.settings.grid, s.settings.sigma)?;
    let (tr, rot, intra) = d.decomposition();
    let mut t = Table::new(&["omega_cm1", "total", "trans", "rot", "intra"]);
    for k in 0..d.freqs.len() {
        t.push(vec![num(d.freqs[k]), num(d.total[k]), num(tr[k]), num(rot[k]), num(intra[k])]);
    }
    let info = s.info("dos");
    let f = output::write_table(&s.out, "dos", &t, &info)?;
    let json = output::write_sidecar(&s.out, "dos", &info, &s.settings, &d)?;
    let mut summary = format!(
        "DOS on {:?} grid, sigma {} cm-1: area {:.6} (3N = {})\n",
        d.mesh,
        d.sigma,
        d.area(),
        3 * p.crystal.n_atoms()
    );
    wrote(&mut summary, &[&f, &json]);
    Ok(summary)
}

pub fn couple(s: &Session, bin_width: f64) -> CliResult<String> {
    let pipeline = s.pipeline()?;
    let tensors = pipeline.mode_tensors(s.settings.grid, 1.0, DEFAULT_OMEGA_MIN)?;
    let dist = coupling_norm_distribution(&tensors.0, bin_width)?;
    let info = s.info("couple");
    let mut branches = Table::new(&["branch", "omega_cm1", "v2_zeeman", "v2_hyperfine", "v2_dipolar"]);
    for b in &dist.branches {
        branches.push(vec![b.branch.to_string(), num(b.omega), num(b.v2[0]), num(b.v2[1]), num(b.v2[2])]);
    }
    let mut bins = Table::new(&["omega_cm1", "v2_zeeman", "v2_hyperfine", "v2_dipolar"]);
    for b in &dist.bins {
        bins.push(vec![num(b.omega), num(b.v2[0]), num(b.v2[1]), num(b.v2[2])]);
    }
    let f1 = output::write_table(&s.out, "couple_branches", &branches, &info)?;
    let f2 = output::write_table(&s.out, "couple_bins", &bins, &info)?;
    let f3 = output::write_sidecar(&s.out, "couple", &info, &s.settings, &dist)?;
    let mut summary = format!("{} branches, {} modes skipped\n", dist.branches.len(), tensors.1);
    wrote(&mut summary, &[&f1, &f2, &f3]);
    Ok(summary)
}

pub fn relax(s: &Session) -> CliResult<String> {
    let pipeline = s.pipeline()?;
    let plan = SweepPlan { seed: s.settings.seed, ..SweepPlan::new(SweepAxis::Temperature, vec![s.settings.temperature], s.settings.point_params()?) };
    let result = run_sweep(&pipeline, &plan)?;
    let row = &result.rows[0];
    if let Some(e) = &row.error {
        return Err(CliError::Numerical(e.clone()));
    }
    let (csv, json) = output::write_results(&s.out, "relax", &result, &s.info("relax"), &s.settings)?;
    let mut summary = format!(
        "tau = {} ms (fit {} ms); per channel zeeman {} hyperfine {} dipolar {}\n",
        opt(row.tau_total_ms),
        opt(row.diagnostics.tau_fit_ms),
        opt(row.tau_channel_ms[0]),
        opt(row.tau_channel_ms[1]),
        opt(row.tau_channel_ms[2])
    );
    let flags = output::flag_names(&row.diagnostics.flags);
    if !flags.is_empty() {
        let _ = writeln!(summary, "flags: {flags}");
    }
    wrote(&mut summary, &[&csv, &json]);
    Ok(summary)
}

fn sweep_summary(summary: &mut String, label: &str, result: &spinrelax_core::sweep::SweepResult) {
    let _ = writeln!(summary, "{label}: {} points, {} failed", result.rows.len(), result.failures());
    for r in &result.rows {
        let _ = writeln!(summary, "  {} {} ms", num(r.value), opt(r.tau_total_ms));
    }
}

/// Runs the sweeps named in the configuration, or a single ad-hoc sweep.
pub fn sweep(s: &Session, adhoc: Option<SweepDoc>, only: Option<&str>) -> CliResult<String> {
    let pipeline = s.pipeline()?;
    let docs: Vec<SweepDoc> = match adhoc {
        Some(d) => vec![d],
        None => s.project.config.sweeps.clone(),
    };
    if docs.is_empty() {
        return Err(CliError::Usage("no sweeps in the configuration; give --axis and --values".into()));
    }
    let mut summary = String::new();
    let mut ran = 0;
    for (k, d) in docs.iter().enumerate() {
        let label = d.label(k);
        if only.is_some_and(|n| n != label) {
            continue;
        }
        let plan = s.settings.plan(d)?;
        let result = run_sweep(&pipeline, &plan)?;
        let (csv, json) = output::write_results(&s.out, &label, &result, &s.info("sweep"), &s.settings)?;
        sweep_summary(&mut summary, &label, &result);
        wrote(&mut summary, &[&csv, &json]);
        ran += 1;
    }
    if ran == 0 {
        return Err(CliError::Usage(format!("no sweep named '{}'", only.unwrap_or(""))));
    }
    Ok(summary)
}

pub fn convergence(s: &Session, sigmas: &[f64], grids: &[usize], threshold: f64) -> CliResult<String> {
    let pipeline = s.pipeline()?;
    let report = converge(&pipeline, &s.settings.point_params()?, sigmas, grids, threshold)?;
    let mut t = Table::new(&["sigma_cm1", "n", "tau_ms", "rel_change", "error"]);
    for st in &report.steps {
        t.push(vec![num(st.sigma_cm1), st.n.to_string(), opt(st.tau_ms), opt(st.rel_change), st.error.clone().unwrap_or_default()]);
    }
    let info = s.info("converge");
    let csv = output::write_table(&s.out, "converge", &t, &info)?;
    let json = output::write_sidecar(&s.out, "converge", &info, &s.settings, &report)?;
    let mut summary = String::new();
    for (sigma, n, tau) in &report.converged {
        let _ = match n {
            Some(n) => writeln!(summary, "sigma {sigma}: converged at {n}^3, tau {} ms", opt(*tau)),
            None => writeln!(summary, "sigma {sigma}: not converged on the given grids"),
        };
    }
    let _ = writeln!(summary, "sigma converged: {}", report.sigma_converged.map_or("no".into(), |x| x.to_string()));
    wrote(&mut summary, &[&csv, &json]);
    Ok(summary)
}

pub fn parse_perturbation(kind: &str, channel: Option<&str>) -> CliResult<PerturbationKind> {
    match kind {
        "coupling-x2" => {
            let ch: Channel = channel
                .ok_or_else(|| CliError::Usage("coupling-x2 needs --channel".into()))?
                .parse()
                .map_err(|e: spinrelax_core::Error| CliError::Usage(e.to_string()))?;
            Ok(PerturbationKind::CouplingX2(ch))
        }
        "freq-x0.8" => Ok(PerturbationKind::FreqX08),
        other => Err(CliError::Usage(format!("unknown perturbation '{other}' (coupling-x2 or freq-x0.8)"))),
    }
}

pub fn perturb(s: &Session, kind: PerturbationKind) -> CliResult<String> {
    let pipeline = s.pipeline()?;
    let result = perturbation_study(&pipeline, &s.settings.point_params()?, kind)?;
    let stem = match kind {
        PerturbationKind::CouplingX2(ch) => format!("perturb_{}_x2", ch.name()),
        PerturbationKind::FreqX08 => "perturb_freq_x0.8".to_string(),
    };
    let (csv, json) = output::write_results(&s.out, &stem, &result, &s.info("perturb"), &s.settings)?;
    let mut summary = format!("tau ratio perturbed/baseline = {}\n", opt(result.rows[1].tau_ratio));
    wrote(&mut summary, &[&csv, &json]);
    Ok(summary)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ToyPreset {
    /// Two five-atom molecules, electron and I = 7/2 nucleus (d = 16).
    Vanadyl,
    /// Same crystal with a bare electron (d = 2).
    VanadylElectron,
    /// Monatomic simple cubic lattice.
    Cubic,
}

impl std::str::FromStr for ToyPreset {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        match s {
            "vanadyl" => Ok(ToyPreset::Vanadyl),
            "vanadyl-electron" => Ok(ToyPreset::VanadylElectron),
            "cubic" => Ok(ToyPreset::Cubic),
            _ => Err(CliError::Usage(format!("unknown preset '{s}' (vanadyl, vanadyl-electron, cubic)"))),
        }
    }
}

impl ToyPreset {
    pub fn spec(self) -> ToySpec {
        match self {
            ToyPreset::Vanadyl => ToySpec::vanadyl_like(),
            ToyPreset::VanadylElectron => ToySpec::vanadyl_like_electron_only(),
            ToyPreset::Cubic => ToySpec::monatomic_cubic(4.0, 50.0, 0.03),
        }
    }
}

/// Writes a synthetic project (crystal, force constants, derivatives and
/// configuration) to `dir`.
pub fn toygen(dir: &Path, preset: ToyPreset, o: &Overrides) -> CliResult<String> {
    let mut spec = preset.spec();
    if let Some(seed) = o.seed {
        spec.seed = seed;
    }
    let toy = generate_toy_crystal(&spec)?;
    output::ensure_dir(dir)?;
    let put = |name: &str, text: String| -> CliResult<PathBuf> {
        let p = dir.join(name);
        std::fs::write(&p, text).map_err(|e| CliError::io(&p, e))?;
        Ok(p)
    };
    let crystal = put(
        "crystal.json",
        serde_json::to_string_pretty(&CrystalDoc::from_model(&toy.crystal)).expect("crystal serializes") + "\n",
    )?;
    let fc = put("force_constants.txt", formats::write_force_constants(&toy.force_constants))?;
    let derivs = put("derivatives.txt", formats::write_derivatives(&toy.derivatives))?;
    let sweeps = match preset {
        ToyPreset::Cubic => Vec::new(),
        _ => vec![
            SweepDoc {
                name: Some("temperature".into()),
                axis: SweepAxis::Temperature,
                values: vec![100.0, 200.0, 400.0, 1000.0],
                carriers: Vec::new(),
                replication_axis: 0,
            },
            SweepDoc {
                name: Some("field".into()),
                axis: SweepAxis::FieldMagnitude,
                values: vec![1.0, 2.0, 5.0, 8.0],
                carriers: Vec::new(),
                replication_axis: 0,
            },
        ],
    };
    let defaults = RunSettings {
        field: [spec.field.x, spec.field.y, spec.field.z],
        temperature: 20.0,
        grid: [4; 3],
        sigma: 1.0,
        channels: Channel::ALL.to_vec(),
        secular: false,
        seed: spec.seed,
    };
    let s = o.apply(defaults);
    let config = ProjectConfig {
        units: ConfigUnits::default(),
        crystal: "crystal.json".into(),
        force_constants: "force_constants.txt".into(),
        derivatives: vec!["derivatives.txt".into()],
        scans: Vec::new(),
        rejection_threshold: spinrelax_core::coupling::DEFAULT_REJECTION,
        enforce_sum_rule: false,
        sum_rule_tolerance: 1e-6,
        spin_system: SpinSystemDoc::from_system(&toy.spin_system),
        field: s.field,
        temperature: s.temperature,
        grid: s.grid,
        sigma: s.sigma,
        channels: s.channels,
        secular: s.secular,
        sweeps,
        output: "out".into(),
        seed: s.seed,
    };
    let cfg = put("project.json", serde_json::to_string_pretty(&config).expect("config serializes") + "\n")?;
    let mut summary = format!(
        "{} atoms, {} spin centres (d = {})\n",
        toy.crystal.n_atoms(),
        toy.spin_system.centers.len(),
        toy.spin_system.dimension()
    );
    wrote(&mut summary, &[&crystal, &fc, &derivs, &cfg]);
    Ok(summary)
}
