//! Worked examples: each manifest entry runs one computation, checks it
//! against a tolerance, and optionally compares a digest of its observables.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use spinrelax_core::coupling::{Channel, ChannelSet};
use spinrelax_core::hamiltonian::SpinHamiltonian;
use spinrelax_core::lattice::{phonon_dos, phonon_modes};
use spinrelax_core::redfield::{PhononCorrelation, RedfieldBuilder, RedfieldOptions};
use spinrelax_core::sweep::{converge, run_sweep, PointParams, SweepAxis, SweepPlan};
use spinrelax_core::units::si;
use spinrelax_core::{CMat, Vec3, C64};

use crate::commands::{Overrides, Session};
use crate::error::{CliError, CliResult};
use crate::formats::{parse_json, read_to_string};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExampleManifest {
    pub examples: Vec<ExampleEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExampleEntry {
    pub id: String,
    pub description: String,
    /// Project configuration, relative to the manifest.
    #[serde(default)]
    pub config: Option<PathBuf>,
    pub check: Check,
    pub tolerance: f64,
    /// SHA-256 of the observables at six significant digits; null skips it.
    #[serde(default)]
    pub digest: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Check {
    /// log τ against log T; |slope - expected| <= tolerance.
    TemperatureSlope { temperatures: Vec<f64>, expected: f64 },
    /// The three lowest |ω| at Γ are below tolerance (cm⁻¹).
    GammaAcoustic,
    /// Redfield transfer rates of random 2- and 3-level systems against a
    /// golden-rule evaluation in SI units, relative tolerance.
    GoldenRule { cases: usize, seed: u64 },
    /// |τ(low)/τ(high) - 1| <= tolerance.
    Plateau { low: f64, high: f64 },
    /// Rigid-body parts add up to the total within tolerance (relative to
    /// the peak) and the area is 3N within `area_tolerance`.
    DosDecomposition { area_tolerance: f64 },
    /// log-log DOS slope over a frequency window.
    DosSlope { window: [f64; 2], expected: f64 },
    /// τ of `faster` alone is below τ of `slower` alone by at least the
    /// factor 1 + tolerance.
    ChannelRanking { faster: Channel, slower: Channel },
    /// Successive grid changes decrease and the last is below tolerance.
    Convergence { sigma: f64, grids: Vec<usize> },
    /// Scaling one channel by `factor` scales τ by 1/factor² (relative tolerance).
    CouplingScaling { channel: Channel, factor: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub pass: bool,
    pub detail: String,
    pub observables: Vec<(String, f64)>,
}

/// Six significant digits, so that digests survive last-bit differences.
pub fn digest(observables: &[(String, f64)]) -> String {
    let mut h = Sha256::new();
    for (name, v) in observables {
        h.update(format!("{name}={v:.5e}\n").as_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Least-squares slope of log y against log x.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Golden-rule rate c → a (ps⁻¹) for one mode with Q = √(ħ/2ωm)(b + b†);
/// `v` is the element for amplitude √(ħ/ωm) in cm⁻¹.
fn golden_rule(e_from: f64, e_to: f64, v: C64, omega: f64, sigma: f64, temperature: f64) -> f64 {
    let j = si::PLANCK * si::SPEED_OF_LIGHT * 100.0;
    let n = 1.0 / ((omega * j / (si::BOLTZMANN * temperature)).exp() - 1.0);
    let w = v.norm() / 2f64.sqrt() * j;
    let delta = |x: f64| (-(x / sigma).powi(2)).exp() / (sigma * std::f64::consts::PI.sqrt()) / j;
    let released = e_from - e_to;
    2.0 * std::f64::consts::PI / si::HBAR * w * w * ((n + 1.0) * delta(released - omega) + n * delta(released + omega)) * 1e-12
}

fn golden_rule_check(cases: usize, seed: u64, tol: f64) -> CliResult<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut compared = 0usize;
    for case in 0..cases {
        let d = 2 + case % 2;
        let mut e: Vec<f64> = (0..d).map(|_| rng.gen_range(0.0..6.0)).collect();
        e.sort_by(f64::total_cmp);
        let h = SpinHamiltonian::from_matrix(CMat::from_fn(d, d, |a, b| {
            if a == b {
                C64::new(e[a], 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        }))?;
        let mut v = CMat::zeros(d, d);
        for a in 0..d {
            v[(a, a)] = C64::new(rng.gen_range(-0.05..0.05), 0.0);
            for b in a + 1..d {
                let z = C64::new(rng.gen_range(-0.05..0.05), rng.gen_range(-0.05..0.05));
                v[(a, b)] = z;
                v[(b, a)] = z.conj();
            }
        }
        let sigma = rng.gen_range(0.5..2.0);
        let temperature = rng.gen_range(2.0..50.0);
        let gaps: Vec<f64> = (0..d).flat_map(|a| (a + 1..d).map(move |b| (a, b))).map(|(a, b)| e[b] - e[a]).collect();
        let omega = gaps[rng.gen_range(0..gaps.len())] + rng.gen_range(-0.5..0.5) * sigma;
        let omega = omega.max(0.2);
        let pc = PhononCorrelation::new(sigma, temperature)?;
        let opts = RedfieldOptions { channels: ChannelSet::all(), secular: case % 4 < 2, ..Default::default() };
        let mut b = RedfieldBuilder::new(&h, pc, opts)?;
        b.add(Channel::Zeeman, omega, &v)?;
        let r = b.finish();
        for c in 0..d {
            for a in 0..d {
                if a == c {
                    continue;
                }
                let want = golden_rule(e[c], e[a], v[(a, c)], omega, sigma, temperature);
                let got = r.transfer_rate(c, a);
                if want > 0.0 {
                    worst = worst.max((got - want).abs() / want);
                    compared += 1;
                } else if got != 0.0 {
                    worst = f64::INFINITY;
                }
            }
        }
    }
    Ok(Outcome {
        pass: worst <= tol,
        detail: format!("{compared} rates over {cases} systems, worst relative error {worst:.2e}"),
        observables: vec![("cases".into(), cases as f64), ("rates".into(), compared as f64)],
    })
}

fn quick(s: &Session) -> CliResult<PointParams> {
    Ok(PointParams { per_channel: false, exp_fit: false, ..s.settings.point_params()? })
}

fn taus(s: &Session, axis: SweepAxis, values: &[f64], base: PointParams) -> CliResult<Vec<f64>> {
    let pipeline = s.pipeline()?;
    let plan = SweepPlan { seed: s.settings.seed, ..SweepPlan::new(axis, values.to_vec(), base) };
    let result = run_sweep(&pipeline, &plan)?;
    result
        .rows
        .iter()
        .map(|r| match (r.tau_total_ms, &r.error) {
            (Some(t), _) => Ok(t),
            (None, e) => Err(CliError::Numerical(format!(
                "no relaxation time at {} = {}: {}",
                axis.name(),
                r.value,
                e.as_deref().unwrap_or("no slow mode")
            ))),
        })
        .collect()
}

fn run_entry(base: &Path, e: &ExampleEntry) -> CliResult<Outcome> {
    let tol = e.tolerance;
    let session = || -> CliResult<Session> {
        let cfg = e
            .config
            .as_ref()
            .ok_or_else(|| CliError::Validation(format!("example '{}' needs a config", e.id)))?;
        Session::open(&base.join(cfg), &Overrides::default())
    };
    let outcome = match &e.check {
        Check::GoldenRule { cases, seed } => golden_rule_check(*cases, *seed, tol)?,
        Check::TemperatureSlope { temperatures, expected } => {
            let s = session()?;
            let t = taus(&s, SweepAxis::Temperature, temperatures, quick(&s)?)?;
            let slope = log_log_slope(temperatures, &t);
            Outcome {
                pass: (slope - expected).abs() <= tol,
                detail: format!("slope {slope:.4} (expected {expected} ± {tol})"),
                observables: vec![("slope".into(), slope)],
            }
        }
        Check::GammaAcoustic => {
            let s = session()?;
            let modes = phonon_modes(&s.project.force_constants, &Vec3::zeros())?;
            let mut w: Vec<f64> = modes.iter().map(|m| m.omega.abs()).collect();
            w.sort_by(f64::total_cmp);
            let worst = w[..3].iter().cloned().fold(0.0, f64::max);
            Outcome {
                pass: worst < tol,
                detail: format!("largest acoustic |omega| at Gamma {worst:.2e} cm-1, next {:.4} cm-1", w[3]),
                observables: vec![("first_optical_cm1".into(), w[3])],
            }
        }
        Check::Plateau { low, high } => {
            let s = session()?;
            let t = taus(&s, SweepAxis::Temperature, &[*low, *high], quick(&s)?)?;
            let ratio = t[0] / t[1];
            Outcome {
                pass: (ratio - 1.0).abs() <= tol,
                detail: format!("tau({low} K)/tau({high} K) = {ratio:.6}"),
                observables: vec![("tau_low_ms".into(), t[0]), ("ratio".into(), ratio)],
            }
        }
        Check::DosDecomposition { area_tolerance } => {
            let s = session()?;
            let d = phonon_dos(&s.project.force_constants, &s.project.crystal, s.settings.grid, s.settings.sigma)?;
            let (tr, rot, intra) = d.decomposition();
            let peak = d.total.iter().cloned().fold(0.0, f64::max);
            let resid = (0..d.freqs.len())
                .map(|k| (tr[k] + rot[k] + intra[k] - d.total[k]).abs())
                .fold(0.0, f64::max)
                / peak;
            let n3 = 3.0 * s.project.crystal.n_atoms() as f64;
            let area_err = (d.area() / n3 - 1.0).abs();
            let area = |v: &[f64]| spinrelax_core::lattice::trapezoid(&d.freqs, v);
            Outcome {
                pass: resid <= tol && area_err <= *area_tolerance,
                detail: format!("decomposition residual {resid:.2e}, area {:.6} vs 3N = {n3}", d.area()),
                observables: vec![
                    ("area".into(), d.area()),
                    ("trans_area".into(), area(&tr)),
                    ("rot_area".into(), area(&rot)),
                    ("intra_area".into(), area(&intra)),
                ],
            }
        }
        Check::DosSlope { window, expected } => {
            let s = session()?;
            let d = phonon_dos(&s.project.force_constants, &s.project.crystal, s.settings.grid, s.settings.sigma)?;
            let (x, y): (Vec<f64>, Vec<f64>) = d
                .freqs
                .iter()
                .zip(&d.total)
                .filter(|(w, _)| **w >= window[0] && **w <= window[1])
                .map(|(w, g)| (*w, *g))
                .unzip();
            let slope = log_log_slope(&x, &y);
            Outcome {
                pass: x.len() >= 3 && (slope - expected).abs() <= tol,
                detail: format!("slope {slope:.4} over {} points (expected {expected} ± {tol})", x.len()),
                observables: vec![("slope".into(), slope)],
            }
        }
        Check::ChannelRanking { faster, slower } => {
            let s = session()?;
            let mut t = [0.0; 2];
            for (k, ch) in [*faster, *slower].into_iter().enumerate() {
                let p = PointParams { channels: ChannelSet::only(ch), ..quick(&s)? };
                t[k] = taus(&s, SweepAxis::Temperature, &[p.temperature], p)?[0];
            }
            Outcome {
                pass: t[1] >= t[0] * (1.0 + tol),
                detail: format!("tau {} {:.4e} ms, {} {:.4e} ms", faster.name(), t[0], slower.name(), t[1]),
                observables: vec![(format!("tau_{}_ms", faster.name()), t[0]), (format!("tau_{}_ms", slower.name()), t[1])],
            }
        }
        Check::Convergence { sigma, grids } => {
            let s = session()?;
            let report = converge(&s.pipeline()?, &quick(&s)?, &[*sigma], grids, tol)?;
            let changes: Vec<f64> = report.steps.iter().filter_map(|st| st.rel_change).collect();
            let monotone = changes.windows(2).all(|w| w[1] < w[0]);
            let last = changes.last().copied().unwrap_or(f64::INFINITY);
            let mut observables: Vec<(String, f64)> =
                report.steps.iter().map(|st| (format!("tau_{}_ms", st.n), st.tau_ms.unwrap_or(f64::NAN))).collect();
            observables.extend(changes.iter().enumerate().map(|(k, c)| (format!("change_{k}"), *c)));
            Outcome {
                pass: changes.len() + 1 == grids.len() && monotone && last < tol,
                detail: format!(
                    "changes {}",
                    changes.iter().map(|c| format!("{:.3}%", 100.0 * c)).collect::<Vec<_>>().join(" -> ")
                ),
                observables,
            }
        }
        Check::CouplingScaling { channel, factor } => {
            let s = session()?;
            let t = taus(&s, SweepAxis::CouplingScale(*channel), &[1.0, *factor], quick(&s)?)?;
            let ratio = t[1] / t[0];
            let want = 1.0 / (factor * factor);
            Outcome {
                pass: (ratio / want - 1.0).abs() <= tol,
                detail: format!("tau ratio {ratio:.12} (expected {want})"),
                observables: vec![("ratio".into(), ratio)],
            }
        }
    };
    Ok(outcome)
}

/// Runs the examples in `dir/manifest.json`, optionally only one id.
/// Returns the report; any failure becomes [`CliError::ExamplesFailed`].
pub fn run_examples(dir: &Path, only: Option<&str>, print_digests: bool) -> CliResult<String> {
    let path = dir.join("manifest.json");
    let manifest: ExampleManifest = parse_json(&path, &read_to_string(&path)?)?;
    let selected: Vec<&ExampleEntry> = manifest.examples.iter().filter(|e| only.is_none_or(|id| id == e.id)).collect();
    if selected.is_empty() {
        return Err(CliError::Usage(format!("no example named '{}'", only.unwrap_or(""))));
    }
    let results: Vec<(String, bool)> = selected
        .par_iter()
        .map(|e| {
            let start = std::time::Instant::now();
            let secs = || start.elapsed().as_secs_f64();
            match run_entry(dir, e) {
                Ok(o) => {
                    let dg = digest(&o.observables);
                    if print_digests {
                        return (format!("{} {dg}", e.id), true);
                    }
                    let digest_ok = e.digest.as_ref().is_none_or(|d| *d == dg);
                    let pass = o.pass && digest_ok;
                    let mut line = format!("{} {}: {} ({:.1} s)", if pass { "PASS" } else { "FAIL" }, e.id, o.detail, secs());
                    if !digest_ok {
                        let _ = write!(line, "; digest {dg} differs from the manifest");
                    }
                    (line, pass)
                }
                Err(err) => (format!("FAIL {}: {err} ({:.1} s)", e.id, secs()), false),
            }
        })
        .collect();
    let failed = results.iter().filter(|r| !r.1).count();
    let mut report = String::new();
    for (line, _) in &results {
        let _ = writeln!(report, "{line}");
    }
    if failed > 0 {
        eprint!("{report}");
        return Err(CliError::ExamplesFailed(failed));
    }
    let _ = writeln!(report, "{} examples passed", results.len());
    Ok(report)
}
