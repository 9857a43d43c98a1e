use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use spinrelax_cli::output::{read_sidecar, Sidecar};
use spinrelax_cli::project::{load_project, RunSettings};
use spinrelax_core::lattice::DosCurve;
use spinrelax_core::sweep::SweepResult;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_spinrelax"));
    c.env("RUST_LOG", "error");
    c
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("binary runs")
}

fn toy(preset: &str) -> (tempfile::TempDir, PathBuf) {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(tmp.path(), &["toygen", "--preset", preset, "--dir", "."]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let cfg = tmp.path().join("project.json");
    (tmp, cfg)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn toy_project_loads_with_nuclear_spin() {
    let (_tmp, cfg) = toy("vanadyl");
    let p = load_project(&cfg).unwrap();
    assert_eq!(p.system.dimension(), 16);
    assert_eq!(p.crystal.n_atoms(), 10);
}

#[test]
fn truncated_force_constants_name_the_offset() {
    let (tmp, _) = toy("vanadyl");
    let path = tmp.path().join("force_constants.txt");
    let text = std::fs::read_to_string(&path).unwrap();
    let cut = text.len() / 2;
    std::fs::write(&path, &text[..cut]).unwrap();
    let o = run(tmp.path(), &["relax"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("byte offset"), "{err}");
    assert!(err.contains("force_constants.txt"), "{err}");
}

#[test]
fn fine_grid_is_accepted_and_echoed() {
    let (tmp, _) = toy("cubic");
    let o = run(tmp.path(), &["dos", "--grid", "64,64,64", "--sigma", "1.0", "--out", "run"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let side: Sidecar<RunSettings, DosCurve> = read_sidecar(&tmp.path().join("run/dos.json")).unwrap();
    assert_eq!(side.settings.grid, [64, 64, 64]);
    assert_eq!(side.settings.sigma, 1.0);
    assert_eq!(side.data.mesh, [64, 64, 64]);
    assert_eq!(side.info.code_version, env!("CARGO_PKG_VERSION"));
}

#[test]
fn single_point_csv_and_exact_json_reload() {
    let (tmp, _) = toy("vanadyl-electron");
    let o = run(tmp.path(), &["relax", "--temp", "10"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(tmp.path().join("out/relax.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2);
    let header: Vec<&str> = lines[0].split(',').collect();
    assert_eq!(&header[..5], &["temperature_K", "tau_total_ms", "tau_zeeman_ms", "tau_hyperfine_ms", "tau_dipolar_ms"]);
    assert_eq!(header[header.len() - 2..], ["config_hash", "code_version"]);

    let path = tmp.path().join("out/relax.json");
    let side: Sidecar<RunSettings, SweepResult> = read_sidecar(&path).unwrap();
    assert_eq!(side.settings.temperature, 10.0);
    let tau = side.data.rows[0].tau_total_ms.unwrap();
    let row: Vec<&str> = lines[1].split(',').collect();
    let printed: f64 = row[1].parse().unwrap();
    assert!((printed / tau - 1.0).abs() < 1e-8);
    // Re-serializing the reloaded result reproduces every value bit for bit.
    let again: Sidecar<RunSettings, SweepResult> =
        serde_json::from_str(&serde_json::to_string(&side).unwrap()).unwrap();
    assert_eq!(again, side);
    assert_eq!(again.data.rows[0].tau_total_ms.unwrap().to_bits(), tau.to_bits());
}

#[test]
fn dos_columns() {
    let (tmp, _) = toy("vanadyl");
    let o = run(tmp.path(), &["dos"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(tmp.path().join("out/dos.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    assert_eq!(header, "omega_cm1,total,trans,rot,intra,config_hash,code_version");
    for line in csv.lines().skip(1) {
        let v: Vec<f64> = line.split(',').take(5).map(|x| x.parse().unwrap()).collect();
        assert!((v[2] + v[3] + v[4] - v[1]).abs() <= 1e-7 * v[1].abs().max(1e-3));
    }
}

#[test]
fn unknown_config_key_is_rejected() {
    let (tmp, cfg) = toy("vanadyl");
    let text = std::fs::read_to_string(&cfg).unwrap().replacen("\"temperature\": 20", "\"temprature\": 20", 1);
    std::fs::write(&cfg, text).unwrap();
    let o = run(tmp.path(), &["relax"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("temprature"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(run(tmp.path(), &["relax", "--grid", "4,4"]).status.code(), Some(1));
    assert_eq!(run(tmp.path(), &["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(tmp.path(), &["perturb", "--kind", "coupling-x3"]).status.code(), Some(1));
    assert_eq!(run(tmp.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn missing_config_is_an_input_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(tmp.path(), &["relax"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("project.json"));
}

#[test]
fn sweeps_and_perturbations_write_tables() {
    let (tmp, _) = toy("vanadyl-electron");
    let o = run(tmp.path(), &["sweep", "--axis", "field", "--values", "2,5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(tmp.path().join("out/sweep0_field_T.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    let o = run(tmp.path(), &["perturb", "--kind", "coupling-x2", "--channel", "zeeman", "--secular"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let side: Sidecar<RunSettings, SweepResult> = read_sidecar(&tmp.path().join("out/perturb_zeeman_x2.json")).unwrap();
    let ratio = side.data.rows[1].tau_ratio.unwrap();
    assert!((ratio - 0.25).abs() < 1e-12, "{ratio}");
}

#[test]
fn worked_examples_pass() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../worked_examples");
    let o = bin().args(["run-examples", "--dir"]).arg(&dir).output().unwrap();
    let out = String::from_utf8_lossy(&o.stdout);
    assert!(o.status.success(), "{out}\n{}", stderr(&o));
    assert_eq!(out.lines().filter(|l| l.starts_with("PASS")).count(), 9, "{out}");
}
