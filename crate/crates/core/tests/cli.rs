use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const FREE: &str = r#"
scenario = "free_gaussian"
seed = 11

[grid]
axes = [{ min = -16.0, max = 16.0, points = 256 }]

[physics]
hbar = 1.0
masses = [1.0]

[time]
dt = 0.005
t_final = 0.5
snapshot_stride = 20

[ensemble]
n_traj = 500

[params]
center = 0.0
sigma = 1.0
momenta = [1.0, -1.0]
"#;

const EPR: &str = r#"
scenario = "epr"
seed = 7

[grid]
axes = [{ min = -16.0, max = 16.0, points = 128 }, { min = -16.0, max = 16.0, points = 128 }]

[physics]
hbar = 1.0
masses = [2.0, 2.0]

[time]
dt = 0.005
t_final = 3.0
snapshot_stride = 100

[ensemble]
n_runs = 6

[params]
centers = [0.0, 0.0]
sigmas = [1.0, 1.0]
magnets = [
  { lambda = -30.0, t_start = 0.2, t_end = 0.4 },
  { lambda = -30.0, t_start = 1.6, t_end = 1.8 },
]

[output]
density_snapshots = true
"#;

fn wbohm(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wbohm")).args(args).current_dir(cwd).output().unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn error_json(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().unwrap_or_default();
    serde_json::from_str(line).unwrap_or_else(|_| panic!("stderr is not a JSON record: {text}"))
}

fn metrics(dir: &Path) -> toml::Value {
    let text = std::fs::read_to_string(dir.join("summary.toml")).unwrap();
    let doc: toml::Table = text.parse().unwrap();
    doc["metrics"].clone()
}

#[test]
fn list_scenarios_names_every_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let out = wbohm(&["list-scenarios"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    for name in ["epr", "free_gaussian", "oscillator_coherent", "mixed_w_fundamental", "random_entangled"] {
        assert!(text.contains(name), "{name}");
    }
}

#[test]
fn validate_reports_ok_without_side_effects() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "free.toml", FREE);
    let out = wbohm(&["validate", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("ok"));
    assert!(text.contains("memory") && text.contains("time"));
    let entries: Vec<_> = std::fs::read_dir(dir.path()).unwrap().collect();
    assert_eq!(entries.len(), 1);
}

#[test]
fn missing_seed_is_a_schema_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", &FREE.replace("seed = 11\n", ""));
    for verb in ["run", "validate"] {
        let out = wbohm(&[verb, cfg.to_str().unwrap()], dir.path());
        assert_eq!(out.status.code(), Some(2));
        let e = error_json(&out);
        assert_eq!(e["error"], "schema");
        assert_eq!(e["field"], "seed");
    }
    assert!(!dir.path().join("output").exists());
}

#[test]
fn bad_grid_and_pulse_window_are_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "a.toml", &FREE.replace("points = 256", "points = 200"));
    let e = error_json(&wbohm(&["validate", cfg.to_str().unwrap()], dir.path()));
    assert_eq!(e["field"], "grid.axes");
    assert!(e["message"].as_str().unwrap().contains("power of two"), "{e}");

    let cfg = write_config(dir.path(), "b.toml", &EPR.replace("t_start = 1.6, t_end = 1.8", "t_start = 2.6, t_end = 3.4"));
    let out = wbohm(&["validate", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["field"], "params.magnets[1].t_end");
}

#[test]
fn unsafe_geometry_is_a_physics_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", &FREE.replace("center = 0.0", "center = 13.0"));
    let out = wbohm(&["run", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_json(&out)["error"], "geometry");
    let cfg = write_config(dir.path(), "d.toml", &EPR.replace("lambda = -30.0, t_start = 0.2", "lambda = -3.0, t_start = 0.2"));
    assert_eq!(wbohm(&["validate", cfg.to_str().unwrap()], dir.path()).status.code(), Some(3));
}

#[test]
fn unwritable_output_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", FREE);
    let blocker = dir.path().join("blocked");
    std::fs::write(&blocker, "a file, not a directory").unwrap();
    let out = wbohm(&["run", cfg.to_str().unwrap(), "--output-dir", blocker.join("x").to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(error_json(&out)["error"], "io");
}

#[test]
fn run_writes_artifacts_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "free.toml", FREE);
    let cfg = cfg.to_str().unwrap();
    let a = wbohm(&["run", cfg, "--output-dir", "a", "--quiet", "--threads", "1"], dir.path());
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stderr));
    assert!(a.stdout.is_empty());
    let b = wbohm(&["run", cfg, "--output-dir", "b", "--quiet"], dir.path());
    assert_eq!(b.status.code(), Some(0));
    let (da, db) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(metrics(&da), metrics(&db));
    assert_eq!(std::fs::read(da.join("trajectories.csv")).unwrap(), std::fs::read(db.join("trajectories.csv")).unwrap());

    let csv = std::fs::read_to_string(da.join("trajectories.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "run_id,t [T],q1 [L]");
    // 500 trajectories, snapshots at steps 0, 20, ..., 100.
    assert_eq!(lines.count(), 500 * 6);

    let summary: toml::Table = std::fs::read_to_string(da.join("summary.toml")).unwrap().parse().unwrap();
    let expected_hash = {
        use sha2::{Digest, Sha256};
        Sha256::digest(FREE.as_bytes()).iter().map(|b| format!("{b:02x}")).collect::<String>()
    };
    assert_eq!(summary["config_sha256"].as_str().unwrap(), expected_hash);
    let tv = &summary["metrics"]["equivariance_tv"];
    assert!(tv["certifies"].as_str().unwrap().len() > 10);
    assert!(tv["value"].as_float().unwrap() < 0.2);

    let c = wbohm(&["run", cfg, "--output-dir", "c", "--quiet", "--seed", "12"], dir.path());
    assert_eq!(c.status.code(), Some(0));
    let sc: toml::Table = std::fs::read_to_string(dir.path().join("c/summary.toml")).unwrap().parse().unwrap();
    assert_eq!(sc["seed"].as_integer(), Some(12));
    assert_ne!(metrics(&da), metrics(&dir.path().join("c")));
}

#[test]
fn epr_run_writes_outcomes_and_densities() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "epr.toml", EPR);
    let out = wbohm(&["run", cfg.to_str().unwrap(), "--output-dir", "out"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let root = dir.path().join("out");
    let outcomes = std::fs::read_to_string(root.join("outcomes.csv")).unwrap();
    assert_eq!(outcomes.lines().count(), 7);
    let traj = std::fs::read_to_string(root.join("trajectories.csv")).unwrap();
    assert_eq!(traj.lines().next().unwrap(), "run_id,t [T],q1 [L],q2 [L]");
    // 600 steps with stride 100: seven snapshots per run.
    assert_eq!(traj.lines().count(), 1 + 6 * 7);
    let densities: Vec<_> = std::fs::read_dir(root.join("densities")).unwrap().collect();
    assert_eq!(densities.len(), 7);
    let first = std::fs::read_to_string(root.join("densities/density_00000.csv")).unwrap();
    assert!(first.starts_with("# t = 0.0"));
    assert_eq!(first.lines().filter(|l| !l.starts_with('#')).count(), 1 + 128 * 128);
    let m = metrics(&root);
    assert_eq!(m["anticorrelation_rate"]["value"].as_float(), Some(1.0));
    // No temporaries are left behind.
    let stray = std::fs::read_dir(&root).unwrap().filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().starts_with(".partial")).count();
    assert_eq!(stray, 0);
}
