use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn layerscat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_layerscat")).args(args).output().expect("binary runs")
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    let mut full = vec!["run", "--output-dir", dir.to_str().unwrap()];
    full.extend_from_slice(args);
    layerscat(&full)
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn error_record(out: &Output) -> Value {
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().last().expect("error record on stderr");
    serde_json::from_str(line).unwrap()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path).unwrap().lines().map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn homogeneous_outgoing_check_passes() {
    let dir = TempDir::new().unwrap();
    let out = run_in(dir.path(), &["--scenario", "homogeneous_outgoing", "--check"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stderr = String::from_utf8_lossy(&out.stderr);
    for id in ["A1", "A2", "A3"] {
        assert!(stderr.contains(&format!("{id} PASS")), "{stderr}");
    }
    let rows = csv_rows(&dir.path().join("tables/checks.csv"));
    assert_eq!(rows.len(), 4);
    assert!(rows[1..].iter().all(|r| r[2] == "true"));

    let m = manifest(dir.path());
    assert!(m["versions"]["layerscat"].is_string());
    assert_eq!(m["tolerances"]["cutoff_tol"], 1e-6);
    assert!(m["timings_s"]["total"].as_f64().unwrap() > 0.0);
    let sol = &m["solution"];
    assert!(sol["weighted_norm"].as_f64().unwrap() > 0.0);
    assert!(sol["max_energy_balance_error"].as_f64().unwrap() < 1e-9);
    assert_eq!(m["checks"].as_array().unwrap().len(), 3);

    // header: magic, dims, depth points; then complex doubles
    let bytes = fs::read(dir.path().join("fields_cell_0_0.bin")).unwrap();
    assert_eq!(&bytes[..8], b"LSCFLD01");
    let dims: Vec<usize> =
        (0..4).map(|i| u64::from_le_bytes(bytes[8 + 8 * i..16 + 8 * i].try_into().unwrap()) as usize).collect();
    assert_eq!(dims[3], 3);
    let header = 8 + 32 + 8 * dims[2];
    assert_eq!(bytes.len(), header + 16 * dims.iter().product::<usize>());
    let rows = csv_rows(&dir.path().join("tables/alpha_nodes.csv"));
    assert_eq!(rows.len() - 1, sol["quadrature"]["nodes"].as_u64().unwrap() as usize);
}

#[test]
fn outputs_are_identical_across_runs_and_thread_counts() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    for (dir, threads) in [(&a, "1"), (&b, "3")] {
        let out = run_in(dir.path(), &["--scenario", "absorbing_layers_defect", "--threads", threads]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let mut compared = 0;
    for entry in fs::read_dir(a.path().join("tables")).unwrap() {
        let name = entry.unwrap().file_name();
        let left = fs::read(a.path().join("tables").join(&name)).unwrap();
        let right = fs::read(b.path().join("tables").join(&name)).unwrap();
        assert!(left == right, "{name:?} differs");
        compared += 1;
    }
    assert!(compared >= 2);
    for cell in ["fields_cell_0_0.bin", "fields_cell_1_0.bin"] {
        assert_eq!(fs::read(a.path().join(cell)).unwrap(), fs::read(b.path().join(cell)).unwrap());
    }
    let m = manifest(a.path());
    assert_eq!(m["solution"]["defect"]["converged"], true);
}

#[test]
fn alpha_path_sweep_reports_sqrt_fit() {
    let dir = TempDir::new().unwrap();
    let out = run_in(dir.path(), &["--sweep", "alpha-path", "--modes", "2", "--skip-solve"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = csv_rows(&dir.path().join("tables/alpha_path.csv"));
    let header = &rows[0];
    for col in ["offset", "sqrt_offset", "solution_norm", "fit_norm", "fit_relative_deviation"] {
        assert!(header.iter().any(|h| h == col), "missing {col}");
    }
    assert_eq!(rows.len(), 10);
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    let values = |row: &Vec<String>, name: &str| row[col(name)].parse::<f64>().unwrap();
    for row in &rows[5..] {
        assert!(values(row, "fit_relative_deviation") < 1e-5);
    }
    let norms: Vec<f64> = rows[7..].iter().map(|r| values(r, "solution_norm")).collect();
    let spread = norms.iter().cloned().fold(f64::MIN, f64::max) - norms.iter().cloned().fold(f64::MAX, f64::min);
    assert!(spread / norms[0] < 0.01);
    let m = manifest(dir.path());
    assert_eq!(m["sweeps"]["alpha-path"]["truncation"], 2);
    assert!(m["sweeps"]["alpha-path"]["fit_residual"].as_f64().unwrap() < 1e-5);
    assert!(m.get("solution").is_none());
}

#[test]
fn depth_convergence_sweep_shows_second_order() {
    let dir = TempDir::new().unwrap();
    let out = run_in(dir.path(), &["--sweep", "depth-convergence", "--depth-elems", "32", "--skip-solve"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = csv_rows(&dir.path().join("tables/depth_convergence.csv"));
    let orders: Vec<f64> = rows[1..]
        .iter()
        .filter(|r| r[0] == "outgoing_mode" && !r[4].is_empty())
        .map(|r| r[4].parse().unwrap())
        .collect();
    assert_eq!(orders.len(), 2);
    assert!(orders.iter().all(|p| (p - 2.0).abs() < 0.2), "{orders:?}");
}

#[test]
fn configs_round_trip() {
    let dir = TempDir::new().unwrap();
    let list = layerscat(&["scenarios"]);
    let names = String::from_utf8(list.stdout).unwrap();
    assert!(names.lines().any(|n| n == "homogeneous_outgoing"));
    for name in names.lines() {
        let first = layerscat(&["run", "--print-config", "--scenario", name]);
        assert!(first.status.success());
        let path = dir.path().join(format!("{name}.toml"));
        fs::write(&path, &first.stdout).unwrap();
        let second = layerscat(&["run", "--print-config", "--config", path.to_str().unwrap()]);
        assert!(second.status.success(), "{}", String::from_utf8_lossy(&second.stderr));
        assert_eq!(first.stdout, second.stdout, "{name}");
    }
    // command-line overrides land in the resolved config
    let out = layerscat(&["run", "--print-config", "--modes", "3", "--nalpha", "12", "--cutoff-tol", "0.001"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("modes = 3") && text.contains("n_base = 12") && text.contains("cutoff_tol = 0.001"));
}

#[test]
fn malformed_config_reports_line_and_field() {
    let dir = TempDir::new().unwrap();
    let base = String::from_utf8(layerscat(&["run", "--print-config"]).stdout).unwrap();
    let cases = [
        (base.replace("n_base", "nbase"), "quadrature.nbase"),
        (base.replace("k = 1.0", "k = \"fast\""), "wave.k"),
        (base.replace("k = 1.0", "k = -2.0"), "wave.k"),
        (base.replace("depth_elems = 16", "depth_elems = 0"), "discretization.depth_elems"),
        (base.replace("planes = [1.0, 1.5]", "planes = [0.5]"), "outputs.planes"),
    ];
    for (i, (text, field)) in cases.iter().enumerate() {
        let path = dir.path().join(format!("bad{i}.toml"));
        fs::write(&path, text).unwrap();
        let out = run_in(&dir.path().join("out"), &["--config", path.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(2));
        let record = error_record(&out);
        assert_eq!(record["status"], "config error");
        assert_eq!(record["field"], *field, "{record}");
        if i < 2 {
            let line = record["line"].as_u64().unwrap() as usize;
            assert!(text.lines().nth(line - 1).unwrap().contains(field.rsplit('.').next().unwrap()));
        }
    }
}

#[test]
fn unknown_names_are_config_errors() {
    let dir = TempDir::new().unwrap();
    for args in [["--scenario", "nope"], ["--sweep", "nope"]] {
        let out = run_in(dir.path(), &args);
        assert_eq!(out.status.code(), Some(2));
        assert_eq!(error_record(&out)["status"], "config error");
    }
    let out = run_in(dir.path(), &["--config", "/nonexistent/scenario.toml"]);
    assert_eq!(out.status.code(), Some(5));
    assert_eq!(error_record(&out)["status"], "io error");
}

#[test]
fn defect_outside_the_layer_is_rejected() {
    let dir = TempDir::new().unwrap();
    let base = String::from_utf8(layerscat(&["run", "--print-config", "--scenario", "absorbing_layers_defect"]).stdout).unwrap();
    // a Gaussian whose cutoff reaches above r0 fails the range check
    let text = base.replace(
        "profile = \"cylinder\"\namplitude = [0.0, 0.4]\naxis = [0.0, 0.0]\nradius = 1.0\nz_lo = 0.1\nz_hi = 0.7",
        "profile = \"gaussian_bump\"\namplitude = [0.0, 0.4]\ncenter = [0.0, 0.0, 0.4]\nwidth = 0.5\ntop = 0.9",
    );
    assert_ne!(text, base);
    let path = dir.path().join("leaky.toml");
    fs::write(&path, text).unwrap();
    let out = run_in(&dir.path().join("out"), &["--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_record(&out)["field"], "defect.top");
}
