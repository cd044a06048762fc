use std::path::Path;
use std::process::{Command, Output};

use fracmgrit::config::{ConfigError, Defaults, ExperimentConfig};

fn run(dir: &Path, args: &[&str], config: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_fracmgrit"));
    cmd.args(args).arg("--out").arg(dir.join("out"));
    if let Some(text) = config {
        let path = dir.join("config.json");
        std::fs::write(&path, text).unwrap();
        cmd.arg("--config").arg(path);
    }
    cmd.output().unwrap()
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join("out").join(name)).unwrap()
}

const SMALL_BOUNDS: &str = r#"{
    "discretization": {"levels": [2], "time_steps": [32]},
    "mgrit": {"coarsening": [2, 4]}
}"#;

#[test]
fn invalid_values_name_their_key() {
    let cases = [
        (r#"{"mgrit": {"coarsening": [1]}}"#, "mgrit.coarsening"),
        (r#"{"problem": {"alphas": [2.5]}}"#, "problem.alphas"),
        (r#"{"problem": {"domain": "disk"}}"#, "problem.domain"),
        (r#"{"solver": {"spatial": "amg"}}"#, "solver.spatial"),
        (r#"{"discretization": {"z_intervals": 6}}"#, "discretization.z_intervals"),
        (r#"{"discretization": {"time_steps": [100]}, "mgrit": {"coarsening": [16]}}"#, "mgrit.coarsening"),
    ];
    for (json, key) in cases {
        let dir = tempfile::tempdir().unwrap();
        let out = run(dir.path(), &["bounds"], Some(json));
        assert_eq!(out.status.code(), Some(2), "{json}");
        let err = String::from_utf8_lossy(&out.stderr);
        assert!(err.contains(key), "{json}: {err}");
    }
}

#[test]
fn unknown_keys_and_bad_json_are_config_errors() {
    for json in [r#"{"mgrit": {"cycles": 3}}"#, "{not json"] {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(run(dir.path(), &["spectrum"], Some(json)).status.code(), Some(2));
    }
    let err = ExperimentConfig::from_json(r#"{"solver": {"propagator": "exact"}}"#)
        .unwrap()
        .resolve(&Defaults::bounds())
        .unwrap_err();
    assert!(matches!(err, ConfigError::Invalid { ref key, .. } if key == "solver.propagator"));
}

#[test]
fn empty_alpha_list_writes_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["robustness-table"], Some(r#"{"problem": {"alphas": []}}"#));
    assert!(out.status.success());
    assert_eq!(read(dir.path(), "robustness_table.csv"), "alpha,tau,h,steps,aiter,converged\n");
}

#[test]
fn single_row_robustness_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{
        "problem": {"alphas": [1.0], "final_time": 0.0625},
        "discretization": {"levels": [2], "taus": [0.015625]}
    }"#;
    let out = run(dir.path(), &["robustness-table"], Some(cfg));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = read(dir.path(), "robustness_table.csv");
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    let row: Vec<_> = lines[1].split(',').collect();
    assert_eq!(row[3], "4");
    assert_eq!(row[5], "true");
}

#[test]
fn nonconvergence_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{
        "problem": {"alphas": [1.0], "final_time": 0.0625},
        "discretization": {"levels": [3], "taus": [0.015625]},
        "solver": {"max_it": 1}
    }"#;
    let out = run(dir.path(), &["robustness-table"], Some(cfg));
    assert_eq!(out.status.code(), Some(3));
    assert!(read(dir.path(), "robustness_table.csv").lines().nth(1).unwrap().ends_with("false"));
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(run(a.path(), &["bounds", "--threads", "1", "--seed", "5"], Some(SMALL_BOUNDS)).status.success());
    assert!(run(b.path(), &["bounds", "--threads", "3", "--seed", "5"], Some(SMALL_BOUNDS)).status.success());
    for name in ["bounds.csv", "residual_history.csv"] {
        assert_eq!(read(a.path(), name), read(b.path(), name), "{name}");
    }
    let text = read(a.path(), "bounds.csv");
    assert!(text.starts_with(
        "m,N,grid_kind,relaxation,exact_bound,teap_bound,q_norm,combined_bound,rho_observed,suff_cond_1,suff_cond_2"
    ));
    // 2 factors x 2 grids x 2 relaxations
    assert_eq!(text.lines().count(), 9);
    for line in text.lines().skip(1).filter(|l| l.contains(",F,")) {
        assert_eq!(line.split(',').nth(5), Some("NA"));
    }
}

#[test]
fn seed_changes_history_but_not_bounds() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(run(a.path(), &["bounds", "--seed", "1"], Some(SMALL_BOUNDS)).status.success());
    assert!(run(b.path(), &["bounds", "--seed", "2"], Some(SMALL_BOUNDS)).status.success());
    assert_ne!(read(a.path(), "residual_history.csv"), read(b.path(), "residual_history.csv"));
    let cols = |t: String| t.lines().map(|l| l.split(',').take(8).collect::<Vec<_>>().join(",")).collect::<Vec<_>>();
    assert_eq!(cols(read(a.path(), "bounds.csv")), cols(read(b.path(), "bounds.csv")));
}

#[test]
fn export_writes_mesh_and_matrices() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["export"], Some(r#"{"discretization": {"levels": [1], "z_intervals": 4}}"#));
    assert!(out.status.success());
    let q = read(dir.path(), "trace_operator.txt");
    assert_eq!(q.lines().next(), Some("% 1 1"));
    assert_eq!(read(dir.path(), "mass_extended.txt").lines().next(), Some("% 4 4"));
    assert!(read(dir.path(), "triangles.csv").lines().count() > 1);
}

#[test]
fn spectrum_rows_are_ascending() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run(dir.path(), &["spectrum"], None).status.success());
    let sigma: Vec<f64> = read(dir.path(), "spectrum.csv")
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(sigma.len(), 49);
    assert!(sigma.windows(2).all(|w| w[0] <= w[1]) && sigma[0] > 0.0);
}
