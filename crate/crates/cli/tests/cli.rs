use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use evacsim_core::metrics::contribution_csv_residual;

const SMALL: &str = r#"
seed = 3
[network]
source = "small-world"
nodes = 300
[dynamics]
timesteps = 40
window = 20
[sweep]
gammas = [0.0, 0.5, 1.0]
runs = 2
"#;

fn evacsim(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evacsim"))
        .args(args)
        .current_dir(dir)
        .env_remove("EVACSIM_WORKERS")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("small.toml"), SMALL).unwrap();
    dir
}

#[test]
fn reference_network_audit() {
    let dir = workspace();
    ok(&evacsim(dir.path(), &["net", "gen-hist", "--paper", "--seed", "7", "-o", "net.edges"]));
    let out = evacsim(dir.path(), &["net", "stats", "net.edges"]);
    ok(&out);
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(',').collect()).collect();
    let counts: Vec<&str> = rows.iter().map(|r| r[1]).collect();
    assert_eq!(counts, ["2", "19", "168", "774", "1886", "2061", "30", "60"]);
    let cumulative: Vec<&str> = rows.iter().map(|r| r[3]).collect();
    assert_eq!(cumulative, ["0.04", "0.42", "3.78", "19.26", "56.98", "98.2", "98.8", "100"]);
}

#[test]
fn small_world_generation() {
    let dir = workspace();
    ok(&evacsim(dir.path(), &["net", "gen-ws", "--n", "60", "--k", "4", "--p", "0.2", "--seed", "2", "-o", "ws.edges"]));
    let out = evacsim(dir.path(), &["net", "stats", "ws.edges"]);
    ok(&out);
    let text = String::from_utf8(out.stdout).unwrap();
    let nodes: usize = text.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse::<usize>().unwrap()).sum();
    assert_eq!(nodes, 60);
}

#[test]
fn missing_network_file_is_a_usage_error() {
    let dir = workspace();
    let out = evacsim(dir.path(), &["net", "stats", "absent.edges"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("absent.edges"));
}

#[test]
fn bad_arguments_exit_2() {
    let dir = workspace();
    assert_eq!(evacsim(dir.path(), &["net", "gen-hist", "-o", "x.edges"]).status.code(), Some(2));
    assert_eq!(evacsim(dir.path(), &["run", "--gamma", "150"]).status.code(), Some(2));
    assert_eq!(evacsim(dir.path(), &["frobnicate"]).status.code(), Some(2));
}

#[test]
fn unknown_config_key_is_named() {
    let dir = workspace();
    fs::write(dir.path().join("bad.toml"), "[scenario]\ngama = 0.5\n").unwrap();
    let out = evacsim(dir.path(), &["run", "--config", "bad.toml"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("gama"));
}

#[test]
fn full_priority_run_stays_evacuated() {
    let dir = workspace();
    ok(&evacsim(
        dir.path(),
        &["run", "--config", "small.toml", "--gamma", "1", "--variant", "fixed-highest", "-o", "r"],
    ));
    let rates = fs::read_to_string(dir.path().join("r/rates.csv")).unwrap();
    let values: Vec<&str> = rates.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(values.len(), 41);
    assert!(values.iter().all(|v| *v == "1"));
    assert!(dir.path().join("r/trajectory.bin").exists());
    assert!(dir.path().join("r/manifest.json").exists());
}

#[test]
fn repeated_runs_have_identical_outputs() {
    let dir = workspace();
    let args = |o: &'static str| ["run", "--config", "small.toml", "--gamma", "40%", "--theta", "0.1", "-o", o];
    ok(&evacsim(dir.path(), &args("a")));
    ok(&evacsim(dir.path(), &args("b")));
    let manifest = |o: &str| fs::read_to_string(dir.path().join(o).join("manifest.json")).unwrap();
    assert_eq!(manifest("a"), manifest("b"));
    assert_eq!(
        fs::read(dir.path().join("a/trajectory.bin")).unwrap(),
        fs::read(dir.path().join("b/trajectory.bin")).unwrap()
    );
    let json: serde_json::Value = serde_json::from_str(&manifest("a")).unwrap();
    assert_eq!(json["outputs"].as_array().unwrap().len(), 2);
    assert_eq!(json["inputs"]["gamma"], 0.4);
}

#[test]
fn emitted_analyses_have_expected_schema() {
    let dir = workspace();
    ok(&evacsim(
        dir.path(),
        &[
            "run", "--config", "small.toml", "--gamma", "0.3", "--emit", "heatmap", "--emit", "switches",
            "--heatmap-stride", "10", "-o", "e",
        ],
    ));
    let heatmap = fs::read_to_string(dir.path().join("e/heatmap.csv")).unwrap();
    let mut lines = heatmap.lines();
    assert_eq!(lines.next().unwrap(), "node,degree,t0,t10,t20,t30,t40");
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 300);
    let degrees: Vec<usize> = rows.iter().map(|r| r.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!(degrees.windows(2).all(|w| w[0] >= w[1]));
    assert!(rows.iter().all(|r| r.split(',').skip(2).all(|c| c == "E" || c == "S")));

    let switches = fs::read_to_string(dir.path().join("e/switches.csv")).unwrap();
    assert!(switches.starts_with("degree,t,count\n"));
    let classes: std::collections::BTreeSet<&str> =
        switches.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(switches.lines().count() - 1, classes.len() * 40);
}

#[test]
fn sweep_is_schedule_independent_and_resumable() {
    let dir = workspace();
    ok(&evacsim(dir.path(), &["sweep", "run", "--config", "small.toml", "--workers", "1", "-o", "one"]));
    ok(&evacsim(dir.path(), &["sweep", "run", "--config", "small.toml", "--workers", "8", "-o", "eight"]));
    let one = fs::read(dir.path().join("one/results.csv")).unwrap();
    assert_eq!(one, fs::read(dir.path().join("eight/results.csv")).unwrap());
    assert_eq!(
        fs::read(dir.path().join("one/summary.json")).unwrap(),
        fs::read(dir.path().join("eight/summary.json")).unwrap()
    );

    // keep half of the rows, then resume
    let text = String::from_utf8(one.clone()).unwrap();
    let keep = text.lines().count() / 2;
    let partial: String = text.lines().take(keep).map(|l| format!("{l}\n")).collect();
    fs::create_dir(dir.path().join("resumed")).unwrap();
    fs::write(dir.path().join("resumed/results.csv"), partial).unwrap();
    ok(&evacsim(
        dir.path(),
        &["sweep", "run", "--config", "small.toml", "--resume", "-o", "resumed"],
    ));
    assert_eq!(fs::read(dir.path().join("resumed/results.csv")).unwrap(), one);

    // rows from another configuration are refused
    let out = evacsim(
        dir.path(),
        &["sweep", "run", "--config", "small.toml", "--timesteps", "30", "--resume", "-o", "one"],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("digest mismatch"));
}

#[test]
fn rate_curve_preset_schema_and_row_count() {
    let dir = workspace();
    ok(&evacsim(
        dir.path(),
        &["sweep", "fig2", "--config", "small.toml", "--seed", "1", "--runs", "1", "--timesteps", "20", "-o", "f"],
    ));
    let csv = fs::read_to_string(dir.path().join("f/fig2.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "variant,theta,gamma,mean_rate,sd,n_runs");
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("f/summary.json")).unwrap()).unwrap();
    let gammas = summary["grid"]["gammas"].as_array().unwrap().len();
    assert!(gammas >= 101);
    assert_eq!(lines.count(), 2 * 4 * gammas);
}

#[test]
fn contribution_preset_telescopes() {
    let dir = workspace();
    ok(&evacsim(
        dir.path(),
        &["sweep", "table5", "--config", "small.toml", "--seed", "1", "--timesteps", "30", "-o", "t"],
    ));
    let path = dir.path().join("t/table5.csv");
    assert!(contribution_csv_residual(&path).unwrap() < 1e-9);
    let text = fs::read_to_string(&path).unwrap();
    assert!(text.lines().nth(1).unwrap().starts_with("Start,"));
    assert!(text.lines().last().unwrap().starts_with("End,"));
}
