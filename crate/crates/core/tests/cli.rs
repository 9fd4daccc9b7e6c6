use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_verticrop");

fn data(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(rel)
}

fn run(args: &[&str], dir: &Path) -> Output {
    Command::new(BIN).args(args).current_dir(dir).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn config_with(dir: &Path, extra: &str) -> PathBuf {
    let path = dir.join("run.toml");
    let crop = data("crops/batten.toml");
    std::fs::write(&path, format!("crop_file = {:?}\n{extra}", crop.display().to_string())).unwrap();
    path
}

#[test]
fn simulate_writes_the_trajectory_table() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = data("configs/batten.toml");
    let o = run(&["simulate", "--config", cfg.to_str().unwrap(), "--out-dir", "a"], tmp.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(tmp.path().join("a/trajectory.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "day,temp_c,drought,radiation_mj,biomass_kg_m2,thermal_time_cd,i50b_cd,f_solar");
    assert_eq!(lines.len(), 104);
    let last: Vec<&str> = lines[103].split(',').collect();
    assert_eq!(last[0], "102");
    let biomass: f64 = last[4].parse().unwrap();
    assert!((biomass - 3.081).abs() < 0.05 * 3.081, "{biomass}");
    assert!(tmp.path().join("a/manifest.toml").exists());

    // byte-identical rerun
    let o = run(&["simulate", "--config", cfg.to_str().unwrap(), "--out-dir", "b"], tmp.path());
    assert_eq!(code(&o), 0);
    let again = std::fs::read_to_string(tmp.path().join("b/trajectory.csv")).unwrap();
    assert_eq!(csv, again);
}

#[test]
fn empty_schedule_gives_the_initial_row() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("empty.csv"), "day,temp_c,drought,radiation_mj\n").unwrap();
    let crop = data("crops/batten.toml");
    let o = run(&["simulate", "--crop", crop.to_str().unwrap(), "--out-dir", "o", "empty.csv"], tmp.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(tmp.path().join("o/trajectory.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("0,,,,0,0,50,"));
}

#[test]
fn out_of_bounds_drought_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("bad.csv"), "day,temp_c,drought,radiation_mj\n0,20,1.5,30\n").unwrap();
    let crop = data("crops/batten.toml");
    let o = run(&["simulate", "--crop", crop.to_str().unwrap(), "bad.csv"], tmp.path());
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("inputs[0].drought"));
}

#[test]
fn missing_crop_file_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["optimize", "--crop", "nope.toml"], tmp.path());
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("crop_file"));
    let o = run(&["validate"], tmp.path());
    assert_eq!(code(&o), 2);
}

#[test]
fn validate_prints_resolved_defaults() {
    let tmp = tempfile::tempdir().unwrap();
    let crop = data("crops/batten.toml");
    let o = run(&["validate", "--crop", crop.to_str().unwrap(), "--epsilon", "0.001"], tmp.path());
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("delta = 0.01"));
    assert!(text.contains("epsilon = 0.001"));

    // what validate prints is itself a valid config
    let path = tmp.path().join("resolved.toml");
    std::fs::write(&path, &text).unwrap();
    let o = run(&["validate", "--config", path.to_str().unwrap()], tmp.path());
    assert_eq!(code(&o), 0);
    assert_eq!(String::from_utf8(o.stdout).unwrap(), text);
}

#[test]
fn t_base_above_t_opt_names_both_fields() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config_with(tmp.path(), "[crop]\nt_base = 20.0\n");
    let o = run(&["validate", "--config", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(code(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("crop.t_base") && err.contains("crop.t_opt"), "{err}");
}

#[test]
fn non_finite_state_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config_with(tmp.path(), "[bounds]\ntemp = [0.0, 1e308]\n");
    std::fs::write(tmp.path().join("hot.csv"), "day,temp_c,drought,radiation_mj\n0,1e308,0,10\n").unwrap();
    let o = run(&["simulate", "--config", cfg.to_str().unwrap(), "hot.csv"], tmp.path());
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn iteration_cap_exits_4_with_report() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config_with(tmp.path(), "[ocp]\nhorizon = 30\nmax_inner_iterations = 1\nmax_outer_iterations = 1\nextra_starts = []\n");
    let o = run(&["optimize", "--config", cfg.to_str().unwrap(), "--out-dir", "o"], tmp.path());
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));
    let report = std::fs::read_to_string(tmp.path().join("o/report.toml")).unwrap();
    assert!(report.contains("converged = false"));
    assert!(tmp.path().join("o/trajectory.csv").exists());
}

#[test]
fn epsilon_sweep_scenario_emits_its_table() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = data("configs/batten.toml");
    let o = run(
        &["optimize", "--config", cfg.to_str().unwrap(), "--scenario", "epsilon-sweep", "--out-dir", "o"],
        tmp.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let csv = std::fs::read_to_string(tmp.path().join("o/epsilon-sweep.csv")).unwrap();
    let devs: Vec<f64> = csv.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(devs.len(), 4);
    assert!(devs.windows(2).all(|w| w[1] < w[0]));
    let report = std::fs::read_to_string(tmp.path().join("o/report.toml")).unwrap();
    assert!(report.contains("id = \"epsilon-sweep\""));
}

#[test]
fn unknown_scenario_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = data("configs/batten.toml");
    let o = run(&["optimize", "--config", cfg.to_str().unwrap(), "--scenario", "nope"], tmp.path());
    assert_eq!(code(&o), 2);
}

#[test]
fn sweep_with_custom_grid() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = data("configs/batten.toml");
    let o = run(
        &["sweep", "--config", cfg.to_str().unwrap(), "--grid", "60:80:10", "--workers", "2", "--out-dir", "o"],
        tmp.path(),
    );
    let csv = std::fs::read_to_string(tmp.path().join("o/cycle-sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(matches!(code(&o), 0 | 4));
    let o = run(&["sweep", "--config", cfg.to_str().unwrap(), "--grid", "80:60:1"], tmp.path());
    assert_eq!(code(&o), 2);
}
