use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn pairpol(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pairpol"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn class<'a>(summary: &'a Value, name: &str) -> &'a Value {
    summary["classes"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["selection"] == name)
        .unwrap_or_else(|| panic!("class {name} missing"))
}

#[test]
fn predict_prints_closed_form_values() {
    let out = pairpol(&[
        "predict",
        "--model",
        "entangled",
        "--theta1",
        "90",
        "--theta2",
        "90",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("model = entangled"));
    assert!(text.contains("alpha1 = 0.666667"));
    assert!(text.contains("mu = 0.444444"));
    assert!(text.contains("R = 2.600000"));

    let out = pairpol(&[
        "predict",
        "--model",
        "depolarized:0.5",
        "--theta1",
        "90",
        "--theta2",
        "90",
    ]);
    assert!(stdout(&out).contains("R = 1.000000"));
}

#[test]
fn unknown_model_is_a_usage_error() {
    let out = pairpol(&[
        "predict",
        "--model",
        "classical",
        "--theta1",
        "90",
        "--theta2",
        "90",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("classical"));
}

#[test]
fn out_of_range_angle_is_a_domain_error() {
    let out = pairpol(&[
        "predict",
        "--model",
        "entangled",
        "--theta1",
        "190",
        "--theta2",
        "90",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).starts_with("error:"));
}

#[test]
fn missing_config_file_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.toml");
    let out = pairpol(&["simulate", "--config", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("nope.toml"));
}

#[test]
fn invalid_config_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.toml");
    fs::write(
        &path,
        "n_events = 1000\n[apparatus]\ncounter_pitch = 20.0\n",
    )
    .unwrap();
    let out = pairpol(&["simulate", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("counter_pitch"), "{}", stderr(&out));
}

#[test]
fn simulate_without_config_or_preset_fails() {
    let out = pairpol(&["simulate"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn help_exits_cleanly() {
    let out = pairpol(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("simulate"));
}

#[test]
fn simulate_then_analyze_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let sim_dir = dir.path().join("sim");
    let ana_dir = dir.path().join("ana");
    let out = pairpol(&[
        "simulate",
        "--preset",
        "decoherent_all",
        "--events",
        "200000",
        "--seed",
        "3",
        "--workers",
        "2",
        "--out-dir",
        sim_dir.to_str().unwrap(),
        "--listmode",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("class = decoherent"));
    assert!(text.contains("R = "));

    for file in [
        "summary.json",
        "listmode.csv",
        "hist_decoherent.csv",
        "s_entangled_candidate.csv",
    ] {
        assert!(sim_dir.join(file).exists(), "{file} missing");
    }
    let listmode = sim_dir.join("listmode.csv");
    let out = pairpol(&[
        "analyze",
        "--listmode",
        listmode.to_str().unwrap(),
        "--out-dir",
        ana_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));

    let sim = read_json(&sim_dir.join("summary.json"));
    let ana = read_json(&ana_dir.join("summary.json"));
    assert_eq!(sim["accepted"], ana["accepted"]);
    for name in ["entangled_candidate", "a", "b", "c", "d", "decoherent"] {
        assert_eq!(
            class(&sim, name)["histogram"],
            class(&ana, name)["histogram"],
            "class {name}"
        );
        assert_eq!(
            class(&sim, name)["fit"]["R"],
            class(&ana, name)["fit"]["R"],
            "class {name}"
        );
    }
}

#[test]
fn empty_classes_warn_and_write_headers() {
    let dir = tempfile::tempdir().unwrap();
    let out = pairpol(&[
        "simulate",
        "--preset",
        "entangled_baseline",
        "--events",
        "20000",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(
        stderr(&out).contains("class d has no events"),
        "{}",
        stderr(&out)
    );
    let table = fs::read_to_string(dir.path().join("hist_d.csv")).unwrap();
    assert_eq!(table.lines().count(), 1);
    let summary = read_json(&dir.path().join("summary.json"));
    assert!(class(&summary, "d")["fit_error"].is_string());
}

#[test]
fn summaries_do_not_depend_on_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let mut texts = Vec::new();
    for workers in ["1", "4"] {
        let sub = dir.path().join(workers);
        let out = pairpol(&[
            "simulate",
            "--preset",
            "class_a",
            "--events",
            "150000",
            "--seed",
            "17",
            "--workers",
            workers,
            "--out-dir",
            sub.to_str().unwrap(),
        ]);
        assert!(out.status.success());
        texts.push(fs::read(sub.join("summary.json")).unwrap());
    }
    assert_eq!(texts[0], texts[1]);
}
