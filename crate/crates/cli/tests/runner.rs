use std::fs;
use std::path::Path;
use std::process::Command;

use uav_relay::scenario::{generate, GeneratorConfig};
use uav_relay_cli::trace::trace;
use uav_relay_cli::{run, CliError, ExperimentSpec, RunOptions, Scheme};

fn small_spec(extra: &str) -> ExperimentSpec {
    let json = format!(
        r#"{{
            "scenario": {{"generator": {{"area_m": 250, "grid_cells": 3, "density": 0.2,
                                         "mean_height_m": 23, "height_clip_m": [3, 50], "num_ues": 2}}}},
            "schemes": ["lr", "es3d", "center"],
            "es_spacing_m": 50
            {extra}
        }}"#
    );
    let s: ExperimentSpec = serde_json::from_str(&json).unwrap();
    s.validate().unwrap();
    s
}

fn sweep_spec() -> ExperimentSpec {
    small_spec(r#", "trials": 3, "sweep": {"variable": "k", "values": [1, 2]}"#)
}

fn opts(dir: &Path, parallel: usize, resume: bool) -> RunOptions {
    RunOptions {
        out_dir: dir.to_path_buf(),
        parallel,
        resume,
    }
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap()
}

#[test]
fn one_trial_one_scheme_gives_one_row() {
    let mut spec = small_spec("");
    spec.schemes = vec![Scheme::Center];
    let dir = tempfile::tempdir().unwrap();
    let out = run(&spec, &opts(dir.path(), 1, false)).unwrap();
    assert_eq!(out.trials.len(), 1);
    assert_eq!(out.errored, 0);
    let text = read(dir.path(), "trials.csv");
    assert_eq!(text.lines().count(), 2);
    assert!(text.lines().nth(1).unwrap().starts_with("none,0.0,0,0,center,2,"));
    assert!(!dir.path().join("trials.partial.csv").exists());
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let spec = sweep_spec();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run(&spec, &opts(a.path(), 1, false)).unwrap();
    run(&spec, &opts(b.path(), 3, false)).unwrap();
    for f in ["trials.csv", "summary.csv"] {
        assert_eq!(read(a.path(), f), read(b.path(), f), "{f}");
    }
    // Rows come out in canonical order whatever the completion order.
    let rows: Vec<String> = read(a.path(), "trials.csv")
        .lines()
        .skip(1)
        .map(|l| l.split(',').take(5).collect::<Vec<_>>().join(","))
        .collect();
    assert_eq!(rows[0], "k,1.0,0,0,lr");
    assert_eq!(rows[1], "k,1.0,0,0,es3d");
    assert_eq!(rows[3], "k,1.0,1,1,lr");
    assert_eq!(rows.last().unwrap(), "k,2.0,2,2,center");
}

#[test]
fn resume_after_interruption_reproduces_the_full_run() {
    let spec = sweep_spec();
    let full = tempfile::tempdir().unwrap();
    run(&spec, &opts(full.path(), 2, false)).unwrap();

    // Simulate a run killed part-way: some complete jobs, one job missing a
    // scheme, and a torn last line.
    let cut = tempfile::tempdir().unwrap();
    let trials = read(full.path(), "trials.csv");
    let timings = read(full.path(), "timings.csv");
    let keep = |text: &str, n: usize| text.lines().take(1 + n).collect::<Vec<_>>().join("\n") + "\n";
    let torn = trials.lines().nth(8).unwrap();
    let partial = keep(&trials, 7) + &torn[..torn.len() / 2];
    fs::write(cut.path().join("trials.partial.csv"), partial).unwrap();
    fs::write(cut.path().join("timings.partial.csv"), keep(&timings, 7)).unwrap();

    let out = run(&spec, &opts(cut.path(), 2, true)).unwrap();
    assert_eq!(out.trials.len(), 2 * 3 * 3);
    for f in ["trials.csv", "summary.csv"] {
        assert_eq!(read(full.path(), f), read(cut.path(), f), "{f}");
    }
    // The two complete jobs kept their recorded timings.
    let kept: Vec<String> = read(cut.path(), "timings.csv")
        .lines()
        .take(7)
        .map(String::from)
        .collect();
    let orig: Vec<String> = timings.lines().take(7).map(String::from).collect();
    assert_eq!(kept, orig);
    assert!(!cut.path().join("trials.partial.csv").exists());

    // Resuming a finished run changes nothing.
    run(&spec, &opts(full.path(), 1, true)).unwrap();
    assert_eq!(read(full.path(), "trials.csv"), trials);
    assert_eq!(read(full.path(), "timings.csv"), timings);
}

#[test]
fn resume_rejects_rows_from_another_spec() {
    let dir = tempfile::tempdir().unwrap();
    run(&sweep_spec(), &opts(dir.path(), 1, false)).unwrap();
    let other = small_spec(r#", "trials": 3, "sweep": {"variable": "k", "values": [3]}"#);
    assert!(matches!(
        run(&other, &opts(dir.path(), 1, true)),
        Err(CliError::Resume(_))
    ));
}

#[test]
fn summary_means_match_trial_rows() {
    let spec = sweep_spec();
    let dir = tempfile::tempdir().unwrap();
    let out = run(&spec, &opts(dir.path(), 2, false)).unwrap();
    assert_eq!(out.summary.len(), 2 * 3);
    for s in &out.summary {
        let caps: Vec<f64> = out
            .trials
            .iter()
            .filter(|r| r.scheme == s.scheme && r.sweep_value == s.sweep_value)
            .map(|r| r.min_capacity_mbps.unwrap())
            .collect();
        assert_eq!(s.trials, 3);
        let mean = caps.iter().sum::<f64>() / caps.len() as f64;
        assert!((s.mean_min_capacity_mbps.unwrap() - mean).abs() <= 1e-12 * mean);
        assert_eq!(s.converged_fraction.is_some(), s.scheme == Scheme::Lr);
    }
}

#[test]
fn unreadable_scenario_is_reported_per_row_and_by_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.json");
    generate(&GeneratorConfig::desk_scale(2), 3)
        .unwrap()
        .save(&good)
        .unwrap();
    fs::write(dir.path().join("bad.json"), "{").unwrap();
    let spec_path = dir.path().join("spec.json");
    fs::write(
        &spec_path,
        r#"{"scenario": {"files": ["good.json", "bad.json"]}, "schemes": ["center", "es2d"],
            "es_spacing_m": 50, "out_dir": "out"}"#,
    )
    .unwrap();

    let spec = ExperimentSpec::load(&spec_path).unwrap();
    let out_dir = dir.path().join("lib-out");
    let out = run(&spec, &opts(&out_dir, 1, false)).unwrap();
    assert_eq!(out.errored, 2);
    assert!(out.trials[..2].iter().all(|r| !r.is_error()));
    assert!(out.trials[2..]
        .iter()
        .all(|r| r.is_error() && r.min_capacity_mbps.is_none()));
    assert_eq!(out.summary[0].errors, 1);

    let status = Command::new(env!("CARGO_BIN_EXE_uav-relay"))
        .args(["run", "--parallel", "1", "--spec"])
        .arg(&spec_path)
        .arg("--out")
        .arg(dir.path().join("bin-out"))
        .env("RUST_LOG", "off")
        .output()
        .unwrap()
        .status;
    assert_eq!(status.code(), Some(1));
    assert_eq!(
        read(&out_dir, "trials.csv"),
        read(&dir.path().join("bin-out"), "trials.csv")
    );
}

#[test]
fn binary_generates_and_traces() {
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_uav-relay");
    let config = dir.path().join("gen.json");
    fs::write(&config, serde_json::to_string(&GeneratorConfig::desk_scale(3)).unwrap()).unwrap();
    let scenario = dir.path().join("world.json");
    let ok = Command::new(bin)
        .args(["gen", "--seed", "5", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&scenario)
        .status()
        .unwrap();
    assert!(ok.success());
    let tr = dir.path().join("trace");
    let ok = Command::new(bin)
        .env("RUST_LOG", "off")
        .args(["trace", "--scenario"])
        .arg(&scenario)
        .arg("--out")
        .arg(&tr)
        .output()
        .unwrap()
        .status;
    assert!(ok.success());
    for f in ["outer.csv", "inner.csv", "solution.csv"] {
        assert!(read(&tr, f).lines().count() >= 2, "{f}");
    }
}

#[test]
fn trace_bounds_are_ordered() {
    let s = generate(&GeneratorConfig::desk_scale(4), 11).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (sol, tr) = trace(&s, dir.path()).unwrap();
    assert_eq!(tr.outer.len(), sol.outer_iterations);
    for o in &tr.outer {
        assert!(o.q_u_mbps >= o.q_l_mbps);
    }
    let mut r = csv::Reader::from_path(dir.path().join("inner.csv")).unwrap();
    let headers = r.headers().unwrap().clone();
    assert_eq!(&headers[0], "outer");
    assert_eq!(r.records().count(), tr.inner.len());
}
