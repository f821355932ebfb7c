use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_turbine-states"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn small_synth(out: &Path, extra: &[&str]) {
    let out = out.to_str().unwrap();
    let mut args = vec!["synth", "--out", out, "--n_turbines=2", "--days=3"];
    args.extend_from_slice(extra);
    ok(&args);
}

#[test]
fn synth_writes_turbines_labels_and_truth() {
    let dir = tempfile::tempdir().unwrap();
    small_synth(dir.path(), &[]);
    for t in ["WT01", "WT02"] {
        let data = fs::read_to_string(dir.path().join(format!("data/{t}.csv"))).unwrap();
        assert!(data.starts_with("timestamp,ActivePower,CurrentL1,RotorRPM,GeneratorRPM,WindSpeed\n"));
        assert_eq!(data.lines().count(), 1 + 3 * 8640);
        let labels = fs::read_to_string(dir.path().join(format!("labels/{t}.csv"))).unwrap();
        assert!(labels.starts_with("timestamp,regime\n"));
    }
    let truth = fs::read_to_string(dir.path().join("truth.csv")).unwrap();
    assert_eq!(truth.lines().count(), 1 + 2 * 3 * 48);
}

#[test]
fn same_seed_gives_byte_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    small_synth(&a, &["--seed", "5"]);
    small_synth(&b, &["--seed", "5", "--jobs=1"]);
    small_synth(&c, &["--seed", "6"]);
    for f in ["data/WT01.csv", "data/WT02.csv", "labels/WT02.csv", "truth.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert_ne!(fs::read(a.join("data/WT01.csv")).unwrap(), fs::read(c.join("data/WT01.csv")).unwrap());
}

#[test]
fn bad_mismatch_fraction_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["synth", "--out", dir.path().to_str().unwrap(), "--mismatch_fraction=0.5"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("mismatch_fraction"));
}

#[test]
fn unknown_key_and_command_are_usage_errors() {
    assert_eq!(run(&["cluster", "--colour=blue"]).status.code(), Some(1));
    assert_eq!(run(&["explode"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn missing_inputs_are_data_errors() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = run(&["cluster", "--out", d]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["boundaries", "--out", d, "--v_nom_reference=12"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("run `cluster` first"));
}

#[test]
fn boundaries_without_silhouettes_ask_for_cluster() {
    let dir = tempfile::tempdir().unwrap();
    small_synth(dir.path(), &[]);
    let d = dir.path().to_str().unwrap();
    ok(&["cluster", "--out", d, "--N=1"]);
    let centroids: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("clusters/WT01/centroids.json")).unwrap()).unwrap();
    assert_eq!(centroids["n_clusters"], 1);
    assert_eq!(centroids["clusters"].as_object().unwrap().len(), 1);
    assert!(centroids["mean_silhouette"].is_null());
    let out = run(&["boundaries", "--out", d, "--v_nom_reference=12"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("run `cluster`"));
}

#[test]
fn silhouette_table_has_one_row_per_cluster_count() {
    let dir = tempfile::tempdir().unwrap();
    small_synth(dir.path(), &[]);
    let d = dir.path().to_str().unwrap();
    ok(&["cluster", "--out", d, "--n_range=2-5"]);
    let table = fs::read_to_string(dir.path().join("silhouette_table.csv")).unwrap();
    let rows: Vec<&str> = table.lines().skip(1).filter(|l| l.starts_with("WT01,")).collect();
    assert_eq!(rows.len(), 4);
    for (row, n) in rows.iter().zip(2..) {
        let fields: Vec<f64> = row.split(',').skip(1).map(|f| f.parse().unwrap()).collect();
        assert_eq!(fields[0], n as f64);
        // min <= q1 <= median <= q3 <= max
        assert!(fields[1] <= fields[2] && fields[2] <= fields[3] && fields[3] <= fields[6]);
        assert!(fields[5] <= fields[6] && fields[2] <= fields[5]);
    }
}

#[test]
fn commands_compose_and_model_is_portable() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for (out, seed) in [(&a, "1"), (&b, "2")] {
        let o = out.to_str().unwrap();
        ok(&["synth", "--out", o, "--seed", seed, "--n_turbines=3", "--days=10"]);
        ok(&["ingest", "--out", o]);
        ok(&["cluster", "--out", o]);
        ok(&["boundaries", "--out", o, "--v_nom_reference=12"]);
    }
    let a_str = a.to_str().unwrap();
    let summary = ok(&["assign", "--out", a_str, "--v_nom_reference=12"]);
    assert!(summary.contains("allocation change rate"));

    let b_doc: Value = serde_json::from_str(&fs::read_to_string(b.join("boundaries.json")).unwrap()).unwrap();
    assert_eq!(b_doc["method"], "histogram-max-likelihood");
    for k in ["v1", "v2", "v_nom"] {
        assert!(b_doc[k].is_number(), "{k} missing");
    }
    let per: Value =
        serde_json::from_str(&fs::read_to_string(b.join("boundaries_per_turbine.json")).unwrap()).unwrap();
    let wt = &per["WT01"]["boundaries"];
    assert_eq!(wt["method"], "gaussian-intersection");
    assert!(wt["v1"].is_null() && wt["v2"].is_number() && wt["v_nom"].is_number());

    // assign run `a` with the model learned on run `b`
    let foreign = format!("--boundaries={}", b.join("boundaries.json").display());
    ok(&["assign", "--out", a_str, "--v_nom_reference=12", &foreign]);
    let assignments = fs::read_to_string(a.join("assignments.csv")).unwrap();
    assert!(assignments.starts_with("turbine,epoch_start,mean_wind_speed,cluster,model_state,changed\n"));
    let rates = fs::read_to_string(a.join("allocation_changes.csv")).unwrap();
    let pooled: Vec<&str> = rates.lines().last().unwrap().split(',').collect();
    assert_eq!(pooled[0], "*");
    assert!(pooled[2].parse::<f64>().unwrap() <= 0.1);
    let hist = fs::read_to_string(a.join("allocation_change_histogram.csv")).unwrap();
    let turbines: usize = hist.lines().skip(1).map(|l| l.split(',').nth(2).unwrap().parse::<usize>().unwrap()).sum();
    assert_eq!(turbines, 3);

    let epochs = fs::read_to_string(a.join("epochs.csv")).unwrap();
    let correlations = fs::read_to_string(a.join("correlations.csv")).unwrap();
    let valid = epochs.lines().skip(1).filter(|l| l.ends_with(",true")).count();
    assert_eq!(correlations.lines().count(), valid);

    let report = ok(&["report", "--out", a_str]);
    assert!(report.contains("pooled boundaries"));
    assert!(a.join("report.txt").exists());
}

#[test]
fn config_file_and_overrides_combine() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "n_turbines = 1\ndays = 1\nseed = 3\n").unwrap();
    let out = dir.path().join("o");
    ok(&["synth", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--days=2"]);
    let truth = fs::read_to_string(out.join("truth.csv")).unwrap();
    assert_eq!(truth.lines().count(), 1 + 2 * 48);
}

/// Injected mismatches should mostly fall below the per-turbine silhouette
/// quartile and be removed by the filter.
#[test]
fn quartile_filter_removes_injected_mismatches() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    ok(&["synth", "--out", d, "--mismatch_fraction=0.1"]);
    ok(&["cluster", "--out", d]);
    let truth = fs::read_to_string(dir.path().join("truth.csv")).unwrap();
    let mismatched: std::collections::BTreeSet<(String, String)> = truth
        .lines()
        .skip(1)
        .filter(|l| l.ends_with(",1"))
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].to_string(), f[1].to_string())
        })
        .collect();
    let labels = fs::read_to_string(dir.path().join("labels.csv")).unwrap();
    let mut per: std::collections::BTreeMap<String, Vec<(String, f64)>> = Default::default();
    for l in labels.lines().skip(1) {
        let f: Vec<&str> = l.split(',').collect();
        per.entry(f[0].to_string()).or_default().push((f[1].to_string(), f[3].parse().unwrap()));
    }
    let (mut removed, mut total) = (0, 0);
    for (t, rows) in &per {
        let mut s: Vec<f64> = rows.iter().map(|r| r.1).collect();
        s.sort_by(f64::total_cmp);
        // linear-interpolation first quartile
        let h = 0.25 * (s.len() - 1) as f64;
        let q1 = s[h.floor() as usize] + (h - h.floor()) * (s[h.ceil() as usize] - s[h.floor() as usize]);
        for (start, sil) in rows {
            if mismatched.contains(&(t.clone(), start.clone())) {
                total += 1;
                removed += usize::from(*sil < q1);
            }
        }
    }
    assert!(total > 0);
    let share = removed as f64 / total as f64;
    assert!(share >= 0.6, "removed {removed} of {total}");
}
