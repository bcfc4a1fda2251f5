use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use omc_core::io::{load_series_csv, read_table};
use omc_core::load_csv;
use serde_json::Value;

fn omc_sim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_omc-sim"))
        .args(args)
        .env_remove("OMC_SIM_THREADS")
        .output()
        .expect("spawn omc-sim")
}

fn run_ok(args: &[&str]) -> Output {
    let out = omc_sim(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn write_config(dir: &Path, name: &str, json: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, json).unwrap();
    p
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn bounded_simulation_starts_at_the_arrival_sample() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    run_ok(&["simulate", "--out", s(&out)]);
    let summary = json(&out.join("simulate_summary.json"));
    assert_eq!(summary["geometry"], "bounded");
    assert!((summary["arrival_time_s"].as_f64().unwrap() - 0.22).abs() < 1e-12);
    assert!((summary["onset_time_s"].as_f64().unwrap() - 0.22).abs() < 1e-9);

    let c = load_series_csv(&out.join("concentration.csv")).unwrap();
    let first = c.values.iter().position(|&v| v > 0.0).unwrap();
    assert!(
        (c.timestamps[first] - 0.22).abs() < 1e-9,
        "{}",
        c.timestamps[first]
    );
    for f in ["voltage_clean.csv", "voltage_noisy.csv"] {
        let v = load_csv(&out.join(f)).unwrap();
        assert_eq!(v.len(), c.timestamps.len());
        assert!(v.voltages.iter().all(|&x| (0.0..=5.0).contains(&x)));
    }
}

#[test]
fn same_seed_reproduces_the_noisy_trace_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (
        dir.path().join("a"),
        dir.path().join("b"),
        dir.path().join("c"),
    );
    run_ok(&["simulate", "--seed", "7", "--out", s(&a)]);
    run_ok(&["simulate", "--seed", "7", "--out", s(&b)]);
    run_ok(&["simulate", "--seed", "8", "--out", s(&c)]);
    let read = |d: &Path| fs::read(d.join("voltage_noisy.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
    let clean = |d: &Path| load_csv(&d.join("voltage_clean.csv")).unwrap().voltages;
    assert_eq!(clean(&a), clean(&c));
}

#[test]
fn open_air_pulse_arrives_on_time_and_clears_more_slowly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "u.json", r#"{"defaults":"table1_unbounded"}"#);
    let (u, b) = (dir.path().join("u"), dir.path().join("b"));
    run_ok(&["simulate", "--config", s(&cfg), "--out", s(&u)]);
    run_ok(&["simulate", "--out", s(&b)]);
    let su = json(&u.join("simulate_summary.json"));
    let sb = json(&b.join("simulate_summary.json"));
    assert_eq!(su["geometry"], "unbounded");
    let onset = su["onset_time_s"].as_f64().unwrap();
    assert!((onset - 0.22).abs() <= 0.01 + 1e-9, "{onset}");
    let fall_u = su["concentration_fall_time_s"].as_f64().unwrap();
    let fall_b = sb["concentration_fall_time_s"].as_f64().unwrap();
    assert!(fall_u > fall_b, "{fall_u} vs {fall_b}");
}

#[test]
fn sweep_writes_one_row_per_period() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep");
    let stdout = run_ok(&["sweep", "--tsym", "300,10", "--out", s(&out)]).stdout;
    assert_eq!(String::from_utf8(stdout).unwrap().lines().count(), 2);

    let table = read_table(&out.join("sweep_summary.csv")).unwrap();
    assert_eq!(table.rows.len(), 2);
    assert_eq!(
        table.columns[..5],
        [
            "t_sym_s",
            "baseline_v",
            "peak_v",
            "drift_fraction",
            "monotone_buildup"
        ]
    );
    assert_eq!(table.columns.len(), 5 + 5);
    let by_period = |t: f64| table.rows.iter().find(|r| r[0] == t).unwrap().clone();
    let slow = by_period(300.0);
    let fast = by_period(10.0);
    assert!(slow[3] < 0.01, "{}", slow[3]);
    assert_eq!(fast[4], 1.0);
    assert!(fast[3] > slow[3]);

    for t in ["300", "10"] {
        for kind in ["concentration", "clean", "noisy"] {
            let p = out.join(format!("sweep_tsym{t}_{kind}.csv"));
            let series = load_series_csv(&p).unwrap();
            assert_eq!(series.metadata["t_sym"], t);
        }
    }
    let rows = json(&out.join("sweep_summary.json"));
    assert_eq!(rows.as_array().unwrap().len(), 2);
}

#[test]
fn sweep_rejects_non_positive_periods() {
    let dir = tempfile::tempdir().unwrap();
    let out = omc_sim(&["sweep", "--tsym", "30,-1", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
}

/// Noisy run of a two-pulse scenario, written where `validate` can read it.
fn noisy_fixture(dir: &Path, cfg: &Path) -> PathBuf {
    let out = dir.join("fixture");
    run_ok(&[
        "simulate",
        "--config",
        s(cfg),
        "--seed",
        "3",
        "--out",
        s(&out),
    ]);
    out
}

const TWO_PULSES: &str = r#"{"defaults":"table1_bounded","schedule":{"pulse_duration":1.0,"count":2,"symbol_period":30},"grid":{"t_end":80}}"#;

#[test]
fn validate_recovers_a_self_generated_measurement() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "two.json", TWO_PULSES);
    let fixture = noisy_fixture(dir.path(), &cfg);
    let out = dir.path().join("report");
    run_ok(&[
        "validate",
        s(&fixture.join("voltage_noisy.csv")),
        "--config",
        s(&cfg),
        "--out",
        s(&out),
    ]);
    let r = json(&out.join("validation_report.json"));
    assert!(r["pearson_r"].as_f64().unwrap() > 0.99);
    assert!(r["nrmse"].as_f64().unwrap() < 0.03);
    assert_eq!(r["nrmse_normalizer"], "range");
    assert_eq!(r["alignment_lag_s"].as_f64().unwrap(), 0.0);
}

#[test]
fn malformed_measurement_exits_with_a_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "time_s,voltage_v\n0,1\n0.01,oops\n").unwrap();
    let out = omc_sim(&["validate", s(&bad), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("bad.csv:3:"), "{err}");

    let missing = omc_sim(&["validate", s(&dir.path().join("absent.csv"))]);
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn noise_report_accounts_for_every_residual() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "long.json",
        r#"{"defaults":"table1_bounded","channel":{"released_amount":0.001},"grid":{"t_end":400}}"#,
    );
    let fixture = noisy_fixture(dir.path(), &cfg);
    let out = dir.path().join("noise");
    run_ok(&[
        "noise-report",
        s(&fixture.join("voltage_noisy.csv")),
        "--config",
        s(&cfg),
        "--out",
        s(&out),
    ]);
    let r = json(&out.join("noise_report.json"));
    let n = r["n_samples"].as_u64().unwrap();
    assert_eq!(r["histogram_total"].as_u64().unwrap(), n);
    let hist = read_table(&out.join("noise_histogram.csv")).unwrap();
    assert_eq!(hist.columns, ["bin_lo_v", "bin_hi_v", "count"]);
    assert_eq!(hist.rows.len(), 40);
    let total: f64 = hist.rows.iter().map(|r| r[2]).sum();
    assert_eq!(total as u64, n);
    let slope = r["qq_slope"].as_f64().unwrap();
    assert!((slope - 1.0).abs() < 0.05, "{slope}");
    assert_eq!(
        read_table(&out.join("noise_qq.csv")).unwrap().rows.len() as u64,
        n
    );
    assert_eq!(
        load_series_csv(&out.join("noise_residuals.csv"))
            .unwrap()
            .values
            .len() as u64,
        n
    );
}

#[test]
fn noise_report_refuses_zero_residuals() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "two.json", TWO_PULSES);
    let fixture = noisy_fixture(dir.path(), &cfg);
    let out = omc_sim(&[
        "noise-report",
        s(&fixture.join("voltage_clean.csv")),
        "--config",
        s(&cfg),
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8(out.stderr)
        .unwrap()
        .contains("degenerate"));
}

#[test]
fn oracle_without_diffusion_matches_exactly() {
    let dir = tempfile::tempdir().unwrap();
    for preset in ["table1_bounded", "table1_unbounded"] {
        let cfg = write_config(
            dir.path(),
            "k0.json",
            &format!(r#"{{"defaults":"{preset}","channel":{{"diffusivity":0.0}}}}"#),
        );
        let out = dir.path().join(preset);
        run_ok(&[
            "oracle",
            "--config",
            s(&cfg),
            "--particles",
            "20000",
            "--out",
            s(&out),
        ]);
        let r = json(&out.join("oracle_report.json"));
        assert_eq!(r["exact_match"], true, "{preset}");
        assert_eq!(r["pass"], true);
    }
}

#[test]
fn oracle_warns_about_small_ensembles() {
    let dir = tempfile::tempdir().unwrap();
    let out = omc_sim(&["oracle", "--particles", "100", "--out", s(dir.path())]);
    assert!(out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("insufficient statistics"), "{err}");
    let r = json(&dir.path().join("oracle_report.json"));
    assert_eq!(r["n_particles"], 100);
    let bins = read_table(&dir.path().join("oracle_bins.csv")).unwrap();
    assert_eq!(bins.rows.len(), 20);
}

#[test]
fn help_lists_the_global_flags() {
    let out = run_ok(&["--help"]);
    let text = String::from_utf8(out.stdout).unwrap();
    for flag in [
        "--config",
        "--seed",
        "--out",
        "simulate",
        "sweep",
        "validate",
        "noise-report",
        "oracle",
    ] {
        assert!(text.contains(flag), "missing {flag}");
    }
    let sweep = String::from_utf8(run_ok(&["sweep", "--help"]).stdout).unwrap();
    assert!(sweep.contains("--tsym") && sweep.contains("--pulses"));
}

#[test]
fn usage_and_config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(omc_sim(&["simulate", "--bogus"]).status.code(), Some(2));

    let cfg = write_config(dir.path(), "bad.json", r#"{"channel":{"diffusivity":-1}}"#);
    let out = omc_sim(&["simulate", "--config", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("channel.diffusivity"), "{err}");

    let out = Command::new(env!("CARGO_BIN_EXE_omc-sim"))
        .args(["simulate", "--out", s(dir.path())])
        .env("OMC_SIM_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for threads in ["1", "4"] {
        let out = dir.path().join(threads);
        let run = Command::new(env!("CARGO_BIN_EXE_omc-sim"))
            .args([
                "sweep",
                "--tsym",
                "30,10",
                "--pulses",
                "3",
                "--out",
                s(&out),
            ])
            .env("OMC_SIM_THREADS", threads)
            .output()
            .unwrap();
        assert!(run.status.success());
        outputs.push(fs::read(out.join("sweep_tsym10_noisy.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}
