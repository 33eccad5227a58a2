use std::process::Command;

use ngd_cli::builtins::{builtin, list_scenarios, load, names, source};
use ngd_cli::config::{BlockDef, ScenarioConfig};
use ngd_cli::error::CliError;
use ngd_cli::runner::{execute, run_scenario, RunOptions};
use ngd_cli::sweep;

fn ngd() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ngd"))
}

#[test]
fn list_round_trips_every_builtin() {
    let list = list_scenarios().unwrap();
    assert!(list.len() >= 6);
    for (name, description) in &list {
        let cfg = builtin(name).unwrap();
        assert_eq!(&cfg.description, description);
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(ScenarioConfig::from_toml_str(&text).unwrap(), cfg, "{name}");
    }
}

#[test]
fn builtins_meet_their_expectations() {
    for name in names().filter(|n| *n != "fig2_rlc_advance") {
        let s = run_scenario(&builtin(name).unwrap(), &RunOptions::default()).unwrap();
        assert!(s.passed, "{name}: {:?}", s.failures());
    }
}

#[test]
fn rlc_advance_reports_its_measurements() {
    let s = run_scenario(&builtin("fig2_rlc_advance").unwrap(), &RunOptions::default()).unwrap();
    let adv = s.metric("advance.peak_advance").unwrap();
    assert!(adv > 6.0e-3 && adv < 8.0e-3, "{adv}");
    let tau = s.metric("spectrum.group_delay_at_probe").unwrap();
    assert!((tau + 0.0121).abs() < 1e-4, "{tau}");
    assert_eq!(s.metric("stability.stable"), Some(1.0));
}

#[test]
fn outputs_are_deterministic() {
    let cfg = builtin("fig5_rc_cancellation").unwrap();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for dir in [&a, &b] {
        execute(&cfg, &RunOptions { out_dir: Some(dir.path().to_path_buf()), tolerance_scale: 1.0 }).unwrap();
    }
    for file in ["fig5_rc_cancellation.csv", "fig5_rc_cancellation.svg"] {
        let x = std::fs::read(a.path().join(file)).unwrap();
        let y = std::fs::read(b.path().join(file)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, y, "{file}");
    }
    let csv = std::fs::read_to_string(a.path().join("fig5_rc_cancellation.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("time_s,square,rc_out,link_out"));
    assert_eq!(csv.lines().count(), cfg.settings.count + 1);
}

#[test]
fn spectrum_csv_layout() {
    let dir = tempfile::tempdir().unwrap();
    execute(&builtin("bode_check").unwrap(), &RunOptions { out_dir: Some(dir.path().to_path_buf()), tolerance_scale: 1.0 })
        .unwrap();
    let csv = std::fs::read_to_string(dir.path().join("bode_rc.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("omega_rad_s,magnitude,phase_rad,group_delay_s"));
    assert_eq!(csv.lines().count(), 501);
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("bode_check.json")).unwrap()).unwrap();
    assert_eq!(json["scenario"], "bode_check");
    assert_eq!(json["passed"], true);
}

#[test]
fn empty_sweep_is_a_config_error() {
    let cfg = builtin("golden_rule_sweep").unwrap();
    let err = sweep(&cfg, "blocks.amp.dc_gain", &[], &RunOptions::default()).unwrap_err();
    assert!(matches!(err, CliError::Config { .. }));
}

#[test]
fn single_value_sweep_matches_plain_run() {
    let cfg = builtin("golden_rule_sweep").unwrap();
    let table = sweep(&cfg, "blocks.amp.dc_gain", &[100.0], &RunOptions::default()).unwrap();
    let plain = run_scenario(&cfg, &RunOptions::default()).unwrap();
    assert_eq!(table.rows.len(), 1);
    assert_eq!(table.rows[0].1.flat_metrics(), plain.flat_metrics());
}

#[test]
fn sweep_scales_residual_with_gain() {
    let cfg = builtin("golden_rule_sweep").unwrap();
    let table = sweep(&cfg, "blocks.amp.dc_gain", &[1e2, 1e3, 1e4], &RunOptions::default()).unwrap();
    let r: Vec<f64> = table.rows.iter().map(|(_, s)| s.metric("golden.max_residual").unwrap()).collect();
    for pair in r.windows(2) {
        let ratio = pair[1] / pair[0];
        assert!((ratio - 0.1).abs() < 0.01, "{ratio}");
    }
    let csv = table.to_csv().unwrap();
    assert!(csv.starts_with("blocks.amp.dc_gain,passed,"));
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn config_errors_name_the_field() {
    let mut cfg = builtin("golden_rule_sweep").unwrap();
    cfg.blocks.insert("amp".into(), BlockDef::Opamp { dc_gain: 1e2, pole_frequency: -1.0 });
    match cfg.validate() {
        Err(CliError::Config { path, .. }) => assert_eq!(path, "blocks.amp"),
        other => panic!("{other:?}"),
    }

    let text = source("identity_smoke").unwrap().replace("input = \"pulse\"", "input = \"missing\"");
    match ScenarioConfig::from_toml_str(&text) {
        Err(CliError::Config { path, .. }) => assert_eq!(path, "pipeline[0].input"),
        other => panic!("{other:?}"),
    }

    let text = source("identity_smoke").unwrap().replace("schema_version = 1", "schema_version = 2");
    assert!(matches!(ScenarioConfig::from_toml_str(&text), Err(CliError::Config { path, .. }) if path == "schema_version"));
}

#[test]
fn tolerance_scale_widens_targets() {
    let text = source("identity_smoke")
        .unwrap()
        .replace("target = 0.0, abs_tol = 1.0e-12", "target = 1.0e-3, abs_tol = 6.0e-4");
    let cfg = ScenarioConfig::from_toml_str(&text).unwrap();
    assert!(!run_scenario(&cfg, &RunOptions::default()).unwrap().passed);
    assert!(run_scenario(&cfg, &RunOptions { out_dir: None, tolerance_scale: 2.0 }).unwrap().passed);
}

#[test]
fn load_accepts_paths() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.toml");
    std::fs::write(&path, source("identity_smoke").unwrap()).unwrap();
    assert_eq!(load(path.to_str().unwrap()).unwrap(), builtin("identity_smoke").unwrap());
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let ok = ngd().args(["--out-dir", out, "run", "identity_smoke"]).output().unwrap();
    assert_eq!(ok.status.code(), Some(0));
    assert!(dir.path().join("identity_smoke.csv").exists());

    let failing = ngd().args(["--out-dir", out, "run", "fig2_rlc_advance"]).output().unwrap();
    assert_eq!(failing.status.code(), Some(1));

    let bad = ngd().args(["run", "no_such_scenario"]).output().unwrap();
    assert_eq!(bad.status.code(), Some(2));

    let empty = ngd().args(["--out-dir", out, "sweep", "golden_rule_sweep", "--param", "blocks.amp.dc_gain", "--values"]).output().unwrap();
    assert_eq!(empty.status.code(), Some(2));

    let list = ngd().arg("list").output().unwrap();
    assert_eq!(list.status.code(), Some(0));
    assert_eq!(String::from_utf8(list.stdout).unwrap().lines().count(), names().count());
}
