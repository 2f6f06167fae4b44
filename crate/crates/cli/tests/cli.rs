use std::path::{Path, PathBuf};
use std::process::Command;

use hts_lab::{parse_config, ConfigError};

const MINIMAL: &str = r#"
[model]
kind = "product"
probs = [["0.5", "0.5"]]

[[targets]]
periodic = "0"
"#;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn errors(text: &str) -> Vec<String> {
    match parse_config(text) {
        Err(ConfigError::Invalid(v)) => v,
        other => panic!("expected validation errors, got {other:?}"),
    }
}

fn hts_lab(args: &[&str]) -> i32 {
    let status = Command::new(env!("CARGO_BIN_EXE_hts-lab")).args(args).status().expect("binary runs");
    status.code().expect("exit code")
}

#[test]
fn minimal_config_gets_defaults() {
    let cfg = parse_config(MINIMAL).unwrap();
    assert_eq!(cfg.seed, 1);
    assert_eq!(cfg.environments, 3);
    assert_eq!(cfg.targets.len(), 1);
    assert_eq!(cfg.targets[0].label, "(0)^inf");
    assert_eq!(cfg.t_grid.len(), 101);
    assert_eq!(cfg.hash.len(), 64);
}

#[test]
fn decimal_strings_are_echoed() {
    let cfg = parse_config(MINIMAL).unwrap();
    let p = cfg.parsed.iter().find(|p| p.key == "model.probs[0][1]").unwrap();
    assert_eq!(p.text, "0.5");
    assert_eq!(p.value, 0.5);
}

#[test]
fn hash_ignores_layout_and_key_order() {
    let reordered = r#"
[[targets]]
periodic = "0"

[model]
probs = [["0.5",   "0.5"]]   # same numbers
kind = "product"
"#;
    assert_eq!(parse_config(MINIMAL).unwrap().hash, parse_config(reordered).unwrap().hash);
    let other = MINIMAL.replace("\"0.5\", \"0.5\"", "\"0.25\", \"0.75\"");
    assert_ne!(parse_config(MINIMAL).unwrap().hash, parse_config(&other).unwrap().hash);
}

#[test]
fn bad_row_is_named() {
    let text = r#"
[base]
kind = "iid"
probs = ["0.5", "0.5"]

[model]
kind = "product"
probs = [["0.3", "0.7"], ["0.6", "0.3"]]

[[targets]]
periodic = "0"
"#;
    let e = errors(text);
    assert_eq!(e.len(), 1, "{e:?}");
    assert!(e[0].contains("model.probs[1]") && e[0].contains("0.9"), "{}", e[0]);
}

#[test]
fn out_of_range_probability_is_named() {
    let e = errors(&MINIMAL.replace("\"0.5\", \"0.5\"", "\"1.5\", \"-0.5\""));
    assert!(e.iter().any(|m| m.contains("model.probs[0][0]") && m.contains("[0, 1]")), "{e:?}");
    assert!(e.iter().any(|m| m.contains("model.probs[0][1]")), "{e:?}");
}

#[test]
fn unknown_keys_get_a_suggestion() {
    let text = format!("{MINIMAL}\n[run]\ntrails = 100\n\n[simulate]\ndepth = [4]\n");
    let e = errors(&text);
    assert!(e.iter().any(|m| m.contains("`run.trails`") && m.contains("`run.trials`")), "{e:?}");
    assert!(e.iter().any(|m| m.contains("`simulate.depth`") && m.contains("`simulate.depths`")), "{e:?}");
}

#[test]
fn all_violations_are_collected() {
    let text = r#"
[model]
kind = "product"
probs = [["0.5", "0.6"]]

[[targets]]
periodic = "2"

[run]
trials = 0
"#;
    let e = errors(text);
    assert!(e.len() >= 2, "{e:?}");
    assert!(e.iter().any(|m| m.contains("run.trials")), "{e:?}");
}

#[test]
fn syntax_errors_carry_a_line() {
    let text = "seed = 1\n[model]\nkind = \"product\"\nprobs = [[\"0.5\", \"0.5\"]\n";
    match parse_config(text) {
        Err(ConfigError::Syntax { line, .. }) => assert!((4..=5).contains(&line), "line {line}"),
        other => panic!("expected a syntax error, got {other:?}"),
    }
}

#[test]
fn shipped_configs_parse() {
    let mut n = 0;
    for entry in std::fs::read_dir(configs()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            hts_lab::load(&path).unwrap_or_else(|e| panic!("{}: {e:#}", path.display()));
            n += 1;
        }
    }
    assert!(n >= 6);
}

#[test]
fn gibbs_audit_writes_stamped_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("gibbs_finite_range.toml");
    let code = hts_lab(&["gibbs-audit", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code, 0);
    let hash = hts_lab::load(&cfg).unwrap().hash;
    let csv = std::fs::read_to_string(dir.path().join("gibbs_audit.csv")).unwrap();
    assert!(csv.starts_with(&format!("# config_hash={hash} seed=1 ")));
    let json: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("gibbs_audit.json")).unwrap()).unwrap();
    assert_eq!(json["config_hash"], hash.as_str());
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["invariants_passed"], true);
    assert_eq!(manifest["files"].as_array().unwrap().len(), 3);
}

#[test]
fn simulate_writes_curves_and_seed_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, format!("environments = 1\n{MINIMAL}\n[run]\ntrials = 500\n[simulate]\ndepths = [4]\n")).unwrap();
    let out = dir.path().join("out");
    let code =
        hts_lab(&["simulate", "--config", cfg.to_str().unwrap(), "--seed", "9", "--workers", "2", "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0);
    let csv = std::fs::read_to_string(out.join("survival.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().contains("seed=9"));
    assert_eq!(lines.next().unwrap(), "target,n,run,t,survival,stderr,exp_theta_t");
    assert_eq!(lines.count(), 101);
}

#[test]
fn failed_invariant_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    let text = format!("environments = 1\n{MINIMAL}\n[run]\ntrials = 200\n[simulate]\ndepths = [4]\nks_tolerance = 0.0\n");
    std::fs::write(&cfg, text).unwrap();
    let out = dir.path().join("out");
    assert_eq!(hts_lab(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]), 1);
    let checks: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("checks.json")).unwrap()).unwrap();
    assert!(checks["data"].as_array().unwrap().iter().any(|c| c["ok"] == false));
}

#[test]
fn errors_leave_a_record() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, MINIMAL.replace("\"0.5\", \"0.5\"", "\"0.5\", \"0.4\"")).unwrap();
    let out = dir.path().join("out");
    assert_eq!(hts_lab(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]), 2);
    let rec: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("error.json")).unwrap()).unwrap();
    assert_eq!(rec["error"], "config");
    assert!(rec["message"].as_str().unwrap().contains("model.probs[0]"));

    // a depth beyond the exact-marginal cap is a model error
    let text = format!("environments = 1\n{MINIMAL}\n[run]\ntrials = 10\n[simulate]\ndepths = [30]\n[marginal]\ncap = 20\n");
    let text = text.replace("probs = [[\"0.5\", \"0.5\"]]", "probs = [[\"0.3\", \"0.7\"], [\"0.6\", \"0.4\"]]");
    let text = text.replace("[model]", "[base]\nkind = \"iid\"\nprobs = [\"0.5\", \"0.5\"]\n\n[model]");
    std::fs::write(&cfg, text).unwrap();
    assert_eq!(hts_lab(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]), 2);
    let rec: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("error.json")).unwrap()).unwrap();
    assert_eq!(rec["error"], "model");
    assert!(rec["config_hash"].is_string());
}
