use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use flowlab_cli::{CHECK_REGISTRY, EXIT_CONFIG, EXIT_OK};

const UNIT_SMALL: &str = "family = round_sphere\nn = 2\nr0 = 1\ngrid_n = 64\nsnapshots = 3\nfield_budget = 60\n";

fn flowlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flowlab")).args(args).output().unwrap()
}

fn setup(text: &str) -> (tempfile::TempDir, PathBuf, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("s.cfg");
    fs::write(&cfg, text).unwrap();
    let out = dir.path().join("out");
    (dir, cfg, out)
}

fn run(cmd: &str, cfg: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![cmd, "--scenario", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    flowlab(&args)
}

#[test]
fn every_registered_check_is_summarized_once() {
    let (_d, cfg, out) = setup(UNIT_SMALL);
    assert_eq!(run("verify", &cfg, &out, &[]).status.code(), Some(EXIT_OK));
    let rep = run("report", &cfg, &out, &[]);
    assert_eq!(rep.status.code(), Some(EXIT_OK), "{}", String::from_utf8_lossy(&rep.stderr));
    let summary = fs::read_to_string(out.join("summary.txt")).unwrap();
    for id in CHECK_REGISTRY {
        let hits = summary.lines().filter(|l| l.starts_with(&format!("{id}:"))).count();
        assert_eq!(hits, 1, "{id} appears {hits} times");
    }
    assert!(summary.contains("overall_pass: true"));
    assert!(out.join("trace.svg").exists());
}

#[test]
fn norm_curve_annotation_matches_fit() {
    let (_d, cfg, out) = setup(UNIT_SMALL);
    run("verify", &cfg, &out, &[]);
    run("report", &cfg, &out, &[]);
    let csv = fs::read_to_string(out.join("norm_curves_000.csv")).unwrap();
    let alpha: f64 = csv.lines().nth(1).unwrap().split(',').nth(4).unwrap().parse().unwrap();
    let svg = fs::read_to_string(out.join("norm_curves_000.svg")).unwrap();
    assert!(svg.contains(&format!("slope alpha(1-&gt;inf) = {alpha:.4}")));
    assert!((alpha - 1.0).abs() < 0.2);
}

#[test]
fn cfl_violation_is_a_config_error() {
    let (_d, cfg, out) = setup("family = conformal_s2\npreset = bumped\nbump_a = 0.3\ndt = 1e-4\n");
    let o = run("flow", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(EXIT_CONFIG));
}

#[test]
fn report_without_inputs_is_a_config_error() {
    let (_d, cfg, out) = setup(UNIT_SMALL);
    fs::create_dir_all(&out).unwrap();
    let o = run("report", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(EXIT_CONFIG));
    assert!(String::from_utf8_lossy(&o.stdout).contains("missing") || String::from_utf8_lossy(&o.stderr).contains("missing"));
}

#[test]
fn parse_errors_name_line_and_key() {
    let (_d, cfg, out) = setup("family = round_sphere\nn = 2\nbogus = 3\n");
    let o = run("flow", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(EXIT_CONFIG));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 3") && err.contains("bogus"), "{err}");
    assert_eq!(flowlab(&["flow", "--scenario", "/nonexistent.cfg"]).status.code(), Some(EXIT_CONFIG));
    assert_eq!(flowlab(&["frobnicate"]).status.code(), Some(EXIT_CONFIG));
    assert_eq!(flowlab(&["--help"]).status.code(), Some(EXIT_OK));
}

#[test]
fn config_echo_shows_derived_exponent() {
    let (_d, cfg, out) = setup("family = round_sphere\nn = 2\nq = 1.5\n");
    let o = run("spectrum", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(EXIT_OK));
    let echo = fs::read_to_string(out.join("spectrum_config.txt")).unwrap();
    assert!(echo.contains("p = 6"), "{echo}");
    let spec = fs::read_to_string(out.join("spectrum.csv")).unwrap();
    let lambda0: f64 = spec.lines().nth(1).unwrap().split(',').nth(2).unwrap().parse().unwrap();
    assert!((lambda0 - 0.5).abs() < 1e-6);
}

#[test]
fn seed_override_changes_the_family() {
    let (_d, cfg, out) = setup(UNIT_SMALL);
    run("verify", &cfg, &out, &[]);
    let a = fs::read_to_string(out.join("constants.csv")).unwrap();
    let out2 = out.with_file_name("out2");
    assert_eq!(run("verify", &cfg, &out2, &["--seed", "9"]).status.code(), Some(EXIT_OK));
    let b = fs::read_to_string(out2.join("constants.csv")).unwrap();
    assert_ne!(a, b);
    assert!(fs::read_to_string(out2.join("verify_config.txt")).unwrap().contains("seed = 9"));
}

#[test]
fn higher_dimensional_spheres_only_get_closed_form_commands() {
    let (_d, cfg, out) = setup("family = round_sphere\nn = 3\nr0 = 1\n");
    assert_eq!(run("flow", &cfg, &out, &[]).status.code(), Some(EXIT_OK));
    assert_eq!(run("spectrum", &cfg, &out, &[]).status.code(), Some(EXIT_OK));
    assert_eq!(run("verify", &cfg, &out, &[]).status.code(), Some(EXIT_CONFIG));
}
