use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn unet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_unet")).args(args).output().expect("spawn unet")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("unet-cli-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn build(dir: &Path, file: &str, args: &[&str]) -> String {
    let path = dir.join(file).to_str().unwrap().to_string();
    let mut full = vec!["gallery", "build"];
    full.extend_from_slice(args);
    full.extend_from_slice(&["--output", &path]);
    let out = unet(&full);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    path
}

#[test]
fn shift_flow_is_one() {
    let dir = scratch("shift");
    let net = build(&dir, "shift.json", &["shift", "--n", "4"]);
    let rep = json(&unet(&["flow", "--input", &net]));
    assert_eq!(rep["kind"], "flow");
    assert_eq!(rep["payload"]["net_flow"]["status"], "uniform");
    assert_eq!(rep["payload"]["net_flow"]["value"].as_f64(), Some(1.0));
}

#[test]
fn swap_staircase_flow_is_zero() {
    let dir = scratch("swap");
    let net = build(&dir, "swap.json", &["shift", "--n", "4", "--variant", "swap"]);
    let rep = json(&unet(&["flow", "--input", &net]));
    assert_eq!(rep["payload"]["net_flow"]["value"].as_f64(), Some(0.0));
}

#[test]
fn validate_loop_reports_cycle_without_failing() {
    let dir = scratch("loop");
    let net = build(&dir, "loop.json", &["loop"]);
    let out = unet(&["validate", "--input", &net]);
    assert_eq!(out.status.code(), Some(0));
    let rep = json(&out);
    assert_eq!(rep["payload"]["diagnostics"]["dag"], false);
}

#[test]
fn csd_decompose_is_deterministic() {
    let args = ["csd-decompose", "--modes-per-site", "2,2,2,2", "--seed", "11"];
    let a = unet(&args);
    let b = unet(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let rep = json(&a);
    assert!(rep["payload"]["reconstruction_residual"].as_f64().unwrap() < 1e-10);
    assert_eq!(rep["payload"]["bond_modes"], rep["payload"]["rank_oracle"]);
    assert_eq!(rep["provenance"]["seed"], 11);
}

#[test]
fn gallery_builds_are_byte_identical() {
    let a = unet(&["gallery", "build", "haar-bilayer", "--n", "3", "--seed", "5"]);
    let b = unet(&["gallery", "build", "haar-bilayer", "--n", "3", "--seed", "5"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn unknown_version_exits_2() {
    let dir = scratch("version");
    let net = build(&dir, "kw.json", &["kw", "--n", "3"]);
    let text = std::fs::read_to_string(&net).unwrap().replacen("\"format_version\": \"1\"", "\"format_version\": \"2\"", 1);
    let bad = dir.join("bad.json");
    std::fs::write(&bad, text).unwrap();
    let out = unet(&["flow", "--input", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(String::from_utf8_lossy(&out.stderr).lines().count(), 1);
}

#[test]
fn schema_error_names_pointer_and_exits_2() {
    let dir = scratch("schema");
    let net = build(&dir, "kw.json", &["kw", "--n", "3"]);
    let text = std::fs::read_to_string(&net).unwrap().replacen("\"outgoing\"", "\"sideways\"", 1);
    let bad = dir.join("bad.json");
    std::fs::write(&bad, text).unwrap();
    let out = unet(&["validate", "--input", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/direction"));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(unet(&["flow"]).status.code(), Some(2));
    assert_eq!(unet(&["gallery", "build", "kw", "--variant", "obc"]).status.code(), Some(2));
}

#[test]
fn domain_errors_exit_1() {
    let dir = scratch("domain");
    let net = build(&dir, "loop.json", &["loop"]);
    let out = unet(&["convert", "un-to-circuit", "--input", &net]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn mem_cap_env_is_honoured() {
    let dir = scratch("memcap");
    let net = build(&dir, "kw.json", &["kw", "--n", "6"]);
    let out = Command::new(env!("CARGO_BIN_EXE_unet"))
        .args(["eval", "--input", &net])
        .env("UNET_MEM_CAP", "16")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("budget"));
    let out = Command::new(env!("CARGO_BIN_EXE_unet"))
        .args(["eval", "--input", &net])
        .env("UNET_MEM_CAP", "lots")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn convert_round_trip_and_inputs_untouched() {
    let dir = scratch("convert");
    let net = build(&dir, "swap.json", &["shift", "--n", "4", "--variant", "swap"]);
    let before = std::fs::read(&net).unwrap();
    let circ = dir.join("c.json");
    let rep = json(&unet(&["convert", "un-to-circuit", "--input", &net, "--result", circ.to_str().unwrap()]));
    assert!(rep["payload"]["report"]["equivalence_residual"].as_f64().unwrap() < 1e-8);
    let back = dir.join("n.json");
    let rep =
        json(&unet(&["convert", "circuit-to-un", "--input", circ.to_str().unwrap(), "--result", back.to_str().unwrap()]));
    assert!(rep["payload"]["report"]["equivalence_residual"].as_f64().unwrap() < 1e-8);
    assert_eq!(std::fs::read(&net).unwrap(), before);
    let flow = json(&unet(&["flow", "--input", back.to_str().unwrap()]));
    assert_eq!(flow["payload"]["net_flow"]["value"].as_f64(), Some(0.0));
}

#[test]
fn mps_of_shifted_basis_state_is_a_product() {
    let dir = scratch("mps");
    let net = build(&dir, "swap.json", &["shift", "--n", "4", "--variant", "swap"]);
    let rep = json(&unet(&["mps", "--input", &net, "--state", "0100"]));
    assert!((rep["payload"]["norm"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert!(rep["payload"]["entropies"].as_array().unwrap().iter().all(|e| e.as_f64().unwrap().abs() < 1e-9));
}

#[test]
fn tails_csv_and_dot() {
    let dir = scratch("tails");
    let net = build(&dir, "xy.json", &["stacked-xy", "--n", "5"]);
    let out = unet(&["tails", "--input", &net, "--site", "3", "--max-r", "2", "--csv"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8_lossy(&out.stdout).lines().count(), 4);
    let dot = unet(&["dot", "--input", &net]);
    assert!(String::from_utf8_lossy(&dot.stdout).starts_with("digraph unet {"));
}
