use std::process::Command;

use serde_json::Value;

fn odeim(args: &[&str]) -> (i32, String, String) {
    odeim_env(args, &[])
}

fn odeim_env(args: &[&str], env: &[(&str, &str)]) -> (i32, String, String) {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_odeim"));
    cmd.args(args);
    for (k, v) in env {
        cmd.env(k, v);
    }
    let out = cmd.output().expect("binary runs");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8(out.stdout).unwrap(),
        String::from_utf8(out.stderr).unwrap(),
    )
}

fn json(s: &str) -> Value {
    serde_json::from_str(s).expect("valid JSON")
}

#[test]
fn info_b3() {
    let (code, out, _) = odeim(&["info", "B3"]);
    assert_eq!(code, 0);
    let v = json(&out);
    assert_eq!(v["schema"], 1);
    assert_eq!(v["tilde"], "A5");
    assert_eq!(v["r"], 2);
    assert_eq!(v["h_dual"], 5);
    assert_eq!(v["D"], serde_json::json!(["1", "1", "1/2"]));
    assert_eq!(v["k"].as_array().unwrap().len(), 5);
}

#[test]
fn spectrum_g2_has_unit_maximal_eigenvalue() {
    let (code, out, _) = odeim(&["spectrum", "--algebra", "G2", "--rep", "1"]);
    assert_eq!(code, 0);
    let v = json(&out);
    assert!((v["maximal"].as_f64().unwrap() - 1.0).abs() < 1e-10);
    assert_eq!(v["eigenvalues"].as_array().unwrap().len(), 8);
}

#[test]
fn affine_names_are_accepted() {
    let (_, a, _) = odeim(&["info", "D43"]);
    let (_, b, _) = odeim(&["info", "--algebra", "G2"]);
    assert_eq!(a, b);
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(odeim(&["info", "B2"]).0, 2);
    assert_eq!(odeim(&["nonsense"]).0, 2);
    assert_eq!(odeim(&["info"]).0, 2);
    assert_eq!(odeim(&["q", "--algebra", "B3", "--e-grid", "1:1:3"]).0, 2);
    assert_eq!(odeim(&["info", "B3", "--format", "csv"]).0, 2);
    let (code, out, err) = odeim(&["spectrum", "--algebra", "B3", "--rep", "9"]);
    assert_eq!(code, 2);
    assert!(out.is_empty());
    assert!(err.contains("node 9"));
}

#[test]
fn unsupported_exits_with_three() {
    assert_eq!(odeim(&["airy", "--algebra", "A3"]).0, 3);
}

#[test]
fn airy_d43_vector() {
    let (code, out, _) = odeim(&["airy", "--algebra", "D43", "--x", "2.0", "--k", "1"]);
    assert_eq!(code, 0);
    let v = json(&out);
    assert_eq!(v["psi"].as_array().unwrap().len(), 8);
    assert!(v["ode_residual"].as_f64().unwrap() < 1e-8);
}

#[test]
fn airy_q_csv_has_header_and_rows() {
    let (code, out, _) = odeim(&["airy-q", "--algebra", "A5^(2)", "--e-grid", "-1:1:3", "--format", "csv"]);
    assert_eq!(code, 0);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "E_re,E_im,Q1_re,Q1_im,Q2_re,Q2_im");
    assert_eq!(lines.len(), 4);
}

#[test]
fn json_floats_round_trip() {
    let (_, out, _) = odeim(&["airy", "--algebra", "B3", "--x", "-2"]);
    let v = json(&out);
    let re = v["psi"][0][0].as_f64().unwrap();
    // the report prints the shortest representation, so reparsing is exact
    assert_eq!(format!("{:?}", re).parse::<f64>().unwrap().to_bits(), re.to_bits());
    assert!((re - 9.31384430753708558).abs() < 1e-11);
}

#[test]
fn config_file_and_thread_count_do_not_change_the_report() {
    let dir = std::env::temp_dir().join(format!("odeim-cli-{}.json", std::process::id()));
    std::fs::write(&dir, r#"{"algebra": "B3", "M": 2, "seed": 7, "e-grid": "-1:1:3", "format": "csv"}"#).unwrap();
    let path = dir.to_str().unwrap();
    let (c1, a, _) = odeim(&["q", "--config", path]);
    let (c2, b, _) = odeim_env(&["q", "--config", path], &[("ODEIM_THREADS", "1")]);
    let (c3, c, _) = odeim(&["q", "--algebra", "B3", "--M", "2", "--seed", "7", "--e-grid", "-1:1:3", "--format", "csv"]);
    let (_, d, _) = odeim(&["q", "--config", path, "--seed", "8"]);
    std::fs::remove_file(&dir).ok();
    assert_eq!((c1, c2, c3), (0, 0, 0));
    assert_eq!(a, b);
    assert_eq!(a, c);
    assert_ne!(a, d);
}

#[test]
fn weyl_word_moves_the_phases() {
    let (code, out, _) = odeim(&["weyl", "--algebra", "B3", "--word", "1,2,1"]);
    assert_eq!(code, 0);
    let v = json(&out);
    assert_eq!(v["moved"], true);
    let (code, out, _) = odeim(&["weyl", "--algebra", "B3", "--word", "2,2"]);
    assert_eq!(code, 0);
    assert_eq!(json(&out)["acts_as_identity"], true);
}

#[test]
fn oscillator_zeros_through_the_cli() {
    let (code, out, _) = odeim(&["zeros", "--algebra", "A1", "--M", "1", "--ell", "0.3", "--count", "2", "--format", "csv"]);
    assert_eq!(code, 0);
    let rows: Vec<Vec<f64>> = out.lines().skip(1).map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 2);
    for (k, r) in rows.iter().enumerate() {
        let want = 4.0 * k as f64 + 3.6;
        assert!((r[0] - want).abs() < 1e-6 * want, "{:?}", r);
    }
}

#[test]
fn every_subcommand_has_help() {
    for sub in [
        "info", "fold", "spectrum", "psi-check", "q", "zeros", "qq-check", "bae-check", "weyl", "airy", "airy-q", "dump-generators",
    ] {
        let (code, out, _) = odeim(&[sub, "--help"]);
        assert_eq!(code, 0, "{}", sub);
        assert!(out.contains("Usage"), "{}", sub);
    }
}
