use std::path::Path;
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fujita-lab")).args(args).output().unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.json");
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_owned()
}

fn stderr_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stderr)
        .unwrap_or_else(|_| panic!("stderr is not JSON: {}", String::from_utf8_lossy(&out.stderr)))
}

#[test]
fn missing_config_is_a_validation_error() {
    let out = run(&["classify", "--config", "/nonexistent/config.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"]["kind"], "validation");
}

#[test]
fn unknown_keys_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{ "manifold": { "builtin": "euclidean", "dimension": 2 }, "problem": { "p": 2.0, "q": 1 } }"#,
    );
    let out = run(&["classify", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_json(&out)["error"]["message"].as_str().unwrap().contains("unknown field"));
}

#[test]
fn bad_arguments_give_a_json_error() {
    let out = run(&["classify"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"]["kind"], "validation");
}

#[test]
fn classify_exit_codes_follow_the_verdict() {
    let tmp = tempfile::tempdir().unwrap();
    for (p, code, verdict) in [(2.0, 0, "Divergent"), (2.5, 1, "Convergent")] {
        let body = format!(
            r#"{{ "manifold": {{ "builtin": "euclidean", "dimension": 2 }}, "problem": {{ "p": {p} }}, "output": {{ "directory": "out" }} }}"#
        );
        let cfg = write_config(tmp.path(), &body);
        let out = run(&["classify", "--config", &cfg]);
        assert_eq!(out.status.code(), Some(code), "{}", String::from_utf8_lossy(&out.stderr));
        let line: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        assert_eq!(line["verdict"], verdict);
    }
    let verdict: serde_json::Value =
        serde_json::from_slice(&std::fs::read(tmp.path().join("out/verdict.json")).unwrap()).unwrap();
    assert_eq!(verdict["agree"], true);
}

#[test]
fn explicit_family_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{ "manifold": { "dimension": 3, "family": { "C": 1.0, "exponents": [4.0], "r_base": 2.0 }, "r_splice": 2.0 },
             "problem": { "p": 1.4 } }"#,
    );
    let out = run(&["classify", "--config", &cfg, "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn manifest_hashes_match_and_formats_filter() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{ "manifold": { "builtin": "euclidean", "dimension": 2 }, "problem": { "p": 2.0 },
             "certificate": { "shells": 4, "decay_shells": [2, 4], "decay_r0": [1.0], "phi_samples": 8 } }"#,
    );
    let out_dir = tmp.path().join("cert");
    let out = run(&["certificate", "--config", &cfg, "--out", out_dir.to_str().unwrap(), "--format", "csv"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out_dir.join("phi.csv").exists() && out_dir.join("decay.csv").exists());
    assert!(!out_dir.join("certificate.json").exists());
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["subcommand"], "certificate");
    let files = manifest["files"].as_object().unwrap();
    assert!(files.contains_key("effective_config.json"));
    for (name, entry) in files {
        let bytes = std::fs::read(out_dir.join(name)).unwrap();
        assert_eq!(entry["sha256"], hex::encode(Sha256::digest(&bytes)), "{name}");
    }
    assert_eq!(manifest["inputs"].as_object().unwrap().len(), 1);
    let effective: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out_dir.join("effective_config.json")).unwrap()).unwrap();
    assert_eq!(effective["solver"]["cells"], 1024);
    assert_eq!(effective["output"]["formats"], serde_json::json!(["csv"]));
}

#[test]
fn report_draws_a_phase_diagram() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(
        tmp.path().join("a.csv"),
        "p,amplitude,outcome,t_star,alpha,predicted_p_star\n2,0.01,blow_up,5,2,2\n2.5,0.01,global_evidence,,2,2\n2.5,1,blow_up,0.3,2,2\n",
    )
    .unwrap();
    std::fs::write(
        tmp.path().join("b.csv"),
        "p,amplitude,outcome,t_star,alpha,predicted_p_star\n1.5,0.01,blow_up,9,3,1.6667\n1.8,0.01,undetermined,,3,1.6667\n",
    )
    .unwrap();
    let cfg =
        write_config(tmp.path(), r#"{ "report": { "inputs": ["a.csv", "b.csv"] }, "output": { "directory": "rep" } }"#);
    let out = run(&["report", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let svg = std::fs::read_to_string(tmp.path().join("rep/phase.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    assert_eq!(svg.matches("<circle cx=").count(), 4 + 3);
    let phase: serde_json::Value =
        serde_json::from_slice(&std::fs::read(tmp.path().join("rep/phase.json")).unwrap()).unwrap();
    let phases: Vec<&str> = phase["points"].as_array().unwrap().iter().map(|p| p["phase"].as_str().unwrap()).collect();
    assert_eq!(phases, ["blow_up", "global", "blow_up", "undetermined"]);
}

#[test]
fn threads_fall_back_to_the_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{ "manifold": { "builtin": "euclidean", "dimension": 1 }, "problem": { "p": 2.0 } }"#,
    );
    let out = Command::new(env!("CARGO_BIN_EXE_fujita-lab"))
        .args(["classify", "--config", &cfg])
        .env("FUJITA_LAB_THREADS", "3")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let effective: serde_json::Value =
        serde_json::from_slice(&std::fs::read(tmp.path().join("out/effective_config.json")).unwrap()).unwrap();
    assert_eq!(effective["threads"], 3);
}
