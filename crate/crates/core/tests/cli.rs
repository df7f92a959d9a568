use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lmcortex::cli::{Manifest, MANIFEST};
use serde_json::Value;

fn lmcortex(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lmcortex")).args(args).output().unwrap()
}

fn error_record(o: &Output) -> Value {
    let stderr = String::from_utf8(o.stderr.clone()).unwrap();
    assert_eq!(stderr.trim_end().lines().count(), 1, "stderr: {stderr}");
    serde_json::from_str(stderr.trim_end()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

/// Token features, timeline and BOLD for 100 TRs with one token per TR.
fn external_inputs(dir: &Path, feature: impl Fn(usize, usize) -> f64) -> [PathBuf; 3] {
    let mut feats = String::from("f0,f1\n");
    let mut bold = String::new();
    for t in 0..100 {
        feats.push_str(&format!("{},{}\n", feature(t, 0), feature(t, 1)));
        let v: Vec<String> = (0..3).map(|j| format!("{}", ((t * 31 + j * 17) % 23) as f64 / 7.0)).collect();
        bold.push_str(&(v.join(",") + "\n"));
    }
    let times: Vec<String> = (0..100).map(|t| format!("{}", 2.0 * t as f64 + 0.5)).collect();
    [
        write(dir, "features.csv", &feats),
        write(dir, "timeline.json", &format!(r#"{{"tr_seconds": 2.0, "token_times": [{}]}}"#, times.join(","))),
        write(dir, "bold.csv", &bold),
    ]
}

fn config_with_paths(dir: &Path, inputs: &[PathBuf; 3], extra: &str) -> PathBuf {
    let text = format!(
        r#"{{"space": "raw", "paths": {{"features": {:?}, "timeline": {:?}, "bold": {:?}}}{extra}}}"#,
        inputs[0], inputs[1], inputs[2]
    );
    write(dir, "run.json", &text)
}

#[test]
fn help_and_version_succeed() {
    assert!(lmcortex(&["--help"]).status.success());
    assert!(lmcortex(&["--version"]).status.success());
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let o = lmcortex(&["--frobnicate", "synth"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_record(&o)["error"], "usage");
    let o = lmcortex(&["explode"]);
    assert_eq!(o.status.code(), Some(2));
    let o = lmcortex(&["--partition", "sideways", "partition"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn schema_violations_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    for (name, text) in [
        ("unknown.json", r#"{"pca_dims": 3}"#),
        ("type.json", r#"{"pca_k": "twenty"}"#),
        ("value.json", r#"{"pca_k": 0}"#),
        ("syntax.json", r#"{"seed": "#),
    ] {
        let p = write(dir.path(), name, text);
        let o = lmcortex(&["--config", p.to_str().unwrap(), "--out-dir", out.to_str().unwrap(), "synth"]);
        assert_eq!(o.status.code(), Some(2), "{name}");
        let rec = error_record(&o);
        assert!(rec["message"].as_str().is_some_and(|m| !m.is_empty()));
    }
    // Validation happens before anything is computed or written.
    assert!(!out.join("bold.hfm").exists());
}

#[test]
fn missing_input_file_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.json", r#"{"paths": {"bold": "/nonexistent/bold.hfm"}}"#);
    let out = dir.path().join("out");
    let o = lmcortex(&["--config", cfg.to_str().unwrap(), "--out-dir", out.to_str().unwrap(), "timeconst"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_record(&o)["error"], "io");
}

#[test]
fn singular_fit_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let inputs = external_inputs(dir.path(), |_, _| 0.0);
    let cfg = config_with_paths(dir.path(), &inputs, r#", "alpha_grid": [0.0], "n_shuffles": 2"#);
    let out = dir.path().join("out");
    let o = lmcortex(&["--config", cfg.to_str().unwrap(), "--out-dir", out.to_str().unwrap(), "fit", "--shuffle"]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(error_record(&o)["error"], "singular");
}

#[test]
fn inputs_are_not_mutated() {
    let dir = tempfile::tempdir().unwrap();
    let inputs = external_inputs(dir.path(), |t, j| ((t * (j + 3)) % 11) as f64 - 5.0);
    let cfg = config_with_paths(dir.path(), &inputs, r#", "n_shuffles": 2"#);
    let before: Vec<Vec<u8>> = inputs.iter().chain([&cfg]).map(|p| fs::read(p).unwrap()).collect();
    let out = dir.path().join("out");
    for cmd in [&["align"][..], &["pca"], &["fit", "--shuffle"]] {
        let mut args = vec!["--config", cfg.to_str().unwrap(), "--out-dir", out.to_str().unwrap()];
        args.extend_from_slice(cmd);
        let o = lmcortex(&args);
        assert!(o.status.success(), "{cmd:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let after: Vec<Vec<u8>> = inputs.iter().chain([&cfg]).map(|p| fs::read(p).unwrap()).collect();
    assert_eq!(before, after);
    let null: Value = serde_json::from_str(&fs::read_to_string(out.join("null_single.json")).unwrap()).unwrap();
    assert_eq!(null["samples"].as_array().unwrap().len(), 2);
    assert_eq!(null["mode"], "single");
}

fn files(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(files(&p));
        } else {
            out.push(p);
        }
    }
    out
}

#[test]
fn every_output_carries_config_hash_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "run.json",
        r#"{"space": "raw", "seed": 4, "n_perm": 200, "synth": {"n_tr": 500, "n_voxels": 40, "n_rois": 5}}"#,
    );
    let out = dir.path().join("out");
    let o = lmcortex(&["--config", cfg.to_str().unwrap(), "--out-dir", out.to_str().unwrap(), "report"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(out.join(MANIFEST)).unwrap()).unwrap();
    let hash = manifest.files.values().next().unwrap().config_sha256.clone();
    assert_eq!(hash.len(), 64);
    let stamp = format!("# config_sha256={hash} seed=4");
    for p in files(&out) {
        let rel = p.strip_prefix(&out).unwrap().to_string_lossy().replace('\\', "/");
        match p.extension().and_then(|e| e.to_str()) {
            Some("csv") => {
                let text = fs::read_to_string(&p).unwrap();
                assert_eq!(text.lines().next(), Some(stamp.as_str()), "{rel}");
            }
            Some("json") if rel == MANIFEST => {}
            Some("json") => {
                let v: Value = serde_json::from_str(&fs::read_to_string(&p).unwrap()).unwrap();
                assert_eq!(v["config_sha256"], hash.as_str(), "{rel}");
                assert_eq!(v["seed"], 4, "{rel}");
            }
            Some("hfm") => {
                let e = &manifest.files[&rel];
                assert_eq!(e.config_sha256, hash, "{rel}");
                assert_eq!(e.seed, 4);
            }
            other => panic!("unexpected output {rel} ({other:?})"),
        }
    }

    let report: Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    for key in ["partition", "maps", "hierarchy", "degree_lambda"] {
        assert!(report.get(key).is_some(), "report lacks {key}");
    }
    let scatter = fs::read_to_string(out.join("hierarchy_scatter.csv")).unwrap();
    assert_eq!(scatter.lines().nth(1), Some("roi,index,lambda"));
}

#[test]
fn changed_config_recomputes_stale_stages() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let small = r#"{"space": "raw", "synth": {"n_tr": 300, "n_voxels": 20, "n_rois": 4}}"#;
    let a = write(dir.path(), "a.json", small);
    assert!(lmcortex(&["--config", a.to_str().unwrap(), "--out-dir", out.to_str().unwrap(), "align"]).status.success());
    let first = fs::read(out.join("aligned.hfm")).unwrap();
    // A different seed makes every upstream artifact stale.
    let o = lmcortex(&["--config", a.to_str().unwrap(), "--seed", "9", "--out-dir", out.to_str().unwrap(), "align"]);
    assert!(o.status.success());
    assert_ne!(fs::read(out.join("aligned.hfm")).unwrap(), first);
    let tl: Value = serde_json::from_str(&fs::read_to_string(out.join("timeline.json")).unwrap()).unwrap();
    assert_eq!(tl["seed"], 9);
}

#[test]
fn causal_basis_does_not_depend_on_command_order() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "run.json",
        r#"{"space": "pca", "pca_k": 5, "synth": {"n_tr": 300, "n_voxels": 20, "n_rois": 4}}"#,
    );
    let mut digests = Vec::new();
    for (name, order) in [("a", ["causal", "pca"]), ("b", ["pca", "causal"])] {
        let out = dir.path().join(name);
        for cmd in order {
            let o = lmcortex(&["--config", cfg.to_str().unwrap(), "--out-dir", out.to_str().unwrap(), cmd]);
            assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        }
        digests.push(fs::read(out.join("causal_aggregate.hfm")).unwrap());
    }
    assert_eq!(digests[0], digests[1]);
}

#[test]
fn planted_chain_reports_positive_hierarchy() {
    let cfg = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/planted.json");
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    for cmd in ["synth", "align", "pca", "fit", "report"] {
        let o = lmcortex(&["--config", cfg.to_str().unwrap(), "--out-dir", out.to_str().unwrap(), cmd]);
        assert!(o.status.success(), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let report: Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let rho = report["hierarchy"]["spearman"]["rho"].as_f64().unwrap();
    assert!(rho >= 0.5, "rho = {rho}");
}
