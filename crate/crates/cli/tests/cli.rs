use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn crackdet(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crackdet"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) {
    let out = crackdet(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Last stderr line, parsed as the machine-readable error record.
fn error_line(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().expect("an error line");
    serde_json::from_str(line).unwrap_or_else(|_| panic!("not JSON: {line}"))
}

const CHAIN_OUTPUTS: &[&str] = &[
    "scene/ir.pgm",
    "scene/vis.ppm",
    "scene/xray.pgm",
    "scene/labels.pgm",
    "xray_flat.fr32",
    "features.fr32",
    "features.fr32.manifest.json",
    "quantizer.json",
    "matrix.bfm1",
    "posterior.json",
    "prob.fr32",
    "map.pgm",
    "selected.txt",
    "overlay.ppm",
];

fn run_chain(dir: &Path) {
    ok(dir, &["synth", "--seed", "7", "--out", "scene", "--width", "64", "--height", "64", "--cracks", "3", "--distractors", "2"]);
    ok(dir, &["preprocess", "--input", "scene/xray.pgm", "--output", "xray_flat.fr32", "--flatten-sigma", "8"]);
    ok(dir, &["features", "--ir", "scene/ir.pgm", "--vis", "scene/vis.ppm", "--xray", "xray_flat.fr32", "--out", "features.fr32"]);
    ok(dir, &["quantize-fit", "--features", "features.fr32", "--bins", "11", "--out", "quantizer.json"]);
    ok(dir, &["quantize-apply", "--features", "features.fr32", "--quantizer", "quantizer.json", "--out", "matrix.bfm1"]);
    ok(
        dir,
        &[
            "train", "--seed", "3", "--matrix", "matrix.bfm1", "--labels", "scene/labels.pgm", "--per-class", "150",
            "--iters", "60", "--burnin", "20", "--thin", "2", "--out", "posterior.json",
        ],
    );
    ok(
        dir,
        &[
            "predict", "--posterior", "posterior.json", "--matrix", "matrix.bfm1", "--width", "64", "--threshold", "0.5",
            "--prob-out", "prob.fr32", "--map-out", "map.pgm",
        ],
    );
    ok(dir, &["select", "--posterior", "posterior.json", "--manifest", "features.fr32.manifest.json", "--out", "selected.txt"]);
    ok(dir, &["overlay", "--vis", "scene/vis.ppm", "--map", "map.pgm", "--out", "overlay.ppm"]);
}

#[test]
fn full_chain_produces_maps_and_manifests() {
    let dir = tempfile::tempdir().unwrap();
    run_chain(dir.path());

    let prob = crackdet::raster::read_fr32::<f64>(dir.path().join("prob.fr32")).unwrap();
    assert_eq!((prob.width(), prob.height(), prob.channels()), (64, 64, 1));
    assert!(prob.samples().iter().all(|p| (0.0..=1.0).contains(p)));
    let map = crackdet::raster::read_pnm::<f64>(dir.path().join("map.pgm")).unwrap();
    assert!(map.samples().iter().all(|&v| v == 0.0 || v == 1.0));
    for (p, m) in prob.samples().iter().zip(map.samples()) {
        assert_eq!(*m == 1.0, *p >= 0.5);
    }

    let report = std::fs::read_to_string(dir.path().join("selected.txt")).unwrap();
    let header: Vec<&str> = report.lines().next().unwrap().split_whitespace().collect();
    assert_eq!(header, ["X_j", "k_j", "Description"], "{report}");

    let overlay = crackdet::raster::read_pnm::<f64>(dir.path().join("overlay.ppm")).unwrap();
    assert_eq!(overlay.channels(), 3);

    let run: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("posterior.json.run.json")).unwrap()).unwrap();
    assert_eq!(run["stage"], "train");
    assert_eq!(run["parameters"]["hyper"]["iterations"], 60);
    assert_eq!(run["inputs"].as_array().unwrap().len(), 2);
    assert_eq!(run["outputs"][0]["sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_chain(a.path());
    run_chain(b.path());
    for f in CHAIN_OUTPUTS {
        for name in [f.to_string(), format!("{f}.run.json")] {
            let (pa, pb) = (a.path().join(&name), b.path().join(&name));
            if !pa.exists() {
                assert!(!pb.exists());
                continue;
            }
            assert_eq!(std::fs::read(&pa).unwrap(), std::fs::read(&pb).unwrap(), "{name} differs");
        }
    }
}

fn corrupt_magic(path: &Path) {
    let mut bytes = std::fs::read(path).unwrap();
    bytes[0] ^= 0xff;
    std::fs::write(path, bytes).unwrap();
}

#[test]
fn corrupted_intermediates_fail_with_format_code() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    run_chain(d);

    corrupt_magic(&d.join("features.fr32"));
    let out = crackdet(d, &["quantize-fit", "--features", "features.fr32", "--out", "q2.json"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_line(&out)["error"], "format");
    assert!(!d.join("q2.json").exists());

    corrupt_magic(&d.join("matrix.bfm1"));
    let out = crackdet(d, &["train", "--matrix", "matrix.bfm1", "--labels", "scene/labels.pgm", "--out", "p2.json"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_line(&out)["error"], "format");

    corrupt_magic(&d.join("scene/labels.pgm"));
    let out = crackdet(d, &["overlay", "--vis", "scene/vis.ppm", "--map", "scene/labels.pgm", "--out", "o.ppm"]);
    assert_eq!(out.status.code(), Some(3));

    std::fs::write(d.join("posterior.json"), "{\"format\": \"bctf-0\"}").unwrap();
    let out = crackdet(d, &["select", "--posterior", "posterior.json", "--out", "s.txt"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn exit_codes_distinguish_failures() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();

    let out = crackdet(d, &["no-such-stage"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_line(&out)["exit_code"], 2);

    let out = crackdet(d, &["synth", "--out", "s", "--max-width", "4"]);
    assert_eq!(out.status.code(), Some(2));

    let out = crackdet(d, &["quantize-fit", "--features", "missing.fr32", "--out", "q.json"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_line(&out)["error"], "missing_input");

    ok(d, &["synth", "--out", "scene", "--width", "32", "--height", "32", "--cracks", "1", "--distractors", "0"]);
    std::fs::write(d.join("small.pgm"), b"P5\n4 4\n255\n0123456789abcdef").unwrap();
    let out = crackdet(d, &["overlay", "--vis", "scene/vis.ppm", "--map", "small.pgm", "--out", "o.ppm"]);
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(error_line(&out)["error"], "contract");

    let out = crackdet(d, &["preprocess", "--input", "scene/xray.pgm", "--output", "x.fr32", "--flatten-sigma", "-1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("cfg.json"), r#"{"seed": 11, "cracks_typo": 1}"#).unwrap();
    let out = crackdet(d, &["--config", "cfg.json", "synth", "--out", "a"]);
    assert_eq!(out.status.code(), Some(2), "unknown config keys are rejected");

    std::fs::write(d.join("cfg.json"), r#"{"seed": 11}"#).unwrap();
    ok(d, &["--config", "cfg.json", "synth", "--out", "a", "--width", "32", "--height", "32"]);
    ok(d, &["--config", "cfg.json", "synth", "--out", "b", "--width", "32", "--height", "32", "--seed", "12"]);
    let seed_of = |sub: &str| -> Value {
        let text = std::fs::read_to_string(d.join(sub).join("ir.pgm.run.json")).unwrap();
        serde_json::from_str::<Value>(&text).unwrap()["parameters"]["seed"].clone()
    };
    assert_eq!(seed_of("a"), 11);
    assert_eq!(seed_of("b"), 12);
}
