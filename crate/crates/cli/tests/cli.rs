use std::path::Path;
use std::process::{Command, Output};

fn ctxmix(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ctxmix"))
        .args(args)
        .env("CTXMIX_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path) {
    let out = ctxmix(&["synth", "--out", s(dir), "--seed", "7", "--utterances", "24"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn synth_scores_profile_on_defaults() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data);
    let enc = data.join("encoder-ctc");
    let (model, manifests) = (enc.join("model"), enc.join("manifests.jsonl"));
    let out = tmp.path().join("out");
    let r = ctxmix(&["scores", "--model", s(&model), "--manifests", s(&manifests), "--out", s(&out)]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&r.stdout).unwrap();
    assert_eq!(summary["command"], "scores");
    assert!(out.join("scores.jsonl").exists() && out.join("scores.csv").exists());

    let r = ctxmix(&["cue-contribution", "--model", s(&model), "--manifests", s(&manifests), "--out", s(&out)]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let profile = std::fs::read_to_string(out.join("profile.csv")).unwrap();
    // 4 layers x 3 methods x 1 scope
    assert_eq!(profile.lines().count() - 1, 4 * 3);
    let random = std::fs::read_to_string(out.join("profile_random.csv")).unwrap();
    assert_eq!(random.lines().count() - 1, 3 * 4 * 3);

    let svg = tmp.path().join("profile.svg");
    let r = ctxmix(&["render", "--input", s(&out.join("profile.csv")), "--out", s(&svg)]);
    assert!(r.status.success());
    assert!(std::fs::read_to_string(&svg).unwrap().starts_with("<svg"));
}

#[test]
fn cross_scope_on_encoder_model_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path());
    let enc = tmp.path().join("encoder-ctc");
    let out = tmp.path().join("out");
    let r = ctxmix(&[
        "scores",
        "--model",
        s(&enc.join("model")),
        "--manifests",
        s(&enc.join("manifests.jsonl")),
        "--out",
        s(&out),
        "--method",
        "attn",
        "--scope",
        "cross",
    ]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("scope"));
    assert!(!out.join("scores.jsonl").exists());
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope");
    let r = ctxmix(&["scores", "--model", s(&missing), "--manifests", s(&missing), "--out", s(tmp.path())]);
    assert_eq!(r.status.code(), Some(4));

    synth(tmp.path());
    let enc = tmp.path().join("encoder-ctc");
    let empty = tmp.path().join("empty.jsonl");
    std::fs::write(&empty, "").unwrap();
    let r = ctxmix(&["probe", "--model", s(&enc.join("model")), "--manifests", s(&empty), "--out", s(tmp.path())]);
    assert_eq!(r.status.code(), Some(2));

    let r = ctxmix(&["ablate", "--model", s(&enc.join("model")), "--manifests", s(&enc.join("manifests.jsonl")), "--out", s(tmp.path()), "--conditions", "BC"]);
    assert_eq!(r.status.code(), Some(2));

    let bad = tmp.path().join("bad.csv");
    std::fs::write(&bad, "layer,method\n").unwrap();
    let svg = tmp.path().join("bad.svg");
    let r = ctxmix(&["render", "--input", s(&bad), "--out", s(&svg)]);
    assert_eq!(r.status.code(), Some(2));
    assert!(!svg.exists());
}

fn snapshot(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(root).unwrap().display().to_string(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn run_pipeline(root: &Path) -> Vec<Vec<u8>> {
    let data = root.join("data");
    synth(&data);
    let mut stdout = Vec::new();
    for kind in ["encoder-ctc", "encoder-decoder"] {
        let model = data.join(kind).join("model");
        let manifests = data.join(kind).join("manifests.jsonl");
        let out = root.join("out").join(kind);
        let base = ["--model", s(&model), "--manifests", s(&manifests), "--out", s(&out)];
        for cmd in ["scores", "cue-contribution", "probe", "ablate"] {
            let mut args = vec![cmd];
            args.extend(base);
            let r = ctxmix(&args);
            assert!(r.status.success(), "{cmd}: {}", String::from_utf8_lossy(&r.stderr));
            stdout.push(r.stdout);
        }
        let r = ctxmix(&["render", "--input", s(&out.join("scores.jsonl")), "--out", s(&out.join("map.svg")), "--index", "3"]);
        assert!(r.status.success());
    }
    stdout
}

#[test]
fn every_command_is_byte_identical_across_runs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_pipeline(a.path());
    run_pipeline(b.path());
    let (sa, sb) = (snapshot(a.path()), snapshot(b.path()));
    assert_eq!(sa.len(), sb.len());
    for ((na, ba), (nb, bb)) in sa.iter().zip(&sb) {
        assert_eq!(na, nb);
        assert!(ba == bb, "{na} differs");
    }
}
