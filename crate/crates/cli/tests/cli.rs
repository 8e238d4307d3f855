use std::collections::BTreeMap;
use std::net::TcpListener;
use std::path::Path;
use std::process::{Command, Output};

fn mvscreen(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mvscreen"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn synth(dir: &Path, scenes: &str) {
    let out = mvscreen(dir, &["synth", "--dir", ".", "--scenes-per-type", scenes]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(
                    p.strip_prefix(root).unwrap().display().to_string(),
                    std::fs::read(&p).unwrap(),
                );
            }
        }
    }
    out
}

#[test]
fn version_lists_formats() {
    let out = mvscreen(Path::new("."), &["--version"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(out.status.success());
    assert!(text.contains("EMB1"), "{text}");
    assert!(text.contains("manifest format: v1"), "{text}");
}

#[test]
fn run_succeeds_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "4");
    let a = mvscreen(dir.path(), &["run", "--out", "a"]);
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stderr));
    let stdout = String::from_utf8(a.stdout).unwrap();
    assert!(stdout.contains("groups evaluated: 12"), "{stdout}");
    let b = mvscreen(dir.path(), &["run", "--out", "b"]);
    assert_eq!(b.status.code(), Some(0));
    let (ta, tb) = (tree(&dir.path().join("a")), tree(&dir.path().join("b")));
    assert!(ta.contains_key("groups.jsonl") && ta.contains_key("report/aggregate.json"));
    assert_eq!(ta, tb);
}

#[test]
fn stages_chain_to_the_same_result_as_run() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "3");
    for stage in [
        "ingest-check",
        "select-views",
        "caption",
        "identify",
        "evaluate",
        "report",
    ] {
        let out = mvscreen(dir.path(), &[stage, "--out", "staged"]);
        assert_eq!(
            out.status.code(),
            Some(0),
            "{stage}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    assert!(mvscreen(dir.path(), &["run", "--out", "whole"]).status.success());
    assert_eq!(tree(&dir.path().join("staged")), tree(&dir.path().join("whole")));
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir(dir.path().join("data")).unwrap();
    synth(&dir.path().join("data"), "2");
    std::fs::write(
        dir.path().join("cfg.toml"),
        "manifest = \"data/manifest.jsonl\"\nembeddings = \"data/embeddings.emb1\"\noutput = \"res\"\n[eval]\nfolds = 3\n",
    )
    .unwrap();
    let out = mvscreen(dir.path(), &["--config", "cfg.toml", "run", "--folds", "2"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("res/report/fold-2.json").is_file());
    assert!(!dir.path().join("res/report/fold-3.json").exists());
}

#[test]
fn missing_input_exits_one_and_names_the_file() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "1");
    let out = mvscreen(dir.path(), &["run", "--embeddings", "nope.emb1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.emb1"));
    let out = mvscreen(dir.path(), &["run", "--tau-low", "0.9", "--tau-high", "0.1"]);
    assert_eq!(out.status.code(), Some(1));
    let out = mvscreen(dir.path(), &["identify", "--out", "empty"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unreachable_provider_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "1");
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let endpoint = format!("http://127.0.0.1:{port}");
    let out = mvscreen(
        dir.path(),
        &[
            "run",
            "--provider",
            "remote",
            "--endpoint",
            &endpoint,
            "--attempts",
            "2",
            "--backoff-ms",
            "1",
        ],
    );
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn incomplete_captions_file_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "1");
    std::fs::write(dir.path().join("captions.jsonl"), "").unwrap();
    let out = mvscreen(
        dir.path(),
        &["run", "--provider", "file", "--captions", "captions.jsonl"],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("g001"));
}
