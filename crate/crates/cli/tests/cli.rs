use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};
use std::time::{Duration, Instant};

use serde_json::Value;

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn adpc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adpc"))
        .current_dir(root())
        .args(args)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", stdout(o)))
}

#[test]
fn taxonomy_compile_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for out in [&a, &b] {
        let o = adpc(&[
            "taxonomy",
            "compile",
            "fixtures/vocab/dpv-lite.json",
            "--weights",
            "fixtures/vocab/dpv-lite.weights.json",
            "-o",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 0, "{o:?}");
    }
    let a = std::fs::read(a).unwrap();
    assert_eq!(a, std::fs::read(b).unwrap());
    let doc: Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(doc["entries"].as_array().unwrap().len(), 27);
}

#[test]
fn taxonomy_validate_names_the_cycle() {
    let o = adpc(&["taxonomy", "validate", "fixtures/vocab/cyclic.json"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("cycle"));
    let o = adpc(&[
        "--json",
        "taxonomy",
        "validate",
        "fixtures/vocab/cyclic.json",
    ]);
    assert_eq!(json(&o)["code"], 2);
    let o = adpc(&[
        "taxonomy",
        "validate",
        "fixtures/registry.json",
        "fixtures/vocab/tcf-lite.json",
    ]);
    assert_eq!(code(&o), 0);
}

#[test]
fn policy_round_trip_and_strip() {
    for file in [
        "fixtures/policy/newsletter.json",
        "fixtures/policy/tcf.json",
    ] {
        let enc = adpc(&["policy", "encode", file]);
        assert_eq!(code(&enc), 0);
        let b64 = stdout(&enc).trim().to_owned();
        let dec = adpc(&["--json", "policy", "decode", &b64]);
        let original: Value =
            serde_json::from_str(&std::fs::read_to_string(root().join(file)).unwrap()).unwrap();
        let mut back = json(&dec);
        // the decoder spells out the default legal basis
        for p in original["purposes"].as_array().unwrap() {
            if p.get("legal_basis").is_none() {
                let entry = back["purposes"]
                    .as_array_mut()
                    .unwrap()
                    .iter_mut()
                    .find(|e| e["id"] == p["id"])
                    .unwrap();
                assert_eq!(entry["legal_basis"], "consent");
                entry.as_object_mut().unwrap().remove("legal_basis");
            }
        }
        let mut original = original;
        for v in [&mut back, &mut original] {
            v["purposes"]
                .as_array_mut()
                .unwrap()
                .sort_by_key(|p| p["id"].as_str().unwrap().to_owned());
        }
        assert_eq!(back, original);

        let strip = json(&adpc(&[
            "--json", "policy", "strip", "--keep", "purposes", file,
        ]));
        assert!(strip["word"].as_str().unwrap().len() < b64.len());
    }
}

#[test]
fn policy_decode_truncated() {
    let o = adpc(&["policy", "decode", "BAgJ"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("truncated"));
    let o = adpc(&["--json", "policy", "decode", "BAgJ"]);
    assert!(json(&o)["error"].as_str().unwrap().contains("truncated"));
}

#[test]
fn match_explain_and_prompt() {
    let o = adpc(&[
        "match",
        "--prefs",
        "fixtures/prefs/prohibit-marketing.json",
        "--requests",
        "fixtures/requests/newsletter.json",
        "--explain",
    ]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    assert!(text.starts_with("q1: Object"), "{text}");
    assert!(text.contains("SendNewsletters -> Marketing"), "{text}");

    let o = adpc(&[
        "--json",
        "match",
        "--prefs",
        "fixtures/prefs/empty.json",
        "--requests",
        "fixtures/requests/newsletter.json",
    ]);
    assert_eq!(code(&o), 0);
    assert_eq!(json(&o)[0]["outcome"], "Prompt");
}

#[test]
fn match_oracle_check() {
    let o = adpc(&[
        "--json",
        "match",
        "--oracle-check",
        "--cases",
        "100",
        "--seed",
        "3",
    ]);
    assert_eq!(code(&o), 0);
    assert_eq!(json(&o)["mismatches"].as_array().unwrap().len(), 0);
}

#[test]
fn dialogue_gen_and_lint() {
    let o = adpc(&[
        "--json",
        "dialogue",
        "gen",
        "--mode",
        "complete",
        "--requests",
        "fixtures/requests/newsletter.json",
    ]);
    assert_eq!(code(&o), 0);
    assert!(json(&o)["findings"].as_array().unwrap().is_empty());
    for (mode, extra) in [
        (
            "template",
            ["--template", "fixtures/templates/two-layer.json"],
        ),
        (
            "choices",
            ["--call", "fixtures/templates/choices-call.json"],
        ),
    ] {
        let mut args = vec![
            "dialogue",
            "gen",
            "--mode",
            mode,
            "--requests",
            "fixtures/requests/newsletter.json",
        ];
        args.extend(extra);
        assert_eq!(code(&adpc(&args)), 0, "{mode}");
    }

    let o = adpc(&["dialogue", "lint", "fixtures/lint/l1-preselected.json"]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("L1 Error layers[0].controls[toggle-q1]"));
    let o = adpc(&[
        "dialogue",
        "lint",
        "fixtures/lint/l4-generic-recipient.json",
    ]);
    assert_eq!(code(&o), 0, "warnings alone pass");
    let o = adpc(&["dialogue", "lint", "fixtures/lint/missing.json"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn lint_agrees_across_representations() {
    let dir = tempfile::tempdir().unwrap();
    for f in std::fs::read_dir(root().join("fixtures/lint")).unwrap() {
        let path = f.unwrap().path();
        if path.extension().unwrap() != "json" {
            continue;
        }
        let spec: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        let html = dir.path().join("page.html");
        std::fs::write(&html, emit(&path)).unwrap();
        let from_spec = json(&adpc(&[
            "--json",
            "dialogue",
            "lint",
            path.to_str().unwrap(),
        ]));
        let from_html = json(&adpc(&[
            "--json",
            "dialogue",
            "lint",
            html.to_str().unwrap(),
        ]));
        let rules = |v: &Value| {
            let mut r: Vec<(String, String)> = v["findings"]
                .as_array()
                .unwrap()
                .iter()
                .map(|f| {
                    (
                        f["rule"].as_str().unwrap().to_owned(),
                        f["location"].as_str().unwrap().to_owned(),
                    )
                })
                .collect();
            r.sort();
            r
        };
        assert_eq!(
            rules(&from_spec),
            rules(&from_html),
            "{} ({})",
            path.display(),
            spec["dialogue_id"]
        );
    }
}

/// Fallback markup of a spec file, through the library.
fn emit(spec: &Path) -> String {
    let spec: adpc_core::DialogueSpec =
        serde_json::from_str(&std::fs::read_to_string(spec).unwrap()).unwrap();
    adpc_core::emit_markup(&spec)
}

fn free_port() -> u16 {
    TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port()
}

struct Server(Child);

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn http_get(port: u16, path: &str) -> Option<String> {
    let mut s = TcpStream::connect(("127.0.0.1", port)).ok()?;
    write!(s, "GET {path} HTTP/1.0\r\nHost: localhost\r\n\r\n").ok()?;
    let mut buf = String::new();
    s.read_to_string(&mut buf).ok()?;
    buf.split_once("\r\n\r\n").map(|(_, body)| body.to_owned())
}

fn start_website(config: &str) -> (Server, u16) {
    let port = free_port();
    let child = Command::new(env!("CARGO_BIN_EXE_adpc"))
        .current_dir(root())
        .args([
            "serve",
            "website",
            "--config",
            config,
            "--port",
            &port.to_string(),
        ])
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let server = Server(child);
    let start = Instant::now();
    while http_get(port, "/log").is_none() {
        assert!(
            start.elapsed() < Duration::from_secs(10),
            "website did not start"
        );
        std::thread::sleep(Duration::from_millis(20));
    }
    (server, port)
}

#[test]
fn end_to_end_headless() {
    let (_server, port) = start_website("fixtures/site.json");
    let url = format!("http://127.0.0.1:{port}/");
    let o = adpc(&[
        "agent",
        "run",
        "--headless",
        "--prefs",
        "fixtures/prefs/prohibit-marketing.json",
        "--url",
        &url,
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report: Value = json(&o);
    assert_eq!(report["signal"]["object"], serde_json::json!(["q1"]));
    assert_eq!(report["human_interactions"], 0);

    let log: Value = serde_json::from_str(&http_get(port, "/log").unwrap()).unwrap();
    let session = report["session"].as_str().unwrap();
    assert_eq!(
        log[session][0]["signal"]["object"],
        report["signal"]["object"]
    );
    assert_eq!(log.as_object().unwrap().len(), 1);

    let o = adpc(&[
        "agent",
        "run",
        "--headless",
        "--prefs",
        "fixtures/prefs/empty.json",
        "--url",
        &url,
    ]);
    let report = json(&o);
    assert!(report["signal"].is_null());
    assert_eq!(report["entries"][0]["outcome"], "Prompt");
}

#[test]
fn transport_failure_exits_3() {
    let port = free_port();
    let url = format!("http://127.0.0.1:{port}/");
    let o = adpc(&[
        "--json",
        "agent",
        "run",
        "--headless",
        "--prefs",
        "fixtures/prefs/empty.json",
        "--url",
        &url,
    ]);
    assert_eq!(code(&o), 3);
    assert_eq!(json(&o)["code"], 3);
}

#[test]
fn bad_config_exits_2() {
    let o = adpc(&[
        "serve",
        "website",
        "--config",
        "fixtures/registry.json",
        "--port",
        "0",
    ]);
    assert_eq!(code(&o), 2);
}
