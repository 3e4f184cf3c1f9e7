#![allow(dead_code)]

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};

use serde_json::Value;

/// Keys whose values depend on the wall clock.
pub const TIMESTAMP_KEYS: [&str; 3] = ["started_at_unix", "wall_clock_ms", "trained_at_unix"];

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_inrclass"))
}

pub fn fixture_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/pipeline_fixture.csv")
}

pub fn run_in(cwd: &Path, args: &[&str]) -> Output {
    bin()
        .current_dir(cwd)
        .args(args)
        .output()
        .expect("spawn inrclass")
}

pub fn strip_timestamps(value: &mut Value) {
    match value {
        Value::Object(map) => {
            for key in TIMESTAMP_KEYS {
                map.remove(key);
            }
            map.values_mut().for_each(strip_timestamps);
        }
        Value::Array(items) => items.iter_mut().for_each(strip_timestamps),
        _ => {}
    }
}

/// Every file under `dir`, JSON documents with timestamps removed.
pub fn normalized_files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut entries: Vec<_> = std::fs::read_dir(dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .collect();
    entries.sort();
    for path in entries {
        let name = path.file_name().unwrap().to_string_lossy().to_string();
        let bytes = std::fs::read(&path).unwrap();
        let is_json = name.ends_with(".json") || name.ends_with(".mlpmodel");
        let bytes = match serde_json::from_slice::<Value>(&bytes) {
            Ok(mut v) if is_json => {
                strip_timestamps(&mut v);
                serde_json::to_vec_pretty(&v).unwrap()
            }
            _ => bytes,
        };
        out.insert(name, bytes);
    }
    out
}

/// Runs `args` in two fresh working directories seeded with `inputs` and
/// compares stdout and everything written under `out/`.
pub fn check_twice(args: &[&str], inputs: &[(&str, &[u8])]) -> Result<(), String> {
    let mut results = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        for (name, content) in inputs {
            std::fs::write(dir.path().join(name), content).map_err(|e| e.to_string())?;
        }
        let mut full: Vec<&str> = args.to_vec();
        full.extend(["--out", "out"]);
        let out = run_in(dir.path(), &full);
        if !out.status.success() {
            return Err(format!(
                "{args:?} exited {:?}: {}",
                out.status.code(),
                String::from_utf8_lossy(&out.stderr)
            ));
        }
        let files = normalized_files(&dir.path().join("out"));
        if !files.contains_key("manifest.json") {
            return Err(format!("{args:?} wrote no manifest"));
        }
        results.push((out.stdout, files));
    }
    let (a, b) = (&results[0], &results[1]);
    if a.0 != b.0 {
        return Err(format!("{args:?}: stdout differs"));
    }
    if a.1.keys().ne(b.1.keys()) {
        return Err(format!("{args:?}: different output files"));
    }
    for (name, content) in &a.1 {
        if b.1[name] != *content {
            return Err(format!("{args:?}: {name} differs"));
        }
    }
    Ok(())
}

/// A cohort CSV and a trained model for tests that need inputs.
pub struct Artifacts {
    pub cohort: Vec<u8>,
    pub model: Vec<u8>,
}

pub fn make_artifacts(n: usize) -> Artifacts {
    let dir = tempfile::tempdir().unwrap();
    let n = n.to_string();
    let out = run_in(dir.path(), &["synth", "--n", &n, "--seed", "3"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let cohort = out.stdout;
    std::fs::write(dir.path().join("cohort.csv"), &cohort).unwrap();
    let out = run_in(dir.path(), &["train", "cohort.csv", "--iterations", "300"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    Artifacts {
        cohort,
        model: out.stdout,
    }
}

/// `serve` child process and the address it reported.
pub struct Server {
    pub child: Child,
    pub addr: String,
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

pub fn spawn_server(cwd: &Path, model: &str) -> Server {
    let mut child = bin()
        .current_dir(cwd)
        .args(["serve", "--model", model, "--addr", "127.0.0.1:0"])
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .expect("spawn serve");
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap())
        .read_line(&mut line)
        .unwrap();
    let addr = line
        .trim()
        .strip_prefix("listening on http://")
        .unwrap_or_else(|| panic!("unexpected banner {line:?}"))
        .to_string();
    Server { child, addr }
}

/// Minimal HTTP/1.1 exchange; returns the status code and body.
pub fn http(addr: &str, method: &str, path: &str, body: &str) -> (u16, String) {
    let mut stream = TcpStream::connect(addr).unwrap();
    let request = format!(
        "{method} {path} HTTP/1.1\r\nHost: {addr}\r\nContent-Type: application/json\r\n\
         Content-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    );
    stream.write_all(request.as_bytes()).unwrap();
    let mut response = String::new();
    stream.read_to_string(&mut response).unwrap();
    let (head, body) = response.split_once("\r\n\r\n").unwrap_or((&response, ""));
    let status = head
        .split_whitespace()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(0);
    (status, body.to_string())
}
