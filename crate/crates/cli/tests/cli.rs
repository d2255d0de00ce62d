use std::io::{Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::thread;
use std::time::Duration;

use gsd_cli::fetch::{fetch_csv, FetchError, FetchOptions};

const CONFIG: &str = r#"
version = 1
seed = 7
n_resamples = 60

[[metric]]
name = "acc"
scale = "cardinal"

[[metric]]
name = "speed"
scale = "ordinal"
"#;

/// A dominates B on both metrics of every dataset.
const CHAIN_CSV: &str = "dataset,classifier,acc,speed\n\
d1,A,0.9,0.8\nd1,B,0.7,0.6\n\
d2,A,0.8,0.9\nd2,B,0.6,0.5\n\
d3,A,0.85,0.7\nd3,B,0.65,0.4\n\
d4,A,0.95,0.6\nd4,B,0.75,0.3\n";

fn gsd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gsd")).args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

struct Fixture {
    dir: tempfile::TempDir,
    csv: String,
    config: String,
}

impl Fixture {
    fn new(csv: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let csv = write(dir.path(), "results.csv", csv);
        let config = write(dir.path(), "config.toml", CONFIG);
        Self { dir, csv, config }
    }

    fn out(&self) -> PathBuf {
        self.dir.path().join("out")
    }

    fn run(&self, command: &str, extra: &[&str]) -> Output {
        let out = self.out();
        let mut args = vec![
            "--out",
            out.to_str().unwrap(),
            command,
            &self.csv,
            "--config",
            &self.config,
        ];
        args.extend(extra);
        gsd(&args)
    }
}

#[test]
fn help_and_usage_exit_codes() {
    assert_eq!(gsd(&["--help"]).status.code(), Some(0));
    assert_eq!(gsd(&[]).status.code(), Some(1));
    assert_eq!(gsd(&["analyze"]).status.code(), Some(1));
    assert_eq!(
        gsd(&[
            "test",
            "x.csv",
            "--config",
            "c.toml",
            "--target",
            "A",
            "--static",
            "--dynamic"
        ])
        .status
        .code(),
        Some(1)
    );
}

#[test]
fn config_and_argument_errors_are_usage_errors() {
    let f = Fixture::new(CHAIN_CSV);
    assert_eq!(f.run("test", &["--target", "Z"]).status.code(), Some(1));
    assert_eq!(
        f.run("test", &["--target", "A", "--alpha", "1.5"]).status.code(),
        Some(1)
    );
    let bad = write(
        f.dir.path(),
        "bad.toml",
        "version = 1\ncolour = 3\n[[metric]]\nname = \"acc\"\nscale = \"cardinal\"\n",
    );
    let out = gsd(&["--out", f.out().to_str().unwrap(), "analyze", &f.csv, "--config", &bad]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("colour"));
}

#[test]
fn missing_input_is_a_data_error() {
    let f = Fixture::new(CHAIN_CSV);
    let out = gsd(&["analyze", "/nonexistent/results.csv", "--config", &f.config]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn validate_lists_every_violation() {
    let csv = "dataset,classifier,acc,speed\nd1,A,0.9,0.8\nd1,B,1.7,0.6\nd2,A,0.8,0.9\n";
    let f = Fixture::new(csv);
    let out = f.run("validate", &[]);
    assert_eq!(out.status.code(), Some(2));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(f.out().join("validate.json")).unwrap()).unwrap();
    assert_eq!(report["command"], "validate");
    assert_eq!(report["result"]["ok"], false);
    let violations = report["result"]["violations"].as_array().unwrap();
    assert_eq!(violations.len(), 2, "{violations:?}");
    // Analysis commands refuse the same input.
    assert_eq!(f.run("analyze", &[]).status.code(), Some(2));
}

#[test]
fn dominance_graph_has_one_edge() {
    let f = Fixture::new(CHAIN_CSV);
    let out = f.run("analyze", &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let dot = std::fs::read_to_string(f.out().join("gsd.dot")).unwrap();
    assert!(dot.starts_with("// gsd "));
    assert_eq!(dot.matches("->").count(), 1, "{dot}");
    let d = std::fs::read_to_string(f.out().join("d_matrix.csv")).unwrap();
    assert!(d.starts_with("# gsd "));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(f.out().join("analyze.json")).unwrap()).unwrap();
    assert_eq!(report["seed"], 7);
}

#[test]
fn every_analysis_command_succeeds_on_a_small_table() {
    let f = Fixture::new(CHAIN_CSV);
    for (cmd, extra, file) in [
        ("test", vec!["--target", "A"], "test.json"),
        ("robust", vec!["--target", "A", "--k-max", "1"], "curves.csv"),
        ("baseline", vec![], "baseline.json"),
    ] {
        let out = f.run(cmd, &extra);
        assert!(out.status.success(), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(f.out().join(file).exists());
    }
}

/// Serves one canned response per connection, `connections` times.
fn serve(response: Vec<u8>, connections: usize, delay: Duration) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    thread::spawn(move || {
        for stream in listener.incoming().take(connections) {
            let mut stream = stream.unwrap();
            let mut buf = [0u8; 4096];
            let mut seen = Vec::new();
            while !seen.windows(4).any(|w| w == b"\r\n\r\n") {
                let n = stream.read(&mut buf).unwrap_or(0);
                if n == 0 {
                    break;
                }
                seen.extend_from_slice(&buf[..n]);
            }
            thread::sleep(delay);
            let _ = stream.write_all(&response);
        }
    });
    format!("http://{addr}/results.csv")
}

fn http(status: &str, body: &[u8]) -> Vec<u8> {
    let mut r = format!(
        "HTTP/1.1 {status}\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
        body.len()
    )
    .into_bytes();
    r.extend_from_slice(body);
    r
}

#[test]
fn fetch_returns_the_body() {
    let url = serve(http("200 OK", CHAIN_CSV.as_bytes()), 1, Duration::ZERO);
    assert_eq!(fetch_csv(&url, &FetchOptions::default()).unwrap(), CHAIN_CSV.as_bytes());
}

#[test]
fn fetch_maps_not_found() {
    let url = serve(http("404 Not Found", b"gone"), 1, Duration::ZERO);
    assert!(matches!(
        fetch_csv(&url, &FetchOptions::default()),
        Err(FetchError::NotFound { .. })
    ));
}

#[test]
fn fetch_enforces_the_size_cap() {
    let url = serve(http("200 OK", &[b'x'; 4096]), 1, Duration::ZERO);
    let options = FetchOptions {
        cap_bytes: 1024,
        ..FetchOptions::default()
    };
    assert!(matches!(
        fetch_csv(&url, &options),
        Err(FetchError::CapExceeded { cap: 1024, .. })
    ));
}

#[test]
fn fetch_times_out() {
    let url = serve(http("200 OK", b"late"), 1, Duration::from_secs(3));
    let options = FetchOptions {
        timeout: Duration::from_millis(300),
        ..FetchOptions::default()
    };
    assert!(matches!(fetch_csv(&url, &options), Err(FetchError::Timeout { .. })));
}

#[test]
fn fetch_rejects_other_schemes() {
    assert!(matches!(
        fetch_csv("ftp://example.org/x.csv", &FetchOptions::default()),
        Err(FetchError::Scheme { .. })
    ));
}

#[test]
fn analyze_reads_a_remote_csv() {
    let f = Fixture::new(CHAIN_CSV);
    let url = serve(http("200 OK", CHAIN_CSV.as_bytes()), 1, Duration::ZERO);
    let out = gsd(&[
        "--out",
        f.out().to_str().unwrap(),
        "analyze",
        &url,
        "--config",
        &f.config,
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let missing = serve(http("404 Not Found", b""), 1, Duration::ZERO);
    assert_eq!(
        gsd(&["analyze", &missing, "--config", &f.config]).status.code(),
        Some(2)
    );
}
