use std::path::Path;
use std::process::{Command, Output};

fn aoisgd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aoisgd"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn scenario_file(dir: &Path, builtin: &str, slots: u64) -> String {
    let text = std::fs::read_to_string(
        Path::new(env!("CARGO_MANIFEST_DIR"))
            .join("../../scenarios")
            .join(format!("{builtin}.toml")),
    )
    .unwrap();
    let text = text
        .lines()
        .map(|l| {
            if l.starts_with("slots =") {
                format!("slots = {slots}")
            } else {
                l.to_string()
            }
        })
        .collect::<Vec<_>>()
        .join("\n");
    let path = dir.join(format!("{builtin}.toml"));
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn column(csv_text: &str, name: &str) -> Vec<String> {
    let mut r = csv::Reader::from_reader(csv_text.as_bytes());
    let idx = r.headers().unwrap().iter().position(|h| h == name).unwrap();
    r.records()
        .map(|rec| rec.unwrap()[idx].to_string())
        .collect()
}

#[test]
fn missing_scenario_fails_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = aoisgd(&[
        "run",
        "--scenario",
        "no/such/file.toml",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("error"));
    assert!(!out.exists());
}

#[test]
fn malformed_scenario_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "name = \"x\"\nagents = 2\nslots = \"many\"\n").unwrap();
    let out = dir.path().join("out");
    let o = aoisgd(&[
        "run",
        "--scenario",
        path.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(!o.status.success());
    assert!(
        String::from_utf8_lossy(&o.stderr).contains("bad.toml:3"),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert!(!out.exists());
}

#[test]
fn run_writes_every_file_with_one_row_per_slot() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = aoisgd(&[
        "run",
        "--scenario",
        "builtin:lossless-sanity",
        "--out",
        out.to_str().unwrap(),
        "--channel-trace",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in [
        "metrics.csv",
        "aoi.csv",
        "positions.csv",
        "channel.csv",
        "summary.json",
    ] {
        assert!(out.join(f).exists(), "{f}");
    }
    let metrics = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(column(&metrics, "slot").len(), 1000);
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["schema_version"], 1);
    assert_eq!(summary["config"]["name"], "lossless-sanity");
}

#[test]
fn seed_override_changes_values_not_schema() {
    let dir = tempfile::tempdir().unwrap();
    let path = scenario_file(dir.path(), "paper-experiment", 300);
    let read = |seed: &str| {
        let out = dir.path().join(format!("out-{seed}"));
        let o = aoisgd(&[
            "run",
            "--scenario",
            &path,
            "--seed",
            seed,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read_to_string(out.join("metrics.csv")).unwrap()
    };
    let (a, b) = (read("1"), read("2"));
    assert_eq!(a.lines().next(), b.lines().next());
    assert_eq!(a.lines().count(), b.lines().count());
    assert_ne!(column(&a, "objective"), column(&b, "objective"));
}

#[test]
fn json_format_writes_json_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let path = scenario_file(dir.path(), "lossless-sanity", 50);
    let o = aoisgd(&[
        "replicate",
        "-n",
        "3",
        "--scenario",
        &path,
        "--format",
        "json",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("aggregate.json")).unwrap()).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 50);
    let s: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(s["seeds"].as_array().unwrap().len(), 3);
}

#[test]
fn verify_flags_negative_scenarios() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = aoisgd(&[
        "verify",
        "--scenario",
        "builtin:negative-disconnected",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(
        text.contains("FAIL") && text.contains("connectivity"),
        "{text}"
    );
}
