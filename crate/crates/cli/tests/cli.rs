use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use qkdsim_core::topology::parse_scenario;
use qkdsim_core::venqci_preset;

fn qkdsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qkdsim"))
        .args(args)
        .env_remove("QKDSIM_OUT")
        .output()
        .expect("binary runs")
}

fn shipped() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/venqci.toml")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn shipped_scenario_validates() {
    let o = qkdsim(&["validate", shipped().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn shipped_scenario_is_the_preset() {
    let text = std::fs::read_to_string(shipped()).unwrap();
    assert_eq!(parse_scenario(&text).unwrap(), venqci_preset());
}

#[test]
fn preset_writes_five_tables_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = qkdsim(&["preset", "venqci", "--duration", "60d", "--seed", "42", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let mut csvs: Vec<String> = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".csv"))
        .collect();
    csvs.sort();
    assert_eq!(
        csvs,
        ["blocktimes.csv", "hourly_box.csv", "qber.csv", "rates_daily.csv", "switch_trace.csv"]
    );
    let stdout = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines.len(), 3);
    for line in lines {
        let keys: Vec<&str> = line.split(' ').map(|kv| kv.split_once('=').unwrap().0).collect();
        assert_eq!(keys, ["link_id", "blocks", "mean_skr", "mean_qber"]);
        let blocks: u64 = line.split(' ').nth(1).unwrap()[7..].parse().unwrap();
        assert!(blocks > 100, "{line}");
    }
}

#[test]
fn equal_seeds_give_equal_output() {
    let dir = tempfile::tempdir().unwrap();
    let outs: Vec<Output> = ["a", "b"]
        .iter()
        .map(|d| {
            let p = dir.path().join(d);
            qkdsim(&["preset", "venqci", "--duration", "6h", "--out", p.to_str().unwrap()])
        })
        .collect();
    assert_eq!(outs[0].stdout, outs[1].stdout);
    for f in ["switch_trace.csv", "qber.csv"] {
        assert_eq!(
            std::fs::read(dir.path().join("a").join(f)).unwrap(),
            std::fs::read(dir.path().join("b").join(f)).unwrap()
        );
    }
}

#[test]
fn run_writes_json_keys_and_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let o = qkdsim(&[
        "run",
        shipped().to_str().unwrap(),
        "--duration",
        "1h",
        "--format",
        "json",
        "--dump-keys",
        "--snapshot",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in ["blocktimes.json", "switch_trace.json", "key_events.csv", "result.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let keys = std::fs::read_to_string(out.join("key_events.csv")).unwrap();
    // 3 consumers, one rekey per minute, first at t=0
    assert_eq!(keys.lines().count(), 1 + 3 * 60);
    let snap = std::fs::read_to_string(out.join("result.json")).unwrap();
    let r = qkdsim_core::RunResult::from_json(&snap).unwrap();
    assert_eq!(r.duration.as_secs_f64(), 3600.0);
}

#[test]
fn output_dir_comes_from_env() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_qkdsim"))
        .args(["preset", "venqci", "--duration", "30m"])
        .env("QKDSIM_OUT", dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(dir.path().join("qber.csv").exists());
}

#[test]
fn inverted_window_exits_1_naming_it() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(shipped())
        .unwrap()
        .replace("maintenance = []\n", "")
        + "\n[[maintenance]]\nlink = \"CavPD-CavVE\"\nstart = \"12h\"\nend = \"10h\"\n";
    let path = dir.path().join("broken.toml");
    std::fs::write(&path, text).unwrap();
    let o = qkdsim(&["run", path.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.contains("maintenance[0]") && err.contains("CavPD-CavVE"), "{err}");
    assert!(o.stdout.is_empty());
}

#[test]
fn missing_file_exits_1() {
    let o = qkdsim(&["validate", "/nonexistent/x.toml"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("/nonexistent/x.toml"));
}

#[test]
fn usage_errors_exit_2() {
    for args in [
        &["run", "x.toml", "--bogus"][..],
        &["preset", "nope"],
        &["preset", "venqci", "--duration", "ten"],
        &["run", "x.toml", "--format", "xml"],
        &[],
    ] {
        let o = qkdsim(args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn sweep_writes_one_directory_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(shipped())
        .unwrap()
        .replace("duration = 5184000.0", "duration = \"2h\"");
    let path = dir.path().join("short.toml");
    std::fs::write(&path, text).unwrap();
    let out = dir.path().join("sweep");
    let o = qkdsim(&[
        "sweep",
        path.to_str().unwrap(),
        "--first-seed",
        "5",
        "--count",
        "3",
        "-j",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for seed in 5..8 {
        assert!(out.join(format!("seed-{seed}")).join("blocktimes.csv").exists());
    }
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert_eq!(stdout.lines().count(), 9);
    assert!(stdout.lines().next().unwrap().starts_with("seed=5 link_id="));
    assert_ne!(
        std::fs::read(out.join("seed-5/qber.csv")).unwrap(),
        std::fs::read(out.join("seed-6/qber.csv")).unwrap()
    );
}
