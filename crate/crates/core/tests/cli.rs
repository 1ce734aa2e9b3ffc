use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn isac(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_isac")).args(args).env_remove("ISAC_THREADS").output().unwrap()
}

fn small_config(dir: &Path) -> String {
    let text = "seed = 5\ntrials = 3\n\n[grid]\nsnr_db = [10.0, 20.0]\nn_vehicles = [3]\n";
    let path = dir.join("small.toml");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn demo_prints_a_trace_and_both_methods() {
    let out = isac(&["demo", "--snr", "20", "--seed", "3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("delta(0)"));
    assert!(text.contains("stop:"));
    assert!(text.lines().any(|l| l.starts_with("ao ")));
    assert!(text.lines().any(|l| l.starts_with("baseline ")));
}

#[test]
fn oracle_passes() {
    let out = isac(&["oracle", "--trials", "10"]);
    assert!(out.status.success());
    assert!(String::from_utf8(out.stdout).unwrap().contains("10/10: PASS"));
}

#[test]
fn malformed_config_exits_with_a_located_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, "seed = 1\ntrials = \"many\"\n").unwrap();
    let out = isac(&["sweep", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("line 2"), "{err}");

    fs::write(&path, "trials = 0\n").unwrap();
    let out = isac(&["sweep", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("trials"));

    fs::write(&path, "[grid]\nsnr = [1.0]\n").unwrap();
    let out = isac(&["sweep", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sweep_writes_its_outputs_reproducibly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let mut runs = Vec::new();
    for name in ["a", "b"] {
        let out_dir = dir.path().join(name);
        let threads = if name == "a" { "1" } else { "2" };
        let out = isac(&["sweep", "--config", &cfg, "--out", out_dir.to_str().unwrap(), "--threads", threads]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        for f in ["metrics.csv", "convergence.csv", "trials.csv", "config.toml", "timing.txt"] {
            assert!(out_dir.join(f).is_file(), "{f}");
        }
        assert!(out_dir.join("cache").is_dir());
        runs.push(out_dir);
    }
    for f in ["metrics.csv", "convergence.csv", "trials.csv"] {
        assert_eq!(fs::read(runs[0].join(f)).unwrap(), fs::read(runs[1].join(f)).unwrap(), "{f}");
    }
    let metrics = fs::read_to_string(runs[0].join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 1 + 2 * 2);
}

#[test]
fn channel_dump_writes_matrices() {
    let dir = tempfile::tempdir().unwrap();
    let out = isac(&["channel-dump", "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["channels.bin", "channels.csv", "geometry.json"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    let csv = fs::read_to_string(dir.path().join("channels.csv")).unwrap();
    assert!(csv.starts_with("bs,matrix,row,col,re,im\n"));
}
