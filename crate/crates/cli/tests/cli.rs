use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const SMALL_NET: [&str; 8] = [
    "--input-side",
    "16",
    "--embed-dim",
    "8",
    "--lora-rank",
    "2",
    "--groupnorm-groups",
    "2",
];

fn bench() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_scribble-bench"));
    c.env_remove("SCRIBBLE_BENCH_SEED");
    c
}

fn run(args: &[&str]) -> Output {
    bench().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn small_manifest(dir: &Path) -> PathBuf {
    let out = dir.join("data");
    let o = run(&["synth-data", "--count", "6", "--side", "48", "--seed", "3", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    PathBuf::from(stdout(&o).trim())
}

#[test]
fn every_subcommand_documents_its_defaults() {
    let subs = [
        "scribble",
        "eval",
        "points-sweep",
        "gradcheck",
        "train",
        "synth-data",
        "serve",
        "report",
    ];
    let required = ["--mask", "--input"];
    for sub in subs {
        let o = run(&[sub, "-h"]);
        assert_eq!(o.status.code(), Some(0), "{sub}");
        let text = stdout(&o);
        let mut blocks: Vec<String> = Vec::new();
        for line in text.lines().skip_while(|l| !l.starts_with("Options:")).skip(1) {
            let t = line.trim_start();
            if t.starts_with('-') {
                blocks.push(t.to_string());
            } else if let Some(b) = blocks.last_mut() {
                b.push(' ');
                b.push_str(t);
            }
        }
        assert!(!blocks.is_empty(), "{sub}");
        for block in blocks {
            let flag = block.split_whitespace().find(|w| w.starts_with("--")).unwrap_or_default().to_string();
            if flag == "--help" || flag == "--version" || required.contains(&flag.as_str()) {
                continue;
            }
            assert!(
                block.to_lowercase().contains("default"),
                "`{sub} {flag}` does not state a default: {block}"
            );
        }
    }
}

#[test]
fn usage_errors_exit_one_with_a_single_line() {
    for args in [
        vec!["eval", "--no-such-flag"],
        vec!["eval", "--rounds", "many"],
        vec!["train", "--stage", "3"],
        vec!["eval", "--connectivity", "6"],
        vec!["frobnicate"],
    ] {
        let o = run(&args);
        assert_eq!(o.status.code(), Some(1), "{args:?}");
        assert_eq!(stderr(&o).trim_end().lines().count(), 1, "{args:?}: {}", stderr(&o));
    }
}

#[test]
fn runtime_failures_exit_two() {
    let o = run(&["eval", "--manifest", "/nonexistent/manifest.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("error:"));
    let o = run(&["eval", "--tau", "1.5", "--rounds", "1"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn eval_is_byte_identical_across_runs_and_workers() {
    let dir = tempfile::tempdir().unwrap();
    let m = small_manifest(dir.path());
    let mut outputs = Vec::new();
    for (i, workers) in ["1", "4", "1"].iter().enumerate() {
        let out = dir.path().join(format!("r{i}.json"));
        let o = run(&[
            "eval",
            "--manifest",
            m.to_str().unwrap(),
            "--backend",
            "geodesic",
            "--rounds",
            "5",
            "--tau",
            "0.9",
            "--seed",
            "42",
            "--workers",
            workers,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        outputs.push(std::fs::read(&out).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
    let reports: Value = serde_json::from_slice(&outputs[0]).unwrap();
    assert_eq!(reports[0]["rounds"].as_array().unwrap().len(), 5);
    assert_eq!(reports[0]["config"]["seed"], 42);
}

#[test]
fn seed_falls_back_to_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let m = small_manifest(dir.path());
    let m = m.to_str().unwrap();
    let base = ["eval", "--manifest", m, "--backend", "oracle", "--rounds", "2"];
    let from_env = bench().args(base).env("SCRIBBLE_BENCH_SEED", "9").output().unwrap();
    let explicit = run(&[&base[..], &["--seed", "9"]].concat());
    assert_eq!(from_env.stdout, explicit.stdout);
    let overridden = bench().args(base).args(["--seed", "9"]).env("SCRIBBLE_BENCH_SEED", "1").output().unwrap();
    assert_eq!(overridden.stdout, explicit.stdout);
    let v: Value = serde_json::from_slice(&from_env.stdout).unwrap();
    assert_eq!(v[0]["config"]["seed"], 9);
}

#[test]
fn config_file_fills_in_unset_flags() {
    let dir = tempfile::tempdir().unwrap();
    let m = small_manifest(dir.path());
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        format!(
            r#"{{"manifest": {:?}, "rounds": 2, "tau": 0.5, "seed": 4, "oracle-schedule": [0.5, 1.0], "backend": "oracle"}}"#,
            m.to_str().unwrap()
        ),
    )
    .unwrap();
    let c = cfg.to_str().unwrap();
    let o = run(&["eval", "--config", c]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v[0]["rounds"].as_array().unwrap().len(), 2);
    assert_eq!(v[0]["config"]["tau"], 0.5);
    assert_eq!(v[0]["config"]["seed"], 4);
    assert_eq!(v[0]["config"]["backend"], "oracle");

    let o = run(&["eval", "--config", c, "--rounds", "3"]);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v[0]["rounds"].as_array().unwrap().len(), 3);
    assert_eq!(v[0]["config"]["tau"], 0.5);

    std::fs::write(&cfg, r#"{"roundz": 2}"#).unwrap();
    assert_eq!(run(&["eval", "--config", c]).status.code(), Some(1));
    std::fs::write(&cfg, "[1, 2]").unwrap();
    assert_eq!(run(&["eval", "--config", c]).status.code(), Some(1));
}

#[test]
fn points_sweep_writes_one_report_per_density_and_report_converts_it() {
    let dir = tempfile::tempdir().unwrap();
    let m = small_manifest(dir.path());
    let json = dir.path().join("sweep.json");
    let o = run(&[
        "points-sweep",
        "--manifest",
        m.to_str().unwrap(),
        "--densities",
        "1,10,30,50",
        "--rounds",
        "3",
        "--out",
        json.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    let methods: Vec<&str> = v.as_array().unwrap().iter().map(|r| r["method"].as_str().unwrap()).collect();
    assert_eq!(
        methods,
        ["geodesic/1pt-ch", "geodesic/10pt-ch", "geodesic/30pt-ch", "geodesic/50pt-ch"]
    );

    let o = run(&["report", "--input", json.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let csv = stdout(&o);
    assert!(csv.starts_with("method,round,metric,value\n"));
    assert_eq!(csv.lines().count(), 1 + 4 * 3 * 4);
    let o = run(&["report", "--input", json.to_str().unwrap(), "--format", "success"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).lines().count() > 1);
}

#[test]
fn scribble_writes_png_pair_or_rle() {
    let dir = tempfile::tempdir().unwrap();
    let m = small_manifest(dir.path());
    let manifest: Value = serde_json::from_str(&std::fs::read_to_string(&m).unwrap()).unwrap();
    let rel = manifest["samples"][0]["targets"][0]["mask"].as_str().unwrap();
    let mask = m.parent().unwrap().join(rel);
    let prefix = dir.path().join("s");
    let o = run(&[
        "scribble",
        "--mask",
        mask.to_str().unwrap(),
        "--style",
        "centerline",
        "--out",
        prefix.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(dir.path().join("s_pos.png").exists() && dir.path().join("s_neg.png").exists());

    let a = run(&["scribble", "--mask", mask.to_str().unwrap(), "--json", "--seed", "5"]);
    let b = run(&["scribble", "--mask", mask.to_str().unwrap(), "--json", "--seed", "5"]);
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);
    let v: Value = serde_json::from_slice(&a.stdout).unwrap();
    assert!(v.is_object());

    let o = run(&["scribble", "--mask", mask.to_str().unwrap(), "--style", "line"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn gradcheck_exit_status_follows_the_tolerance() {
    let mut args = vec!["gradcheck", "--rounds", "2", "--max-per-tensor", "2"];
    args.extend(SMALL_NET);
    let o = run(&args);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    let table = stdout(&o);
    assert!(table.starts_with("module"));
    assert!(table.contains("scribble_encoder") && table.contains("sgf") && table.contains("mem_attn.lora"));

    args.extend(["--tolerance", "1e-300"]);
    let o = run(&args);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("FAIL"));
}

#[test]
fn train_writes_a_loadable_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let p1 = dir.path().join("p1.json");
    let losses = dir.path().join("loss.csv");
    let mut args = vec![
        "train",
        "--stage",
        "1",
        "--steps",
        "2",
        "--samples",
        "2",
        "--side",
        "48",
        "--rounds",
        "2",
        "--losses",
        losses.to_str().unwrap(),
        "--out",
        p1.to_str().unwrap(),
    ];
    args.extend(SMALL_NET);
    let o = run(&args);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(std::fs::read_to_string(&losses).unwrap().lines().count(), 3);

    let p2 = dir.path().join("p2.json");
    let o = run(&[
        "train",
        "--stage",
        "2",
        "--steps",
        "1",
        "--samples",
        "2",
        "--side",
        "48",
        "--rounds",
        "2",
        "--init",
        p1.to_str().unwrap(),
        "--out",
        p2.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let m = small_manifest(dir.path());
    let mut args = vec![
        "eval",
        "--manifest",
        m.to_str().unwrap(),
        "--backend",
        "toynet",
        "--params",
        p2.to_str().unwrap(),
        "--rounds",
        "2",
        "--format",
        "csv",
    ];
    args.extend(SMALL_NET);
    let o = run(&args);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("toynet/scribble:adaptive,R1,mDice"));
}
