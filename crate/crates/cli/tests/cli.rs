use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bismooth"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth(dir: &Path) -> PathBuf {
    let data = dir.join("data");
    let out = run(&[
        "gen-synth",
        "--num-nodes",
        "90",
        "--classes",
        "3",
        "--p-in",
        "0.15",
        "--p-out",
        "0.01",
        "--feature-dim",
        "6",
        "--seed",
        "7",
        "--out",
        p(&data),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    data
}

fn dataset_args(data: &Path) -> Vec<String> {
    vec![
        "--dataset-edges".into(),
        p(&data.join("edges.tsv")).into(),
        "--dataset-nodes".into(),
        p(&data.join("nodes.csv")).into(),
        "--split".into(),
        p(&data.join("split.json")).into(),
    ]
}

fn read_dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn no_arguments_is_usage_error() {
    let out = run(&[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn probability_of_one_is_rejected() {
    let out = run(&[
        "certify-evasion",
        "--dataset-edges",
        "e",
        "--dataset-nodes",
        "v",
        "--p-e",
        "1.0",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("p-e"));
}

#[test]
fn unknown_flag_and_bad_type_are_usage_errors() {
    assert_eq!(run(&["certify-evasion", "--bogus"]).status.code(), Some(2));
    assert_eq!(run(&["certify-evasion", "--n", "many"]).status.code(), Some(2));
}

#[test]
fn missing_dataset_is_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "certify-evasion",
        "--dataset-edges",
        p(&dir.path().join("none.tsv")),
        "--dataset-nodes",
        p(&dir.path().join("none.csv")),
        "--out",
        p(&dir.path().join("o")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
}

#[test]
fn flag_overrides_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path());
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"n": 1000, "epochs": 3, "hidden": 4, "tau": [2]}"#).unwrap();
    let out_dir = dir.path().join("o");
    let mut args: Vec<String> = vec![
        "certify-evasion".into(),
        "--config".into(),
        p(&cfg).into(),
        "--n".into(),
        "500".into(),
    ];
    args.extend(dataset_args(&data));
    args.extend(["--out".into(), p(&out_dir).into()]);
    let out = bin().args(&args).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&fs::read(out_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["metadata"]["n"], 500);
    assert_eq!(report["metadata"]["graph"]["model"]["epochs"], 3);
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["curves"][0]["tau"], 2);
}

#[test]
fn evasion_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path());
    let mut outputs = Vec::new();
    for (i, threads) in ["1", "2"].iter().enumerate() {
        let out_dir = dir.path().join(format!("run{i}"));
        let mut args: Vec<String> = [
            "certify-evasion",
            "--n",
            "400",
            "--epochs",
            "10",
            "--hidden",
            "8",
            "--tau",
            "2,4",
            "--seed",
            "3",
            "--threads",
            threads,
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        args.extend(dataset_args(&data));
        args.extend(["--out".into(), p(&out_dir).into()]);
        let out = bin().args(&args).output().unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        outputs.push(read_dir_bytes(&out_dir));
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0].len(), 3);
}

#[test]
fn synth_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_eq!(read_dir_bytes(&synth(a.path())), read_dir_bytes(&synth(b.path())));
}

#[test]
fn poison_exclude_smoke_run_reports_acr() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path());
    let out_dir = dir.path().join("poison");
    let mut args: Vec<String> = [
        "certify-poison",
        "--mode",
        "exclude",
        "--n",
        "300",
        "--epochs",
        "20",
        "--hidden",
        "8",
        "--p-e",
        "0.0",
        "--p-n",
        "0.6",
        "--tau",
        "2,3",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    args.extend(dataset_args(&data));
    args.extend(["--out".into(), p(&out_dir).into()]);
    let out = bin().args(&args).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&fs::read(out_dir.join("report.json")).unwrap()).unwrap();
    let curves = report["curves"].as_array().unwrap();
    assert_eq!(curves.len(), 2);
    for c in curves {
        let acr = c["acr"].as_f64().unwrap();
        assert!(acr.is_finite() && acr >= 0.0);
        assert!(out_dir.join(c["csv"].as_str().unwrap()).exists());
    }
    assert_eq!(report["metadata"]["mode"], "exclude");
}

#[test]
fn recsys_and_attack_commands_write_reports() {
    let dir = tempfile::tempdir().unwrap();
    let ratings = dir.path().join("ratings.tsv");
    let mut body = String::new();
    for u in 0..12u32 {
        for j in 0..6u32 {
            let item = (u % 3) * 5 + j % 5 + if j == 5 { 15 } else { 0 };
            body.push_str(&format!("{u}\t{item}\t4\t{}\n", 100 + j));
        }
    }
    fs::write(&ratings, body).unwrap();
    let rec_out = dir.path().join("rec");
    let out = run(&[
        "certify-recsys",
        "--ratings",
        p(&ratings),
        "--n",
        "500",
        "--k",
        "2",
        "--k-prime",
        "3",
        "--p-n",
        "0.5",
        "--p-e",
        "0.0",
        "--out",
        p(&rec_out),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(rec_out.join("report.json").exists());

    let data = synth(dir.path());
    let atk_out = dir.path().join("atk");
    let mut args: Vec<String> = [
        "empirical-attack",
        "--n",
        "300",
        "--epochs",
        "10",
        "--hidden",
        "8",
        "--tau",
        "2",
        "--rho",
        "1,3",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    args.extend(dataset_args(&data));
    args.extend(["--out".into(), p(&atk_out).into()]);
    let out = bin().args(&args).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(atk_out.join("attack_report.json")).unwrap()).unwrap();
    assert_eq!(report["attacks"].as_array().unwrap().len(), 2);
    assert_eq!(report["sound"], true);
}
