use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn cmg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cmg"))
        .args(args)
        .output()
        .expect("cmg runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn csv_rows(path: &Path) -> Vec<csv::StringRecord> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(Result::unwrap).collect()
}

fn csv_header(path: &Path) -> Vec<String> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.headers().unwrap().iter().map(String::from).collect()
}

/// Small training budget so GAM commands finish quickly.
const QUICK: &[&str] = &[
    "--iters",
    "3",
    "--batch",
    "64",
    "--validation",
    "64",
    "--eval-samples",
    "2000",
];

#[test]
fn lp_cg_on_table1_n4_prints_its_loss() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = cmg(&["solve", "--method", "lp-cg", "--fixture", "table1-n4", "--out", out]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let objective: f64 = text
        .split("lp objective ")
        .nth(1)
        .and_then(|s| s.split(',').next())
        .and_then(|s| s.parse().ok())
        .unwrap_or_else(|| panic!("no objective in {text}"));
    assert!((objective - 1.25).abs() <= 0.01, "{objective}");

    let dump: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("strategy-0.json")).unwrap()).unwrap();
    assert_eq!(dump["method"], "lp-cg");
    assert_eq!(dump["strategy"]["kind"], "table");
    assert_eq!(dump["strategy"]["defender"].as_array().unwrap().len(), 16);
}

#[test]
fn random_with_three_seeds_writes_three_rows() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = cmg(&["solve", "--method", "random", "--n", "4", "--seeds", "3", "--out", out]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = dir.path().join("results.csv");
    assert_eq!(
        csv_header(&csv),
        [
            "seed",
            "method",
            "n",
            "m",
            "num_exploits",
            "c",
            "V",
            "defender_loss",
            "attack_value",
            "cost_term",
            "runtime_seconds",
            "status"
        ]
    );
    let rows = csv_rows(&csv);
    assert_eq!(rows.len(), 3);
    for (i, row) in rows.iter().enumerate() {
        assert_eq!(&row[0], i.to_string());
        assert_eq!(&row[1], "random");
        assert_eq!(&row[11], "ok");
    }
    for seed in 0..3 {
        assert!(dir.path().join(format!("strategy-{seed}.json")).exists());
    }
}

#[test]
fn seed_list_selects_seeds() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = cmg(&[
        "solve",
        "--method",
        "greedy",
        "--fixture",
        "table1-n5",
        "--seed-list",
        "4,9",
        "--out",
        out,
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let seeds: Vec<String> = csv_rows(&dir.path().join("results.csv"))
        .iter()
        .map(|r| r[0].to_string())
        .collect();
    assert_eq!(seeds, ["4", "9"]);
}

#[test]
fn unknown_method_is_a_usage_error() {
    let o = cmg(&["solve", "--method", "simplex", "--n", "4"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("simplex"));
}

#[test]
fn missing_game_source_is_a_usage_error() {
    let o = cmg(&["solve", "--method", "random"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn invalid_spec_names_the_offending_field() {
    let dir = TempDir::new().unwrap();
    let spec = dir.path().join("bad.json");
    fs::write(
        &spec,
        r#"{"schema": {"n": 2, "V": 1}, "m": 1, "prior": {"kind": "uniform-binary"},
            "exploits": [{"5": [1]}], "value": {"kind": "half-sum-plus-one-scale"},
            "cost": {"per_attribute": [0.01, 0.01]}}"#,
    )
    .unwrap();
    let o = cmg(&[
        "solve",
        "--method",
        "random",
        "--spec",
        spec.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("exploits[0]"), "{}", stderr(&o));
}

#[test]
fn exact_solver_beyond_capacity_is_a_solver_failure() {
    let dir = TempDir::new().unwrap();
    let o = cmg(&[
        "solve",
        "--method",
        "lp-cg",
        "--fixture",
        "case-study",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    let rows = csv_rows(&dir.path().join("results.csv"));
    assert!(rows[0][11].starts_with("error"));
}

#[test]
fn gam_writes_a_reloadable_archive() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_str().unwrap();
    let mut args = vec![
        "solve",
        "--method",
        "gam",
        "--fixture",
        "table1-n4",
        "--seed-list",
        "2",
        "--out",
        out,
    ];
    args.extend_from_slice(QUICK);
    let o = cmg(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    let bytes = fs::read(dir.path().join("netparams-2.bin")).unwrap();
    let (header, generator, _) = cmg_core::gam::read_archive(bytes.as_slice()).unwrap();
    assert_eq!(header.seed, 2);
    assert!(header.conditional);
    assert_eq!(generator.joint_len(), 4);
    let dump: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("strategy-2.json")).unwrap()).unwrap();
    assert_eq!(dump["strategy"]["archive"], "netparams-2.bin");
}

fn without_runtime(path: &Path) -> Vec<Vec<String>> {
    csv_rows(path)
        .iter()
        .map(|r| {
            r.iter()
                .enumerate()
                .filter(|&(i, _)| i != 10)
                .map(|(_, f)| f.to_string())
                .collect()
        })
        .collect()
}

#[test]
fn experiment_over_n_is_a_reproducible_cross_product() {
    let run = |dir: &TempDir| {
        let mut args = vec![
            "experiment",
            "--axis",
            "n",
            "--values",
            "20,40",
            "--method",
            "gam,random",
            "--seeds",
            "2",
            "--num-exploits",
            "6",
            "--workers",
            "2",
            "--out",
        ];
        args.push(dir.path().to_str().unwrap());
        args.extend_from_slice(QUICK);
        let o = cmg(&args);
        assert!(o.status.success(), "{}", stderr(&o));
        without_runtime(&dir.path().join("results.csv"))
    };
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    let rows = run(&a);
    assert_eq!(rows.len(), 8);
    let keys: Vec<(&str, &str, &str)> = rows
        .iter()
        .map(|r| (r[2].as_str(), r[1].as_str(), r[0].as_str()))
        .collect();
    assert_eq!(
        keys,
        [
            ("20", "gam", "0"),
            ("20", "gam", "1"),
            ("20", "random", "0"),
            ("20", "random", "1"),
            ("40", "gam", "0"),
            ("40", "gam", "1"),
            ("40", "random", "0"),
            ("40", "random", "1"),
        ]
    );
    assert_eq!(rows, run(&b));
}

#[test]
fn experiment_records_failed_cells() {
    let dir = TempDir::new().unwrap();
    let o = cmg(&[
        "experiment",
        "--axis",
        "n",
        "--values",
        "4,12",
        "--method",
        "random",
        "--seeds",
        "1",
        "--num-exploits",
        "3",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = csv_rows(&dir.path().join("results.csv"));
    assert_eq!(rows.len(), 2);
    assert!(rows[0][11].starts_with("error"));
    assert_eq!(&rows[0][7], "");
    assert_eq!(&rows[1][11], "ok");
}

#[test]
fn experiment_rejects_unknown_axis() {
    let o = cmg(&["experiment", "--axis", "depth", "--values", "1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn case_study_reports_exploit_frequencies() {
    let dir = TempDir::new().unwrap();
    let mut args = vec!["case-study", "--seeds", "1", "--out", dir.path().to_str().unwrap()];
    args.extend_from_slice(QUICK);
    let o = cmg(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("exploit selection probability"));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("case-study.json")).unwrap()).unwrap();
    let freqs = summary[0]["exploit_frequencies"].as_array().unwrap();
    assert_eq!(freqs.len(), 19);
    let total: f64 = freqs.iter().map(|p| p[1].as_f64().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-6, "{total}");
    assert_eq!(summary[0]["masked_probability"].as_array().unwrap().len(), 20);
}

#[test]
fn fixtures_lists_and_prints_games() {
    let o = cmg(&["fixtures"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().count(), 5);
    let o = cmg(&["fixtures", "--show", "table1-n6"]);
    let g = cmg_core::game::parse_game_spec(&stdout(&o)).unwrap();
    assert_eq!(g.n(), 6);
}
