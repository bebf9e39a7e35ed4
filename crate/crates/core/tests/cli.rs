use std::path::Path;
use std::process::{Command, Output};

use filelife::cli::parse_json_table;

const REF: [&str; 6] = ["--lambda", "1", "--beta", "4", "--mu", "1"];

fn filelife(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_filelife"))
        .args(args)
        .output()
        .unwrap()
}

fn with_ref<'a>(args: &[&'a str]) -> Vec<&'a str> {
    args.iter().copied().chain(REF).collect()
}

#[test]
fn sweep_csv_has_expected_header_and_rows() {
    let out = filelife(&with_ref(&["sweep", "--d-range", "1..3"]));
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("d,mean_approx,mean_qbd,mean_sim,sim_se,L_max")
    );
    let first: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(first[0], "1");
    assert_eq!(first[1].parse::<f64>().unwrap(), 1.0);
    assert!((first[2].parse::<f64>().unwrap() - 1.0).abs() < 1e-9);
    assert!(first[3].is_empty() && first[4].is_empty());
    assert_eq!(lines.count(), 2);
}

#[test]
fn approx_json_round_trips() {
    let out = filelife(&with_ref(&["approx", "--d", "2", "--format", "json"]));
    assert_eq!(out.status.code(), Some(0));
    let rows = parse_json_table(std::str::from_utf8(&out.stdout).unwrap()).unwrap();
    assert_eq!(rows.len(), 1);
    assert!((rows[0].mean_approx.unwrap() - 1.45421090278).abs() < 1e-10);
    assert_eq!(rows[0].mean_qbd, None);
}

#[test]
fn simulate_reports_standard_error() {
    let out = filelife(&with_ref(&[
        "simulate",
        "--d",
        "2",
        "--samples",
        "2000",
        "--seed",
        "3",
    ]));
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    let mean: f64 = row[3].parse().unwrap();
    let se: f64 = row[4].parse().unwrap();
    assert!(mean > 0.0 && se > 0.0 && se < mean);
}

#[test]
fn stationary_table_sums_to_one() {
    let out = filelife(&[
        "stationary",
        "--lambda",
        "1",
        "--beta",
        "4",
        "--tol",
        "1e-14",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("k,theta"));
    let total: f64 = lines
        .map(|l| l.split(',').nth(1).unwrap().parse::<f64>().unwrap())
        .sum();
    assert!((total - 1.0).abs() < 1e-10);
}

#[test]
fn invalid_parameters_exit_with_one_and_write_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out.csv");
    let p = path.to_str().unwrap();
    for args in [
        vec![
            "qbd", "--lambda", "0", "--beta", "4", "--mu", "1", "--d", "2", "--out", p,
        ],
        vec![
            "qbd", "--lambda", "1", "--beta", "-1", "--mu", "1", "--d", "2", "--out", p,
        ],
        vec![
            "approx", "--lambda", "1", "--beta", "4", "--mu", "1", "--d", "0", "--out", p,
        ],
        vec![
            "sweep",
            "--lambda",
            "1",
            "--beta",
            "4",
            "--mu",
            "1",
            "--d-range",
            "5..2",
            "--out",
            p,
        ],
        vec!["approx", "--beta", "4", "--d", "2", "--out", p],
        vec![
            "qbd", "--lambda", "1", "--beta", "4", "--mu", "1", "--d", "2", "--tol", "2", "--out",
            p,
        ],
    ] {
        let out = filelife(&args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        assert!(!out.stderr.is_empty());
        assert!(!path.exists(), "{args:?} left output behind");
    }
}

#[test]
fn unwritable_output_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("missing").join("out.csv");
    let out = filelife(&with_ref(&[
        "approx",
        "--d",
        "2",
        "--out",
        target.to_str().unwrap(),
    ]));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn mu_defaults_to_one() {
    let implicit = filelife(&["qbd", "--lambda", "1", "--beta", "4", "--d", "3"]);
    let explicit = filelife(&[
        "qbd", "--lambda", "1", "--beta", "4", "--mu", "1", "--d", "3",
    ]);
    assert_eq!(implicit.status.code(), Some(0));
    assert_eq!(implicit.stdout, explicit.stdout);
}

#[test]
fn help_exits_cleanly() {
    let out = filelife(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("sweep"));
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    std::fs::write(
        &config,
        "lambda = 1.0\nbeta = 4.0\nmu = 1.0\nd-range = \"2..3\"\nformat = \"json\"\n",
    )
    .unwrap();
    let cfg = config.to_str().unwrap();

    let out = filelife(&["qbd", "--config", cfg]);
    assert_eq!(out.status.code(), Some(0));
    let rows = parse_json_table(std::str::from_utf8(&out.stdout).unwrap()).unwrap();
    assert_eq!(rows.iter().map(|r| r.d).collect::<Vec<_>>(), vec![2, 3]);

    let out = filelife(&["qbd", "--config", cfg, "--d", "4", "--format", "csv"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(text.lines().nth(1).unwrap().starts_with("4,"));

    std::fs::write(&config, "lambda = 1.0\nunknown = 3\n").unwrap();
    assert_eq!(filelife(&["qbd", "--config", cfg]).status.code(), Some(1));
}

#[test]
fn out_file_matches_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sweep.json");
    let args = with_ref(&["sweep", "--d-range", "2..3", "--format", "json"]);
    let stdout = filelife(&args).stdout;
    let mut with_out = args.clone();
    with_out.extend(["--out", path.to_str().unwrap()]);
    assert_eq!(filelife(&with_out).status.code(), Some(0));
    assert_eq!(std::fs::read(Path::new(&path)).unwrap(), stdout);
}
