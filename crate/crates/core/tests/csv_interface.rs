//! The CSV files consumed by the plotting scripts, and the CLI that writes them.

use std::path::Path;
use std::process::{Command, Output};

use irs_ce::analysis::{ChannelKind, EstimatorKind};
use irs_ce::harness::{read_csv, run_experiment, write_csv, write_csv_to, ExperimentSpec, ResultRow, SweepVar, CSV_HEADER};
use irs_ce::sysconfig::{Protocol, SystemConfig};
use tempfile::tempdir;

/// One antenna, so the protocol minimum S = NL + 1 is already full rank.
const SMALL: &str = r#"{"M": 1, "K": 2, "L": 1, "N": 4, "sigma2": 1e-16}"#;

fn small_rows() -> Vec<ResultRow> {
    let base = SystemConfig::from_json_str(SMALL).unwrap();
    let spec = ExperimentSpec {
        trials: 20,
        master_seed: 3,
        ..ExperimentSpec::new(base, SweepVar::Sigma2, vec![1e-17, 1e-16])
    };
    run_experiment(&spec).unwrap()
}

fn csv_text(rows: &[ResultRow]) -> String {
    let mut buf = Vec::new();
    write_csv_to(&mut buf, rows).unwrap();
    String::from_utf8(buf).unwrap()
}

#[test]
fn header_and_row_layout() {
    let rows = small_rows();
    assert_eq!(rows.len(), 2 * 3 * 2);
    let text = csv_text(&rows);
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), CSV_HEADER.join(","));
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), CSV_HEADER.len(), "{line}");
        assert_eq!(fields[0], "sigma2");
        assert_eq!(fields[2], "proposed");
        assert!(["direct", "irs_link", "cascaded"].contains(&fields[3]), "{line}");
        assert!(["LS", "MMSE"].contains(&fields[4]), "{line}");
        let nmse: f64 = fields[5].parse().unwrap();
        assert!(nmse.is_finite() && nmse > 0.0);
        // Cascaded rows have no closed form.
        assert_eq!(fields[6].is_empty(), fields[3] == "cascaded", "{line}");
        assert_eq!(fields[8], "20");
        assert_eq!(fields[9], "3");
        assert_eq!(fields[10], "5");
    }
}

#[test]
fn read_back_round_trips() {
    let rows = small_rows();
    let dir = tempdir().unwrap();
    let path = dir.path().join("out.csv");
    write_csv(&path, &rows).unwrap();
    let back = read_csv(&path).unwrap();
    assert_eq!(back, rows);
    assert!(back
        .iter()
        .any(|r| r.channel_kind == ChannelKind::Cascaded && r.estimator_kind == EstimatorKind::Mmse && r.fom.is_some()));
    assert!(back.iter().all(|r| r.protocol == Protocol::Proposed));
}

#[test]
fn reader_rejects_foreign_header() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(&path, "a,b\n1,2\n").unwrap();
    assert!(read_csv(&path).is_err());
}

#[test]
fn output_is_byte_identical_across_runs() {
    assert_eq!(csv_text(&small_rows()), csv_text(&small_rows()));
}

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_irs-ce"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("cfg.json");
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn cli_writes_csv_and_channel_dump() {
    let dir = tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("run.csv");
    let dump = dir.path().join("channel");
    let res = cli(&[
        "--config",
        &cfg,
        "--trials",
        "10",
        "--seed",
        "7",
        "--sweep",
        "sigma2=1e-17,1e-16,1e-15",
        "--out",
        out.to_str().unwrap(),
        "--dump-channel",
        dump.to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let rows = read_csv(&out).unwrap();
    assert_eq!(rows.len(), 3 * 3 * 2);
    assert!(rows.iter().all(|r| r.trials == 10 && r.seed == 7));
    for name in ["h_d_k0.csv", "h_d_k1.csv", "h_2_l0_k1.csv", "H_1_l0.csv"] {
        assert!(dump.join(name).is_file(), "{name}");
    }
}

#[test]
fn cli_exit_codes() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("x.csv");
    let out = out.to_str().unwrap();

    // Two antennas put the protocol minimum below NL + 1.
    let deficient = write_config(dir.path(), r#"{"M": 2, "K": 1, "L": 1, "N": 4}"#);
    let res = cli(&["--config", &deficient, "--trials", "2", "--out", out]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("rank deficient"));

    let res = cli(&["--config", &deficient, "--trials", "2", "--full-rank-s", "--out", out]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    assert!(read_csv(Path::new(out)).unwrap().iter().all(|r| r.s == 5));

    let res = cli(&["--config", &deficient, "--sweep", "tau=1,2", "--out", out]);
    assert_eq!(res.status.code(), Some(1));

    let res = cli(&["--experiment", "fig9", "--out", out]);
    assert_eq!(res.status.code(), Some(1));

    let missing = dir.path().join("no/such/dir/x.csv");
    let small = write_config(dir.path(), SMALL);
    let res = cli(&["--config", &small, "--trials", "2", "--out", missing.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
}
