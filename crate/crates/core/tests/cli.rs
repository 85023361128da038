use std::path::Path;
use std::process::Command;

use nalgebra::DMatrix;
use twcorr::cli::{
    cmd_test_independence, execute, parse_config, read_matrix_csv, test_independence, CommandName, Flags, MeanModel,
    RunConfig,
};
use twcorr::ensembles::{build_s, sample_data_matrix, DataMatrix, EntryDistribution};
use twcorr::experiments::{scaling_transform, Edge, Scaling};
use twcorr::spectra::symmetric_eigen;
use twcorr::tracy_widom::{tw1_cdf_table, PainleveConfig};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_twcorr"))
}

fn run_bin(dir: &Path, args: &[&str], seed_env: Option<&str>) -> std::process::Output {
    let mut c = bin();
    c.current_dir(dir).env("TWCORR_CACHE_DIR", dir.join("cache")).env_remove("TWCORR_SEED").args(args);
    if let Some(s) = seed_env {
        c.env("TWCORR_SEED", s);
    }
    c.output().expect("binary runs")
}

fn data_rows(text: &str) -> Vec<&str> {
    text.lines().filter(|l| !l.starts_with('#')).collect()
}

fn config(cmd: CommandName, pairs: &[(&str, &str)]) -> RunConfig {
    let text: String = pairs.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
    parse_config(cmd, &Flags::default(), Some(&text)).unwrap()
}

fn write_csv(path: &Path, m: &DMatrix<f64>, header: bool) {
    let mut s = String::new();
    if header {
        s += &(0..m.ncols()).map(|j| format!("x{j}")).collect::<Vec<_>>().join(",");
        s.push('\n');
    }
    for i in 0..m.nrows() {
        s += &(0..m.ncols()).map(|j| format!("{:.17e}", m[(i, j)])).collect::<Vec<_>>().join(",");
        s.push('\n');
    }
    std::fs::write(path, s).unwrap();
}

#[test]
fn simulate_two_replicas_gives_two_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out =
        run_bin(dir.path(), &["simulate", "--p", "10", "--n", "30", "--replicas", "2", "--output", "s.csv"], None);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("s.csv")).unwrap();
    let rows = data_rows(&text);
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0], "replica,lambda_min,lambda_max,stat_min,stat_max");
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("s.json")).unwrap()).unwrap();
    assert!(summary["summary"]["ks_tw1"].is_number());
    assert_eq!(summary["config"]["replicas"], "2");
}

#[test]
fn constraint_violation_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_bin(dir.path(), &["simulate", "--p", "100", "--n", "100"], None);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("p < n"));
    let out = run_bin(dir.path(), &["simulate", "--bogus", "1"], None);
    assert!(!out.status.success());
}

#[test]
fn tw_table_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["a.csv", "b.csv"] {
        let out = run_bin(dir.path(), &["tw-table", "--step", "0.004", "--output", name], None);
        assert!(out.status.success());
    }
    let a = std::fs::read(dir.path().join("a.csv")).unwrap();
    assert_eq!(a, std::fs::read(dir.path().join("b.csv")).unwrap());
    let text = String::from_utf8(a).unwrap();
    assert_eq!(data_rows(&text)[0], "t,q,F1");
}

#[test]
fn verify_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_bin(dir.path(), &["verify", "--replicas", "10"], None);
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(stdout.lines().filter(|l| l.starts_with("PASS")).count(), 12);
}

#[test]
fn file_values_are_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.cfg"), "# base\np=10\nn=30\nreplicas=100\n").unwrap();
    let out = run_bin(dir.path(), &["simulate", "--config", "c.cfg", "--replicas", "3", "--output", "o.csv"], None);
    assert!(out.status.success());
    let text = std::fs::read_to_string(dir.path().join("o.csv")).unwrap();
    assert!(text.contains("# replicas=3\n"));
    assert_eq!(data_rows(&text).len(), 4);
    std::fs::write(dir.path().join("bad.cfg"), "replica=3\n").unwrap();
    assert!(!run_bin(dir.path(), &["simulate", "--config", "bad.cfg"], None).status.success());
}

#[test]
fn seed_variable_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["simulate", "--p", "8", "--n", "20", "--replicas", "4", "--seed", "1"];
    let run = |env: Option<&str>, name: &str| {
        let mut a = args.to_vec();
        a.extend(["--output", name]);
        assert!(run_bin(dir.path(), &a, env).status.success());
        std::fs::read_to_string(dir.path().join(name)).unwrap()
    };
    let plain = run(None, "a.csv");
    let env9 = run(Some("9"), "b.csv");
    let flag9 = {
        let a = ["simulate", "--p", "8", "--n", "20", "--replicas", "4", "--seed", "9", "--output", "c.csv"];
        assert!(run_bin(dir.path(), &a, None).status.success());
        std::fs::read_to_string(dir.path().join("c.csv")).unwrap()
    };
    assert!(env9.contains("# seed=9\n"));
    assert_ne!(data_rows(&plain), data_rows(&env9));
    assert_eq!(env9, flag9);
}

#[test]
fn embedded_config_reproduces_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_bin(
        dir.path(),
        &[
            "simulate",
            "--p",
            "12",
            "--n",
            "40",
            "--replicas",
            "5",
            "--dist",
            "laplace",
            "--edge",
            "smallest",
            "--output",
            "a.csv",
        ],
        None,
    );
    assert!(out.status.success());
    let text = std::fs::read_to_string(dir.path().join("a.csv")).unwrap();
    let cfg: String = text.lines().skip(1).filter_map(|l| l.strip_prefix("# ")).map(|l| format!("{l}\n")).collect();
    std::fs::write(dir.path().join("embedded.cfg"), cfg).unwrap();
    assert!(run_bin(dir.path(), &["simulate", "--config", "embedded.cfg", "--output", "b.csv"], None).status.success());
    assert_eq!(text, std::fs::read_to_string(dir.path().join("b.csv")).unwrap());
}

#[test]
fn json_mirrors_csv() {
    let dir = tempfile::tempdir().unwrap();
    let base = ["mp-density", "--p", "30", "--n", "90", "--points", "7"];
    for (fmt, name) in [("csv", "m.csv"), ("json", "m.json")] {
        let mut a = base.to_vec();
        a.extend(["--format", fmt, "--output", name]);
        assert!(run_bin(dir.path(), &a, None).status.success());
    }
    let csv = std::fs::read_to_string(dir.path().join("m.csv")).unwrap();
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("m.json")).unwrap()).unwrap();
    for (k, row) in data_rows(&csv).iter().skip(1).enumerate() {
        let fields: Vec<f64> = row.split(',').map(|f| f.parse().unwrap()).collect();
        assert_eq!(fields[0], json["x"][k].as_f64().unwrap());
        assert_eq!(fields[1], json["density"][k].as_f64().unwrap());
        assert_eq!(fields[2], json["cdf"][k].as_f64().unwrap());
    }
}

#[test]
fn dependent_rows_give_tiny_pvalue() {
    let dir = tempfile::tempdir().unwrap();
    let base = sample_data_matrix(1, 60, EntryDistribution::Gaussian, 4).unwrap();
    let m = DMatrix::from_fn(20, 60, |_, j| base.entries[(0, j)]);
    let path = dir.path().join("dep.csv");
    write_csv(&path, &m, false);
    let cfg = config(CommandName::TestIndependence, &[("data", path.to_str().unwrap()), ("mean", "unknown")]);
    let (report, _) = cmd_test_independence(&cfg).unwrap();
    assert!((report.lambda_extreme - 20.0).abs() < 1e-9);
    assert!(report.statistic > 100.0);
    assert!(report.p_value <= 1e-4);
    assert_eq!(report.table_source, "solved");
}

#[test]
fn orientation_flip_gives_same_report() {
    let dir = tempfile::tempdir().unwrap();
    let data = sample_data_matrix(50, 150, EntryDistribution::Gaussian, 8).unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    write_csv(&a, &data.entries, true);
    write_csv(&b, &data.entries.transpose(), false);
    let ra = cmd_test_independence(&config(CommandName::TestIndependence, &[("data", a.to_str().unwrap())])).unwrap().0;
    let rb = cmd_test_independence(&config(
        CommandName::TestIndependence,
        &[("data", b.to_str().unwrap()), ("orientation", "columns_are_variables")],
    ))
    .unwrap()
    .0;
    assert_eq!(ra, rb);
    assert!((0.0..=1.0).contains(&ra.p_value));
    // the unflipped 150×50 file has p ≥ n
    let bad = config(CommandName::TestIndependence, &[("data", b.to_str().unwrap())]);
    assert!(cmd_test_independence(&bad).is_err());
}

#[test]
fn known_mean_rademacher_matches_covariance_statistic() {
    let table = tw1_cdf_table(&PainleveConfig { step: 4e-3, ..PainleveConfig::default() }).unwrap();
    for seed in 0..5 {
        let data = sample_data_matrix(30, 80, EntryDistribution::Rademacher, seed).unwrap();
        let report = test_independence(&data, MeanModel::KnownZero, Edge::Largest, Scaling::N, &table).unwrap();
        let s = symmetric_eigen(&build_s(&data), false).unwrap();
        let cov = scaling_transform(30, 80, Edge::Largest).unwrap().apply(s.max());
        assert!((report.statistic - cov).abs() <= 1e-12, "{} vs {cov}", report.statistic);
    }
}

#[test]
fn malformed_input_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.csv");
    std::fs::write(&path, "1,2,3,4\n5,,7,8\n").unwrap();
    let cfg = config(CommandName::TestIndependence, &[("data", path.to_str().unwrap())]);
    assert!(cmd_test_independence(&cfg).is_err());
    // constant row with unknown mean
    let m = DMatrix::from_fn(3, 10, |i, j| if i == 1 { 2.0 } else { (i * 7 + j * 3) as f64 % 5.0 });
    write_csv(&path, &m, false);
    assert!(cmd_test_independence(&cfg).is_err());
    assert!(read_matrix_csv("").is_err());
}

#[test]
fn smallest_edge_pvalue_uses_reflection() {
    let table = tw1_cdf_table(&PainleveConfig { step: 4e-3, ..PainleveConfig::default() }).unwrap();
    let data =
        DataMatrix::from_entries(sample_data_matrix(20, 80, EntryDistribution::Gaussian, 2).unwrap().entries).unwrap();
    let r = test_independence(&data, MeanModel::Unknown, Edge::Smallest, Scaling::NMinus1, &table).unwrap();
    assert_eq!(r.oriented_statistic, -r.statistic);
    assert!((r.p_value - (1.0 - table.cdf(-r.statistic))).abs() < 1e-15);
    assert_eq!(r.scaling, Scaling::NMinus1);
}

#[test]
fn green_and_delocalize_write_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("g.csv");
    let cfg = config(
        CommandName::GreenCompare,
        &[("p", "10"), ("n", "30"), ("replicas", "6"), ("dist", "rademacher"), ("output", g.to_str().unwrap())],
    );
    let out = execute(&cfg).unwrap();
    assert_eq!(out.files.len(), 2);
    assert_eq!(data_rows(&std::fs::read_to_string(&g).unwrap()).len(), 7);
    let d = dir.path().join("d.json");
    let cfg = config(
        CommandName::Delocalize,
        &[("p", "10"), ("n", "30"), ("replicas", "3"), ("format", "json"), ("output", d.to_str().unwrap())],
    );
    execute(&cfg).unwrap();
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&d).unwrap()).unwrap();
    assert_eq!(v["per_replica"].as_array().unwrap().len(), 3);
}
