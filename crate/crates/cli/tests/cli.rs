use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_encompass"))
}

fn manifest() -> &'static Path {
    Path::new(env!("CARGO_MANIFEST_DIR"))
}

fn fixture(name: &str) -> PathBuf {
    manifest().join("tests/fixtures").join(name)
}

fn panel_fixture() -> PathBuf {
    manifest().join("../core/tests/fixtures/panel.csv")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

/// Compares against a committed snapshot; `UPDATE_GOLDEN=1` rewrites it.
fn check_golden(name: &str, actual: &str) {
    let path = manifest().join("tests/golden").join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(&path).unwrap_or_else(|_| {
        panic!(
            "missing snapshot {}; run with UPDATE_GOLDEN=1",
            path.display()
        )
    });
    assert_eq!(actual, expected, "snapshot {name} differs");
}

fn write_errors(dir: &Path, name: &str, rows: &[(f64, f64)]) -> PathBuf {
    let mut text = String::from("e1,e2\n");
    for (a, b) in rows {
        text.push_str(&format!("{a},{b}\n"));
    }
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn csv_field(text: &str, column: &str) -> f64 {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    let i = header.iter().position(|h| *h == column).unwrap();
    row[i].parse().unwrap()
}

#[test]
fn golden_error_file() {
    let file = fixture("errors_n12.csv");
    let file = file.to_str().unwrap();
    let md = run(&["test", file, "--mu0", "0.4", "--bandwidth", "2"]);
    assert!(md.status.success(), "{}", stderr(&md));
    check_golden("test_n12.md", &stdout(&md));
    assert!(stderr(&md).contains("resolved configuration"));

    let csv = run(&[
        "test",
        file,
        "--mu0",
        "0.4",
        "--bandwidth",
        "2",
        "--format",
        "csv",
    ]);
    let text = stdout(&csv);
    assert!((csv_field(&text, "statistic") - 4.915557672282302).abs() < 1e-12);
    assert!((csv_field(&text, "dbar") - 47.0 / 96.0).abs() < 1e-15);
    assert!((csv_field(&text, "omega2") - 5851.0 / 49152.0).abs() < 1e-15);
    assert_eq!(csv_field(&text, "m0"), 4.0);

    let json = run(&[
        "test",
        file,
        "--mu0",
        "0.4",
        "--bandwidth",
        "2",
        "--format",
        "json",
    ]);
    let value: serde_json::Value = serde_json::from_slice(&json.stdout).unwrap();
    assert_eq!(
        value["statistic"].as_f64().unwrap(),
        csv_field(&text, "statistic")
    );
}

#[test]
fn pooled_centering_flag() {
    let file = fixture("errors_n12.csv");
    let out = run(&[
        "test",
        file.to_str().unwrap(),
        "--mu0",
        "0.4",
        "--bandwidth",
        "2",
        "--centering",
        "pooled",
        "--format",
        "csv",
    ]);
    assert!(out.status.success());
    assert!((csv_field(&stdout(&out), "omega2") - 63491.0 / 110592.0).abs() < 1e-15);
}

#[test]
fn half_split_is_rejected() {
    let file = fixture("errors_n12.csv");
    let out = run(&["test", file.to_str().unwrap(), "--mu0", "0.5"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("bounded away from 1/2"));
}

#[test]
fn identical_errors_give_zero_statistic() {
    let dir = tempfile::tempdir().unwrap();
    let rows: Vec<(f64, f64)> = (0..30).map(|_| (0.7, 0.7)).collect();
    let path = write_errors(dir.path(), "same.csv", &rows);
    let out = run(&["test", path.to_str().unwrap(), "--format", "csv"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(csv_field(&stdout(&out), "statistic"), 0.0);
    assert_eq!(csv_field(&stdout(&out), "p_value"), 0.5);
}

#[test]
fn zero_errors_exit_numerical() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_errors(dir.path(), "zero.csv", &[(0.0, 0.0); 20]);
    let out = run(&["test", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("degenerate long-run variance"));
}

#[test]
fn malformed_error_file_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(&path, "e1,e2\n1,2\n3,abc\n").unwrap();
    let out = run(&["test", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("line 3"), "{}", stderr(&out));
}

#[test]
fn unknown_flag_is_rejected() {
    let out = run(&["test", "x.csv", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
}

const SMALL_GRID: &str = r#"
name = "small"
kind = "size"
reps = 300
seed = 9

[[grid]]
dgp = "dgp1"
h = [1, 4]
t = 250
rho = 0.9
mu0 = [0.3, 0.45]
"#;

#[test]
fn mc_output_independent_of_threads() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("small.toml");
    std::fs::write(&config, SMALL_GRID).unwrap();
    let mut outputs = Vec::new();
    for threads in ["1", "3", "8"] {
        for format in ["csv", "json"] {
            let out = dir.path().join(format!("t{threads}.{format}"));
            let status = run(&[
                "mc-size",
                config.to_str().unwrap(),
                "--threads",
                threads,
                "--format",
                format,
                "--out",
                out.to_str().unwrap(),
            ]);
            assert!(status.status.success(), "{}", stderr(&status));
            outputs.push((format, std::fs::read(&out).unwrap()));
        }
    }
    for format in ["csv", "json"] {
        let runs: Vec<_> = outputs.iter().filter(|(f, _)| *f == format).collect();
        assert!(
            runs.windows(2).all(|w| w[0].1 == w[1].1),
            "{format} differs across thread counts"
        );
    }
}

#[test]
fn mc_overrides_and_kind_check() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("small.toml");
    std::fs::write(&config, SMALL_GRID).unwrap();
    let out = run(&[
        "mc-size",
        config.to_str().unwrap(),
        "--reps",
        "20",
        "--seed",
        "3",
        "--format",
        "csv",
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert_eq!(text.lines().count(), 5);
    assert!(stderr(&out).contains("\"reps\": 20"));
    let wrong = run(&["mc-power", config.to_str().unwrap()]);
    assert_eq!(wrong.status.code(), Some(2));
    assert!(stderr(&wrong).contains("`kind`"));
}

#[test]
fn malformed_config_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    std::fs::write(&config, SMALL_GRID.replace("rho = 0.9", "rho = \"high\"")).unwrap();
    let out = run(&["mc-size", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("grid[0].rho"), "{}", stderr(&out));

    std::fs::write(
        &config,
        SMALL_GRID.replace("rho = 0.9", "rho = 0.9\nrhoo = 1"),
    )
    .unwrap();
    let out = run(&["mc-size", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("rhoo"), "{}", stderr(&out));

    let out = run(&["mc-size", "/nonexistent/grid.toml"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn shipped_configs_parse() {
    let dir = manifest().join("../../configs");
    let mut seen = 0;
    for sub in [dir.clone(), dir.join("desk")] {
        for entry in std::fs::read_dir(&sub).unwrap() {
            let path = entry.unwrap().path();
            if path.extension().is_some_and(|e| e == "toml")
                && !path.ends_with("scalar_blocks.toml")
            {
                let cfg = encompass_core::config::ExperimentConfig::load(&path)
                    .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
                assert!(!cfg.cells().unwrap().is_empty());
                seen += 1;
            }
        }
    }
    assert_eq!(seen, 8);
}

fn power_rows(args: &[&str]) -> Vec<(f64, f64, f64, f64)> {
    let mut full = vec!["local-power", "--format", "csv"];
    full.extend_from_slice(args);
    let out = run(&full);
    assert!(out.status.success(), "{}", stderr(&out));
    stdout(&out)
        .lines()
        .skip(1)
        .map(|l| {
            let v: Vec<f64> = l.split(',').map(|x| x.parse().unwrap()).collect();
            (v[0], v[1], v[2], v[3])
        })
        .collect()
}

#[test]
fn local_power_rows() {
    let rows = power_rows(&["--mu0", "0.45"]);
    assert_eq!(rows.len(), 1);
    assert!((rows[0].2 - 8.616_844).abs() < 1e-6);

    let rows = power_rows(&[
        "--mu0",
        "0.3",
        "--c-scale",
        "0",
        "--c-scale",
        "0.5",
        "--level",
        "0.05",
    ]);
    assert_eq!(rows[0].3, 0.05);
    assert!(rows[1].3 > 0.05);

    let grid = power_rows(&[]);
    assert_eq!(grid.len(), 10);
    assert!(grid.windows(2).all(|w| w[1].2 > w[0].2));

    let blocks = manifest().join("../../configs/scalar_blocks.toml");
    let mild = power_rows(&["--mild", "--blocks", blocks.to_str().unwrap()]);
    assert_eq!(mild, grid);
}

#[test]
fn local_power_bad_blocks() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("b.toml");
    std::fs::write(
        &path,
        "c = [1.0]\nm11 = [[1.0]]\nm12 = [[0.0]]\nm21 = [[0.0]]\nm22 = [[1.0, 2.0]]\n",
    )
    .unwrap();
    let out = run(&["local-power", "--blocks", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn inflation_fixture_snapshot() {
    let panel = panel_fixture();
    let out = run(&["inflation", panel.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    check_golden("inflation_fixture.md", &stdout(&out));
}

#[test]
fn inflation_mu0_columns() {
    let panel = panel_fixture();
    let out = run(&[
        "inflation",
        panel.to_str().unwrap(),
        "--mu0",
        "0.35",
        "--mu0",
        "0.45",
        "--format",
        "csv",
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    let header = text.lines().next().unwrap();
    assert_eq!(header.matches("p_mu0_").count(), 2);
    assert!(header.contains("p_mu0_0.35") && header.contains("p_mu0_0.45"));
}

#[test]
fn inflation_filters_and_errors() {
    let panel = panel_fixture();
    let out = run(&[
        "inflation",
        panel.to_str().unwrap(),
        "--countries",
        "alp,gam",
        "--format",
        "csv",
    ]);
    assert!(out.status.success());
    assert_eq!(stdout(&out).lines().count(), 3);

    let out = run(&["inflation", "/nonexistent/panel.csv"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["inflation", panel.to_str().unwrap(), "--from", "1999-Q1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("coverage"));
    let out = run(&["inflation", panel.to_str().unwrap(), "--mu0", "0.49"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn inflation_output_independent_of_threads() {
    let panel = panel_fixture();
    let a = run(&[
        "inflation",
        panel.to_str().unwrap(),
        "--threads",
        "1",
        "--format",
        "json",
    ]);
    let b = run(&[
        "inflation",
        panel.to_str().unwrap(),
        "--threads",
        "4",
        "--format",
        "json",
    ]);
    assert!(a.status.success() && b.status.success());
    assert_eq!(a.stdout, b.stdout);
}
