use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const HISTOGRAM: &str = r#"
schema_version = 1
experiment = "histogram"
n = 200
p = 40
eps_plus = 0.3
eps_minus = 0.2
gamma = 1.0
seeds = [1, 2]
n_test = 500
bins = 20
"#;

fn lpc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lpc")).args(args).output().unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn help_exits_zero_and_usage_errors_exit_one() {
    assert_eq!(lpc(&["--help"]).status.code(), Some(0));
    assert_eq!(lpc(&[]).status.code(), Some(1));
    assert_eq!(lpc(&["histogram"]).status.code(), Some(1));
}

#[test]
fn histogram_run_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "h.toml", HISTOGRAM);
    let out = dir.path().join("out");
    let o = lpc(&[
        "histogram",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
        "--seeds",
        "4,5",
        "--threads",
        "1",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("config hash"));
    for file in ["report.csv", "config.echo", "plot.svg", "summary.txt"] {
        assert!(out.join(file).is_file(), "missing {file}");
    }
    let echo = fs::read_to_string(out.join("config.echo")).unwrap();
    assert!(echo.contains("# seeds = 4,5"));
    let csv = fs::read_to_string(out.join("report.csv")).unwrap();
    assert!(csv.lines().any(|l| l.starts_with("histogram,naive,,4,accuracy,")));
}

#[test]
fn bad_configs_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let unknown = write_config(dir.path(), "u.toml", &format!("{HISTOGRAM}colour = 3\n"));
    let no_version = write_config(dir.path(), "v.toml", "experiment = \"histogram\"\n");
    let invalid = write_config(
        dir.path(),
        "i.toml",
        &HISTOGRAM.replace("eps_plus = 0.3", "eps_plus = 0.9"),
    );
    for cfg in [unknown, no_version, invalid, "does/not/exist.toml".to_string()] {
        let o = lpc(&["histogram", "--config", &cfg]);
        assert_eq!(o.status.code(), Some(1), "{cfg}");
        assert!(String::from_utf8_lossy(&o.stderr).contains("config error"));
    }
}

#[test]
fn subcommand_must_match_experiment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "h.toml", HISTOGRAM);
    let o = lpc(&["sweep", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn runtime_failure_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "r.toml",
        "schema_version = 1\nexperiment = \"real-data\"\ndata_path = \"missing.csv\"\n",
    );
    let o = lpc(&[
        "real-data",
        "--config",
        &cfg,
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing.csv"));
}

#[test]
fn theory_prints_every_variant() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "h.toml", HISTOGRAM);
    let o = lpc(&["theory", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    for v in ["naive", "unbiased", "optimized", "oracle"] {
        assert!(text.contains(v), "{v} missing from\n{text}");
    }
}
