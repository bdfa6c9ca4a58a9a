use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
[channel]
levels = 8

[system]
max_rounds = 2
age_cap = 12
c_max = "-3 dBw"

[simulation]
horizon = 5000
replicas = 2
"#;

fn aoi(dir: &Path, config: &str, args: &[&str]) -> Output {
    let path = dir.join("config.toml");
    fs::write(&path, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_aoi"))
        .arg("--quiet")
        .arg("--config")
        .arg(&path)
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn solve_prints_summary_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let o = aoi(dir.path(), SMALL, &["solve", "--out", "trace.csv", "--policy-out", "policy.csv"]);
    assert!(o.status.success(), "{o:?}");
    assert!(stdout(&o).contains("avg age"));
    let trace = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert!(trace.starts_with("step,eta,avg_cost"));
    assert!(fs::read_to_string(dir.path().join("policy.csv")).unwrap().starts_with("# xi = "));
}

#[test]
fn config_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = aoi(dir.path(), &format!("{SMALL}\n[solver]\nvalue_tolerance = 1e-9\n"), &["solve"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("value_tolerance"));

    let o = aoi(dir.path(), &SMALL.replace("age_cap = 12", "age_cap = 1"), &["solve"]);
    assert_eq!(o.status.code(), Some(1));

    let o = Command::new(env!("CARGO_BIN_EXE_aoi")).args(["solve"]).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    let o = Command::new(env!("CARGO_BIN_EXE_aoi")).args(["solve", "--config", "/nonexistent/x.toml"]).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    let o = Command::new(env!("CARGO_BIN_EXE_aoi")).args(["frobnicate"]).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn nonconvergence_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = aoi(dir.path(), &format!("{SMALL}\n[solver]\nmax_iterations = 3\n"), &["solve"]);
    assert_eq!(o.status.code(), Some(2), "{o:?}");
}

#[test]
fn io_error_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let o = aoi(dir.path(), SMALL, &["solve", "--out", "missing/dir/trace.csv"]);
    assert_eq!(o.status.code(), Some(3), "{o:?}");
}

#[test]
fn simulate_writes_trace_and_replicas() {
    let dir = tempfile::tempdir().unwrap();
    for policy in ["optimal", "retransmission", "generation"] {
        let o = aoi(
            dir.path(),
            SMALL,
            &["simulate", "--policy", policy, "--horizon", "300", "--trace-out", "trace.csv", "--out", "reps.csv", "--replicas", "3", "--seed", "7"],
        );
        assert!(o.status.success(), "{o:?}");
        let trace = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
        let mut lines = trace.lines();
        assert_eq!(lines.next(), Some("t,age,round,kind,level,gain,success"));
        assert_eq!(lines.count(), 300);
        let reps = fs::read_to_string(dir.path().join("reps.csv")).unwrap();
        let seeds: Vec<&str> = reps.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
        assert_eq!(seeds, ["7", "8", "9"]);
    }
}

#[test]
fn sweep_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let config = format!("{SMALL}\n[sweep]\nvariable = \"c_max_dbw\"\ngrid = [-4, -3]\noutput = \"a.csv\"\n");
    let o = aoi(dir.path(), &config, &["sweep"]);
    assert!(o.status.success(), "{o:?}");
    let o = aoi(dir.path(), &config, &["sweep", "--out", "b.csv"]);
    assert!(o.status.success(), "{o:?}");
    let a = fs::read_to_string(dir.path().join("a.csv")).unwrap();
    assert_eq!(a, fs::read_to_string(dir.path().join("b.csv")).unwrap());
    assert_eq!(a.lines().count(), 1 + 2 * 3);
    assert!(a.starts_with("variable,value,policy,status,age,"));
}

#[test]
fn policy_dump_to_stdout_and_file() {
    let dir = tempfile::tempdir().unwrap();
    let o = aoi(dir.path(), SMALL, &["policy-dump"]);
    assert!(o.status.success(), "{o:?}");
    let text = stdout(&o);
    assert!(text.contains("policy,age,round,kind,level,power_w,pi"));
    let o = aoi(dir.path(), SMALL, &["policy-dump", "--out", "dump.csv"]);
    assert!(o.status.success());
    assert_eq!(fs::read_to_string(dir.path().join("dump.csv")).unwrap(), text);
}

#[test]
fn oracle_check_agrees_on_tiny_instance() {
    let dir = tempfile::tempdir().unwrap();
    let config = "[channel]\nlevels = 2\n[system]\nmax_rounds = 2\nage_cap = 4\nc_max = \"0.5 W\"\n";
    let o = aoi(dir.path(), config, &["oracle-check"]);
    assert!(o.status.success(), "{o:?}");
    assert!(stdout(&o).contains("oracle objective"));
    let o = aoi(dir.path(), config, &["oracle-check", "--cap", "10"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        aoi_core::load_config(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        n += 1;
    }
    assert!(n >= 5);
}
