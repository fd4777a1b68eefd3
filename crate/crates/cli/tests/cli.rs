use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn isaacs(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_isaacs"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn report_value(text: &str, key: &str) -> String {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("no `{key}` in report:\n{text}"))
        .to_string()
}

const NULL_GAME: &str = r#"
[problem]
preset = "null"

[grid]
lower = [-1.0]
upper = [1.0]
dx = [0.25]
"#;

const SEPARABLE: &str = r#"
[problem]
preset = "separable"

[grid]
lower = [-2.0]
upper = [2.0]
dx = [0.25]

[mc]
n_paths = 64
dt = 0.05
seed = 11

[start]
x0 = [0.3]

[isaacs]
samples = 500
"#;

#[test]
fn solve_on_null_game_returns_terminal_payoff() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "null.toml", NULL_GAME);
    let out = isaacs(dir.path(), &["solve", "--config", &cfg]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let csv = fs::read_to_string(dir.path().join("solve.csv")).unwrap();
    let mut lines = csv.lines();
    let header = lines.next().unwrap();
    let u_col = header.split(',').position(|c| c == "value").expect("value column");
    for line in lines {
        let u: f64 = line.split(',').nth(u_col).unwrap().parse().unwrap();
        assert_eq!(u, 0.0, "{line}");
    }
    for ext in ["manifest", "dat", "report"] {
        assert!(dir.path().join(format!("solve.{ext}")).exists(), "missing solve.{ext}");
    }
}

#[test]
fn isaacs_check_on_separable_game_reports_no_gap() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "sep.toml", SEPARABLE);
    let out = isaacs(dir.path(), &["isaacs-check", "--config", &cfg]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let gap: f64 = report_value(&String::from_utf8(out.stdout).unwrap(), "gap").parse().unwrap();
    assert!(gap <= 1e-12, "gap {gap}");
}

#[test]
fn missing_seed_is_a_validation_error_naming_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let text = SEPARABLE.replace("seed = 11\n", "");
    let cfg = write_config(dir.path(), "noseed.toml", &text);
    for command in ["verify", "payoff", "isaacs-check", "audit"] {
        let out = isaacs(dir.path(), &[command, "--config", &cfg]);
        assert_eq!(out.status.code(), Some(2), "{command}");
        assert!(String::from_utf8_lossy(&out.stderr).contains("mc.seed"), "{command}");
    }
    assert!(!dir.path().join("verify.manifest").exists());
}

#[test]
fn unknown_keys_and_bad_values_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "sep.toml", SEPARABLE);
    let cases: [(&str, &str, &str); 4] = [
        ("payoff", "grid.spacing=1", "grid.spacing"),
        ("solve", "grid.dx=[-0.5]", "grid"),
        ("payoff", "policy.y=0.3", "policy.y"),
        ("payoff", "scheme.hamiltonian=\"sideways\"", "scheme.hamiltonian"),
    ];
    for (command, set, key) in cases {
        let extra = ["--set", set];
        let mut args = vec![command, "--config", &cfg];
        args.extend_from_slice(&extra);
        let out = isaacs(dir.path(), &args);
        assert_eq!(out.status.code(), Some(2), "{extra:?}");
        assert!(String::from_utf8_lossy(&out.stderr).contains(key), "{extra:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn off_grid_dpp_time_names_the_nearest_slice() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "sep.toml", &format!("{SEPARABLE}\n[scheme]\ndt_max = 0.125\n\n[dpp]\ntau = 0.3\n"));
    let out = isaacs(dir.path(), &["dpp-check", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("dpp.tau"), "{err}");
    let nearest = err.split("nearest is ").nth(1).expect("hint").trim();
    assert!((nearest.parse::<f64>().unwrap() - 0.3).abs() < 0.125, "{err}");

    let out = isaacs(dir.path(), &["dpp-check", "--config", &cfg, "--set", &format!("dpp.tau={nearest}")]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn rerunning_a_manifest_reproduces_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "sep.toml", SEPARABLE);
    let first = isaacs(dir.path(), &["simulate", "--config", &cfg, "--set", "output.paths=true", "--name", "a"]);
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    let manifest = dir.path().join("a.manifest");
    let text = fs::read_to_string(&manifest).unwrap();
    assert!(text.contains("[manifest]") && text.contains("command = \"simulate\"") && text.contains("seed = 11"));

    let second = isaacs(dir.path(), &["simulate", "--config", manifest.to_str().unwrap(), "--name", "b"]);
    assert!(second.status.success(), "{}", String::from_utf8_lossy(&second.stderr));
    for ext in ["manifest", "paths", "report"] {
        let a = fs::read(dir.path().join(format!("a.{ext}"))).unwrap();
        let b = fs::read(dir.path().join(format!("b.{ext}"))).unwrap();
        assert_eq!(a, b, "{ext} differs");
    }
    assert_eq!(first.stdout, second.stdout);
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "sep.toml", SEPARABLE);
    let one = isaacs(dir.path(), &["payoff", "--config", &cfg, "--threads", "1"]);
    let four = isaacs(dir.path(), &["payoff", "--config", &cfg, "--threads", "4"]);
    assert!(one.status.success() && four.status.success());
    assert_eq!(one.stdout, four.stdout);
}

#[test]
fn plot_data_is_whitespace_separated_columns() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "sep.toml",
        &format!("{SEPARABLE}\n[scheme]\ndt_max = 0.0625\n\n[value_pi]\nblocks = [2, 4, 8]\n"),
    );
    let out = isaacs(dir.path(), &["value-pi", "--config", &cfg]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let dat = fs::read_to_string(dir.path().join("value-pi.dat")).unwrap();
    let mut lines = dat.lines();
    assert_eq!(lines.next(), Some("# norm error"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split_whitespace().map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r.len() == 2));
    assert_eq!(rows[0][0], 0.5);

    let out = isaacs(dir.path(), &["solve", "--config", &cfg]);
    assert!(out.status.success());
    let dat = fs::read_to_string(dir.path().join("solve.dat")).unwrap();
    assert!(dat.starts_with("# x u\n"));
    assert_eq!(dat.lines().count(), 1 + 17);
}

#[test]
fn time_stride_keeps_first_and_last_slices() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "null.toml", &format!("{NULL_GAME}\n[scheme]\ndt_max = 0.1\n"));
    let times = |stride: &str| -> Vec<String> {
        let out = isaacs(dir.path(), &["solve", "--config", &cfg, "--set", &format!("output.time_stride={stride}")]);
        assert!(out.status.success());
        let csv = fs::read_to_string(dir.path().join("solve.csv")).unwrap();
        let mut t: Vec<String> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap().to_string()).collect();
        t.dedup();
        t
    };
    let all = times("1");
    let strided = times("3");
    assert_eq!(all.len(), 11);
    assert_eq!(strided.first(), all.first());
    assert_eq!(strided.last(), all.last());
    assert_eq!(strided.len(), 5);
}
