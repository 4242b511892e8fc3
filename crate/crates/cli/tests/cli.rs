use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

fn mdabc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mdabc")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn config(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
        .to_str()
        .unwrap()
        .to_string()
}

fn write_csv(dir: &Path, name: &str, values: &[f64]) -> String {
    let mut text = String::from("value\n");
    for v in values {
        text.push_str(&format!("{v}\n"));
    }
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn read_values(p: &Path) -> Vec<f64> {
    fs::read_to_string(p)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.parse().unwrap())
        .collect()
}

/// `key=value` from the simulate summary line.
fn field(line: &str, key: &str) -> f64 {
    line.split_whitespace()
        .find_map(|kv| kv.strip_prefix(&format!("{key}=")))
        .unwrap()
        .parse()
        .unwrap()
}

#[test]
fn missing_config_is_a_validation_error() {
    let o = mdabc(&["run", "/no/such/config.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("/no/such/config.json"), "{}", stderr(&o));
}

#[test]
fn malformed_configs_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let base = fs::read_to_string(config("smoke.json")).unwrap();
    let cases = [
        ("syntax.json", "{ not json".to_string()),
        ("schema.json", base.replace("\"schema_version\": 1", "\"schema_version\": 99")),
        ("unknown.json", base.replacen('{', "{\"bogus\": 1,", 1)),
        ("theta.json", base.replace("\"theta_true\": [\n    -2,", "\"theta_true\": [\n    -2, 7,")),
    ];
    for (name, text) in cases {
        let p = dir.path().join(name);
        fs::write(&p, text).unwrap();
        let o = mdabc(&["run", p.to_str().unwrap(), "--out", dir.path().join("out").to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(2), "{name}: {}", stderr(&o));
        assert!(stderr(&o).contains(name), "{name}: {}", stderr(&o));
    }
    assert!(!dir.path().join("out").exists());
    let o = mdabc(&["run", &config("smoke.json"), "--sim-budget", "10"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn table1_config_writes_the_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t1");
    let start = Instant::now();
    let o = mdabc(&[
        "run",
        &config("mixture_table1.json"),
        "--n-replications",
        "1",
        "--sim-budget",
        "2048",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(start.elapsed().as_secs() < 30);
    for f in ["means.csv", "std.csv", "cov.csv", "rmse.csv", "replications.csv", "report.json"] {
        let text = fs::read_to_string(out.join(f)).unwrap();
        assert!(!text.is_empty(), "{f}");
    }
    let means = fs::read_to_string(out.join("means.csv")).unwrap();
    let lines: Vec<&str> = means.lines().collect();
    assert_eq!(lines[0], "method,mu,omega,sigma1,sigma2");
    assert_eq!(lines.len(), 4);
    for (line, label) in lines[1..].iter().zip(["cvm", "hellinger", "wabc"]) {
        assert!(line.starts_with(&format!("{label},")));
        assert_eq!(line.split(',').count(), 5);
    }
    assert!(stdout(&o).contains("hellinger"));
}

#[test]
fn thread_count_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let run = |threads: &str| -> PathBuf {
        let out = dir.path().join(format!("t{threads}"));
        let o = mdabc(&[
            "run",
            &config("smoke.json"),
            "--threads",
            threads,
            "--seed",
            "11",
            "--quiet",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        assert!(stdout(&o).is_empty());
        out
    };
    let a = run("1");
    let b = run("3");
    for f in ["means.csv", "std.csv", "cov.csv", "rmse.csv", "replications.csv", "report.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let report = fs::read_to_string(a.join("report.json")).unwrap();
    assert!(report.contains("\"master_seed\": 11"));
}

#[test]
fn zero_threads_is_rejected() {
    let o = mdabc(&["version", "--threads", "0"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn distance_wasserstein_examples() {
    let dir = tempfile::tempdir().unwrap();
    let y = write_csv(dir.path(), "y.csv", &[0.3, -1.2, 4.0, 2.5]);
    let o = mdabc(&["distance", "wasserstein", &y, &y]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).trim(), "0");

    let y = write_csv(dir.path(), "a.csv", &[0.0, 1.0]);
    let z = write_csv(dir.path(), "b.csv", &[1.0, 2.0]);
    let o = mdabc(&["distance", "wasserstein", &y, &z, "--p", "1"]);
    assert_eq!(stdout(&o).trim(), "1");
    let o = mdabc(&["distance", "cvm", &y, &y]);
    assert_eq!(stdout(&o).trim(), "0");
}

#[test]
fn distance_input_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let y = write_csv(dir.path(), "y.csv", &[0.0, 1.0, 2.0]);
    let z = write_csv(dir.path(), "z.csv", &[0.0, 1.0]);
    let o = mdabc(&["distance", "wasserstein", &y, &z]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));

    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "value\n1\nx\n").unwrap();
    let o = mdabc(&["distance", "cvm", &y, bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));

    let o = mdabc(&["distance", "cvm", &y, "/no/such/z.csv"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("/no/such/z.csv"));

    let o = mdabc(&["distance", "hellinger", &y, &z, "--bandwidth", "-1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn hellinger_between_shifted_gaussians() {
    // Between N(0,1) and N(1,1) the distance between root densities is
    // sqrt(2 (1 - exp(-1/8))) = 0.4847.
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    for (file, mu, seed) in [("y.csv", "0", "1"), ("z.csv", "1", "2")] {
        let theta = format!("{mu},1,1,1");
        let o = mdabc(&[
            "simulate", "mixture", "--theta", &theta, "--n", "10000", "--seed", seed, "--out", out, "--file", file,
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let y = dir.path().join("y.csv");
    let z = dir.path().join("z.csv");
    let o = mdabc(&["distance", "hellinger", y.to_str().unwrap(), z.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let d: f64 = stdout(&o).trim().parse().unwrap();
    let exact = (2.0 * (1.0 - (-0.125f64).exp())).sqrt();
    assert!((d - exact).abs() < 0.05, "{d} vs {exact}");
}

#[test]
fn simulate_mg1_respects_support() {
    let dir = tempfile::tempdir().unwrap();
    let o = mdabc(&[
        "simulate", "mg1", "--theta", "4,7,0.15", "--n", "50", "--seed", "3", "--out", dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let line = stdout(&o);
    assert_eq!(field(&line, "n"), 50.0);
    assert!(field(&line, "min") >= 4.0, "{line}");
    let values = read_values(&dir.path().join("mg1.csv"));
    assert_eq!(values.len(), 50);
    assert!(values.iter().all(|&v| v >= 4.0));
}

#[test]
fn simulate_gk_median() {
    let dir = tempfile::tempdir().unwrap();
    let o = mdabc(&[
        "simulate", "gk", "--theta", "3,1,2,0.5", "--n", "10000", "--out", dir.path().to_str().unwrap(), "--quiet",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).is_empty());
    let mut v = read_values(&dir.path().join("gk.csv"));
    v.sort_by(f64::total_cmp);
    let median = 0.5 * (v[4999] + v[5000]);
    assert!((median - 3.0).abs() < 0.1, "{median}");
}

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    for file in ["a.csv", "b.csv"] {
        let o = mdabc(&[
            "simulate", "sv", "--theta", "-0.736,0.9,0.363", "--n", "200", "--burn-in", "50", "--seed", "9", "--out",
            out, "--file", file,
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    assert_eq!(fs::read(dir.path().join("a.csv")).unwrap(), fs::read(dir.path().join("b.csv")).unwrap());
    let text = fs::read_to_string(dir.path().join("a.csv")).unwrap();
    assert!(text.starts_with("value\n") && !text.contains('\r'));
}

#[test]
fn simulate_rejects_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    // θ1 > θ2 is outside the M/G/1 parameter space.
    let o = mdabc(&["simulate", "mg1", "--theta", "5,4,0.1", "--n", "10", "--out", out]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let o = mdabc(&["simulate", "gk", "--theta", "3,1,2", "--n", "10", "--out", out]);
    assert_eq!(o.status.code(), Some(2));
    let o = mdabc(&["simulate", "gk", "--theta", "3,1,2,0.5", "--n", "10", "--out", out, "--file", "../x.csv"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!dir.path().join("../x.csv").exists());
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn version_prints() {
    let o = mdabc(&["version"]);
    assert!(o.status.success());
    assert!(stdout(&o).starts_with(&format!("mdabc {}", env!("CARGO_PKG_VERSION"))));
}
