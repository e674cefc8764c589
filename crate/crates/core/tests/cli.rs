use std::process::{Command, Output};

use hsconv::cli::{embedded_config, RunConfig};

fn hsconv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hsconv"))
        .args(args)
        .env_remove("HSCONV_THREADS")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn theta_grid_produces_25_rows() {
    let o = hsconv(&["theta", "--n", "3", "--alpha", "1.2", "--lambda", "1.4", "--w-grid", "1e-3:1e3:25"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "w_norm,tau,value,std_error,closed_form,upper_bound,verdict");
    assert_eq!(rows.len(), 26);
    for row in &rows[1..] {
        let cells: Vec<&str> = row.split(',').collect();
        let (v, c): (f64, f64) = (cells[2].parse().unwrap(), cells[4].parse().unwrap());
        assert!((v - c).abs() <= 1e-6 * v, "{row}");
    }
}

#[test]
fn divergent_scan_exits_with_two() {
    let o = hsconv(&["sup-scan", "--n", "3", "--alpha", "2.5", "--lambda", "1.4", "--w-grid", "0.1:10:3"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("# verdict: fail (unbounded-at |w|=1e0"));
}

#[test]
fn errors_exit_with_one_and_name_the_field() {
    let o = hsconv(&["theta", "--n", "1", "--alpha", "1", "--lambda", "1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("n: must be >= 2"));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, r#"{"command": "km", "n_samples": -3}"#).unwrap();
    let o = hsconv(&["--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("n_samples"));

    assert_eq!(hsconv(&["theta", "--w-grid", "1:2"]).status.code(), Some(1));
    assert_eq!(hsconv(&[]).status.code(), Some(1));
    let o = Command::new(env!("CARGO_BIN_EXE_hsconv"))
        .args(["theta", "--alpha", "1.2", "--lambda", "1.4"])
        .env("HSCONV_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn km_runs_are_byte_identical_and_replayable() {
    let dir = tempfile::tempdir().unwrap();
    let out = |name: &str| dir.path().join(name).to_str().unwrap().to_string();
    let args = ["km", "--n", "3", "--m", "3", "--grid", "3x3", "--samples", "1e5", "--seed", "7"];
    for name in ["a.csv", "b.csv"] {
        let mut a = args.to_vec();
        let path = out(name);
        a.extend(["--output", &path]);
        assert_ne!(hsconv(&a).status.code(), Some(1));
    }
    let a = std::fs::read(out("a.csv")).unwrap();
    assert_eq!(a, std::fs::read(out("b.csv")).unwrap());

    let cfg = embedded_config(std::str::from_utf8(&a).unwrap()).unwrap();
    assert_eq!(cfg.seed, 7);
    assert_eq!(cfg.n_samples, 100_000);
    std::fs::write(out("cfg.json"), cfg.to_json()).unwrap();
    hsconv(&["--config", &out("cfg.json"), "--output", &out("c.csv")]);
    assert_eq!(a, std::fs::read(out("c.csv")).unwrap());
}

#[test]
fn json_format_round_trips_config() {
    let o = hsconv(&["delta3", "--alphas", "2,2,2", "--w-grid", "0.5:2:3", "--format", "json"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["rows"].as_array().unwrap().len(), 3);
    let cfg: RunConfig = embedded_config(&text).unwrap();
    assert_eq!(cfg.alphas, vec![2.0, 2.0, 2.0]);
}
