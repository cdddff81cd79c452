use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mipt_core::ensemble::{write_aggregate_csv, AggregateRow, Quantity};

fn mipt(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_mipt"));
    cmd.args(args).env_remove("MIPT_WORKERS");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn text(out: &Output) -> String {
    format!("{}{}", String::from_utf8_lossy(&out.stdout), String::from_utf8_lossy(&out.stderr))
}

fn write_config(dir: &Path, p: f64, extra: &str) -> PathBuf {
    let path = dir.join("config.json");
    let body = format!(
        r#"{{"grid": {{"eta": [1.0], "p": [{p}], "n": [8], "beta": 1.0, "n_trajectories": 2}}, "magic_samples": 16, "master_seed": 3{extra}}}"#
    );
    fs::write(&path, body).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn minimal_run_writes_expected_rows_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 0.2, "");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let res = mipt(&["run", "--config", s(&cfg), "--out", s(out), "--workers", "1"], &[]);
        assert!(res.status.success(), "{}", text(&res));
    }
    let raw = fs::read_to_string(a.join("raw.csv")).unwrap();
    // header plus 2 trajectories × 4N/8 observations
    assert_eq!(raw.lines().count(), 1 + 2 * 4);
    assert_eq!(fs::read(a.join("raw.csv")).unwrap(), fs::read(b.join("raw.csv")).unwrap());
    assert_eq!(
        fs::read(a.join("aggregate.csv")).unwrap(),
        fs::read(b.join("aggregate.csv")).unwrap()
    );
}

#[test]
fn out_of_range_p_exits_2_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 1.5, "");
    let res = mipt(&["run", "--config", s(&cfg), "--out", s(&dir.path().join("o"))], &[]);
    assert_eq!(res.status.code(), Some(2));
    assert!(text(&res).contains("`p`"), "{}", text(&res));
}

#[test]
fn unknown_config_field_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 0.2, r#", "bogus": 1"#);
    let res = mipt(&["run", "--config", s(&cfg), "--out", s(&dir.path().join("o"))], &[]);
    assert_eq!(res.status.code(), Some(2), "{}", text(&res));
    assert!(text(&res).contains("bogus"));
}

#[test]
fn worker_count_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let zero_in_file = write_config(dir.path(), 0.2, r#", "workers": 0"#);
    let args = ["run", "--config", s(&zero_in_file), "--out", s(&out), "--force"];

    // file alone: 0 workers is rejected
    assert_eq!(mipt(&args, &[]).status.code(), Some(2));
    // env beats file
    assert!(mipt(&args, &[("MIPT_WORKERS", "1")]).status.success());
    // flag beats env
    let mut with_flag = args.to_vec();
    with_flag.extend(["--workers", "1"]);
    assert!(mipt(&with_flag, &[("MIPT_WORKERS", "0")]).status.success());
    with_flag.truncate(args.len());
    with_flag.extend(["--workers", "0"]);
    assert_eq!(mipt(&with_flag, &[("MIPT_WORKERS", "1")]).status.code(), Some(2));
}

const SIZES: [usize; 7] = [8, 12, 16, 24, 32, 48, 64];

fn synthetic(path: &Path, law: impl Fn(f64, f64) -> f64, sizes: &[usize]) {
    let mut rows = Vec::new();
    for k in 0..8 {
        let p = 0.10 + 0.02 * k as f64;
        for &n in sizes {
            let y = law(p, n as f64);
            // ±0.1% alternating jitter
            let jitter = 1e-3 * y * if (n / 4 + k) % 2 == 0 { 1.0 } else { -1.0 };
            rows.push(AggregateRow {
                eta: 1.0,
                p,
                beta: 1.0,
                n,
                quantity: Quantity::Magic,
                mean: Some(y + jitter),
                raw_std: Some(0.02 * y),
                rescaled_std: Some(0.002 * y),
                window_count: Some(n / 4),
                n_traj: 100,
            });
        }
    }
    write_aggregate_csv(path, &rows).unwrap();
}

fn fit(agg: &Path, out: &Path) -> Output {
    mipt(&["fit", "--aggregate", s(agg), "--out", s(out), "--quantity", "magic", "--eta", "1"], &[])
}

#[test]
fn fit_recovers_extensive_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let agg = dir.path().join("aggregate.csv");
    synthetic(&agg, |_, n| 2.0 + 0.5 * n.sqrt(), &SIZES);
    let res = fit(&agg, dir.path());
    let fits: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("fits.json")).unwrap()).unwrap();
    let ext: Vec<&serde_json::Value> = fits
        .as_array()
        .unwrap()
        .iter()
        .filter(|f| f["law"] == "extensive")
        .collect();
    assert_eq!(ext.len(), 8);
    for f in ext {
        assert!((f["gamma"].as_f64().unwrap() - 0.5).abs() < 0.05, "{f}");
        assert!((f["b"].as_f64().unwrap() - 0.5).abs() < 0.05, "{f}");
    }
    let f_test: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("f_test.json")).unwrap()).unwrap();
    assert!(f_test.as_array().unwrap().iter().all(|r| r["ln_f"].as_f64().unwrap() < 0.0));
    // no crossing: exit 1
    assert_eq!(res.status.code(), Some(1), "{}", text(&res));
    assert!(text(&res).contains("no transition"));
}

#[test]
fn fit_finds_a_planted_crossover_and_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let agg = dir.path().join("aggregate.csv");
    synthetic(&agg, |p, n| if p < 0.15 { 0.5 + 0.3 * n.powf(0.8) } else { 2.0 - 3.0 / n }, &SIZES);
    let res = fit(&agg, dir.path());
    assert!(res.status.success(), "{}", text(&res));
    assert!(text(&res).contains("p_c = 0.1"));
    let crit: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("critical.json")).unwrap()).unwrap();
    let p_c = crit[0]["p_c"].as_f64().unwrap();
    assert!(p_c > 0.14 && p_c < 0.16, "{p_c}");

    let again = fit(&agg, dir.path());
    assert!(again.status.success());
    assert!(text(&again).contains("nothing to do"));
    let forced = mipt(
        &["fit", "--aggregate", s(&agg), "--out", s(dir.path()), "--force"],
        &[],
    );
    assert!(forced.status.success());
    assert!(!text(&forced).contains("nothing to do"));

    // critical from the f_test file agrees with fit
    let crit_dir = dir.path().join("crit");
    let res = mipt(
        &["critical", "--f-test", s(&dir.path().join("f_test.json")), "--out", s(&crit_dir)],
        &[],
    );
    assert!(res.status.success(), "{}", text(&res));
    assert_eq!(
        fs::read(crit_dir.join("critical.json")).unwrap(),
        fs::read(dir.path().join("critical.json")).unwrap()
    );
}

#[test]
fn fit_lists_cells_with_too_few_sizes() {
    let dir = tempfile::tempdir().unwrap();
    let agg = dir.path().join("aggregate.csv");
    synthetic(&agg, |_, n| 1.0 + n.ln(), &SIZES[..4]);
    let res = fit(&agg, dir.path());
    assert_eq!(res.status.code(), Some(2));
    let msg = text(&res);
    assert!(msg.contains("insufficient data") && msg.contains("p = 0.1 has 4 sizes"), "{msg}");
}

#[test]
fn stats_rebuilds_the_aggregate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 0.2, "");
    let out = dir.path().join("o");
    assert!(mipt(&["run", "--config", s(&cfg), "--out", s(&out)], &[]).status.success());
    let original = fs::read(out.join("aggregate.csv")).unwrap();
    let res = mipt(&["stats", "--out", s(&out)], &[]);
    assert!(text(&res).contains("nothing to do"));
    let res = mipt(&["stats", "--out", s(&out), "--force"], &[]);
    assert!(res.status.success(), "{}", text(&res));
    assert_eq!(fs::read(out.join("aggregate.csv")).unwrap(), original);
}

#[test]
fn verify_fast_passes() {
    let res = mipt(&["verify", "--level", "fast"], &[]);
    assert!(res.status.success(), "{}", text(&res));
    assert!(!text(&res).contains("FAIL"));
}
