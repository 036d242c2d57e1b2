//! End-to-end tests of the `riskclt` binary: flags, exit codes, file
//! schemas, determinism and manifest replay.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_riskclt"))
}

fn tmpdir(tag: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("riskclt-cli-{tag}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&d);
    fs::create_dir_all(&d).unwrap();
    d
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn assert_code(out: &Output, code: i32) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn read(path: &Path) -> String {
    fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn csv_body(path: &Path) -> Vec<Vec<String>> {
    read(path)
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn missing_required_flag_is_usage_error() {
    let out = run(&["clt", "--theorem", "t1", "--c", "0.5"]);
    assert_code(&out, 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("--p"));
}

#[test]
fn c_and_n_are_mutually_exclusive() {
    let out = run(&["clt", "--theorem", "t1", "--p", "60", "--c", "0.5", "--n", "120"]);
    assert_code(&out, 2);
    // and omitting both is also an error
    let out = run(&["clt", "--theorem", "t1", "--p", "60"]);
    assert_code(&out, 2);
}

#[test]
fn interpolation_threshold_is_numeric_error() {
    let dir = tmpdir("thresh");
    let out = run(&[
        "clt", "--theorem", "t1", "--p", "100", "--n", "100",
        "--reps", "5", "--out", dir.to_str().unwrap(),
    ]);
    assert_code(&out, 3);
    assert!(!dir.join("stats.csv").exists(), "no partial files");
}

#[test]
fn regime_flag_must_match_theorem() {
    let out = run(&["clt", "--theorem", "t1", "--p", "60", "--c", "0.5", "--regime", "over"]);
    assert_code(&out, 2);
}

#[test]
fn clt_writes_all_artifacts() {
    let dir = tmpdir("clt");
    let out = run(&[
        "clt", "--theorem", "t2", "--p", "60", "--c", "0.6", "--reps", "40",
        "--seed", "11", "--out", dir.to_str().unwrap(),
    ]);
    assert_code(&out, 0);
    assert!(String::from_utf8_lossy(&out.stdout).contains("realized c_n"));

    let stats = csv_body(&dir.join("stats.csv"));
    assert_eq!(stats.len(), 40);
    for row in &stats {
        let v: f64 = row[0].parse().unwrap();
        assert!(v.is_finite());
    }

    let hist = csv_body(&dir.join("hist.csv"));
    let total: u64 = hist.iter().map(|r| r[2].parse::<u64>().unwrap()).sum();
    assert_eq!(total, 40);

    let summary: serde_json::Value =
        serde_json::from_str(&read(&dir.join("summary.json"))).unwrap();
    let cover = summary["cover_rate"].as_f64().unwrap();
    assert!((cover * 40.0).fract().abs() < 1e-9);
    assert_eq!(summary["n"].as_u64(), Some(100));
    assert!((summary["realized_c_n"].as_f64().unwrap() - 0.6).abs() < 1e-12);
    assert!(dir.join("manifest.json").exists());
}

#[test]
fn band_schema_and_determinism() {
    let d1 = tmpdir("band1");
    let d2 = tmpdir("band2");
    let args = |out: &Path| {
        vec![
            "band".to_string(),
            "--p".into(), "50".into(),
            "--n-min".into(), "1".into(),
            "--n-max".into(), "100".into(),
            "--seed".into(), "3".into(),
            "--out".into(), out.display().to_string(),
        ]
    };
    assert_code(&bin().args(args(&d1)).output().unwrap(), 0);
    assert_code(&bin().args(args(&d2)).output().unwrap(), 0);

    let band = csv_body(&d1.join("band.csv"));
    assert_eq!(band.len(), 100);
    let at_p: &Vec<String> = band.iter().find(|r| r[0] == "50").unwrap();
    assert_eq!(at_p[5], "false");
    // valid rows have lower <= upper
    for r in band.iter().filter(|r| r[5] == "true") {
        let lo: f64 = r[3].parse().unwrap();
        let hi: f64 = r[4].parse().unwrap();
        assert!(lo <= hi);
    }

    let pairs = csv_body(&d1.join("pairs.csv"));
    assert!(!pairs.is_empty());

    for name in ["band.csv", "pairs.csv", "density.csv"] {
        assert_eq!(read(&d1.join(name)), read(&d2.join(name)), "{name}");
    }
}

#[test]
fn replay_reproduces_byte_identical_outputs() {
    let dir = tmpdir("replay");
    let out = run(&[
        "clt", "--theorem", "t5", "--p", "40", "--c", "2", "--reps", "20",
        "--seed", "5", "--out", dir.to_str().unwrap(),
    ]);
    assert_code(&out, 0);
    let before: Vec<(String, String)> = ["stats.csv", "hist.csv", "summary.json", "manifest.json"]
        .iter()
        .map(|f| (f.to_string(), read(&dir.join(f))))
        .collect();
    let manifest = dir.join("manifest.json");
    let out = run(&["replay", "--manifest", manifest.to_str().unwrap()]);
    assert_code(&out, 0);
    for (name, content) in before {
        assert_eq!(read(&dir.join(&name)), content, "{name}");
    }
}

#[test]
fn mp_density_table() {
    let dir = tmpdir("mp");
    let out = run(&["mp", "--c", "0.25", "--steps", "2001", "--out", dir.to_str().unwrap()]);
    assert_code(&out, 0);
    let rows = csv_body(&dir.join("density.csv"));
    assert_eq!(rows.len(), 2001);
    let xs: Vec<f64> = rows.iter().map(|r| r[0].parse().unwrap()).collect();
    let ds: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    assert!(xs.windows(2).all(|w| w[0] < w[1]));
    let integral: f64 = xs
        .windows(2)
        .zip(ds.windows(2))
        .map(|(x, d)| 0.5 * (d[0] + d[1]) * (x[1] - x[0]))
        .sum();
    assert!((integral - 1.0).abs() < 1e-3, "integral {integral}");

    let dir2 = tmpdir("mp4");
    let out = run(&["mp", "--c", "4", "--out", dir2.to_str().unwrap()]);
    assert_code(&out, 0);
    let first = read(&dir2.join("density.csv"));
    let header = first.lines().next().unwrap();
    assert!(header.starts_with("# point_mass_at_zero"));
    let pm: f64 = header.rsplit('=').next().unwrap().trim().parse().unwrap();
    assert!((pm - 0.75).abs() < 1e-15);

    assert_code(&run(&["mp", "--c", "-1"]), 2);
}

#[test]
fn risk_report_json() {
    let dir = tmpdir("risk");
    let out = run(&[
        "risk", "--n", "120", "--p", "60", "--beta", "fixed", "--seed", "2",
        "--oracle", "20000", "--out", dir.to_str().unwrap(),
    ]);
    assert_code(&out, 0);
    let v: serde_json::Value = serde_json::from_str(&read(&dir.join("risk.json"))).unwrap();
    let rep = &v["report"];
    // underparametrized full rank: bias ~ 0, risks coincide (fixed beta)
    assert!(rep["bias_given_x"].as_f64().unwrap() < 1e-10);
    assert_eq!(rep["risk_given_x"], rep["risk_given_x_beta"]);
    let oracle = v["oracle"]["mean"].as_f64().unwrap();
    let se = v["oracle"]["std_err"].as_f64().unwrap();
    let closed = rep["risk_given_x_beta"].as_f64().unwrap();
    assert!((oracle - closed).abs() <= 3.0 * se.max(1e-3));
}

#[test]
fn seed_env_fallback() {
    let d1 = tmpdir("seed-flag");
    let d2 = tmpdir("seed-env");
    let out = run(&[
        "clt", "--theorem", "t1", "--p", "30", "--c", "0.5", "--reps", "10",
        "--seed", "42", "--out", d1.to_str().unwrap(),
    ]);
    assert_code(&out, 0);
    let out = bin()
        .args([
            "clt", "--theorem", "t1", "--p", "30", "--c", "0.5", "--reps", "10",
            "--out", d2.to_str().unwrap(),
        ])
        .env("RISKCLT_SEED", "42")
        .output()
        .unwrap();
    assert_code(&out, 0);
    assert_eq!(read(&d1.join("stats.csv")), read(&d2.join("stats.csv")));
}

#[test]
fn worker_count_does_not_change_output() {
    let d1 = tmpdir("w1");
    let d8 = tmpdir("w8");
    for (d, w) in [(&d1, "1"), (&d8, "8")] {
        let out = run(&[
            "clt", "--theorem", "t5", "--p", "40", "--c", "2", "--reps", "30",
            "--seed", "9", "--workers", w, "--out", d.to_str().unwrap(),
        ]);
        assert_code(&out, 0);
    }
    for name in ["stats.csv", "hist.csv", "summary.json"] {
        assert_eq!(read(&d1.join(name)), read(&d8.join(name)), "{name}");
    }
}

#[test]
fn band_mc_overlay_brackets_centers() {
    let dir = tmpdir("bandmc");
    let out = run(&[
        "band", "--p", "30", "--n-min", "10", "--n-max", "60", "--mc", "60",
        "--seed", "4", "--out", dir.to_str().unwrap(),
    ]);
    assert_code(&out, 0);
    let band = csv_body(&dir.join("band.csv"));
    let mc = csv_body(&dir.join("band_mc.csv"));
    assert_eq!(
        mc.len(),
        band.iter().filter(|r| r[5] == "true").count(),
        "one overlay row per valid n"
    );
    for row in &mc {
        let lo: f64 = row[1].parse().unwrap();
        let hi: f64 = row[2].parse().unwrap();
        assert!(lo <= hi);
    }
}
