use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn mmimo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mmimo"))
        .args(args)
        .env_remove("MMIMO_OUT_DIR")
        .output()
        .expect("run mmimo")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn iid_config(dir: &Path, n: usize, f: usize, m: usize) -> String {
    let path = dir.join("iid.toml");
    fs::write(
        &path,
        format!(
            "seed = 5\nmodel = {{ kind = \"iid\" }}\ndims = {{ n_time = {n}, n_freq = {f}, n_ant = {m} }}\n"
        ),
    )
    .unwrap();
    path.to_str().unwrap().to_string()
}

fn last_hardening_row(csv_path: &Path) -> (usize, f64) {
    let text = fs::read_to_string(csv_path).unwrap();
    let last = text.lines().last().unwrap();
    let cols: Vec<&str> = last.split(',').collect();
    (cols[0].parse().unwrap(), cols[2].parse().unwrap())
}

#[test]
fn synth_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let out = mmimo(&[
            "--out-dir",
            path_str(dir),
            "synth",
            "--scenario",
            "aisle-scan",
            "--dims",
            "200,8,16",
        ]);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    for name in ["channel.cht", "truth_mask.csv", "manifest.toml"] {
        assert_eq!(
            fs::read(a.join(name)).unwrap(),
            fs::read(b.join(name)).unwrap(),
            "{name} differs"
        );
    }
    let out = mmimo(&[
        "--out-dir",
        path_str(&tmp.path().join("c")),
        "synth",
        "--scenario",
        "aisle-scan",
        "--dims",
        "200,8,16",
        "--seed",
        "2",
    ]);
    assert!(out.status.success());
    assert_ne!(
        fs::read(a.join("channel.cht")).unwrap(),
        fs::read(tmp.path().join("c/channel.cht")).unwrap()
    );
}

#[test]
fn margin_flags_thin_tails_and_strict_exits_4() {
    let tmp = TempDir::new().unwrap();
    let cfg = iid_config(tmp.path(), 100, 100, 4);
    let data = tmp.path().join("data");
    assert!(
        mmimo(&["--out-dir", path_str(&data), "synth", "--config", &cfg])
            .status
            .success()
    );
    let input = data.join("channel.cht");
    let before = fs::read(&input).unwrap();

    let lax = tmp.path().join("lax");
    let out = mmimo(&[
        "--out-dir",
        path_str(&lax),
        "margin",
        "--input",
        path_str(&input),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = fs::read_to_string(lax.join("margin.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 3 * 5);
    for row in &rows {
        let cols: Vec<&str> = row.split(',').collect();
        let p: f64 = cols[1].parse().unwrap();
        let reliable = cols[3] == "true";
        // 1e4 samples: reliable exactly when 1e4 * p >= 10
        assert_eq!(reliable, p >= 1e-3, "{row}");
    }

    let strict = tmp.path().join("strict");
    let out = mmimo(&[
        "--out-dir",
        path_str(&strict),
        "--strict",
        "margin",
        "--input",
        path_str(&input),
    ]);
    assert_eq!(out.status.code(), Some(4));
    assert!(strict.join("margin.csv").exists());

    let out = mmimo(&[
        "--out-dir",
        path_str(&strict),
        "--strict",
        "margin",
        "--input",
        path_str(&input),
        "--p",
        "0.1,0.01",
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(fs::read(&input).unwrap(), before, "input was modified");
}

#[test]
fn report_on_default_scenario() {
    let tmp = TempDir::new().unwrap();
    let out_dir = tmp.path().join("report");
    let out = mmimo(&[
        "--out-dir",
        path_str(&out_dir),
        "report",
        "--scenario",
        "aisle-scan",
        "--dims",
        "2000,20,100",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for name in [
        "manifest.toml",
        "qc_report.json",
        "autocorrelation.csv",
        "lost_samples.csv",
        "hardening.csv",
        "per_antenna.csv",
        "dof.csv",
        "ecdf.csv",
        "cdf_offsets.csv",
        "margin.csv",
        "shadowing.csv",
        "shadowing_cdf.csv",
        "shadowing_fit.toml",
    ] {
        assert!(out_dir.join(name).exists(), "missing {name}");
    }
    let (size, std_db) = last_hardening_row(&out_dir.join("hardening.csv"));
    assert_eq!(size, 100);
    assert!((std_db + 10.0).abs() <= 0.2, "{std_db}");

    // the manifest alone reproduces the run
    let again = tmp.path().join("again");
    let manifest = out_dir.join("manifest.toml");
    let out = mmimo(&[
        "--out-dir",
        path_str(&again),
        "report",
        "--config",
        path_str(&manifest),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for name in [
        "hardening.csv",
        "margin.csv",
        "shadowing.csv",
        "lost_samples.csv",
    ] {
        assert_eq!(
            fs::read(out_dir.join(name)).unwrap(),
            fs::read(again.join(name)).unwrap(),
            "{name} differs"
        );
    }
}

#[test]
fn qc_detects_injected_losses() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    assert!(mmimo(&[
        "--out-dir",
        path_str(&data),
        "synth",
        "--scenario",
        "aisle-scan",
        "--dims",
        "3000,8,32",
    ])
    .status
    .success());
    let qc_dir = tmp.path().join("qc");
    let out = mmimo(&[
        "--out-dir",
        path_str(&qc_dir),
        "qc",
        "--input",
        path_str(&data.join("channel.cht")),
        "--repaired",
        "clean.cht",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let truth: Vec<String> = fs::read_to_string(data.join("truth_mask.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .filter(|l| l.ends_with(",true"))
        .map(|l| l.split(',').next().unwrap().to_string())
        .collect();
    let found: Vec<String> = fs::read_to_string(qc_dir.join("lost_samples.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(str::to_string)
        .collect();
    assert!(!truth.is_empty());
    assert_eq!(truth, found);
    assert!(qc_dir.join("clean.cht").exists());

    let h = tmp.path().join("h");
    let out = mmimo(&[
        "--out-dir",
        path_str(&h),
        "hardening",
        "--input",
        path_str(&qc_dir.join("clean.cht")),
        "--sizes",
        "1,4,32",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(last_hardening_row(&h.join("hardening.csv")).0, 32);
}

#[test]
fn shadowing_recovers_corridor_trend() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    assert!(mmimo(&[
        "--out-dir",
        path_str(&data),
        "synth",
        "--scenario",
        "corridor-walk",
        "--dims",
        "6000,4,16",
    ])
    .status
    .success());
    let out_dir = tmp.path().join("shadow");
    let out = mmimo(&[
        "--out-dir",
        path_str(&out_dir),
        "shadowing",
        "--input",
        path_str(&data.join("channel.cht")),
        "--from-sample",
        "500",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let fit = fs::read_to_string(out_dir.join("shadowing_fit.toml")).unwrap();
    let value = |key: &str| -> f64 {
        fit.lines()
            .find(|l| l.starts_with(&format!("{key} =")))
            .and_then(|l| l.split('=').nth(1))
            .unwrap()
            .trim()
            .parse()
            .unwrap()
    };
    assert_eq!(value("samples"), 5500.0);
    // smoothed shadowing widens the slope error well beyond the white-noise SE
    assert!((value("slope_k") + 0.0012).abs() < 0.0006, "{fit}");
    assert!((value("sigma_hat") - 2.41).abs() < 0.6, "{fit}");
    let rows = fs::read_to_string(out_dir.join("shadowing.csv")).unwrap();
    assert!(rows.starts_with("n,g_db,trend_db,residual_db"));
    assert!(rows.lines().nth(1).unwrap().starts_with("500,"));
}

#[test]
fn exit_codes_distinguish_config_and_data_errors() {
    let tmp = TempDir::new().unwrap();
    let out_dir = tmp.path().join("o");
    let o = path_str(&out_dir);

    let out = mmimo(&["--out-dir", o, "synth", "--scenario", "no-such-preset"]);
    assert_eq!(out.status.code(), Some(2));

    let out = mmimo(&["--out-dir", o, "hardening", "--input", "/nonexistent/x.cht"]);
    assert_eq!(out.status.code(), Some(2));

    let out = mmimo(&["--out-dir", o, "margin", "--bogus-flag"]);
    assert_eq!(out.status.code(), Some(2));

    let junk = tmp.path().join("junk.cht");
    fs::write(&junk, b"not a channel tensor at all").unwrap();
    let out = mmimo(&["--out-dir", o, "hardening", "--input", path_str(&junk)]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cht-magic"));

    let cfg = iid_config(tmp.path(), 50, 2, 4);
    let data = tmp.path().join("data");
    assert!(
        mmimo(&["--out-dir", path_str(&data), "synth", "--config", &cfg])
            .status
            .success()
    );
    let input = data.join("channel.cht");
    let mut bytes = fs::read(&input).unwrap();
    bytes.truncate(bytes.len() - 8);
    fs::write(&input, bytes).unwrap();
    let out = mmimo(&["--out-dir", o, "tails", "--input", path_str(&input)]);
    assert_eq!(out.status.code(), Some(3));

    let out = mmimo(&[
        "--out-dir",
        o,
        "hardening",
        "--input",
        path_str(&junk),
        "--subset-mode",
        "random-k",
    ]);
    assert_eq!(
        out.status.code(),
        Some(3),
        "input is read before the policy is checked"
    );
}

#[test]
fn out_dir_from_environment() {
    let tmp = TempDir::new().unwrap();
    let cfg = iid_config(tmp.path(), 20, 2, 2);
    let target = tmp.path().join("from-env");
    let out = Command::new(env!("CARGO_BIN_EXE_mmimo"))
        .args(["synth", "--config", &cfg])
        .env("MMIMO_OUT_DIR", &target)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(target.join("channel.cht").exists());
    assert!(target.join("manifest.toml").exists());
}
