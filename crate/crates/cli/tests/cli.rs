use std::fs;
use std::path::Path;
use std::process::Command;

const BIN: &str = env!("CARGO_BIN_EXE_regime-lab");

fn regime_lab(args: &[&str]) -> std::process::Output {
    Command::new(BIN).args(args).env_remove("OUTPUT_DIR").output().expect("binary runs")
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap()
}

#[test]
fn converge_on_fixture_passes_with_one_row_per_check() {
    let tmp = tempfile::tempdir().unwrap();
    let out = regime_lab(&["converge", "--trials", "100000", "--n-grid", "64,256,1024", "--out", tmp.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let summary = read(tmp.path(), "summary.csv");
    let checks: Vec<&str> = summary.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(
        checks,
        [
            "kernel",
            "rate_asymptotics",
            "jump_count_mgf",
            "jump_law",
            "fdd",
            "cf_single",
            "cf_two_block",
            "conditions",
            "cf_rate",
            "tightness"
        ]
    );
    assert!(summary.lines().skip(1).all(|l| l.split(',').nth(1) == Some("true")));
}

#[test]
fn malformed_rates_fail_naming_the_key() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    fs::write(&cfg, "states = 2\nrates = [0.0, 1.0, 1.0]\nmu = [0.0, 0.0]\nsigma = [0.1, 0.1]\nx0 = 1.0\nT = 1.0\nN = 16\n").unwrap();
    let out = regime_lab(&["converge", "--config", cfg.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2") && err.contains("`rates`"), "{err}");
    assert!(!tmp.path().join("manifest.json").exists());
}

#[test]
fn invalid_generator_is_model_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("neg.toml");
    fs::write(&cfg, "states = 2\nrates = [0.0, -1.0, 1.0, 0.0]\nmu = [0.0, 0.0]\nsigma = [0.1, 0.1]\nx0 = 1.0\nT = 1.0\nN = 16\n").unwrap();
    let out = regime_lab(&["price", "--config", cfg.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("negative rate"));
}

#[test]
fn same_seed_gives_identical_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let dirs: Vec<_> = ["a", "b"].iter().map(|d| tmp.path().join(d)).collect();
    for (dir, threads) in dirs.iter().zip(["1", "3"]) {
        let out = regime_lab(&["price", "--trials", "10000", "--threads", threads, "--out", dir.to_str().unwrap()]);
        assert!(out.status.success());
    }
    for name in ["reports/price.json", "reports.csv", "summary.csv", "manifest.json"] {
        assert_eq!(read(&dirs[0], name), read(&dirs[1], name), "{name}");
    }
}

#[test]
fn simulate_writes_plot_ready_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let out = regime_lab(&["simulate", "--trials", "5", "--variant", "paper", "--out", tmp.path().to_str().unwrap()]);
    assert!(out.status.success());
    let headers = [
        ("generator.csv", "i,j,value"),
        ("transition_matrix.csv", "i,j,value"),
        ("ctmc_paths.csv", "trial,jump_index,tau,state"),
        ("discrete_paths.csv", "trial,k,state,u"),
        ("limit_paths.csv", "trial,time,u,x"),
    ];
    for (name, header) in headers {
        let text = read(tmp.path(), name);
        assert_eq!(text.lines().next(), Some(header), "{name}");
        assert!(!text.contains('\r'));
    }
    // 5 trials of N + 1 = 257 grid points.
    assert_eq!(read(tmp.path(), "discrete_paths.csv").lines().count(), 1 + 5 * 257);
    // Paper-diagonal rows fall short of 1.
    let m = read(tmp.path(), "transition_matrix.csv");
    let row1: f64 = m.lines().skip(1).take(2).map(|l| l.rsplit(',').next().unwrap().parse::<f64>().unwrap()).sum();
    assert!(row1 < 1.0 - 1e-6);
    let manifest: serde_json::Value = serde_json::from_str(&read(tmp.path(), "manifest.json")).unwrap();
    assert_eq!(manifest["variant"], "paper");
    assert_eq!(manifest["files"].as_object().unwrap().len(), 5);
}

#[test]
fn output_dir_env_is_used_without_out_flag() {
    let tmp = tempfile::tempdir().unwrap();
    let out = Command::new(BIN).args(["simulate", "--trials", "2"]).env("OUTPUT_DIR", tmp.path()).output().unwrap();
    assert!(out.status.success());
    assert!(tmp.path().join("manifest.json").exists());
}
