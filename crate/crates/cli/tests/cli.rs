use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_infomarket");

const MARKET: &str = "[market]\nbasic_utility = 2.0\nsensing_utility = 8.0\nsensing_cost = 2.0\n";
const DB: &str = "\n[[databases]]\ncurve = { kind = \"parametric\", alpha = 4.8, beta = 6.0, gamma = 0.4 }\n";

fn infomarket(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove("INFOMARKET_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("scenario.toml");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

/// Rows of a CSV after the schema line, split on commas.
fn rows(path: &Path) -> Vec<Vec<String>> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("# schema=1"));
    lines.map(|l| l.split(',').map(str::to_string).collect()).collect()
}

fn column(table: &[Vec<String>], name: &str) -> usize {
    table[0].iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"))
}

#[test]
fn empty_market_writes_only_basic_and_sensing_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), MARKET);
    let out = dir.path().join("out");
    let o = infomarket(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let t = rows(&out.join("equilibrium.csv"));
    assert_eq!(t.len(), 3);
    let share = column(&t, "share");
    assert_eq!(t[1][0], "basic");
    assert!((t[1][share].parse::<f64>().unwrap() - 1.0 / 3.0).abs() < 1e-12);
    assert_eq!(t[2][0], "sensing");
    assert!((t[2][share].parse::<f64>().unwrap() - 2.0 / 3.0).abs() < 1e-12);
    assert!(out.join("welfare.csv").exists());
    assert!(out.join("manifest.toml").exists());
}

#[test]
fn fixed_price_monopoly_settles_near_the_dynamics_fixed_point() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{MARKET}{DB}price = 0.5\ninit_share = 0.1\n[dynamics]\nrecord_trajectory = true\n");
    let cfg = write_config(dir.path(), &text);
    let out = dir.path().join("out");
    let o = infomarket(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let t = rows(&out.join("equilibrium.csv"));
    let db = t.iter().find(|r| r[0] == "db1").unwrap();
    let share: f64 = db[column(&t, "share")].parse().unwrap();
    assert!((share - 0.527).abs() < 1e-3, "{share}");
    assert_eq!(db[column(&t, "converged")], "true");
    let traj = rows(&out.join("trajectory.csv"));
    assert_eq!(traj[1][column(&traj, "db1")], "0.1");
}

#[test]
fn malformed_config_exits_2_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    for text in [
        "[market]\nbasic_utility = 2.0\nsensing_utility = oops\n".to_string(),
        format!("{MARKET}{DB}init_share = 0.3\n{DB}init_share = 0.2\n"),
        format!("{MARKET}[sweep]\nparameter = \"market.sensing_cost\"\nvalues = []\n"),
    ] {
        let cfg = write_config(dir.path(), &text);
        for cmd in ["run", "sweep", "check"] {
            let mut args = vec![cmd, "--config", &cfg];
            if cmd != "check" {
                args.extend(["--out", out.to_str().unwrap()]);
            }
            let o = infomarket(&args);
            assert_eq!(o.status.code(), Some(2), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
            assert!(!out.exists(), "{cmd} wrote output for a bad config");
        }
    }
    let o = infomarket(&["run", "--config", dir.path().join("missing.toml").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let o = infomarket(&["run", "--preset", "fig9"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn parse_errors_point_at_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[market]\nbasic_utility = 2.0\nsensing_utility = \"eight\"\nsensing_cost = 2.0\n");
    let o = infomarket(&["check", "--config", &cfg]);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 3"), "{err}");
    assert!(err.contains("sensing_utility"), "{err}");
}

#[test]
fn non_convergence_exits_3_with_flagged_output() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{MARKET}{DB}price = 0.5\n[dynamics]\nmax_iter = 3\n");
    let cfg = write_config(dir.path(), &text);
    let out = dir.path().join("out");
    let o = infomarket(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    let t = rows(&out.join("equilibrium.csv"));
    assert!(t[1..].iter().all(|r| r[column(&t, "converged")] == "false"));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = infomarket(&["sweep", "--preset", "fig8", "--out", out.to_str().unwrap(), "--workers", "2"]);
        assert!(o.status.success());
    }
    for name in ["sweep.csv", "manifest.toml"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn output_directory_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), MARKET);
    let out = dir.path().join("from-env");
    let o = Command::new(BIN)
        .args(["run", "--config", &cfg])
        .env("INFOMARKET_OUT_DIR", &out)
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(out.join("equilibrium.csv").exists());
}

#[test]
fn sweep_rows_follow_value_then_database_order() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = infomarket(&["sweep", "--preset", "fig4", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let t = rows(&out.join("sweep.csv"));
    let keys: Vec<(String, String)> = t[1..].iter().map(|r| (r[0].clone(), r[1].clone())).collect();
    let expected: Vec<(String, String)> = (1..=5)
        .flat_map(|m| (1..=m).map(move |d| (m.to_string(), d.to_string())))
        .collect();
    assert_eq!(keys, expected);
    let ok = column(&t, "consistency_ok");
    assert!(t[1..].iter().all(|r| r[ok] == "true"));
}

#[test]
fn check_prints_the_condition_suite() {
    let o = infomarket(&["check", "--preset", "fig8"]);
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    for key in ["uniqueness_db1", "supermodular", "quasiconcave_db2", "dominant_diagonal", "consistency_ok"] {
        assert!(text.contains(key), "{key} missing from\n{text}");
    }
}

#[test]
fn valuate_writes_samples_fit_and_checks() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        "{MARKET}\n[valuation]\ndraws = 4000\nseed = 7\n\n[valuation.model]\nchannels = 4\ndevices_per_channel = 2.0\n\
         tv = {{ family = \"exponential\", mean = 1.0 }}\n\
         device = {{ family = \"exponential\", mean = 0.5 }}\n\
         outside = {{ family = \"point_mass\", value = 0.1 }}\n"
    );
    let cfg = write_config(dir.path(), &text);
    let run = |out: &Path, seed: Option<&str>| {
        let mut args = vec!["valuate", "--config", &cfg, "--out", out.to_str().unwrap()];
        if let Some(s) = seed {
            args.extend(["--seed", s]);
        }
        let o = infomarket(&args);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    };
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let c = dir.path().join("c");
    run(&a, None);
    run(&b, Some("7"));
    run(&c, Some("8"));
    let samples = rows(&a.join("valuation_samples.csv"));
    assert_eq!(samples.len(), 12);
    assert_eq!(rows(&a.join("assumptions.csv")).len(), 5);
    assert!(a.join("valuation_fit.csv").exists());
    assert_eq!(fs::read(a.join("valuation_samples.csv")).unwrap(), fs::read(b.join("valuation_samples.csv")).unwrap());
    assert_ne!(fs::read(a.join("valuation_samples.csv")).unwrap(), fs::read(c.join("valuation_samples.csv")).unwrap());
    assert!(fs::read_to_string(c.join("manifest.toml")).unwrap().contains("seed = 8"));
}
