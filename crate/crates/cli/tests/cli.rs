use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const K1: &str = r#"
seed = 3

[[mixture.components]]
weight = 1.0
mean = [0.0]
variance = 2.0

[schedule]
h = 0.01
horizons = [0, 50, 300]
chains = 64
"#;

const TWO_MODES_2D: &str = r#"
seed = 5

[[mixture.components]]
weight = 0.5
mean = [-3.0, 0.0]

[[mixture.components]]
weight = 0.5
mean = [3.0, 0.0]
diag = [1.0, 0.5]

[init]
m = 20

[schedule]
h = 0.01
horizons = [100, 400]
chains = 20
record_stride = 10

[diagnostics]
projection_axes = [0, 1]
n_ref = 2000
drift_block = 50
"#;

fn lmclab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lmclab")).args(args).env_remove("LMCLAB_OUT").output().unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// The value of `key: value` in a report.
fn value(report: &str, key: &str) -> f64 {
    let prefix = format!("{key}: ");
    report.lines().find_map(|l| l.strip_prefix(&prefix)).unwrap_or_else(|| panic!("{key} missing")).parse().unwrap()
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn minimal_config_runs_and_emits_artifacts() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "k1.toml", K1);
    let out = tmp.path().join("out");
    let o = lmclab(&["simulate", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in [
        "endpoints_0.csv",
        "endpoints_50.csv",
        "endpoints_300.csv",
        "init.csv",
        "kde_0.csv",
        "kde_300.csv",
        "kde_init.csv",
        "truth.csv",
        "kde.svg",
        "report.txt",
        "config.toml",
        "manifest.toml",
    ] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let report = fs::read_to_string(out.join("report.txt")).unwrap();
    assert_eq!(value(&report, "diverged"), 0.0);
    assert!((value(&report, "kde_integral@300") - 1.0).abs() <= 1e-3);
    let endpoints = fs::read_to_string(out.join("endpoints_300.csv")).unwrap();
    assert!(endpoints.starts_with("chain,x_0,cluster,bad_hits,diverged\n"));
    assert_eq!(endpoints.lines().count(), 65);
}

#[test]
fn same_config_gives_identical_csvs_at_any_thread_count() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", TWO_MODES_2D);
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    assert_eq!(code(&lmclab(&["simulate", "--config", s(&cfg), "--out", s(&a), "--threads", "1"])), 0);
    assert_eq!(code(&lmclab(&["simulate", "--config", s(&cfg), "--out", s(&b), "--threads", "1"])), 0);
    assert_eq!(code(&lmclab(&["simulate", "--config", s(&cfg), "--out", s(&c), "--threads", "4"])), 0);
    let ca = csv_files(&a);
    assert!(ca.iter().any(|(n, _)| n == "trajectories.csv"));
    assert_eq!(ca, csv_files(&b));
    assert_eq!(ca, csv_files(&c));
    assert_eq!(fs::read(a.join("report.txt")).unwrap(), fs::read(c.join("report.txt")).unwrap());
}

#[test]
fn seed_flag_changes_the_run_and_is_recorded() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "k1.toml", K1);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(code(&lmclab(&["simulate", "--config", s(&cfg), "--out", s(&a)])), 0);
    assert_eq!(code(&lmclab(&["simulate", "--config", s(&cfg), "--out", s(&b), "--seed", "11"])), 0);
    assert_ne!(fs::read(a.join("endpoints_300.csv")).unwrap(), fs::read(b.join("endpoints_300.csv")).unwrap());
    let resolved = fs::read_to_string(b.join("config.toml")).unwrap();
    assert!(resolved.contains("seed = 11"), "{resolved}");
    let manifest = fs::read_to_string(b.join("manifest.toml")).unwrap();
    assert!(manifest.contains("seed = 11"));
}

#[test]
fn rerunning_the_resolved_config_reproduces_every_artifact() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", TWO_MODES_2D);
    let a = tmp.path().join("a");
    assert_eq!(code(&lmclab(&["simulate", "--config", s(&cfg), "--out", s(&a), "--seed", "9"])), 0);
    let b = tmp.path().join("b");
    let o = lmclab(&["simulate", "--config", s(&a.join("config.toml")), "--out", s(&b)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    // b's manifest describes b; a's manifest must also match b's files.
    let o = lmclab(&["verify", s(&a)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in fs::read_dir(&a).unwrap() {
        let name = f.unwrap().file_name();
        assert_eq!(fs::read(a.join(&name)).unwrap(), fs::read(b.join(&name)).unwrap(), "{name:?} differs");
    }
}

#[test]
fn verify_detects_modified_artifacts() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "k1.toml", K1);
    let out = tmp.path().join("out");
    assert_eq!(code(&lmclab(&["simulate", "--config", s(&cfg), "--out", s(&out)])), 0);
    fs::write(out.join("endpoints_50.csv"), "chain,x_0\n0,1.0\n").unwrap();
    let o = lmclab(&["verify", s(&out)]);
    assert_eq!(code(&o), 4);
    assert!(stderr(&o).contains("endpoints_50.csv"));
}

#[test]
fn schema_errors_exit_with_code_2_and_name_the_field() {
    let tmp = TempDir::new().unwrap();
    let cases = [
        (format!("colour = 1\n{K1}"), "colour"),
        (K1.replace("h = 0.01", "h = -0.01"), "schedule.h"),
        (K1.replace("horizons = [0, 50, 300]", "horizons = [50, 0]"), "horizons"),
        (K1.replace("weight = 1.0", "weight = -1.0"), "mixture"),
        (K1.replace("variance = 2.0", "variance = 2.0\ndiag = [1.0]"), "at most one"),
        ("seed = 1\n".to_string(), "mixture"),
        (format!("{K1}\n[score]\nkind = \"biased\"\nweights = [0.5, 0.5]\n"), "score.weights"),
        (format!("{K1}\n[[check]]\nmetric = \"tv_truth@0\"\n"), "check"),
    ];
    for (n, (text, needle)) in cases.iter().enumerate() {
        let cfg = write_config(tmp.path(), &format!("bad{n}.toml"), text);
        let o = lmclab(&["simulate", "--config", s(&cfg), "--out", s(&tmp.path().join("o"))]);
        assert_eq!(code(&o), 2, "case {n}: {}", stderr(&o));
        assert!(stderr(&o).contains(needle), "case {n}: {}", stderr(&o));
    }
    let o = lmclab(&["simulate", "--config", s(&tmp.path().join("missing.toml"))]);
    assert_eq!(code(&o), 2);
}

#[test]
fn check_mode_exits_with_code_4_on_failure() {
    let tmp = TempDir::new().unwrap();
    let failing = format!("{K1}\n[[check]]\nmetric = \"tv_truth@300\"\nmax = 0.0\n");
    let passing = format!("{K1}\n[[check]]\nmetric = \"tv_truth@300\"\nmax = 1.0\n[[check]]\nmetric = \"transitions@300\"\nmax = 0.0\n");
    let f = write_config(tmp.path(), "f.toml", &failing);
    let p = write_config(tmp.path(), "p.toml", &passing);
    let o = lmclab(&["simulate", "--config", s(&f), "--out", s(&tmp.path().join("f")), "--check"]);
    assert_eq!(code(&o), 4);
    assert!(stdout(&o).contains("tv_truth@300: FAIL"));
    let o = lmclab(&["simulate", "--config", s(&f), "--out", s(&tmp.path().join("g"))]);
    assert_eq!(code(&o), 0, "checks are only enforced with --check");
    let o = lmclab(&["simulate", "--config", s(&p), "--out", s(&tmp.path().join("p")), "--check"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
}

#[test]
fn diverging_chains_exit_with_code_3() {
    let tmp = TempDir::new().unwrap();
    let text = K1.replace("h = 0.01", "h = 1.5").replace("variance = 2.0", "variance = 0.5");
    let cfg = write_config(tmp.path(), "d.toml", &text);
    let o = lmclab(&["simulate", "--config", s(&cfg), "--out", s(&tmp.path().join("o"))]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(tmp.path().join("o/report.txt").exists());
}

#[test]
fn output_directory_falls_back_to_the_environment() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "k1.toml", K1);
    let env_dir = tmp.path().join("from_env");
    let o = Command::new(env!("CARGO_BIN_EXE_lmclab"))
        .args(["schedule", "--config", s(&cfg)])
        .env("LMCLAB_OUT", &env_dir)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert!(env_dir.join("report.txt").exists());
    let cfg_out = write_config(tmp.path(), "k1o.toml", &format!("out = \"{}\"\n{K1}", s(&tmp.path().join("from_cfg"))));
    let o = Command::new(env!("CARGO_BIN_EXE_lmclab"))
        .args(["schedule", "--config", s(&cfg_out)])
        .env("LMCLAB_OUT", &env_dir)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert!(tmp.path().join("from_cfg/report.txt").exists());
}

#[test]
fn certify_single_component_gives_4_ln4_over_alpha() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "k1.toml", K1);
    let o = lmclab(&["certify-lsi", "--config", s(&cfg), "--out", s(&tmp.path().join("o"))]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let alpha = 0.5;
    let want = 4.0 * 4f64.ln() / alpha;
    assert!((value(&stdout(&o), "c_ls") - want).abs() <= 1e-12 * want);
    assert!(stdout(&o).contains("pass: true"));
}

#[test]
fn certify_three_modes_reports_the_separated_partition() {
    let tmp = TempDir::new().unwrap();
    let text = "[[mixture.components]]\nweight = 1.0\nmean = [0.0]\n\
                [[mixture.components]]\nweight = 1.0\nmean = [1.0]\n\
                [[mixture.components]]\nweight = 1.0\nmean = [50.0]\n";
    let cfg = write_config(tmp.path(), "k3.toml", text);
    let o = lmclab(&["certify-lsi", "--config", s(&cfg), "--out", s(&tmp.path().join("o"))]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("partition: [{0, 1}, {2}]"), "{}", stdout(&o));
    assert!(stdout(&o).contains("termination: Separated"));
}

#[test]
fn certify_with_a_disconnecting_threshold_reports_each_part() {
    let tmp = TempDir::new().unwrap();
    let text = "[[mixture.components]]\nweight = 1.0\nmean = [0.0]\n\
                [[mixture.components]]\nweight = 1.0\nmean = [1.0]\n\
                [[mixture.components]]\nweight = 1.0\nmean = [50.0]\n\
                [lsi]\ndelta = 0.1\n";
    let cfg = write_config(tmp.path(), "k3.toml", text);
    let o = lmclab(&["certify-lsi", "--config", s(&cfg), "--out", s(&tmp.path().join("o"))]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("connected: false"));
    assert!(out.contains("part0_c_ls") && out.contains("part1_c_ls"));
}

#[test]
fn schedule_is_monotone_in_eps_tv() {
    let tmp = TempDir::new().unwrap();
    let two = "[[mixture.components]]\nweight = 0.5\nmean = [-1.0]\n[[mixture.components]]\nweight = 0.5\nmean = [1.0]\n";
    let run = |eps: f64| {
        let cfg = write_config(tmp.path(), &format!("s{eps}.toml"), &format!("{two}[lsi]\neps_tv = {eps}\n"));
        let o = lmclab(&["schedule", "--config", s(&cfg), "--out", s(&tmp.path().join(format!("o{eps}")))]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        stdout(&o)
    };
    let (a, b) = (run(0.1), run(0.05));
    assert!(value(&b, "h") < value(&a, "h"));
    assert!(value(&b, "eps_score") < value(&a, "eps_score"));
    assert!(value(&b, "t") >= value(&a, "t"));
}

#[test]
fn train_score_writes_weights_usable_by_simulate() {
    let tmp = TempDir::new().unwrap();
    let train = format!(
        "{K1}\n[score]\nkind = \"trained\"\n[score.train]\nloss = \"denoising\"\nsigma = 0.2\noptimizer = \"adam\"\nlr = 0.01\n\
         steps = 300\nbatch_size = 64\nhidden = 16\nn_train = 0\nl2_samples = 1000\n"
    );
    let cfg = write_config(tmp.path(), "t.toml", &train);
    let out = tmp.path().join("t");
    let o = lmclab(&["train-score", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let loss = fs::read_to_string(out.join("loss.csv")).unwrap();
    assert!(loss.starts_with("step,loss\n"));
    assert_eq!(loss.lines().count(), 301);
    assert!(value(&stdout(&o), "trained_l2_error") < 0.5);

    let weights = out.join("weights.txt");
    let sim = format!("{K1}\n[score]\nkind = \"file\"\npath = \"{}\"\n", s(&weights));
    let cfg = write_config(tmp.path(), "s.toml", &sim);
    let o = lmclab(&["simulate", "--config", s(&cfg), "--out", s(&tmp.path().join("s"))]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("score_l2_error"));

    let o = lmclab(&["train-score", "--config", s(&write_config(tmp.path(), "k.toml", K1)), "--out", s(&out)]);
    assert_eq!(code(&o), 2);
}

#[test]
fn diagnose_reads_an_endpoint_file() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", TWO_MODES_2D);
    let out = tmp.path().join("run");
    assert_eq!(code(&lmclab(&["simulate", "--config", s(&cfg), "--out", s(&out)])), 0);
    let run_report = fs::read_to_string(out.join("report.txt")).unwrap();
    let o = lmclab(&[
        "diagnose",
        "--config",
        s(&cfg),
        "--endpoints",
        s(&out.join("endpoints_400.csv")),
        "--out",
        s(&tmp.path().join("d")),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = stdout(&o);
    assert_eq!(value(&r, "points"), 20.0);
    assert_eq!(value(&r, "weight_bound"), value(&run_report, "weight_bound@400"));
    assert_eq!(value(&r, "projected_tv"), value(&run_report, "projected_tv@400"));
}

#[test]
fn two_dimensional_runs_report_projections_drift_and_plots() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", TWO_MODES_2D);
    let out = tmp.path().join("o");
    let o = lmclab(&["simulate", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = stdout(&o);
    for key in ["projected_tv_e0@400", "projected_tv_e1@400", "drift_exceed_fraction", "weight_bound@100"] {
        let v = value(&r, key);
        assert!((0.0..=1.0).contains(&v), "{key} = {v}");
    }
    assert!(out.join("trajectories_100.svg").exists() && out.join("trajectories_400.svg").exists());
    let traj = fs::read_to_string(out.join("trajectories.csv")).unwrap();
    assert!(traj.starts_with("chain,step,t,x_0,x_1\n"));
}

#[test]
fn external_init_points_are_used() {
    let tmp = TempDir::new().unwrap();
    let pts = write_config(tmp.path(), "init.csv", "x_0\n5.0\n5.0\n");
    let text = K1.replace("horizons = [0, 50, 300]", "horizons = [0, 1]") + &format!("\n[init]\nfile = \"{}\"\n", s(&pts));
    let cfg = write_config(tmp.path(), "e.toml", &text);
    let out = tmp.path().join("o");
    let o = lmclab(&["simulate", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let ends = fs::read_to_string(out.join("endpoints_0.csv")).unwrap();
    assert!(ends.lines().skip(1).all(|l| l.split(',').nth(1).unwrap().parse::<f64>().unwrap() == 5.0));
}

#[test]
fn reproduce_fig1_at_horizon_zero_shows_the_init_set() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("o");
    let o = lmclab(&["reproduce", "fig1", "--score", "exact", "--horizon", "0", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let init = fs::read_to_string(out.join("init.csv")).unwrap();
    assert_eq!(init.lines().count(), 41);
    let raw: Vec<String> = init.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().to_string()).collect();
    let ends = fs::read_to_string(out.join("endpoints_0.csv")).unwrap();
    assert_eq!(ends.lines().count(), 1001);
    assert!(ends.lines().skip(1).all(|l| raw.iter().any(|r| r == l.split(',').nth(1).unwrap())));
    assert!(out.join("kde_init.csv").exists() && out.join("kde_0.csv").exists());
    let cfg = fs::read_to_string(out.join("config.toml")).unwrap();
    assert!(cfg.contains("horizons = [0]"));
}

#[test]
fn reproduce_fig2_exact_short_run_stays_in_its_modes() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("o");
    let o = lmclab(&["reproduce", "fig2", "--score", "exact", "--horizon", "300", "--out", s(&out), "--check"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = stdout(&o);
    assert_eq!(value(&r, "transitions@300"), 0.0);
    assert!(out.join("trajectories_300.svg").exists());
}

#[test]
fn preset_flag_loads_the_built_in_configuration() {
    let tmp = TempDir::new().unwrap();
    let o = lmclab(&["certify-lsi", "--preset", "fig1", "--out", s(&tmp.path().join("o"))]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let cfg = fs::read_to_string(tmp.path().join("o/config.toml")).unwrap();
    assert!(cfg.contains("mean = [-3.0]") && cfg.contains("mean = [3.0]"), "{cfg}");
    let o = lmclab(&["simulate"]);
    assert_eq!(code(&o), 2);
}
