use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_stresswalk"));
    c.env_remove("STRESSWALK_OUT");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const SIM: &str = r#"{
  "n": 3000,
  "seed": 17,
  "kappa_model": {"kind": "ar1_log", "mean_level": 20.0, "persistence": 0.95, "innovation_scale": 0.1},
  "mu_fn": {"kind": "constant", "value": 0.0004},
  "sigma_fn": {"kind": "linear", "intercept": 0.002, "slope": 0.0005}
}"#;

fn simulated(dir: &Path) -> std::path::PathBuf {
    fs::write(dir.join("sim.json"), SIM).unwrap();
    ok(&["simulate", "--config", p(&dir.join("sim.json")), "--out", p(&dir.join("sim"))]);
    dir.join("sim/synthetic.csv")
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["risk", "--table", "t.json"]).status.code(), Some(2));
    assert_eq!(run(&["risk", "--table", "t.json", "--threshold", "-0.1", "--threshold-pct", "-9"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let input = simulated(dir.path());
    let out = run(&["normality", "--input", p(&input), "--seed", "1", "--set-size", "2", "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn data_errors_exit_1_with_name() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["estimate", "--input", "no/such/file.csv", "--edges", "0,10", "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("MissingFile"));

    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "date,return,kappa\n2020-01-02,0.01,15\n2020-01-01,0.02,16\n").unwrap();
    let out = run(&["estimate", "--input", p(&bad), "--edges", "0,10", "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("NonMonotonicDate"));

    let table = dir.path().join("t.json");
    fs::write(&table, "{not json").unwrap();
    let out = run(&["risk", "--table", p(&table), "--threshold", "-0.1", "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn identical_runs_give_identical_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("sim.json"), SIM).unwrap();
    for sub in ["a", "b"] {
        ok(&["simulate", "--config", p(&dir.path().join("sim.json")), "--out", p(&dir.path().join(sub))]);
    }
    let read = |s: &str| fs::read(dir.path().join(s)).unwrap();
    assert_eq!(read("a/synthetic.csv"), read("b/synthetic.csv"));
    let mut ma: Value = serde_json::from_slice(&read("a/manifest-simulate.json")).unwrap();
    let mut mb: Value = serde_json::from_slice(&read("b/manifest-simulate.json")).unwrap();
    for m in [&mut ma, &mut mb] {
        let obj = m.as_object_mut().unwrap();
        assert!(obj.remove("created_at").is_some());
        obj["config"].as_object_mut().unwrap().remove("out");
    }
    assert_eq!(ma, mb);
    assert_eq!(ma["seed"], 17);
    assert_eq!(ma["inputs"][0]["sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn table_round_trips_in_both_formats() {
    let dir = tempfile::tempdir().unwrap();
    let input = simulated(dir.path());
    let d = dir.path();
    ok(&["estimate", "--input", p(&input), "--edges", "0:5:8", "--out", p(&d.join("j"))]);
    ok(&["--format", "csv", "estimate", "--input", p(&input), "--edges", "0:5:8", "--out", p(&d.join("c"))]);
    let csv = fs::read_to_string(d.join("c/estimate.csv")).unwrap();
    assert!(csv.starts_with("bucket_low,bucket_high,p,mu,sigma,count\n"));
    let mut probs = Vec::new();
    for t in ["j/estimate.json", "c/estimate.csv"] {
        let out = d.join("r");
        ok(&[
            "risk", "--table", p(&d.join(t)), "--threshold-pct", "-3", "--horizon", "100", "--interval", "-0.05,-0.01",
            "--out", p(&out),
        ]);
        let v: Value = serde_json::from_str(&fs::read_to_string(out.join("risk.json")).unwrap()).unwrap();
        probs.push(v["mixture_probability"].as_f64().unwrap());
        assert!(v["p_n"].as_f64().is_some());
        assert!(v["interval_probability"].as_f64().unwrap() > 0.0);
    }
    assert!((probs[0] / probs[1] - 1.0).abs() < 1e-12);
}

#[test]
fn out_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("sim.json"), SIM).unwrap();
    let out = bin()
        .env("STRESSWALK_OUT", dir.path().join("env"))
        .args(["simulate", "--config", p(&dir.path().join("sim.json"))])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.path().join("env/synthetic.csv").is_file());
}

#[test]
fn label_from_price_stress_and_volume_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let start = chrono::NaiveDate::from_ymd_opt(2015, 1, 1).unwrap();
    let (mut prices, mut stress, mut volume) =
        (String::from("date,close\n"), String::from("date,kappa\n"), String::from("date,volume\n"));
    let mut close = 100.0;
    for i in 0..400u64 {
        let date = start + chrono::Days::new(i);
        close *= 1.0 + 0.01 * ((i * 7919 % 13) as f64 - 6.0) / 6.0;
        prices.push_str(&format!("{date},{close}\n"));
        if i % 50 != 3 {
            stress.push_str(&format!("{date},{}\n", 12.0 + (i % 40) as f64));
        }
        volume.push_str(&format!("{date},{}\n", 1000 + (i * 31) % 500));
    }
    for (name, body) in [("px.csv", &prices), ("vxo.csv", &stress), ("vol.csv", &volume)] {
        fs::write(d.join(name), body).unwrap();
    }
    let stdout = ok(&[
        "label", "--input", p(&d.join("px.csv")), "--stress", p(&d.join("vxo.csv")), "--volume", p(&d.join("vol.csv")),
        "--out", p(&d.join("l")),
    ]);
    assert!(stdout.contains("labeled"));
    let labeled = fs::read_to_string(d.join("l/labeled.csv")).unwrap();
    assert!(labeled.lines().next().unwrap().contains("detrended_volume"));

    let vb = d.join("v");
    ok(&["volume-by-stress", "--input", p(&d.join("l/labeled.csv")), "--set-size", "50", "--out", p(&vb)]);
    let rows = fs::read_to_string(vb.join("volume_by_stress.csv")).unwrap();
    assert!(rows.starts_with("set_index,kappa_median,median_volume\n"));
    assert_eq!(rows.lines().count(), 1 + 7);

    ok(&["estimate", "--input", p(&d.join("px.csv")), "--stress", p(&d.join("vxo.csv")), "--edges", "0,20,30", "--out", p(&d.join("e"))]);
    let m: Value = serde_json::from_str(&fs::read_to_string(d.join("e/manifest-estimate.json")).unwrap()).unwrap();
    assert_eq!(m["inputs"].as_array().unwrap().len(), 2);
}

#[test]
fn normality_rescale_and_mu_curve() {
    let dir = tempfile::tempdir().unwrap();
    let input = simulated(dir.path());
    let d = dir.path();
    let stdout = ok(&["normality", "--input", p(&input), "--seed", "9", "--out", p(&d.join("n"))]);
    assert_eq!(stdout.lines().count(), 3);
    for ord in ["chronological", "randomized", "stress"] {
        let csv = fs::read_to_string(d.join(format!("n/normality_{ord}.csv"))).unwrap();
        assert!(csv.starts_with("set_index,n,kappa_min,kappa_max,W,p\n"));
        assert_eq!(csv.lines().count(), 1 + 3000 / 75);
    }
    ok(&["estimate", "--input", p(&input), "--edges", "0,15,20,25,30", "--out", p(&d.join("e"))]);
    let stdout = ok(&["rescale", "--input", p(&input), "--table", p(&d.join("e/estimate.json")), "--out", p(&d.join("r"))]);
    assert!(stdout.contains("excess kurtosis"));
    let csv = fs::read_to_string(d.join("r/rescaled.csv")).unwrap();
    assert!(csv.starts_with("date,rescaled_return\n"));
    assert_eq!(csv.lines().count(), 3001);
    ok(&["rescale", "--input", p(&input), "--table", p(&d.join("e/estimate.json")), "--mode", "persistence", "--out", p(&d.join("r2"))]);
    assert_eq!(fs::read_to_string(d.join("r2/rescaled.csv")).unwrap().lines().count(), 3000);
    ok(&["mu-by-dkappa", "--input", p(&input), "--set-size", "100", "--out", p(&d.join("m"))]);
    assert!(fs::read_to_string(d.join("m/mu_by_dkappa.csv")).unwrap().starts_with("median_kappa_change,mu_hat\n"));
}

#[test]
fn two_asset_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let joint = r#"{
      "n": 4000, "seed": 8,
      "kappa_s": {"kind": "ar1_log", "mean_level": 20.0, "persistence": 0.9, "innovation_scale": 0.15},
      "kappa_b": {"kind": "ar1_log", "mean_level": 90.0, "persistence": 0.9, "innovation_scale": 0.1},
      "mu_s": {"kind": "constant", "value": 0.0005},
      "sigma_s": {"kind": "linear", "intercept": 0.002, "slope": 0.0004},
      "mu_b": {"kind": "constant", "value": 0.0002},
      "sigma_b": {"kind": "constant", "value": 0.004},
      "rho_fn": {"kind": "stock_stress_threshold", "threshold": 25.0, "above": -0.5, "below": 0.3}
    }"#;
    fs::write(d.join("joint.json"), joint).unwrap();
    ok(&["simulate", "--joint", "--config", p(&d.join("joint.json")), "--out", p(&d.join("s"))]);
    let (stock, bond) = (d.join("s/stock.csv"), d.join("s/bond.csv"));
    ok(&["estimate", "--input", p(&stock), "--deciles", "5", "--bond", p(&bond), "--out", p(&d.join("g"))]);
    let grid = d.join("g/grid.json");
    ok(&["frontier", "--grid", p(&grid), "--at", "4,2", "--out", p(&d.join("f"))]);
    let f = fs::read_to_string(d.join("f/frontier.csv")).unwrap();
    assert!(f.starts_with("w,mu_p,var_p,efficient\n"));
    assert_eq!(f.lines().count(), 22);
    ok(&["frontier", "--cell", "-0.001,0.0002,0.02,0.005,-0.3", "--step", "0.1", "--out", p(&d.join("f2"))]);
    assert_eq!(fs::read_to_string(d.join("f2/frontier.csv")).unwrap().lines().count(), 12);
    assert_eq!(run(&["frontier", "--grid", p(&grid), "--at", "9,9", "--out", p(&d.join("f3"))]).status.code(), Some(2));
    ok(&["portfolio-risk", "--grid", p(&grid), "--weight", "0.4", "--threshold", "-0.03", "--out", p(&d.join("pr"))]);
    let v: Value = serde_json::from_str(&fs::read_to_string(d.join("pr/portfolio_risk.json")).unwrap()).unwrap();
    let prob = v["probability"].as_f64().unwrap();
    assert!(prob > 0.0 && prob < 0.05);
    ok(&["capm", "--input", p(&bond), "--benchmark", p(&stock), "--edges", "0,20,30", "--out", p(&d.join("c"))]);
    let c = fs::read_to_string(d.join("c/capm.csv")).unwrap();
    assert!(c.starts_with("bucket_low,bucket_high,alpha,beta,r2,n\n"));
}

#[test]
fn split_and_validate_against_labeled_train() {
    let dir = tempfile::tempdir().unwrap();
    let input = simulated(dir.path());
    let d = dir.path();
    ok(&["split", "--input", p(&input), "--seed", "4", "--out", p(&d.join("s"))]);
    let train = fs::read_to_string(d.join("s/train.csv")).unwrap();
    let test = fs::read_to_string(d.join("s/test.csv")).unwrap();
    assert_eq!(train.lines().count() + test.lines().count(), 3002);
    let missing_edges = run(&["validate", "--train", p(&d.join("s/train.csv")), "--test", p(&d.join("s/test.csv")), "--out", p(d)]);
    assert_eq!(missing_edges.status.code(), Some(2));
    ok(&[
        "validate", "--train", p(&d.join("s/train.csv")), "--test", p(&d.join("s/test.csv")), "--edges", "0,15,20,25,30",
        "--brackets", "-0.04:0.04:0.01", "--out", p(&d.join("v")),
    ]);
    let v = fs::read_to_string(d.join("v/validate.csv")).unwrap();
    assert!(v.starts_with("bracket_low,bracket_high,predicted,observed,std_error,z\n"));
    assert_eq!(v.lines().count(), 1 + 10);
}
