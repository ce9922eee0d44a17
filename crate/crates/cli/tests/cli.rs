//! End-to-end checks of the command-line binary: determinism, exit codes,
//! study bookkeeping, and the simulated replay of a causal pair through the
//! CSV ingestion path.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use chrono::NaiveDate;
use tailcausal::scm::{CausalConfiguration, ConfigLabel, NoiseSpec};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tailcausal"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn pareto(alpha: f64) -> NoiseSpec {
    NoiseSpec::Pareto { scale: 1.0, alpha }
}

fn write_model(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("model.json");
    fs::write(
        &path,
        serde_json::json!({
            "nodes": ["x1", "x2", "h"],
            "edges": [
                {"from": "h", "to": "x1", "weight": 1.0},
                {"from": "h", "to": "x2", "weight": 1.0},
                {"from": "x1", "to": "x2", "weight": 1.0}
            ],
            "noise": {
                "x1": {"family": "pareto", "scale": 1.0, "alpha": 2.0},
                "x2": {"family": "pareto", "scale": 1.0, "alpha": 2.0},
                "h": {"family": "pareto", "scale": 1.0, "alpha": 2.0}
            }
        })
        .to_string(),
    )
    .unwrap();
    path
}

#[test]
fn simulate_is_byte_deterministic_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let model = write_model(dir.path());
    for out in ["a", "b"] {
        let o = run(&[
            "simulate",
            "--model",
            model.to_str().unwrap(),
            "--n",
            "1000",
            "--m",
            "3",
            "--seed",
            "1",
            "--out",
            dir.path().join(out).to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for rep in 0..3 {
        let f = format!("sample_{rep:03}.csv");
        let a = fs::read(dir.path().join("a").join(&f)).unwrap();
        let b = fs::read(dir.path().join("b").join(&f)).unwrap();
        assert_eq!(a, b, "replicate {rep} differs between runs");
    }
    // Distinct replicates use distinct substream seeds.
    let r0 = fs::read(dir.path().join("a/sample_000.csv")).unwrap();
    let r1 = fs::read(dir.path().join("a/sample_001.csv")).unwrap();
    assert_ne!(r0, r1);
    // The manifest records config and model hash.
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("a/manifest.json")).unwrap()).unwrap();
    assert!(manifest["model_hash"].is_string());
    assert_eq!(manifest["config"]["seed"], 1);
}

#[test]
fn simulate_missing_noise_exits_2_naming_the_node() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.json");
    fs::write(
        &path,
        serde_json::json!({
            "nodes": ["x1", "x2"],
            "edges": [{"from": "x1", "to": "x2", "weight": 1.0}],
            "noise": {"x1": {"family": "pareto", "scale": 1.0, "alpha": 2.0}}
        })
        .to_string(),
    )
    .unwrap();
    let o = run(&[
        "simulate",
        "--model",
        path.to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&o.stderr);
    assert!(stderr.contains("x2"), "stderr does not name the node: {stderr}");
}

#[test]
fn study_bookkeeping_and_test_mode_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("est");
    let o = run(&[
        "study",
        "--n",
        "800",
        "--m",
        "5",
        "--variant",
        "np",
        "--seed",
        "3",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for label in ["A", "B", "C", "D"] {
        let text = fs::read_to_string(out.join(format!("study_{label}_pareto2_np.csv"))).unwrap();
        assert_eq!(text.lines().count(), 6, "header + 5 rows for {label}");
        assert!(out.join(format!("hist_{label}_pareto2_np.csv")).exists());
    }

    // Test-study mode via config file: QQ data and power summary.
    let cfg_path = dir.path().join("study.json");
    fs::write(
        &cfg_path,
        serde_json::json!({
            "mode": "test",
            "n": 800,
            "m": 5,
            "replicates": 49,
            "variant": "np",
            "seed": 4,
            "configurations": ["A", "C"],
            "out": dir.path().join("tst")
        })
        .to_string(),
    )
    .unwrap();
    let o = run(&["study", "--config", cfg_path.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let tst = dir.path().join("tst");
    let qq = fs::read_to_string(tst.join("qq_A_pareto2_np.csv")).unwrap();
    let mut prev_theoretical = 0.0;
    let mut prev_observed = 0.0;
    for line in qq.lines().skip(1) {
        let mut cells = line.split(',');
        let t: f64 = cells.next().unwrap().parse().unwrap();
        let p: f64 = cells.next().unwrap().parse().unwrap();
        assert!(t > prev_theoretical && p >= prev_observed, "QQ data must be sorted");
        prev_theoretical = t;
        prev_observed = p;
    }
    let power = fs::read_to_string(tst.join("power_summary.csv")).unwrap();
    assert!(power.lines().count() == 3); // header + A + C
    assert!(power.lines().nth(1).unwrap().starts_with("A_pareto2_np,"));
}

// --- pairs: end-to-end replay through the CSV ingestion path ----------------

fn write_dated_csv(path: &Path, beta21: f64, n: usize, seed: u64) {
    let label = if beta21 > 0.0 { ConfigLabel::A } else { ConfigLabel::C };
    let model = CausalConfiguration::new(label, beta21, 0.0, 0.0)
        .unwrap()
        .to_lscm(pareto(2.0), pareto(2.0))
        .unwrap();
    let sim = model.simulate(n, seed).unwrap();
    let x1 = sim.column("x1").unwrap();
    let x2 = sim.column("x2").unwrap();
    let h = sim.column("h").unwrap();
    let mut text = String::from("date,up,down,hcov\n");
    let start = NaiveDate::from_ymd_opt(2000, 1, 1).unwrap();
    for i in 0..n {
        let d = start + chrono::Days::new(i as u64);
        text.push_str(&format!("{d},{:.17e},{:.17e},{:.17e}\n", x1[i], x2[i], h[i]));
    }
    fs::write(path, text).unwrap();
}

fn all_months_pair_spec(path: &Path) {
    fs::write(
        path,
        serde_json::json!([{
            "upstream": "up",
            "downstream": "down",
            "covariates": ["hcov"],
            "aggregation": "mean",
            "season": (1..=12).collect::<Vec<u32>>()
        }])
        .to_string(),
    )
    .unwrap();
}

fn pairs_p_pfc(dir: &Path, beta21: f64, seed: u64) -> f64 {
    let data = dir.join(format!("data_{seed}.csv"));
    write_dated_csv(&data, beta21, 2_000, seed);
    let spec = dir.join("pairs.json");
    all_months_pair_spec(&spec);
    let out = dir.join(format!("out_{seed}"));
    let o = run(&[
        "pairs",
        "--data",
        data.to_str().unwrap(),
        "--pairs",
        spec.to_str().unwrap(),
        "-R",
        "199",
        "--k-mult",
        "1.5",
        "--seed",
        &seed.to_string(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("pairs_report.json")).unwrap()).unwrap();
    let _ = fs::remove_file(&data);
    let _ = fs::remove_dir_all(&out);
    report[0]["p_pfc"].as_f64().expect("p_pfc present")
}

#[test]
fn pairs_report_schema_matches_expected_columns() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    write_dated_csv(&data, 0.2, 1_000, 7);
    let spec = dir.path().join("pairs.json");
    all_months_pair_spec(&spec);
    let out = dir.path().join("out");
    let o = run(&[
        "pairs",
        "--data",
        data.to_str().unwrap(),
        "--pairs",
        spec.to_str().unwrap(),
        "-R",
        "49",
        "--k-mult",
        "1.5",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("pairs_report.csv")).unwrap();
    assert_eq!(
        csv.lines().next().unwrap(),
        "pair,n,k,p_np,p_pfc,p_cf,p_exp,xi_h,xi_h_se,sigma1_x1,sigma1_x1_se,sigma1_x2,sigma1_x2_se,error"
    );
    assert_eq!(csv.lines().count(), 2);
    // Audit dump of the aligned pair is written alongside the report.
    assert!(out.join("pair_up_down.csv").exists());
}

#[test]
fn pairs_replay_detects_injected_causal_direction() {
    let dir = tempfile::tempdir().unwrap();
    let detected = (0..50)
        .filter(|&seed| pairs_p_pfc(dir.path(), 0.2, 1_000 + seed) <= 0.05)
        .count();
    let frac = detected as f64 / 50.0;
    assert!(frac >= 0.9, "causal pair detected in only {frac:.2} of 50 seeds");
}

#[test]
fn pairs_replay_holds_level_on_noncausal_pair() {
    let dir = tempfile::tempdir().unwrap();
    let rejected = (0..50)
        .filter(|&seed| pairs_p_pfc(dir.path(), 0.0, 2_000 + seed) <= 0.05)
        .count();
    let rate = rejected as f64 / 50.0;
    assert!((0.02..=0.09).contains(&rate), "rejection rate {rate:.2} outside [0.02, 0.09]");
}

#[test]
fn test_command_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let model = write_model(dir.path());
    let sim_out = dir.path().join("sim");
    let o = run(&[
        "simulate",
        "--model",
        model.to_str().unwrap(),
        "--n",
        "2000",
        "--seed",
        "11",
        "--out",
        sim_out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let data = sim_out.join("sample_000.csv");
    let mut results = Vec::new();
    for out in ["t1", "t2"] {
        let o = run(&[
            "test",
            "--data",
            data.to_str().unwrap(),
            "--variant",
            "lgpd-pfc",
            "-R",
            "99",
            "--seed",
            "13",
            "--out",
            dir.path().join(out).to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        results.push(fs::read(dir.path().join(out).join("test.json")).unwrap());
    }
    assert_eq!(results[0], results[1]);
}
