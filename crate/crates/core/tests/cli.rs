use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tifm::datagen::{simulate_panel, SimConfig, TruthSidecar};
use tifm::factor::TrainConfig;
use tifm::ingest::{case_study_run, load_panel, PanelSchema};

fn tifm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tifm")).args(args).output().expect("binary runs")
}

fn path_arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read(p: PathBuf) -> Vec<u8> {
    std::fs::read(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn simulate_is_deterministic_and_matches_the_library() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = tifm(&["simulate", "--n", "200", "--p", "1", "--seed", "7", "--out", path_arg(out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(read(a.join("panel.csv")), read(b.join("panel.csv")));
    assert_eq!(read(a.join("truth.json")), read(b.join("truth.json")));

    let truth: TruthSidecar = serde_json::from_slice(&read(a.join("truth.json"))).unwrap();
    assert_eq!(truth.true_effect, 0.5);
    let cfg = SimConfig { n_individuals: 200, p_order: 1, master_seed: 7, ..SimConfig::default() };
    assert_eq!(truth.config, cfg);
    let (panel, _) = load_panel(&a.join("panel.csv"), &PanelSchema::long_format(3)).unwrap();
    assert_eq!(panel, simulate_panel(&cfg, 0).unwrap().observed);
}

#[test]
fn invalid_flags_exit_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = path_arg(dir.path());
    let o = tifm(&["simulate", "--p", "0", "--out", out]);
    assert_eq!(o.status.code(), Some(2));
    let msg = String::from_utf8_lossy(&o.stderr);
    assert!(msg.contains("--p") && msg.contains("p_order"), "{msg}");

    assert_eq!(tifm(&["simulate", "--frobnicate", "1", "--out", out]).status.code(), Some(2));
    assert_eq!(tifm(&["train", "--input", "x.csv", "--keep-prob", "1.5", "--out", out]).status.code(), Some(2));
    assert_eq!(tifm(&["benchmark", "--profile", "laptop", "--out", out]).status.code(), Some(2));
    assert_eq!(tifm(&["estimate", "--input", "x.csv", "--estimators", "ols", "--out", out]).status.code(), Some(2));
    assert_eq!(tifm(&["--help"]).status.code(), Some(0));
}

#[test]
fn missing_input_is_a_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.csv");
    let o = tifm(&["estimate", "--input", path_arg(&missing), "--estimators", "naive", "--out", path_arg(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn simulate_train_estimate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    let model = dir.path().join("model");
    let est = dir.path().join("est");
    assert!(tifm(&["simulate", "--n", "120", "--t", "6", "--seed", "3", "--out", path_arg(&sim)]).status.success());
    let panel = sim.join("panel.csv");
    let o = tifm(&[
        "train", "--input", path_arg(&panel), "--epochs", "2", "--hidden", "6", "--batch-size", "32", "--seed", "1",
        "--out", path_arg(&model),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["model.json", "latents.csv", "curve.json"] {
        assert!(model.join(f).exists());
    }
    let o = tifm(&[
        "estimate", "--input", path_arg(&panel), "--estimators", "tsls,naive,adjusted_ols,linear_dml", "--model",
        path_arg(&model.join("model.json")), "--out", path_arg(&est),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let naive = String::from_utf8(read(est.join("series_naive.csv"))).unwrap();
    assert_eq!(naive.lines().count(), 7);
    assert!(naive.starts_with("t,estimator,beta_hat,std_error,first_stage_stat,error_code"));

    // tsls without a model is a usage error.
    let o = tifm(&["estimate", "--input", path_arg(&panel), "--out", path_arg(&est)]);
    assert_eq!(o.status.code(), Some(2));
}

fn bench_args<'a>(out: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec![
        "benchmark", "--n", "150", "--p", "1,3", "--t", "5", "--replicates", "2", "--seed", "7", "--epochs", "1",
        "--hidden", "4", "--batch-size", "64", "--out", out,
    ];
    v.extend_from_slice(extra);
    v
}

#[test]
fn benchmark_reports_are_reproducible_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let oa = tifm(&[&["--threads", "1"][..], &bench_args(path_arg(&a), &[])].concat());
    let ob = tifm(&[&["--threads", "2"][..], &bench_args(path_arg(&b), &[])].concat());
    assert!(oa.status.success(), "{}", String::from_utf8_lossy(&oa.stderr));
    assert!(ob.status.success());
    for f in ["report.json", "report.csv", "sensitivity.csv"] {
        assert_eq!(read(a.join(f)), read(b.join(f)), "{f}");
    }
    let table = String::from_utf8_lossy(&oa.stdout);
    assert!(table.contains("Baseline") && table.contains("TIFM") && table.contains("time-step-5"), "{table}");

    // `report` reprints the same table from the saved JSON.
    let o = tifm(&["report", "--input", path_arg(&a.join("report.json"))]);
    assert!(o.status.success());
    assert_eq!(String::from_utf8_lossy(&o.stdout), table);
}

#[test]
fn benchmark_estimator_filter() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("naive");
    let o = tifm(&bench_args(path_arg(&out), &["--estimators", "naive"]));
    assert!(o.status.success());
    let table = String::from_utf8_lossy(&o.stdout);
    assert!(table.contains("Baseline") && !table.contains("TIFM"), "{table}");
    let report: serde_json::Value = serde_json::from_slice(&read(out.join("report.json"))).unwrap();
    assert!(report["replicates"].as_array().unwrap().iter().all(|r| r["training"].is_null()));
}

#[test]
fn paper_profile_grid() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("paper");
    let o = tifm(&["benchmark", "--profile", "paper", "--estimators", "naive", "--t", "3", "--out", path_arg(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&read(out.join("report.json"))).unwrap();
    assert_eq!(report["spec"]["sample_sizes"], serde_json::json!([2000, 4000, 6000, 8000]));
    assert_eq!(report["spec"]["p_orders"], serde_json::json!([1, 3]));
    assert_eq!(report["spec"]["replicates"], 30);
    assert_eq!(report["replicates"].as_array().unwrap().len(), 4 * 2 * 30);
}

const CLIMATE: [&str; 3] = ["cfnlf", "wspd", "skt"];

fn climate_fixture(dir: &Path) -> (PathBuf, PathBuf) {
    let mut text = String::from("site,month,cfnlf,wspd,skt,prate,t2m,rh\n");
    for site in 1..=24 {
        for month in 1..=7 {
            let f = (site * 7 + month * 3) as f64;
            let v = |k: f64| ((f * k).sin() * 10.0 * 1000.0).round() / 1000.0;
            text += &format!(
                "{site},{month},{},{},{},{},{},{}\n",
                v(0.37) + 20.0,
                v(0.91).abs(),
                v(1.3) + 280.0,
                v(0.17),
                v(0.53),
                v(0.71) + 50.0
            );
        }
    }
    let csv = dir.join("climate.csv");
    std::fs::write(&csv, text).unwrap();
    let schema = dir.join("schema.json");
    std::fs::write(
        &schema,
        r#"{"id_column":"site","time_column":"month","treatment_columns":["cfnlf","wspd","skt"],
            "outcome_column":"prate","covariate_columns":["t2m","rh"],"treatment_binarization":"median_split"}"#,
    )
    .unwrap();
    (csv, schema)
}

#[test]
fn case_study_writes_one_series_per_treatment_and_matches_the_library() {
    let dir = tempfile::tempdir().unwrap();
    let (csv, schema) = climate_fixture(dir.path());
    let out = dir.path().join("out");
    let o = tifm(&[
        "case-study", "--input", path_arg(&csv), "--schema", path_arg(&schema), "--epochs", "2", "--hidden", "5",
        "--seed", "4", "--out", path_arg(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let schema = PanelSchema::from_json_file(&schema).unwrap();
    let cfg = TrainConfig { epochs: 2, hidden_units: 5, seed: 4, ..TrainConfig::default() };
    let lib = case_study_run(&csv, &schema, &cfg).unwrap();
    assert_eq!(lib.studies.len(), 3);
    for (name, study) in CLIMATE.iter().zip(&lib.studies) {
        let written = String::from_utf8(read(out.join(format!("series_{name}.csv")))).unwrap();
        assert_eq!(written, study.series.to_csv().unwrap());
        assert_eq!(study.report.individuals, 24);
    }
    assert!(out.join("ingest_report.json").exists());

    let missing = dir.path().join("missing.json");
    let o = tifm(&["case-study", "--input", path_arg(&csv), "--schema", path_arg(&missing), "--out", path_arg(&out)]);
    assert_eq!(o.status.code(), Some(2));
}
