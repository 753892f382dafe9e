use std::fs;
use std::path::Path;
use std::process::Command;

use dpinfer::cli::run;

fn s(p: &Path) -> String {
    p.display().to_string()
}

fn dpinfer(args: &[&str]) -> i32 {
    let mut full = vec!["dpinfer"];
    full.extend_from_slice(args);
    run(full)
}

/// synth -> split files -> train -> sensitivity
fn prepare(dir: &Path) {
    let all = dir.join("all.csv");
    assert_eq!(
        dpinfer(&["synth", "--classes", "3", "--rows", "400", "--features", "5", "--separation", "1.5", "--seed", "4", "--out", &s(&all)]),
        0
    );
    let text = fs::read_to_string(&all).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    let rows: Vec<&str> = lines.collect();
    for (name, range) in [("train", 0..100), ("test", 100..200), ("pool", 200..400)] {
        let body: Vec<&str> = rows[range].to_vec();
        fs::write(dir.join(format!("{name}.csv")), format!("{header}\n{}\n", body.join("\n"))).unwrap();
    }
    assert_eq!(
        dpinfer(&[
            "train", "--data", &s(&dir.join("train.csv")), "--test", &s(&dir.join("test.csv")),
            "--hidden", "16", "--epochs", "50", "--batch-size", "20", "--seed", "1",
            "--out", &s(&dir.join("model.json")),
        ]),
        0
    );
    assert_eq!(
        dpinfer(&["sensitivity", "--model", &s(&dir.join("model.json")), "--out", &s(&dir.join("sens"))]),
        0
    );
}

#[test]
fn pipeline_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    prepare(dir);

    let kv = fs::read_to_string(dir.join("sens.txt")).unwrap();
    assert!(kv.lines().any(|l| l == "n=100"));
    assert!(dir.join("sens.json").exists());

    let out = dir.join("pred.csv");
    assert_eq!(
        dpinfer(&[
            "predict-dp", "--model", &s(&dir.join("model.json")), "--sensitivity", &s(&dir.join("sens.json")),
            "--queries", &s(&dir.join("test.csv")), "--label-column", "label",
            "--epsilon", "10", "--mechanism", "gaussian", "--seed", "3", "--out", &s(&out),
        ]),
        0
    );
    let pred = fs::read_to_string(&out).unwrap();
    let mut lines = pred.lines();
    assert_eq!(lines.next().unwrap(), "query_id,p_0,p_1,p_2,sampled_neuron,epsilon");
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 100);
    for r in &rows {
        let cells: Vec<&str> = r.split(',').collect();
        let sum: f64 = cells[1..4].iter().map(|c| c.parse::<f64>().unwrap()).sum();
        assert!((sum - 1.0).abs() < 1e-5);
        // eps / sqrt(Q) for Gaussian
        assert_eq!(cells[5], "1.000000");
    }

    assert_eq!(
        dpinfer(&[
            "attack", "--model", &s(&dir.join("model.json")), "--shadow-data", &s(&dir.join("pool.csv")),
            "--members", &s(&dir.join("train.csv")), "--non-members", &s(&dir.join("test.csv")),
            "--shadows", "2", "--out", &s(&dir.join("attack.json")), "--dump", &s(&dir.join("dump.csv")),
        ]),
        0
    );
    let result: dpinfer::attack::AttackResult =
        serde_json::from_str(&fs::read_to_string(dir.join("attack.json")).unwrap()).unwrap();
    assert!((-1.0..=1.0).contains(&result.privacy_leakage));
    assert_eq!(fs::read_to_string(dir.join("dump.csv")).unwrap().lines().count(), 201);

    assert_eq!(
        dpinfer(&[
            "attack", "--model", &s(&dir.join("model.json")), "--shadow-data", &s(&dir.join("pool.csv")),
            "--members", &s(&dir.join("train.csv")), "--non-members", &s(&dir.join("test.csv")),
            "--shadows", "2", "--sensitivity", &s(&dir.join("sens.json")), "--epsilon", "0.01",
            "--out", &s(&dir.join("attack-dp.json")),
        ]),
        0
    );
}

#[test]
fn budget_command_reports_the_split() {
    assert_eq!(dpinfer(&["budget", "--epsilon", "1", "--queries", "4", "--classes", "10", "--mechanism", "gaussian", "--train-size", "1000"]), 0);
    assert_eq!(dpinfer(&["budget", "--epsilon", "0", "--classes", "10"]), 1);
}

#[test]
fn exhausted_budget_exits_3_after_writing_answers() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    prepare(dir);
    let out = dir.join("pred.csv");
    let status = Command::new(env!("CARGO_BIN_EXE_dpinfer"))
        .args([
            "predict-dp", "--model", &s(&dir.join("model.json")), "--sensitivity", &s(&dir.join("sens.json")),
            "--queries", &s(&dir.join("test.csv")), "--label-column", "label",
            "--epsilon", "1", "--budget-queries", "7", "--out", &s(&out),
        ])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(3));
    assert_eq!(fs::read_to_string(&out).unwrap().lines().count(), 1 + 7);
}

#[test]
fn divergence_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let data = dir.join("d.csv");
    assert_eq!(dpinfer(&["synth", "--preset", "adult-like", "--rows", "200", "--out", &s(&data)]), 0);
    let code = dpinfer(&[
        "train", "--data", &s(&data), "--hidden", "4", "--epochs", "5", "--learning-rate", "1e308",
        "--out", &s(&dir.join("m.json")),
    ]);
    assert_eq!(code, 2);
}

#[test]
fn malformed_data_exits_1() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("bad.csv");
    fs::write(&data, "a,b,label\n1,2,0\n3,oops,1\n").unwrap();
    let code = dpinfer(&["train", "--data", &s(&data), "--out", &s(&tmp.path().join("m.json"))]);
    assert_eq!(code, 1);
    let err = dpinfer::data::load_dataset(&data, &Default::default()).unwrap_err();
    assert!(err.to_string().contains(":3:"), "{err}");
}

#[test]
fn experiment_flags_override_the_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let cfg = dpinfer::experiment::ExperimentConfig::location_like(dir.join("ignored"), 1);
    fs::write(dir.join("exp.toml"), cfg.to_toml().unwrap()).unwrap();
    let out = dir.join("run");
    let code = dpinfer(&[
        "experiment", "--config", &s(&dir.join("exp.toml")), "--output-dir", &s(&out),
        "--repetitions", "1", "--epsilons", "1", "--mechanisms", "laplace", "--train-size", "60",
        "--epochs", "5", "--hidden", "8", "--shadows", "1", "--attack-epochs", "5",
    ]);
    assert_eq!(code, 0);
    let meta: dpinfer::experiment::RunMetadata =
        serde_json::from_str(&fs::read_to_string(out.join("run.json")).unwrap()).unwrap();
    assert_eq!(meta.config.training.epochs, 5);
    assert_eq!(meta.config.hidden, vec![8]);
    assert_eq!(meta.train_size, 60);
    assert_eq!(fs::read_to_string(out.join("report.csv")).unwrap().lines().count(), 1 + 2 + 1);
}
