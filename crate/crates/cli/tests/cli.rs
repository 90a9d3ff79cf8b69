//! End-to-end tests of the `cmpagg` binary: the train/eval/inspect
//! chain on a synthetic dataset, determinism of outputs, the ablation
//! table, and the exit-code contract.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cmpagg"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn assert_exit(out: &Output, code: i32) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "stdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn read_jsonl(path: &Path) -> Vec<Value> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

/// The full workflow: generate data, train, evaluate, re-evaluate,
/// inspect, with determinism and quality checks along the way.
#[test]
fn train_eval_inspect_chain() {
    let dir = tempfile::tempdir().unwrap();
    let data_path = dir.path().join("data.jsonl");

    // gen-data
    let out = run(&[
        "gen-data",
        "--synthetic",
        "containment:120:seed=9",
        "--out",
        data_path.to_str().unwrap(),
    ]);
    assert_exit(&out, 0);
    let data = read_jsonl(&data_path);
    assert_eq!(data.len(), 120);

    // train twice with one seed
    let train_args = |out_dir: &str| {
        vec![
            "train".to_string(),
            "--train".into(),
            data_path.to_str().unwrap().into(),
            "--task-shape".into(),
            "select-from-k".into(),
            "--random-embeddings".into(),
            "--embed-dim".into(),
            "12".into(),
            "--hidden-dim".into(),
            "8".into(),
            "--windows".into(),
            "1,2".into(),
            "--epochs".into(),
            "100".into(),
            "--dropout".into(),
            "0.2".into(),
            "--seed".into(),
            "9".into(),
            "--log-accuracy".into(),
            "--out-dir".into(),
            dir.path().join(out_dir).to_str().unwrap().into(),
        ]
    };
    let out = bin().args(train_args("run1")).output().unwrap();
    assert_exit(&out, 0);
    let out = bin().args(train_args("run2")).output().unwrap();
    assert_exit(&out, 0);

    // byte-identical outputs with a fixed seed
    for file in ["checkpoint.json", "metrics.jsonl"] {
        let a = std::fs::read(dir.path().join("run1").join(file)).unwrap();
        let b = std::fs::read(dir.path().join("run2").join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between identical runs");
    }

    let metrics = read_jsonl(&dir.path().join("run1").join("metrics.jsonl"));
    assert_eq!(metrics.len(), 100);
    assert!(metrics[0]["mean_loss"].as_f64().unwrap() > 0.0);
    let final_acc = metrics.last().unwrap()["train_accuracy"].as_f64().unwrap();
    assert!(final_acc >= 0.95, "train accuracy {final_acc}");

    // eval on the training data: overfit accuracy carries over
    let ckpt = dir.path().join("run1").join("checkpoint.json");
    let eval_args = |out_dir: &str| {
        vec![
            "eval".to_string(),
            "--checkpoint".into(),
            ckpt.to_str().unwrap().into(),
            "--data".into(),
            data_path.to_str().unwrap().into(),
            "--task-shape".into(),
            "select-from-k".into(),
            "--out-dir".into(),
            dir.path().join(out_dir).to_str().unwrap().into(),
        ]
    };
    let out = bin().args(eval_args("eval1")).output().unwrap();
    assert_exit(&out, 0);
    let out = bin().args(eval_args("eval2")).output().unwrap();
    assert_exit(&out, 0);
    let a = std::fs::read(dir.path().join("eval1").join("eval.json")).unwrap();
    let b = std::fs::read(dir.path().join("eval2").join("eval.json")).unwrap();
    assert_eq!(a, b, "eval outputs differ across runs");

    let report: Value = serde_json::from_slice(&a).unwrap();
    assert!(report["accuracy"].as_f64().unwrap() >= 0.95);
    assert!(report["map"].as_f64().unwrap() > 0.9);
    assert!(report["mrr"].as_f64().unwrap() > 0.9);

    // inspect: every reported position maps into the candidate (or is
    // flagged as padding), and pooled maxima concentrate on tokens the
    // candidate shares with the question for the correct answer
    let out = run(&[
        "inspect",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--data",
        data_path.to_str().unwrap(),
        "--out-dir",
        dir.path().join("insp").to_str().unwrap(),
    ]);
    assert_exit(&out, 0);
    let reports = read_jsonl(&dir.path().join("insp").join("activations.jsonl"));
    assert_eq!(reports.len(), 120);

    let mut on_overlap = 0usize;
    let mut total = 0usize;
    for (inst, report) in data.iter().zip(&reports) {
        assert_eq!(inst["id"], report["id"]);
        let question: Vec<&str> = inst["question"]
            .as_array()
            .unwrap()
            .iter()
            .map(|t| t.as_str().unwrap())
            .collect();
        let correct = inst["correct"][0].as_u64().unwrap() as usize;
        for (k, cand) in report["candidates"].as_array().unwrap().iter().enumerate() {
            let tokens: Vec<&str> = cand["tokens"]
                .as_array()
                .unwrap()
                .iter()
                .map(|t| t.as_str().unwrap())
                .collect();
            let seq_len = cand["sequence_len"].as_u64().unwrap() as usize;
            assert_eq!(seq_len, tokens.len());
            for wm in cand["windows"].as_array().unwrap() {
                let window = wm["window"].as_u64().unwrap() as usize;
                let positions = wm["positions"].as_array().unwrap();
                let pads = wm["covers_pad"].as_array().unwrap();
                for (p, pad) in positions.iter().zip(pads) {
                    let p = p.as_u64().unwrap() as usize;
                    assert!(p < seq_len.max(window));
                    assert_eq!(pad.as_bool().unwrap(), p + window > seq_len);
                    if k == correct {
                        total += 1;
                        let covered = (p..(p + window).min(seq_len))
                            .any(|i| question.contains(&tokens[i]));
                        if covered {
                            on_overlap += 1;
                        }
                    }
                }
            }
        }
    }
    let fraction = on_overlap as f64 / total as f64;
    assert!(
        fraction >= 0.5,
        "only {fraction:.3} of pooled maxima fall on overlapping tokens"
    );

    // inspect with explicit ids
    let out = run(&[
        "inspect",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--data",
        data_path.to_str().unwrap(),
        "--ids",
        "containment-3,containment-7",
        "--out-dir",
        dir.path().join("insp2").to_str().unwrap(),
    ]);
    assert_exit(&out, 0);
    assert_eq!(
        read_jsonl(&dir.path().join("insp2").join("activations.jsonl")).len(),
        2
    );

    // unknown id lists the available ones
    let out = run(&[
        "inspect",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--data",
        data_path.to_str().unwrap(),
        "--ids",
        "nope",
        "--out-dir",
        dir.path().join("insp3").to_str().unwrap(),
    ]);
    assert_exit(&out, 2);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("containment-0"), "{stderr}");

    // checkpoint of one kind rejected under another
    let out = run(&[
        "eval",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--data",
        data_path.to_str().unwrap(),
        "--comparison",
        "ntn",
        "--out-dir",
        dir.path().join("eval3").to_str().unwrap(),
    ]);
    assert_exit(&out, 1);

    // task-shape mismatch is a configuration error
    let out = run(&[
        "eval",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--data",
        data_path.to_str().unwrap(),
        "--task-shape",
        "classify-pair",
        "--out-dir",
        dir.path().join("eval4").to_str().unwrap(),
    ]);
    assert_exit(&out, 1);
}

#[test]
fn untrained_model_evaluates_at_chance() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out = run(&[
        "train",
        "--synthetic",
        "containment:100:seed=21",
        "--random-embeddings",
        "--embed-dim",
        "12",
        "--hidden-dim",
        "8",
        "--windows",
        "1,2",
        "--epochs",
        "0",
        "--seed",
        "21",
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert_exit(&out, 0);
    let out = run(&[
        "eval",
        "--checkpoint",
        out_dir.join("checkpoint.json").to_str().unwrap(),
        "--synthetic",
        "containment:100:seed=22",
        "--out-dir",
        dir.path().join("eval").to_str().unwrap(),
    ]);
    assert_exit(&out, 0);
    let report: Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("eval").join("eval.json")).unwrap())
            .unwrap();
    let acc = report["accuracy"].as_f64().unwrap();
    assert!(
        (0.1..=0.3).contains(&acc),
        "untrained accuracy {acc} outside the chance band"
    );
}

/// Six-row ablation over every comparison function on one seed and
/// dataset; every kind must solve the containment task.
#[test]
fn ablate_covers_all_six_kinds() {
    let dir = tempfile::tempdir().unwrap();
    let ablate_args = |out_dir: &Path, kinds: Option<&str>| {
        let mut args = vec![
            "ablate".to_string(),
            "--synthetic".into(),
            "containment:120:seed=9".into(),
            "--random-embeddings".into(),
            "--embed-dim".into(),
            "12".into(),
            "--hidden-dim".into(),
            "8".into(),
            "--windows".into(),
            "1,2".into(),
            "--epochs".into(),
            "100".into(),
            "--lr".into(),
            "0.01".into(),
            "--dropout".into(),
            "0.2".into(),
            "--seed".into(),
            "9".into(),
            "--out-dir".into(),
            out_dir.to_str().unwrap().into(),
        ];
        if let Some(kinds) = kinds {
            args.push("--kinds".into());
            args.push(kinds.into());
        }
        args
    };

    let out = bin()
        .args(ablate_args(&dir.path().join("out"), None))
        .output()
        .unwrap();
    assert_exit(&out, 0);
    let rows: Value = serde_json::from_slice(
        &std::fs::read(dir.path().join("out").join("ablation.json")).unwrap(),
    )
    .unwrap();
    let rows = rows.as_array().unwrap();
    assert_eq!(rows.len(), 6);
    let names: Vec<&str> = rows
        .iter()
        .map(|r| r["comparison"].as_str().unwrap())
        .collect();
    assert_eq!(names, ["nn", "ntn", "euccos", "sub", "mult", "submult-nn"]);
    for row in rows {
        assert_eq!(row["status"], "ok");
        assert_eq!(row["epochs"], 100);
        let acc = row["train_accuracy"].as_f64().unwrap();
        assert!(acc >= 0.9, "{} accuracy {acc}", row["comparison"]);
    }
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("submult-nn"), "{stdout}");

    // a singleton kind list produces a one-row table, and the same
    // seed reproduces it byte for byte
    let out = bin()
        .args(ablate_args(&dir.path().join("one"), Some("sub")))
        .output()
        .unwrap();
    assert_exit(&out, 0);
    let table1 = std::fs::read(dir.path().join("one").join("ablation.json")).unwrap();
    let rows: Value = serde_json::from_slice(&table1).unwrap();
    assert_eq!(rows.as_array().unwrap().len(), 1);

    let out = bin()
        .args(ablate_args(&dir.path().join("one-again"), Some("sub")))
        .output()
        .unwrap();
    assert_exit(&out, 0);
    let table2 = std::fs::read(dir.path().join("one-again").join("ablation.json")).unwrap();
    assert_eq!(table1, table2);
}

#[test]
fn usage_errors_exit_1_without_side_effects() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("never-created");

    // embeddings source missing
    let out = run(&[
        "train",
        "--synthetic",
        "containment:10:seed=1",
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert_exit(&out, 1);
    assert!(!out_dir.exists(), "usage error must not create outputs");

    // both a file and a synthetic source
    let data = dir.path().join("d.jsonl");
    std::fs::write(&data, "{}\n").unwrap();
    let out = run(&[
        "train",
        "--train",
        data.to_str().unwrap(),
        "--synthetic",
        "containment:10:seed=1",
        "--random-embeddings",
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert_exit(&out, 1);

    // synthetic task conflicting with an explicit shape
    let out = run(&[
        "train",
        "--synthetic",
        "plot:10:seed=1",
        "--task-shape",
        "select-from-k",
        "--random-embeddings",
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert_exit(&out, 1);

    // bad comparison name
    let out = run(&[
        "train",
        "--synthetic",
        "containment:10:seed=1",
        "--random-embeddings",
        "--comparison",
        "cosine",
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert_exit(&out, 1);

    // gen-data without a spec
    let out = run(&["gen-data", "--out-dir", out_dir.to_str().unwrap()]);
    assert_exit(&out, 1);

    // unknown flag is a clap usage error
    let out = run(&["train", "--bogus"]);
    assert_exit(&out, 1);

    // help and version succeed
    assert_exit(&run(&["--help"]), 0);
    assert_exit(&run(&["--version"]), 0);
    assert!(!out_dir.exists());
}

#[test]
fn malformed_data_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("bad.jsonl");
    std::fs::write(
        &data,
        "{\"question\": [\"a\"], \"candidates\": [[\"b\"]], \"correct\": [0]}\n{\"broken\": 1}\n",
    )
    .unwrap();
    let out = run(&[
        "train",
        "--train",
        data.to_str().unwrap(),
        "--random-embeddings",
        "--epochs",
        "0",
        "--out-dir",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_exit(&out, 2);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("line 2"), "{stderr}");

    // lenient mode shrugs it off
    let out = run(&[
        "train",
        "--train",
        data.to_str().unwrap(),
        "--random-embeddings",
        "--embed-dim",
        "4",
        "--hidden-dim",
        "4",
        "--windows",
        "1",
        "--epochs",
        "0",
        "--lenient",
        "--out-dir",
        dir.path().join("out2").to_str().unwrap(),
    ]);
    assert_exit(&out, 0);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("warning"), "{stderr}");
}

#[test]
fn config_file_drives_training() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"seed": 5, "comparison": "mult", "windows": [1], "hidden_dim": 6,
           "epochs": 2, "embed_dim": 8, "lr": 0.002, "batch_size": 10, "dropout": 0.0}"#,
    )
    .unwrap();
    let out = run(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--synthetic",
        "containment:20:seed=5",
        "--random-embeddings",
        "--out-dir",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_exit(&out, 0);
    let ckpt: Value = serde_json::from_slice(
        &std::fs::read(dir.path().join("out").join("checkpoint.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(ckpt["comparison"], "mult");
    assert_eq!(ckpt["hidden_dim"], 6);
    assert_eq!(read_jsonl(&dir.path().join("out").join("metrics.jsonl")).len(), 2);

    // flag overrides the file
    let out = run(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--synthetic",
        "containment:20:seed=5",
        "--random-embeddings",
        "--comparison",
        "sub",
        "--out-dir",
        dir.path().join("out3").to_str().unwrap(),
    ]);
    assert_exit(&out, 0);
    let ckpt: Value = serde_json::from_slice(
        &std::fs::read(dir.path().join("out3").join("checkpoint.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(ckpt["comparison"], "sub");
}

#[test]
fn classify_pair_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "train",
        "--synthetic",
        "entailment-toy:80:seed=3",
        "--random-embeddings",
        "--embed-dim",
        "10",
        "--hidden-dim",
        "8",
        "--windows",
        "1,2",
        "--epochs",
        "60",
        "--lr",
        "0.01",
        "--dropout",
        "0.1",
        "--seed",
        "3",
        "--out-dir",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_exit(&out, 0);
    let out = run(&[
        "eval",
        "--checkpoint",
        dir.path().join("out").join("checkpoint.json").to_str().unwrap(),
        "--synthetic",
        "entailment-toy:80:seed=3",
        "--out-dir",
        dir.path().join("eval").to_str().unwrap(),
    ]);
    assert_exit(&out, 0);
    let report: Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("eval").join("eval.json")).unwrap())
            .unwrap();
    assert_eq!(report["task_shape"], "classify-pair");
    assert!(report["accuracy"].as_f64().unwrap() > 0.5);
    assert!(report.get("map").is_none());
}

#[test]
fn plot_task_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "train",
        "--synthetic",
        "plot:40:seed=6",
        "--random-embeddings",
        "--embed-dim",
        "10",
        "--hidden-dim",
        "8",
        "--windows",
        "1,3",
        "--epochs",
        "60",
        "--lr",
        "0.01",
        "--dropout",
        "0.1",
        "--seed",
        "6",
        "--comparison",
        "submult-nn",
        "--out-dir",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_exit(&out, 0);
    let out = run(&[
        "eval",
        "--checkpoint",
        dir.path().join("out").join("checkpoint.json").to_str().unwrap(),
        "--synthetic",
        "plot:40:seed=6",
        "--out-dir",
        dir.path().join("eval").to_str().unwrap(),
    ]);
    assert_exit(&out, 0);
    let report: Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("eval").join("eval.json")).unwrap())
            .unwrap();
    assert_eq!(report["task_shape"], "select-from-k-with-plot");
    assert!(report["accuracy"].as_f64().unwrap() > 0.5);
}
