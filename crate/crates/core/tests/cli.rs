use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &[&str] = &[
    "--set",
    "max_epochs=3",
    "--set",
    "learner_hidden=16",
    "--set",
    "question_hidden1=16",
    "--set",
    "question_hidden2=16",
    "--set",
    "agg_dim=8",
    "--set",
    "pred_hidden1=8",
    "--set",
    "pred_hidden2=4",
    "--set",
    "ncdm_hidden1=8",
    "--set",
    "ncdm_hidden2=4",
    "--set",
    "rq1_seeds=2",
    "--set",
    "rq2_seeds=2",
];

fn cdm(data: &Path, out: &Path, args: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_cdm"));
    cmd.args(args)
        .arg("--dataset-dir")
        .arg(data)
        .arg("--out-dir")
        .arg(out)
        .args(SMALL);
    cmd.output().expect("spawn cdm")
}

fn ok(data: &Path, out: &Path, args: &[&str]) -> String {
    let o = cdm(data, out, args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    fs::read(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn full_workflow_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    ok(&data, &tmp.path().join("unused"), &["synth", "--learners", "80"]);
    assert!(data.join("logs.csv").exists() && data.join("q.csv").exists());

    let files = [
        "train_report.json",
        "train_epochs.csv",
        "metrics.json",
        "config.txt",
        "rq1.csv",
        "rq1_runs.csv",
        "rq1_hist_idcdm_learner.csv",
        "rq2.csv",
        "rq2_runs.csv",
        "rq3.csv",
        "learner_traits.csv",
        "question_params.csv",
    ];
    let mut runs = Vec::new();
    for name in ["a", "b"] {
        let out = tmp.path().join(name);
        ok(&data, &out, &["train", "--seed", "4"]);
        ok(&data, &out, &["rq1", "--seed", "4"]);
        ok(&data, &out, &["rq2", "--seed", "4"]);
        ok(&data, &out, &["rq3", "--seed", "4"]);
        ok(&data, &out, &["export", "--seed", "4"]);
        runs.push(files.map(|f| read(&out, f)));
    }
    for (i, f) in files.iter().enumerate() {
        if *f == "config.txt" {
            let strip = |b: &[u8]| -> String {
                String::from_utf8_lossy(b)
                    .lines()
                    .filter(|l| !l.starts_with("out_dir"))
                    .collect()
            };
            assert_eq!(strip(&runs[0][i]), strip(&runs[1][i]));
        } else {
            assert_eq!(runs[0][i], runs[1][i], "{f} differs between runs");
        }
    }
    assert_eq!(
        read(&tmp.path().join("a"), "model.ckpt"),
        read(&tmp.path().join("b"), "model.ckpt")
    );

    let rq3 = String::from_utf8(runs[0][9].clone()).unwrap();
    let models: Vec<&str> = rq3.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(models, ["majority", "idcdm", "ncdm"]);
    let rq1 = String::from_utf8(runs[0][4].clone()).unwrap();
    assert_eq!(rq1.lines().next(), Some("model,mode,ids"));
    assert!(
        rq1.contains("idcdm,learner,1\n") && rq1.contains("idcdm,question,1\n"),
        "{rq1}"
    );
    let traits = String::from_utf8(runs[0][10].clone()).unwrap();
    assert!(traits.starts_with("entity_id,v_1,"));
    assert_eq!(traits.lines().count(), 81);
}

#[test]
fn checkpoint_drives_the_experiment_commands() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let out = tmp.path().join("out");
    ok(&data, &out, &["synth", "--learners", "50"]);
    ok(&data, &out, &["train", "--model", "ncdm"]);
    let ckpt = out.join("model.ckpt");
    let ckpt = ckpt.to_str().unwrap();
    let stdout = ok(&data, &out, &["rq3", "--from-checkpoint", ckpt]);
    assert!(stdout.lines().any(|l| l.starts_with("ncdm,")), "{stdout}");
    ok(&data, &out, &["export", "--from-checkpoint", ckpt]);
    let params = String::from_utf8(read(&out, "question_params.csv")).unwrap();
    assert!(params.starts_with("entity_id,v_1,"));
}

#[test]
fn missing_input_fails_with_exit_code_one() {
    let tmp = tempfile::tempdir().unwrap();
    let o = cdm(&tmp.path().join("nowhere"), &tmp.path().join("out"), &["train"]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("file not found"), "{err}");
}

#[test]
fn bad_override_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let o = cdm(tmp.path(), tmp.path(), &["config", "--set", "lr=fast"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("lr"));
}

#[test]
fn config_prints_effective_values() {
    let tmp = tempfile::tempdir().unwrap();
    let stdout = ok(tmp.path(), tmp.path(), &["config", "--seed", "11", "--model", "dina"]);
    assert!(stdout.contains("seed = 11"), "{stdout}");
    assert!(stdout.contains("model = dina"), "{stdout}");
}
