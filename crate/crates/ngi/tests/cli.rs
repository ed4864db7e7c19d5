mod common;

use std::path::Path;
use std::process::{Command, Output};

use ngi::checkpoint::Checkpoint;
use ngi::commands::{frame_id, MetricLog};
use ngi::pfm;

use common::{tiny_config, tree};

fn ngi(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ngi"));
    cmd.args(args);
    if let Some(t) = threads {
        cmd.env("NGI_THREADS", t);
    }
    cmd.output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = ngi(args, None);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_vec_pretty(&tiny_config()).unwrap()).unwrap();
    path
}

#[test]
fn pipeline_end_to_end_is_deterministic() {
    let root = tempfile::tempdir().unwrap();
    let r = root.path();
    let config = write_config(r);
    let data = r.join("data");
    ok(&["gen-data", "--config", p(&config), "--out", p(&data), "--frames", "5"]);

    // Same run under different worker counts.
    let runs: Vec<_> = ["1", "3"]
        .iter()
        .map(|t| {
            let out = r.join(format!("run{t}"));
            let o = ngi(&["train", "--data", p(&data), "--out", p(&out), "--config", p(&config)], Some(t));
            assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
            tree(&out)
        })
        .collect();
    assert!(runs[0] == runs[1]);
    let run = r.join("run1");
    let names: Vec<&str> = runs[0].iter().map(|(n, _)| n.as_str()).collect();
    assert!(names.contains(&"checkpoint.ngi") && names.contains(&"metrics.json"));

    let log: MetricLog = serde_json::from_slice(&std::fs::read(run.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(log.epochs.len(), 2);
    assert_eq!(log.config.data.frames, 4, "config echo is the file, not the flag override");
    assert_eq!((log.train_ids.len(), log.held_out_ids.len()), (4, 1));
    assert!(log.epochs.iter().all(|e| e.eval.is_some()));

    let ckpt = run.join("checkpoint.ngi");
    let id = frame_id(0);
    let infer = |dir: &str| {
        let out = r.join(dir);
        ok(&["infer", "--ckpt", p(&ckpt), "--frame-id", &id, "--data", p(&data), "--out", p(&out)]);
        tree(&out)
    };
    let a = infer("infer_a");
    assert!(a == infer("infer_b"));
    assert_eq!(a.iter().map(|(n, _)| n.as_str()).collect::<Vec<_>>(), [
        "infer.json",
        "l.pfm",
        "l_ind.pfm",
        "preview.png",
        "s_ind.pfm"
    ]);
    let l = pfm::read_pfm(&r.join("infer_a/l.pfm")).unwrap();
    let frame = ngi::Dataset::load(&data).unwrap().frame(&id).unwrap();
    assert!(l.data.iter().zip(&frame.l_d.data).all(|(l, d)| l - d >= 0.0));

    let eval = |name: &str| {
        let report = r.join(name);
        let o = ok(&["eval", "--ckpt", p(&ckpt), "--data", p(&data), "--report", p(&report)]);
        assert!(String::from_utf8_lossy(&o.stdout).contains("ambient"));
        std::fs::read(report).unwrap()
    };
    let report = eval("eval_a.json");
    assert_eq!(report, eval("eval_b.json"));
    let json: serde_json::Value = serde_json::from_slice(&report).unwrap();
    for key in ["mean_model", "mean_ambient", "mean_direct", "dataset_hash", "config"] {
        assert!(json.get(key).is_some(), "missing {key}");
    }
    assert_eq!(json["dataset_hash"], log.dataset_hash.as_str());
}

#[test]
fn zero_epochs_writes_the_initial_checkpoint_and_resume_continues() {
    let root = tempfile::tempdir().unwrap();
    let r = root.path();
    let config = write_config(r);
    let data = r.join("data");
    ok(&["gen-data", "--config", p(&config), "--out", p(&data)]);

    let zero = r.join("zero");
    ok(&["train", "--data", p(&data), "--out", p(&zero), "--config", p(&config), "--epochs", "0"]);
    let ckpt = Checkpoint::load(&zero.join("checkpoint.ngi")).unwrap();
    assert_eq!((ckpt.state.epoch, ckpt.state.iteration), (0, 0));

    let straight = r.join("straight");
    ok(&["train", "--data", p(&data), "--out", p(&straight), "--config", p(&config), "--epochs", "2"]);
    let split = r.join("split");
    ok(&["train", "--data", p(&data), "--out", p(&split), "--config", p(&config), "--epochs", "1"]);
    ok(&["train", "--data", p(&data), "--out", p(&split), "--config", p(&config), "--epochs", "2", "--resume"]);
    let bytes = |d: &Path, f: &str| std::fs::read(d.join(f)).unwrap();
    assert_eq!(bytes(&straight, "checkpoint.ngi"), bytes(&split, "checkpoint.ngi"));
    let log = |d: &Path| serde_json::from_slice::<MetricLog>(&bytes(d, "metrics.json")).unwrap();
    assert_eq!(log(&straight).epochs, log(&split).epochs);
}

#[test]
fn overfit_one_fits_one_frame_without_regularizers() {
    let root = tempfile::tempdir().unwrap();
    let r = root.path();
    let config = write_config(r);
    let data = r.join("data");
    ok(&["gen-data", "--config", p(&config), "--out", p(&data)]);
    let out = r.join("run");
    let o = ok(&["train", "--data", p(&data), "--out", p(&out), "--config", p(&config), "--epochs", "3", "--overfit-one"]);
    assert!(String::from_utf8_lossy(&o.stderr).contains("overfit: content loss"));

    let log: MetricLog = serde_json::from_slice(&std::fs::read(out.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(log.train_ids, [frame_id(0)]);
    assert!(log.held_out_ids.is_empty());
    assert_eq!(log.epochs.len(), 3);
    assert!(log.epochs.iter().all(|e| e.steps.len() == 1 && e.eval.is_none()));
    let s = log.overfit.expect("overfit summary");
    assert!(s.initial_content > 0.0 && s.final_content.is_finite());
    assert_eq!(s.drop, 1.0 - s.final_content / s.initial_content);

    let ckpt = Checkpoint::load(&out.join("checkpoint.ngi")).unwrap();
    assert_eq!(ckpt.model.dropout, 0.0);
    assert_eq!(ckpt.train.alpha_range, [1.0, 1.0]);
    assert_eq!(ckpt.train.batch_size, 1);
}

#[test]
fn exit_codes_separate_config_data_and_numerical_failures() {
    let root = tempfile::tempdir().unwrap();
    let r = root.path();
    let config = write_config(r);
    let data = r.join("data");
    ok(&["gen-data", "--config", p(&config), "--out", p(&data), "--frames", "2"]);

    let code = |args: &[&str]| ngi(args, None).status.code();
    let bad = r.join("bad.json");
    std::fs::write(&bad, br#"{"train": {"batch_size": 0}}"#).unwrap();
    assert_eq!(code(&["gen-data", "--config", p(&bad), "--out", p(&r.join("x"))]), Some(2));
    std::fs::write(&bad, br#"{"unknown": true}"#).unwrap();
    assert_eq!(code(&["gen-data", "--config", p(&bad), "--out", p(&r.join("x"))]), Some(2));

    // Default model resolution (128) against a 32x32 dataset.
    let out = r.join("t");
    assert_eq!(code(&["train", "--data", p(&data), "--out", p(&out)]), Some(2));
    assert_eq!(code(&["train", "--data", p(&r.join("missing")), "--out", p(&out)]), Some(3));

    ok(&["train", "--data", p(&data), "--out", p(&out), "--config", p(&config), "--epochs", "0"]);
    let ckpt = out.join("checkpoint.ngi");
    let infer_out = r.join("i");
    assert_eq!(
        code(&["infer", "--ckpt", p(&ckpt), "--frame-id", "nope", "--data", p(&data), "--out", p(&infer_out)]),
        Some(3)
    );
    assert_eq!(
        code(&["eval", "--ckpt", p(&ckpt), "--data", p(&data), "--report", p(&r.join("e.json")), "--ablate", "no-gfa"]),
        Some(2)
    );

    let fault = ngi(&["gradcheck", "--inject-fault"], None);
    assert_eq!(fault.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&fault.stdout).contains("FAIL faulty_identity"));
    assert!(String::from_utf8_lossy(&fault.stderr).contains("faulty_identity"));
}

#[test]
fn gradcheck_passes_on_a_clean_build() {
    let root = tempfile::tempdir().unwrap();
    let report = root.path().join("grad.json");
    let out = ok(&["gradcheck", "--report", p(&report)]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(!stdout.contains("FAIL"), "{stdout}");
    let rows: Vec<ngi::commands::GradcheckRow> = serde_json::from_slice(&std::fs::read(report).unwrap()).unwrap();
    assert!(rows.iter().any(|r| r.name == "generator/seed0" && r.precision == "double"));
    assert!(rows.iter().any(|r| r.precision == "single"));
}
