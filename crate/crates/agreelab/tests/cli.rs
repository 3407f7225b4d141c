use std::path::Path;
use std::process::{Command, Output};

use agreelab::io::checkpoint;
use agreelab::pipeline::paths;

const TINY: &[&str] = &[
    "--seed",
    "7",
    "--set",
    "data.train_sentences=300",
    "--set",
    "data.per_condition=12",
    "--set",
    "data.depth.sentences_per_length=6",
    "--set",
    "data.depth.max_points=300",
    "--set",
    "model.hidden_dim=4",
    "--set",
    "model.embed_dim=4",
    "--set",
    "train.epochs=2",
    "--set",
    "analysis.permutation_draws=20",
];

fn agreelab(out: &Path, args: &[&str]) -> Output {
    let jobs: &[&str] = if args.contains(&"--jobs") { &[] } else { &["--jobs", "1"] };
    Command::new(env!("CARGO_BIN_EXE_agreelab"))
        .args(TINY)
        .args(jobs)
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Path, args: &[&str]) -> String {
    let o = agreelab(out, args);
    let err = String::from_utf8_lossy(&o.stderr).into_owned();
    assert!(o.status.success(), "{args:?} failed: {err}");
    err
}

fn read(dir: &Path, rel: &str) -> Vec<u8> {
    std::fs::read(dir.join(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
}

#[test]
fn failures_map_to_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let run = tmp.path().join("run");
    assert_eq!(agreelab(&run, &["no-such-command"]).status.code(), Some(2));
    assert_eq!(agreelab(&run, &["--mask", "L0-U1", "eval"]).status.code(), Some(2));
    assert_eq!(agreelab(&run, &["--set", "train.lr=-1", "train"]).status.code(), Some(2));
    let missing = tmp.path().join("missing.json");
    let o = agreelab(&run, &["--config", missing.to_str().unwrap(), "show-config"]);
    assert_eq!(o.status.code(), Some(3));
    // Analysis before training has no checkpoint to read.
    assert_eq!(agreelab(&run, &["eval"]).status.code(), Some(3));
    let o = agreelab(&run, &["eval"]);
    assert!(String::from_utf8_lossy(&o.stderr).contains("eval"));
}

#[test]
fn dry_run_prints_plan_and_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let run = tmp.path().join("run");
    let o = agreelab(&run, &["pipeline", "--dry-run"]);
    assert!(o.status.success());
    let plan = String::from_utf8_lossy(&o.stdout);
    for stage in ["gen-data", "train", "eval", "ablate", "traces", "gat", "depth", "connectivity", "perm-test", "report"] {
        assert!(plan.contains(stage), "{stage} missing from plan:\n{plan}");
    }
    assert!(!run.exists());
}

#[test]
fn pipeline_is_deterministic_restartable_and_reproducible_from_its_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&a, &["pipeline"]);
    ok(&b, &["--jobs", "2", "pipeline"]);
    for rel in [
        paths::CORPUS_TRAIN,
        paths::CHECKPOINT,
        paths::PERPLEXITY,
        paths::ACCURACY_JSON,
        paths::SWEEP_JSON,
        paths::GAT_JSON,
        paths::DEPTH_JSON,
        paths::CONNECTIVITY_JSON,
        paths::PERMUTATION_JSON,
        paths::INDEX_JSON,
    ] {
        assert!(read(&a, rel) == read(&b, rel), "{rel} differs between runs");
    }
    assert!(a.join(paths::INDEX_HTML).exists());

    let log = ok(&a, &["pipeline"]);
    assert_eq!(log.matches("up to date, skipped").count(), 10, "{log}");
    // Touching a downstream output reruns only that stage. Its rewritten bytes
    // match the recorded hashes, so the report stays up to date.
    std::fs::write(a.join(paths::PERMUTATION_JSON), b"{}").unwrap();
    let log = ok(&a, &["pipeline"]);
    assert_eq!(log.matches("up to date, skipped").count(), 9, "{log}");
    assert!(log.contains("[perm-test] group ablation"), "{log}");
    assert!(read(&a, paths::PERMUTATION_JSON) == read(&b, paths::PERMUTATION_JSON));

    let c = tmp.path().join("c");
    let manifest = a.join(paths::MANIFEST);
    let o = Command::new(env!("CARGO_BIN_EXE_agreelab"))
        .args(["--config", manifest.to_str().unwrap(), "--out", c.to_str().unwrap(), "gen-data"])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(read(&a, paths::CORPUS_TRAIN) == read(&c, paths::CORPUS_TRAIN));
    assert!(read(&a, &paths::task(agreelab_core::grammar::Template::NounPP).to_string_lossy())
        == read(&c, &paths::task(agreelab_core::grammar::Template::NounPP).to_string_lossy()));

    // An imported checkpoint is analysed exactly like the run's own.
    let d = tmp.path().join("d");
    let ck = a.join(paths::CHECKPOINT);
    ok(&d, &["gen-data"]);
    ok(&d, &["--checkpoint", ck.to_str().unwrap(), "eval"]);
    let acc = |dir: &Path| -> serde_json::Value {
        serde_json::from_slice::<serde_json::Value>(&read(dir, paths::ACCURACY_JSON)).unwrap()["result"].clone()
    };
    assert_eq!(acc(&a), acc(&d));

    let sentence = "the boy near the cars greets";
    let o = Command::new(env!("CARGO_BIN_EXE_agreelab"))
        .args(["--out", a.to_str().unwrap(), "traces", "--sentence", sentence, "--units", "L1-U1,L2-U3"])
        .args(TINY)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = String::from_utf8(o.stdout).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,token,layer,unit,h,c,i,f,o,ctilde"));
    // Two units for each of the six words.
    assert_eq!(lines.count(), 2 * 6);
}

#[test]
fn resumed_training_matches_uninterrupted_training() {
    let tmp = tempfile::tempdir().unwrap();
    let (full, part) = (tmp.path().join("full"), tmp.path().join("part"));
    ok(&full, &["gen-data"]);
    ok(&full, &["train"]);
    ok(&part, &["gen-data"]);
    ok(&part, &["--set", "train.epochs=1", "train"]);
    let ck = part.join(paths::CHECKPOINT);
    let saved = tmp.path().join("one-epoch.json");
    std::fs::copy(&ck, &saved).unwrap();
    ok(&part, &["train", "--resume", saved.to_str().unwrap()]);
    let a = checkpoint::load(&full.join(paths::CHECKPOINT)).unwrap();
    let b = checkpoint::load(&ck).unwrap();
    assert_eq!(a.model, b.model);
    assert_eq!(a.training, b.training);
}
