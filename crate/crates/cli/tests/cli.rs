use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use layerlens::encoder::{load_checkpoint, EncoderModel};

fn layerlens(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_layerlens"))
        .args(args)
        .env_remove("LAYERLENS_SEED")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = layerlens(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    layerlens(args).status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path, n: usize, seed: u64) -> PathBuf {
    let out = dir.join(format!("corpus{n}_{seed}"));
    ok(&["synth", "--utterances", &n.to_string(), "--seed", &seed.to_string(), "--out", s(&out)]);
    out
}

const SMALL: &[&str] = &[
    "--d-model", "8", "--n-layers", "2", "--d-ff", "16", "--head-only-updates", "10", "--total-updates", "40",
    "--batch-max-frames", "200", "--log-every", "0",
];

/// Flag/value pairs in `SMALL`, with any flag repeated in `extra` taking its value from there.
fn train_args<'a>(corpus: &'a Path, out: &'a Path, tasks: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
    let mut args = vec!["train", "--corpus", s(corpus), "--tasks", tasks, "--out", s(out)];
    for pair in SMALL.chunks(2) {
        let value = extra.chunks(2).find(|e| e[0] == pair[0]).map_or(pair[1], |e| e[1]);
        args.extend_from_slice(&[pair[0], value]);
    }
    for e in extra.chunks(2).filter(|e| !SMALL.contains(&e[0])) {
        args.extend_from_slice(e);
    }
    args
}

fn train(corpus: &Path, out: &Path, tasks: &str, extra: &[&str]) {
    ok(&train_args(corpus, out, tasks, extra));
}

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn synth_writes_a_reproducible_corpus() {
    let tmp = tempfile::tempdir().unwrap();
    let a = synth(tmp.path(), 200, 7);
    let n = std::fs::read_dir(a.join("features")).unwrap().count();
    assert_eq!(n, 200);
    assert!(a.join("alignment.tsv").is_file());
    assert!(a.join("synth.manifest.json").is_file());
    let b = tmp.path().join("again");
    ok(&["synth", "--utterances", "200", "--seed", "7", "--out", s(&b)]);
    assert_eq!(read(&a.join("alignment.tsv")), read(&b.join("alignment.tsv")));
    assert_eq!(read(&a.join("features/utt0123.lln")), read(&b.join("features/utt0123.lln")));
}

#[test]
fn usage_and_io_errors_have_distinct_codes() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&["synth", "--utterances", "0", "--out", s(tmp.path())]), 1);
    assert_eq!(code(&["synth", "--no-such-flag"]), 1);
    assert_eq!(code(&["--help"]), 0);
    let missing = tmp.path().join("missing");
    assert_eq!(code(&["train", "--corpus", s(&missing), "--out", s(tmp.path())]), 2);
    assert_eq!(
        code(&["eval", "--checkpoint", s(&missing), "--corpus", s(&missing), "--out", s(tmp.path())]),
        2
    );
}

#[test]
fn diverging_training_exits_with_numerical_code() {
    let tmp = tempfile::tempdir().unwrap();
    let c = synth(tmp.path(), 20, 1);
    let out = layerlens(&train_args(&c, tmp.path(), "t", &["--learning-rate", "1e9", "--head-only-updates", "1"]));
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("diverged"));
}

#[test]
fn frozen_body_checkpoint_matches_initialisation() {
    let tmp = tempfile::tempdir().unwrap();
    let c = synth(tmp.path(), 20, 2);
    let out = tmp.path().join("frozen");
    train(&c, &out, "t", &["--head-only-updates", "40"]);
    let trained = load_checkpoint(&out.join("checkpoint.llnm")).unwrap();
    let fresh = EncoderModel::new(&trained.config, &trained.tasks()).unwrap();
    for ((name, a), (_, b)) in trained.params().into_iter().zip(fresh.params()) {
        let rounded: Vec<f64> = b.as_slice().iter().map(|v| f64::from(*v as f32)).collect();
        if name.starts_with("heads.") {
            assert_ne!(a.as_slice(), rounded.as_slice(), "{name} never trained");
        } else {
            assert_eq!(a.as_slice(), rounded.as_slice(), "{name} moved");
        }
    }
    let log = String::from_utf8(read(&out.join("train_log.csv"))).unwrap();
    assert_eq!(log.lines().next(), Some("update,phase,loss_total,loss_tone"));
    assert_eq!(log.lines().count(), 41);
    assert!(log.lines().skip(1).all(|l| l.split(',').nth(1) == Some("head")));
}

#[test]
fn single_utterance_is_memorised() {
    let tmp = tempfile::tempdir().unwrap();
    let c = synth(tmp.path(), 1, 3);
    let out = tmp.path().join("memo");
    train(
        &c,
        &out,
        "t",
        &["--d-model", "16", "--d-ff", "32", "--total-updates", "400", "--head-only-updates", "20"],
    );
    let ckpt = out.join("checkpoint.llnm");
    ok(&["eval", "--checkpoint", s(&ckpt), "--corpus", s(&c), "--split", "all", "--out", s(&out)]);
    let csv = String::from_utf8(read(&out.join("accuracy.csv"))).unwrap();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0], "tone");
    assert_eq!(row[1], row[2], "{csv}");
}

#[test]
fn analysis_commands_produce_consistent_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let c = synth(tmp.path(), 40, 4);
    let model = tmp.path().join("st");
    train(&c, &model, "tone,sex", &[]);
    let ckpt = model.join("checkpoint.llnm");
    let ckpt = s(&ckpt);

    assert_eq!(
        code(&["eval", "--checkpoint", ckpt, "--corpus", s(&c), "--tiers", "final", "--out", s(&model)]),
        1
    );
    let table = ok(&["eval", "--checkpoint", ckpt, "--corpus", s(&c), "--out", s(&model)]);
    assert!(table.contains("sex") && table.contains("tone"));

    let out = tmp.path().join("svcca");
    ok(&["svcca", "--checkpoint", ckpt, "--corpus", s(&c), "--out", s(&out)]);
    let csv = String::from_utf8(read(&out.join("svcca.csv"))).unwrap();
    assert_eq!(csv.lines().next(), Some("layer,tier,mean_svcca,n_samples,pca_dims_used"));
    assert_eq!(csv.lines().count(), 1 + 2 * 3);
    let svg = String::from_utf8(read(&out.join("svcca.svg"))).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 3);
    let again = tmp.path().join("svcca2");
    ok(&["svcca", "--checkpoint", ckpt, "--corpus", s(&c), "--out", s(&again)]);
    assert_eq!(svg.as_bytes(), read(&again.join("svcca.svg")).as_slice());

    let proj = tmp.path().join("proj");
    for layer in ["0", "last"] {
        let printed = ok(&[
            "project", "--checkpoint", ckpt, "--corpus", s(&c), "--layer", layer, "--color", "sex", "--out", s(&proj),
        ]);
        assert!(printed.contains("silhouette"));
    }
    let scatter = String::from_utf8(read(&proj.join("projection_l1_sex.svg"))).unwrap();
    assert!(scatter.contains(">male<") && scatter.contains(">female<"), "legend lists both sexes");
    let pcsv = String::from_utf8(read(&proj.join("projection_l0_sex.csv"))).unwrap();
    assert_eq!(pcsv.lines().next(), Some("sample_id,x,y,tone,final,sex"));
    ok(&["project", "--checkpoint", ckpt, "--corpus", s(&c), "--color", "tone", "--out", s(&proj)]);
    let tones = String::from_utf8(read(&proj.join("projection_l1_tone.svg"))).unwrap();
    for t in ["T1", "T2", "T3", "T4", "T5"] {
        assert!(tones.contains(&format!(">{t}<")));
    }
    assert_eq!(
        code(&["project", "--checkpoint", ckpt, "--corpus", s(&c), "--layer", "999", "--out", s(&proj)]),
        1
    );
}

#[test]
fn replay_reproduces_training_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let c = synth(tmp.path(), 20, 5);
    let out = tmp.path().join("t");
    train(&c, &out, "t", &[]);
    let before = (read(&out.join("checkpoint.llnm")), read(&out.join("train_log.csv")));
    let manifest = out.join("train.manifest.json");
    let text_before = read(&manifest);
    std::fs::remove_file(out.join("checkpoint.llnm")).unwrap();
    ok(&["replay", "--manifest", s(&manifest)]);
    assert_eq!(before.0, read(&out.join("checkpoint.llnm")));
    assert_eq!(before.1, read(&out.join("train_log.csv")));
    assert_eq!(text_before, read(&manifest));
    let json: serde_json::Value = serde_json::from_slice(&text_before).unwrap();
    assert_eq!(json["command"], "train");
    assert_eq!(json["args"]["d_model"], 8);
    assert_eq!(json["args"]["learning_rate"], 0.1);
}
