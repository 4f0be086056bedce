use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn langdiar(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_langdiar"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = langdiar(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Pooled DER from a score table's last line.
fn mean_der(table: &str) -> f64 {
    let last = table.lines().last().unwrap();
    last.split_whitespace().nth(1).unwrap().parse().unwrap()
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(langdiar(&["--help"]).status.code(), Some(0));
    assert_eq!(langdiar(&["--version"]).status.code(), Some(0));
    assert_eq!(langdiar(&["diarize", "--help"]).status.code(), Some(0));
}

#[test]
fn bad_arguments_exit_one() {
    assert_eq!(langdiar(&["--no-such-flag"]).status.code(), Some(1));
    assert_eq!(langdiar(&["score"]).status.code(), Some(1));
    assert_eq!(langdiar(&["diarize", "--mode", "sideways"]).status.code(), Some(1));
}

#[test]
fn runtime_failures_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing");
    let out = langdiar(&["info", p(&missing)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing"));

    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"colar": 0.25}"#).unwrap();
    let out = langdiar(&["info", p(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("colar"));
}

#[test]
fn config_echo_resolves_preset() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"preset": "gue-n50", "K": 3}"#).unwrap();
    let echo: serde_json::Value = serde_json::from_str(&ok(&["info", p(&cfg)])).unwrap();
    assert_eq!(echo["N"], 50);
    assert_eq!(echo["K"], 3);
    assert_eq!(echo["scorer"], "cosine");
    assert_eq!(echo["delta"], 0.9);
}

#[test]
fn end_to_end_synth_train_diarize_score() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let train = root.join("train");
    let test = root.join("test");
    let model = root.join("model.bin");

    ok(&["synth", "--preset", "ttsf", "--out", p(&train), "-n", "6", "--seed", "100"]);
    ok(&["synth", "--preset", "ttsf", "--out", p(&test), "-n", "3", "--seed", "200"]);
    assert!(train.join("manifest.json").exists());
    assert!(test.join("utt00000.feat").exists());

    let trained = ok(&[
        "train-backend",
        "--features",
        p(&train),
        "--labels",
        p(&train.join("manifest.json")),
        "--out",
        p(&model),
        "--window",
        "50",
        "--chain",
        "whiten,lnorm",
    ]);
    assert!(trained.contains("2 classes"), "{trained}");
    assert!(ok(&["info", p(&model)]).contains("N = 50"));

    // Scoring the references against themselves is error free.
    let perfect = ok(&["score", "--ref", p(&test), "--hyp", p(&test)]);
    assert_eq!(mean_der(&perfect), 0.0, "{perfect}");

    for mode in ["fixed", "changepoint"] {
        let hyp = root.join(mode);
        let report = root.join(format!("{mode}.json"));
        ok(&[
            "diarize",
            "--mode",
            mode,
            "--preset",
            "ttsf-n50",
            "--model",
            p(&model),
            "--in",
            p(&test),
            "--out",
            p(&hyp),
            "--report",
            p(&report),
        ]);
        for i in 0..3 {
            assert!(hyp.join(format!("utt0000{i}.rttm")).exists());
        }
        let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
        assert_eq!(r["config"]["mode"], mode);
        assert_eq!(r["utterances"].as_array().unwrap().len(), 3);

        let table = ok(&["score", "--ref", p(&test), "--hyp", p(&hyp)]);
        let der = mean_der(&table);
        assert!(der < 20.0, "{mode}: {table}");
        let cpd = ok(&["cpd-score", "--ref", p(&test), "--hyp", p(&hyp)]);
        assert!(cpd.contains("pooled"), "{cpd}");
    }

    let eer = ok(&[
        "trials-eer",
        "--model",
        p(&model),
        "--features",
        p(&test),
        "--labels",
        p(&test.join("manifest.json")),
        "--pairs",
        "200",
    ]);
    assert!(eer.starts_with("EER "), "{eer}");
}

#[test]
fn sequential_and_parallel_runs_agree() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let data = root.join("data");
    let model = root.join("m.bin");
    ok(&["synth", "--out", p(&data), "-n", "3", "--seed", "5"]);
    ok(&[
        "train-backend",
        "--features",
        p(&data),
        "--labels",
        p(&data),
        "--out",
        p(&model),
        "--window",
        "50",
        "--chain",
        "whiten,lnorm",
    ]);
    let seq = root.join("seq");
    let par = root.join("par");
    let common = ["diarize", "--preset", "ttsf-n50", "--model", p(&model), "--in", p(&data)];
    let mut a = common.to_vec();
    a.extend(["--out", p(&seq), "--jobs", "1"]);
    ok(&a);
    let mut b = common.to_vec();
    b.extend(["--out", p(&par), "--jobs", "3"]);
    ok(&b);
    for i in 0..3 {
        let name = format!("utt0000{i}.rttm");
        assert_eq!(fs::read(seq.join(&name)).unwrap(), fs::read(par.join(&name)).unwrap());
    }
}
