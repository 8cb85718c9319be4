use std::path::Path;
use std::process::{Command, Output};

fn svbop(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_svbop"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = svbop(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn synth_pair(dir: &Path) {
    let common = [
        "--seed",
        "4",
        "synth",
        "blobs",
        "--classes",
        "8",
        "--dim",
        "5",
        "--separation",
        "2",
    ];
    ok(
        dir,
        &[
            &common[..],
            &["--n", "600", "--sample-seed", "1", "--out", "train.svm"],
        ]
        .concat(),
    );
    ok(
        dir,
        &[
            &common[..],
            &["--n", "200", "--sample-seed", "2", "--out", "test.svm"],
        ]
        .concat(),
    );
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    out.sort();
    out
}

fn pipeline(dir: &Path) -> (String, String, Vec<(String, Vec<u8>)>) {
    synth_pair(dir);
    ok(
        dir,
        &[
            "--seed",
            "7",
            "train",
            "--data",
            "train.svm",
            "--out",
            "model",
            "--index",
            "--prune",
            "0.01",
        ],
    );
    let report = ok(
        dir,
        &[
            "--seed",
            "7",
            "eval",
            "--model",
            "model",
            "--train",
            "train.svm",
            "--test",
            "test.svm",
            "--method",
            "svbop_full",
            "--method",
            "svbop_hsg:k0=3",
            "--method",
            "threshold",
            "--method",
            "top_s:s=2",
            "--icp",
            "epsilon=0.1",
            "--utility",
            "f1",
            "--utility",
            "credal:delta=2.2,gamma=1.2",
            "--no-timing",
            "--records",
        ],
    );
    let csv = ok(
        dir,
        &[
            "--format",
            "csv",
            "predict",
            "--model",
            "model",
            "--data",
            "test.svm",
            "--method",
            "svbop_hsg",
        ],
    );
    (report, csv, files(&dir.join("model")))
}

#[test]
fn fixed_seed_runs_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = pipeline(a.path());
    let second = pipeline(b.path());
    assert_eq!(
        std::fs::read(a.path().join("train.svm")).unwrap(),
        std::fs::read(b.path().join("train.svm")).unwrap()
    );
    assert!(first == second, "runs differ");
    assert!(first.0.contains("\"schema_version\": 1"));
    assert_eq!(first.1.lines().count(), 201);
}

#[test]
fn threads_do_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth_pair(d);
    let run = |threads: &str| {
        ok(
            d,
            &[
                "--threads",
                threads,
                "eval",
                "--train",
                "train.svm",
                "--test",
                "test.svm",
                "--method",
                "svbop_full",
                "--method",
                "threshold",
                "--icp",
                "epsilon=0.2",
                "--no-timing",
                "--format",
                "csv",
            ],
        )
    };
    assert_eq!(run("1"), run("4"));
}

#[test]
fn exit_codes_follow_error_category() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth_pair(d);
    ok(d, &["train", "--data", "train.svm", "--out", "model"]);
    let code = |args: &[&str]| svbop(d, args).status.code().unwrap();
    assert_eq!(
        code(&[
            "eval",
            "--model",
            "model",
            "--test",
            "test.svm",
            "--utility",
            "bogus"
        ]),
        2
    );
    assert_eq!(
        code(&[
            "eval",
            "--model",
            "model",
            "--test",
            "test.svm",
            "--method",
            "threshold"
        ]),
        2
    );
    assert_eq!(
        code(&[
            "eval",
            "--model",
            "model",
            "--test",
            "test.svm",
            "--method",
            "svbop_hsg"
        ]),
        2
    );
    assert_eq!(
        code(&["eval", "--model", "model", "--test", "missing.svm"]),
        3
    );
    std::fs::write(d.join("bad.svm"), "1 3:a\n").unwrap();
    assert_eq!(code(&["eval", "--model", "model", "--test", "bad.svm"]), 3);
    assert_eq!(code(&["eval", "--bogus-flag"]), 2);
    assert_eq!(code(&["oracle-check", "--draws", "5", "--tolerance=-1"]), 4);
    assert_eq!(
        code(&[
            "oracle-check",
            "--draws",
            "50",
            "--classes",
            "7",
            "--utility",
            "fbeta:beta=3"
        ]),
        0
    );
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth_pair(d);
    std::fs::write(
        d.join("run.cfg"),
        "# eval settings\nformat=csv\nno_timing=true\nmethod=top_s:s=3\ntrain=train.svm\n",
    )
    .unwrap();
    let from_config = ok(d, &["--config", "run.cfg", "eval", "--test", "test.svm"]);
    assert!(from_config.starts_with("method,utility,"));
    assert!(from_config.contains("top_s:s=3,"));
    let overridden = ok(
        d,
        &[
            "--config",
            "run.cfg",
            "eval",
            "--test",
            "test.svm",
            "--method",
            "top_s:s=1",
            "--format",
            "json",
        ],
    );
    assert!(overridden.contains("\"method\": \"top_s:s=1\""));
    assert!(overridden.contains("\"mean_set_size\": 1.0"));
    std::fs::write(d.join("bad.cfg"), "nonsense=1\n").unwrap();
    assert_eq!(
        svbop(d, &["--config", "bad.cfg", "eval", "--test", "test.svm"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn tree_models_and_label_maps() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    // sparse, non-contiguous labels
    let mut train = String::new();
    for i in 0..300 {
        let (label, x, y) = match i % 3 {
            0 => (-5, 1.0, 0.0),
            1 => (10, 0.0, 1.0),
            _ => (42, -1.0, -1.0),
        };
        let jitter = (i % 7) as f64 * 0.01;
        train += &format!("{label} 1:{} 2:{}\n", x + jitter, y - jitter);
    }
    std::fs::write(d.join("train.svm"), &train).unwrap();
    ok(
        d,
        &[
            "tree-build",
            "--data",
            "train.svm",
            "--kind",
            "huffman",
            "--out",
            "tree.txt",
        ],
    );
    ok(
        d,
        &[
            "train",
            "--data",
            "train.svm",
            "--tree",
            "tree.txt",
            "--out",
            "tree_model",
        ],
    );
    let out = ok(
        d,
        &[
            "predict",
            "--model",
            "tree_model",
            "--data",
            "train.svm",
            "--method",
            "svbop_hf",
            "--utility",
            "precision",
        ],
    );
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    let preds = v["predictions"].as_array().unwrap();
    assert_eq!(preds.len(), 300);
    assert_eq!(preds[0], serde_json::json!([-5]));
    assert_eq!(preds[1], serde_json::json!([10]));
    assert_eq!(preds[2], serde_json::json!([42]));
    assert_eq!(
        svbop(d, &["index-build", "--model", "tree_model"])
            .status
            .code(),
        Some(2),
        "tree bundles cannot carry an index"
    );
}

#[test]
fn index_build_adds_an_index() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth_pair(d);
    ok(d, &["train", "--data", "train.svm", "--out", "model"]);
    ok(
        d,
        &["--seed", "3", "index-build", "--model", "model", "--m", "4"],
    );
    assert!(d.join("model/index.hnsw").exists());
    let report = ok(
        d,
        &[
            "eval",
            "--model",
            "model",
            "--test",
            "test.svm",
            "--method",
            "svbop_full",
            "--method",
            "svbop_hsg:k0=2,ef=8",
            "--format",
            "csv",
            "--no-timing",
        ],
    );
    // metric columns are the last six; the method column may be quoted
    let metrics: Vec<Vec<&str>> = report
        .lines()
        .skip(1)
        .map(|l| l.rsplitn(7, ',').take(6).collect())
        .collect();
    // with ef equal to the class count the graph search is exhaustive
    assert_eq!(metrics[0], metrics[1]);
}

#[test]
fn synth_outputs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let a = ok(
        d,
        &[
            "--seed",
            "9",
            "synth",
            "dirichlet",
            "--classes",
            "5",
            "--n",
            "20",
            "--alpha",
            "0.3",
        ],
    );
    let b = ok(
        d,
        &[
            "--seed",
            "9",
            "synth",
            "dirichlet",
            "--classes",
            "5",
            "--n",
            "20",
            "--alpha",
            "0.3",
        ],
    );
    assert_eq!(a, b);
    std::fs::write(d.join("dists.txt"), &a).unwrap();
    ok(
        d,
        &[
            "oracle-check",
            "--input",
            "dists.txt",
            "--utility",
            "credal:delta=1.6,gamma=0.6",
        ],
    );
    let t1 = ok(
        d,
        &[
            "--seed",
            "2",
            "synth",
            "teacher",
            "--classes",
            "4",
            "--dim",
            "3",
            "--n",
            "50",
        ],
    );
    let t2 = ok(
        d,
        &[
            "--seed",
            "2",
            "synth",
            "teacher",
            "--classes",
            "4",
            "--dim",
            "3",
            "--n",
            "50",
            "--sample-seed",
            "3",
        ],
    );
    assert_eq!(t1, t2, "default sample seed is the seed plus one");
}
