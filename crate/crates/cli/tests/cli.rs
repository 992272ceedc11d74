use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const CONFIG: &str = r#"
cache_dir = "cache"

[endpoints.const]
kind = "mock_constant"
label = "benign"

[endpoints.illicit]
kind = "mock_constant"
label = "illicit"

[endpoints.majority]
kind = "mock_majority"

[endpoints.suffix]
kind = "mock_cluster_by_suffix"

[endpoints.down]
kind = "remote"
base_url = "http://127.0.0.1:9"
model = "m"
max_retries = 0
timeout_secs = 2

[datasets.bin]
path = "data/bin"

[prompts.four]
task = "binary"
k = 4
strategy = "lexical"
"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_promoguard"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin()
        .current_dir(dir)
        .args(["--config", "promoguard.toml"])
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("promoguard.toml"), CONFIG).unwrap();
    dir
}

/// Labeled corpus with `n` samples per (label, source) cell.
fn write_corpus(dir: &Path, n: usize) -> PathBuf {
    let path = dir.join("corpus.jsonl");
    let mut body = String::new();
    for (label, words) in [
        ("benign", "weather garden recipe travel"),
        ("illicit", "casino pills loan hacking"),
    ] {
        for source in ["twitter", "search_engine"] {
            for i in 0..n {
                let w: Vec<&str> = words.split(' ').collect();
                body.push_str(&format!(
                    "{{\"id\":\"{label}-{source}-{i}\",\"text\":\"{} {} item {i} from {source}\",\"label\":\"{label}\",\"source\":\"{source}\"}}\n",
                    w[i % 4],
                    w[(i + 1) % 4]
                ));
            }
        }
    }
    fs::write(&path, body).unwrap();
    path
}

fn build_dataset(dir: &Path) {
    let corpus = write_corpus(dir, 12);
    let o = run(
        dir,
        &[
            "dataset",
            "build",
            "--kind",
            "binary",
            "--input",
            &format!("twitter={}", corpus.display()),
            "--total",
            "40",
            "--out",
            "data/bin",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn constant_mock_prints_benign() {
    let dir = workspace();
    let o = run(
        dir.path(),
        &[
            "classify",
            "--endpoint",
            "const",
            "--text",
            "sunny day at the park",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o), "benign\n");
}

#[test]
fn file_predictions_keep_input_order() {
    let dir = workspace();
    let input = dir.path().join("texts.jsonl");
    fs::write(
        &input,
        "{\"id\":\"c\",\"text\":\"third text\"}\n{\"id\":\"a\",\"text\":\"first text\"}\n{\"id\":\"b\",\"text\":\"second text\"}\n",
    )
    .unwrap();
    let o = run(
        dir.path(),
        &[
            "classify",
            "--endpoint",
            "illicit",
            "--file",
            "texts.jsonl",
            "--out",
            "out",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o), "illicit\nillicit\nillicit\n");
    let lines: Vec<serde_json::Value> =
        fs::read_to_string(dir.path().join("out/predictions.jsonl"))
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
    let ids: Vec<&str> = lines.iter().map(|l| l["id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["c", "a", "b"]);
    let manifest: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(dir.path().join("out/run_manifest.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(manifest["command"], "classify");
    assert!(manifest["inputs"]["file"].as_str().unwrap().len() == 64);
}

#[test]
fn plain_text_file_one_item_per_line() {
    let dir = workspace();
    fs::write(dir.path().join("texts.txt"), "one\n\ntwo\nthree\n").unwrap();
    let o = run(
        dir.path(),
        &["classify", "--endpoint", "const", "--file", "texts.txt"],
    );
    assert_eq!(stdout(&o).lines().count(), 3);
}

#[test]
fn unknown_endpoint_lists_configured_ones() {
    let dir = workspace();
    let o = run(
        dir.path(),
        &["classify", "--endpoint", "gpt", "--text", "anything"],
    );
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(
        err.contains("const, down, illicit, majority, suffix"),
        "{err}"
    );
    assert!(stdout(&o).is_empty());
}

#[test]
fn config_errors_name_the_line() {
    let dir = workspace();
    fs::write(
        dir.path().join("promoguard.toml"),
        "[endpoints.x]\nkind = \"mock_constant\"\nlabel = \"benign\"\ntemprature = 1\n",
    )
    .unwrap();
    let o = run(dir.path(), &["classify", "--endpoint", "x", "--text", "t"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 4"), "{}", stderr(&o));
}

#[test]
fn transport_failure_exits_3() {
    let dir = workspace();
    let o = run(
        dir.path(),
        &[
            "classify",
            "--endpoint",
            "down",
            "--text",
            "anything",
            "--no-cache",
        ],
    );
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert_eq!(stdout(&o), "-\n");
}

#[test]
fn report_on_empty_directory_fails() {
    let dir = workspace();
    fs::create_dir(dir.path().join("empty")).unwrap();
    let o = run(dir.path(), &["report", "--dir", "empty"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("no reports"));
}

#[test]
fn report_names_corrupt_files() {
    let dir = workspace();
    fs::create_dir(dir.path().join("runs")).unwrap();
    fs::write(dir.path().join("runs/broken.json"), "{not json").unwrap();
    let o = run(dir.path(), &["report", "--dir", "runs"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("broken.json"));
}

#[test]
fn prompt_render_ends_with_answer_slot() {
    let dir = workspace();
    build_dataset(dir.path());
    let o = run(
        dir.path(),
        &[
            "prompt",
            "render",
            "--prompt",
            "four",
            "--dataset",
            "bin",
            "--text",
            "cheap pills",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let p = stdout(&o);
    assert!(p.ends_with("Query: cheap pills\n\nAnswer: "), "{p}");
    assert_eq!(p.matches("Query: ").count(), 5);
}

#[test]
fn sweep_then_report_is_deterministic() {
    let dir = workspace();
    build_dataset(dir.path());
    let sweep = |out: &str| {
        let o = run(
            dir.path(),
            &[
                "eval",
                "sweep",
                "--endpoint",
                "majority",
                "--dataset",
                "bin",
                "--prompt",
                "four",
                "--shots",
                "2,4",
                "--seeds",
                "0,1",
                "--out",
                out,
            ],
        );
        assert!(o.status.success(), "{}", stderr(&o));
    };
    sweep("runs/a");
    sweep("runs/b");
    let names: Vec<String> = {
        let mut v: Vec<String> = fs::read_dir(dir.path().join("runs/a"))
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .filter(|n| n != "run_manifest.json")
            .collect();
        v.sort();
        v
    };
    assert!(names.iter().any(|n| n == "metrics.csv"));
    for n in &names {
        assert_eq!(
            fs::read(dir.path().join("runs/a").join(n)).unwrap(),
            fs::read(dir.path().join("runs/b").join(n)).unwrap(),
            "{n}"
        );
    }

    let report = || {
        let o = run(dir.path(), &["report", "--dir", "runs/a"]);
        assert!(o.status.success(), "{}", stderr(&o));
        ["summary.md", "summary.csv", "curves.csv"]
            .map(|n| fs::read(dir.path().join("runs/a").join(n)).unwrap())
    };
    let first = report();
    let second = report();
    assert_eq!(first, second);
    let csv = String::from_utf8(first[1].clone()).unwrap();
    // two shot counts × two seeds, plus a mean and a std row per shot count
    assert_eq!(csv.lines().count(), 1 + 2 * (2 + 2));
    let md = String::from_utf8(first[0].clone()).unwrap();
    assert!(md.contains("| Prec. | Rec. | F1 | FPR | Acc. |"), "{md}");
    let curves = String::from_utf8(first[2].clone()).unwrap();
    assert!(curves.lines().skip(1).all(|l| l.contains(",shots,")));
}

#[test]
fn discovery_pipeline_runs_end_to_end() {
    let dir = workspace();
    let input = dir.path().join("unlabeled.jsonl");
    let mut body = String::new();
    for (i, tail) in [
        "loan usury",
        "quick usury",
        "dice gambling",
        "slots gambling",
    ]
    .iter()
    .enumerate()
    {
        body.push_str(&format!("{{\"id\":\"t{i}\",\"text\":\"offer {tail}\"}}\n"));
    }
    fs::write(&input, body).unwrap();
    let o = run(
        dir.path(),
        &[
            "discover",
            "annotate",
            "--endpoint",
            "suffix",
            "--input",
            "unlabeled.jsonl",
            "--mode",
            "open_ended",
            "--out",
            "disc",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let o = run(
        dir.path(),
        &[
            "discover",
            "consolidate",
            "--endpoint",
            "suffix",
            "--labels",
            "disc/labels.json",
            "--out",
            "disc",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let o = run(
        dir.path(),
        &[
            "discover",
            "diff",
            "--clusters",
            "disc/clusters.json",
            "--annotations",
            "disc/annotations.jsonl",
            "--out",
            "disc",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("known=1\tnovel=1"), "{}", stdout(&o));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("disc/novelty.json")).unwrap())
            .unwrap();
    let novel: Vec<&serde_json::Value> = report["clusters"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|c| c["novelty"] == "novel")
        .collect();
    assert_eq!(novel.len(), 1);
    assert_eq!(novel[0]["examples"].as_array().unwrap().len(), 2);
}
