use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn tarag(args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_tarag")).args(args).output().unwrap();
    assert!(
        out.status.success(),
        "tarag {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const TOPICS: [&str; 4] = ["harbor", "orchard", "foundry", "observatory"];

fn write_fixture(dir: &Path) {
    let mut docs = String::new();
    let mut set = String::new();
    for i in 0..40 {
        let y = 2010 + i % 8;
        let topic = TOPICS[i % 4];
        let text = format!("Published {y}-05-0{}. In {y} the {topic} number {i} reported record activity.", 1 + i % 9);
        docs.push_str(&serde_json::json!({"id": format!("doc{i}"), "text": text}).to_string());
        docs.push('\n');
    }
    for i in 0..8 {
        let y = 2010 + i;
        let mut choices: Vec<String> = TOPICS.iter().map(|t| format!("the {t}")).collect();
        choices.rotate_left(i % 4);
        let item = serde_json::json!({
            "item_id": format!("q{i}"),
            "question": format!("What reported record activity in {y}?"),
            "choices": choices,
            "gold_index": 0,
            "query_type": "specific_year_trend",
        });
        set.push_str(&item.to_string());
        set.push('\n');
    }
    std::fs::write(dir.join("docs.jsonl"), docs).unwrap();
    std::fs::write(dir.join("set.jsonl"), set).unwrap();
    std::fs::write(dir.join("cfg.toml"), "[embedder]\nkind = \"stub\"\ndim = 64\n\n[eval]\nruns = 2\n").unwrap();
}

#[test]
fn ingest_query_eval_compare() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_fixture(d);
    let index = d.join("index.bin");
    let ingest = |out: &Path| {
        tarag(&[
            "ingest", "--corpus", p(&d.join("docs.jsonl")), "--out", p(out), "--config", p(&d.join("cfg.toml")),
            "--timestamp", "2024-01-01T00:00:00Z", "--report", p(&d.join("report.json")),
        ])
    };
    ingest(&index);
    assert!(d.join("index.bin.cache.jsonl").exists());
    ingest(&d.join("again.bin"));
    assert_eq!(std::fs::read(&index).unwrap(), std::fs::read(d.join("again.bin")).unwrap());
    let report: Value = serde_json::from_slice(&std::fs::read(d.join("report.json")).unwrap()).unwrap();
    assert!(report.is_object());

    let out = tarag(&[
        "query", "--index", p(&index), "--method", "ta_rag", "--k", "3", "--question",
        "Which harbor was busy in 2013?",
    ]);
    let q: Value = serde_json::from_slice(&out.stdout).unwrap();
    let hits = q["hits"].as_array().unwrap();
    assert_eq!(hits.len(), 3);
    for h in hits {
        assert!(h["pub_time_est"].as_str().unwrap().starts_with("2013"), "{h}");
    }
    assert_eq!(q["method"], "ta_rag");

    let report = d.join("eval.json");
    let plot = d.join("eval.svg");
    tarag(&[
        "eval", "--index", p(&index), "--config", p(&d.join("cfg.toml")), "--eval-set", p(&d.join("set.jsonl")),
        "--method", "ta_rag", "--k", "2,4", "--out", p(&report), "--plot", p(&plot),
    ]);
    let r: Value = serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap();
    assert_eq!(r["reports"].as_array().unwrap().len(), 2);
    assert_eq!(r["reports"][0]["runs"], 2);
    assert!(std::fs::read_to_string(&plot).unwrap().contains("<polyline"));

    let cmp = d.join("cmp.json");
    let out = tarag(&[
        "compare", "--index", p(&index), "--eval-set", p(&d.join("set.jsonl")), "--methods", "ta_rag,naive,bm25",
        "--k", "5", "--runs", "1", "--out", p(&cmp),
    ]);
    let table = String::from_utf8(out.stdout).unwrap();
    assert!(table.contains("bm25"), "{table}");
    let c: Value = serde_json::from_slice(&std::fs::read(&cmp).unwrap()).unwrap();
    assert_eq!(c["reports"].as_array().unwrap().len(), 3);
}

#[test]
fn import_eval_maps_fields() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("raw.json"),
        r#"[{"qid": 7, "q": "What grew in 2015?", "opts": {"A": "x", "B": "y", "C": "z", "D": "w"}, "label": 3, "kind": "specific_year_trend"}]"#,
    )
    .unwrap();
    std::fs::write(
        d.join("map.toml"),
        "[eval.field_map]\nitem_id = \"qid\"\nquestion = \"q\"\nchoices = \"opts\"\ngold = \"label\"\ngold_offset = -1\nquery_type = \"kind\"\n",
    )
    .unwrap();
    let out = d.join("set.jsonl");
    tarag(&["import-eval", "--input", p(&d.join("raw.json")), "--out", p(&out), "--config", p(&d.join("map.toml"))]);
    let item: Value = serde_json::from_str(std::fs::read_to_string(&out).unwrap().trim()).unwrap();
    assert_eq!(item["item_id"], "7");
    assert_eq!(item["gold_index"], 2);
    assert_eq!(item["choices"][3], "w");
}

#[test]
fn bad_input_fails_with_a_message() {
    let out = Command::new(env!("CARGO_BIN_EXE_tarag"))
        .args(["query", "--index", "/nonexistent/index.bin", "--question", "x"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error:"));
}
